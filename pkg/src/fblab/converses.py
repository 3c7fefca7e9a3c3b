"""Converse machinery: Augustin's bound, lower bounds on the conditional
relative entropy, explicit output-KL budgets and the tilting transfer."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from ._enum import DEFAULT_GUARD, space_size
from ._units import INF, bexp, ln_base, log_e, units
from .channels import AwgnSpec, awgn_info_variance, awgn_kl, blahut_arimoto, solve
from .codes import conditional_rows, exact_error
from .divergences import ProductDist, as_masses
from .reports import BoundReport


# ----------------------------------------------------------------------
# channel constants


def lipschitz_log_ratio(dmc, base=2):
    """a1 = max_{a,b,b'} log W(b|a)/W(b'|a) over output letters in use.

    +inf when some row has a zero in a column that another input can
    produce.
    """
    W = dmc.W
    used = W.sum(axis=0) > 0
    sub = W[:, used]
    if np.any(sub == 0):
        return INF
    return float(np.max(np.log(sub.max(axis=1) / sub.min(axis=1)))) / ln_base(base)


def log_likelihood_variance(dmc, base=2):
    """a2 = max_x Var[log W(Y|x) | X = x]."""
    out = 0.0
    for row in dmc.W:
        m = row > 0
        l = np.log(row[m])
        mu = row[m] @ l
        out = max(out, float(row[m] @ (l - mu) ** 2))
    return out / ln_base(base) ** 2


def letter_info_variance(dmc, q, base=2):
    """max_x Var[log W(Y|x)/q(Y) | X = x] for a single-letter reference q."""
    out = 0.0
    for row in dmc.W:
        m = row > 0
        if np.any(q[m] == 0):
            return INF
        l = np.log(row[m] / q[m])
        mu = row[m] @ l
        out = max(out, float(row[m] @ (l - mu) ** 2))
    return out / ln_base(base) ** 2


def output_kl_constants(channel, sol, n, eps):
    """Constants of the explicit output-KL budget.

    DMC:  S_m = 2 n a2 + 2 n a1^2 and excess = sqrt(2 S_m/(1-eps)) - log((1-eps)/2).
    AWGN: excess = sqrt(6 n (3+4P)) log e + log(2/(1-eps)); the value the
          variance chain produces, with 1/(1-eps) under the root, is
          recorded as ``excess_chain``.
    """
    base = sol.base
    lb = ln_base(base)
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    tail = -math.log((1.0 - eps) / 2.0) / lb
    if isinstance(channel, AwgnSpec):
        P = channel.power
        core = math.sqrt(6.0 * n * (3.0 + 4.0 * P)) * log_e(base)
        S_m = 3.0 * n * (3.0 + 4.0 * P) * log_e(base) ** 2
        chain = math.sqrt(2.0 * S_m / (1.0 - eps)) + tail
        return {"S_m": S_m, "excess": core + tail, "excess_chain": chain, "eps": eps, "P": P}
    a1 = lipschitz_log_ratio(channel, base)
    a2 = log_likelihood_variance(channel, base)
    S_m = 2.0 * n * a2 + 2.0 * n * a1 * a1
    excess = math.sqrt(2.0 * S_m / (1.0 - eps)) + tail if math.isfinite(S_m) else INF
    return {"a1_lip": a1, "a2_var": a2, "S_m": S_m, "excess": excess, "eps": eps}


def output_kl_upper(channel, n, M, eps, sol=None, D=None, ci=None, formula_only=False):
    """Budget nC - log M + excess for D(P_{Y^n} || P*^n).

    ``D`` is the exact divergence of a code (or its MC estimate with
    interval ``ci``); without it the report only carries the budget.
    For DMCs with a1 = inf the budget has the form
    nC - log M + b sqrt(n) log^{3/2} n with b unspecified; pass
    ``formula_only=True`` to obtain that formula with a formula-only verdict.
    """
    sol = solve(channel) if sol is None else sol
    base = sol.base
    lb = ln_base(base)
    logM = math.log(M) / lb
    consts = output_kl_constants(channel, sol, n, eps)
    consts.update({"n": n, "M": M, "C": sol.C})
    if not math.isfinite(consts["excess"]):
        if not formula_only:
            raise ValueError("a1 is infinite for this channel; use formula_only=True")
        coeff = math.sqrt(n) * (math.log(n) / lb) ** 1.5 if n > 1 else 0.0
        consts["sqrt_n_log32_n"] = coeff
        return BoundReport("outkl-formula", math.nan if D is None else D, n * sol.C - logM, "<=",
                           constants=consts,
                           details={"formula": "n*C - log M + b*sqrt(n)*log(n)^1.5",
                                    "b": "unspecified"},
                           units=units(base), verdict="formula-only")
    budget = n * sol.C - logM + consts["excess"]
    if D is None:
        return BoundReport("outkl", math.nan, budget, "<=", constants=consts,
                           units=units(base), verdict="formula-only")
    if ci is not None:
        return BoundReport("outkl", D, budget, "<=", constants=consts, units=units(base),
                           mode="mc", ci=(budget - ci[1], budget - ci[0]))
    return BoundReport("outkl", D, budget, "<=", constants=consts, units=units(base))


# ----------------------------------------------------------------------
# per-codeword quantities relative to Q


def _rows_and_ref(dmc, code, Q_Y, sol, guard):
    space_size(dmc.output_size, code.n, guard)
    cond = conditional_rows(dmc, code, guard)
    if Q_Y is None:
        sol = blahut_arimoto(dmc) if sol is None else sol
        Q_Y = ProductDist(sol.caod, code.n)
    q = Q_Y.masses(guard) if isinstance(Q_Y, ProductDist) else as_masses(Q_Y)
    return cond, q, Q_Y


def _llr_stats(cond, q):
    """Per-codeword d(x) and Var of log dP_{Y|X=x}/dQ (nats), plus the llr matrix."""
    pos = cond > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        llr = np.where(pos, np.log(np.where(pos, cond, 1.0)) - np.log(q)[None, :], -INF)
    dom = ~np.any(pos & (q[None, :] == 0), axis=1)
    lr0 = np.where(pos, llr, 0.0)
    d = np.where(dom, np.sum(cond * lr0, axis=1), INF)
    m2 = np.sum(cond * lr0 ** 2, axis=1)
    var = np.where(dom, np.maximum(m2 - d ** 2, 0.0), INF)
    return d, var, llr


def default_S_m(dmc, Q_Y, var_code, n, base):
    """sup_x Var[log dP_{Y|X=x}/dQ]: n times the worst letter for product Q,
    otherwise the maximum over the codewords (nats^2)."""
    if isinstance(Q_Y, ProductDist):
        return n * letter_info_variance(dmc, Q_Y.base.masses, math.e)
    return float(np.max(var_code))


def augustin_bound(dmc, code, Q_Y=None, rho_mode="d+delta", delta=None, eps=None,
                   sol=None, S_m=None, guard=DEFAULT_GUARD):
    """Augustin's converse M <= exp(E rho(X)) / (min_x P[log dP/dQ <= rho(x)] - eps).

    ``rho_mode`` is ``"d+delta"`` (rho = d(x) + delta) or ``"constant"``
    (rho = delta).  The default delta is sqrt(2 S_m/(1-eps)).  The
    comparison is done on the log scale: lhs = log M,
    rhs = E rho - log(denominator).  A non-positive denominator makes the
    bound vacuous and the verdict inconclusive.

    ``S_m`` and ``delta`` are in ``base`` units (squared for S_m).
    """
    sol = blahut_arimoto(dmc) if sol is None and Q_Y is None else sol
    base = sol.base if sol is not None else 2
    lb = ln_base(base)
    cond, q, Q_Y = _rows_and_ref(dmc, code, Q_Y, sol, guard)
    if eps is None:
        eps = exact_error(dmc, code, guard=guard)[1]
    d, var, llr = _llr_stats(cond, q)
    Sm_n = default_S_m(dmc, Q_Y, var, code.n, base) if S_m is None else S_m * lb * lb
    if delta is None:
        delta_n = math.sqrt(2.0 * Sm_n / (1.0 - eps)) if eps < 1 else INF
    else:
        delta_n = delta * lb
    rho = d + delta_n if rho_mode == "d+delta" else np.full(code.M, delta_n)
    tol = 1e-12 * (1.0 + np.abs(rho))
    probs = np.sum(np.where(llr <= (rho + tol)[:, None], cond, 0.0), axis=1)
    den = float(probs.min()) - eps
    logM = math.log(code.M) / lb
    consts = {"eps": eps, "S_m": Sm_n / lb ** 2, "Delta": delta_n / lb, "rho_mode": rho_mode}
    details = {"denominator": den, "E_rho": float(rho.mean()) / lb}
    if not den > 0:
        return BoundReport("augustin", logM, INF, "<=", constants=consts, details=details,
                           units=units(base), verdict="inconclusive")
    rhs = float(rho.mean()) / lb - math.log(den) / lb
    details["M_bound"] = float(bexp(rhs, base)) if rhs < 1000 else INF
    return BoundReport("augustin", logM, rhs, "<=", constants=consts, details=details,
                       units=units(base))


def kl_lower_bound(channel, code, Q_Y=None, mode="sfvar", S_m=None, Delta=None,
                   delta_p=None, eps=None, sol=None, guard=DEFAULT_GUARD):
    """Lower bounds on D(P_{Y|X} || Q | P_X) for a maximal-error code.

    sf:    D >= log M - Delta + log(1 - eps - delta'), where delta' bounds
           max_x P[log dP_{Y|X=x}/dQ >= d(x) + Delta]; when ``delta_p`` is
           omitted it is computed exactly over the codewords.
    sfvar: D >= log M - sqrt(2 S_m/(1-eps)) + log((1-eps)/2).

    For AWGN only sfvar with Q = N(0, 1+P)^n is supported; both the
    conditional divergence and the variance are closed form.
    """
    if isinstance(channel, AwgnSpec):
        return _kl_lower_awgn(channel, code, eps, sol)
    sol = blahut_arimoto(channel) if sol is None and Q_Y is None else sol
    base = sol.base if sol is not None else 2
    lb = ln_base(base)
    cond, q, Q_Y = _rows_and_ref(channel, code, Q_Y, sol, guard)
    if eps is None:
        eps = exact_error(channel, code, guard=guard)[1]
    d, var, llr = _llr_stats(cond, q)
    lhs = float(d.mean()) / lb
    logM = math.log(code.M) / lb
    if eps >= 1.0:
        return BoundReport(f"kl-{mode}", lhs, -INF, ">=", constants={"eps": eps},
                           units=units(base), verdict="inconclusive")
    if mode == "sfvar":
        Sm_n = default_S_m(channel, Q_Y, var, code.n, base) if S_m is None else S_m * lb * lb
        rhs = logM - math.sqrt(2.0 * Sm_n / (1.0 - eps)) / lb + math.log((1.0 - eps) / 2.0) / lb
        return BoundReport("kl-sfvar", lhs, rhs, ">=",
                           constants={"eps": eps, "S_m": Sm_n / lb ** 2}, units=units(base))
    if mode != "sf":
        raise ValueError(f"unknown mode {mode!r}")
    if Delta is None:
        raise ValueError("sf mode needs Delta")
    Dn = Delta * lb
    tol = 1e-12 * (1.0 + np.abs(d + Dn))
    tails = np.sum(np.where(llr >= (d + Dn - tol)[:, None], cond, 0.0), axis=1)
    sup_tail = float(tails.max())
    consts = {"eps": eps, "Delta": Delta, "sup_tail": sup_tail}
    if delta_p is None:
        delta_p = sup_tail
    elif sup_tail > delta_p + 1e-12:
        return BoundReport("kl-sf", lhs, math.nan, ">=", constants=consts,
                           details={"reason": "deviation condition fails"},
                           units=units(base), verdict="inconclusive")
    consts["delta_prime"] = delta_p
    if not delta_p < 1.0 - eps:
        return BoundReport("kl-sf", lhs, -INF, ">=", constants=consts,
                           units=units(base), verdict="inconclusive")
    rhs = logM - Delta + math.log(1.0 - eps - delta_p) / lb
    return BoundReport("kl-sf", lhs, rhs, ">=", constants=consts, units=units(base))


def _kl_lower_awgn(awgn, code, eps, sol):
    sol = solve(awgn) if sol is None else sol
    base = sol.base
    lb = ln_base(base)
    if eps is None:
        raise ValueError("AWGN codes need an explicit (certified) eps")
    words = np.asarray(code.words, float)
    lhs = float(np.mean([awgn_kl(x, awgn.power, base) for x in words]))
    S_m = max(awgn_info_variance(x, awgn.power, base) for x in words)
    logM = math.log(code.M) / lb
    rhs = logM - math.sqrt(2.0 * S_m / (1.0 - eps)) + math.log((1.0 - eps) / 2.0) / lb
    return BoundReport("kl-sfvar", lhs, rhs, ">=", constants={"eps": eps, "S_m": S_m},
                       units=units(base))


def tilted_bound(dmc, code, Q_Y, F, t, S=None, S_F=None, eps=None, sol=None,
                 guard=DEFAULT_GUARD):
    """Tilting transfer t E F(Y) - log E exp(t F(Y')) <= D_cond - log M + slack.

    Y follows the code output, Y' follows Q.  The variance-based KL converse
    applied to the tilted reference with variance 2S + 2t^2 S_F gives

        slack = 2 sqrt((S + t^2 S_F)/(1-eps)) + log(2/(1-eps)).

    ``F`` is a table over Y^n in base units; S and S_F default to the
    exact maxima over the codewords.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    base = sol.base if sol is not None else 2
    lb = ln_base(base)
    cond, q, Q_Y = _rows_and_ref(dmc, code, Q_Y, sol, guard)
    F = np.asarray(F, dtype=float).ravel()
    if F.size != q.size:
        raise ValueError("F table does not match the output space")
    if eps is None:
        eps = exact_error(dmc, code, guard=guard)[1]
    d, var, _ = _llr_stats(cond, q)
    py = cond.mean(axis=0)
    Fn = F * lb
    qpos = q > 0
    log_mgf = float(logsumexp(t * Fn[qpos], b=q[qpos]))
    lhs = (t * float(py @ Fn) - log_mgf) / lb
    S_n = float(np.max(var)) if S is None else S * lb * lb
    mF = cond @ Fn
    vF = np.maximum(cond @ Fn ** 2 - mF ** 2, 0.0)
    SF_n = float(np.max(vF)) if S_F is None else S_F * lb * lb
    d_cond = float(d.mean()) / lb
    logM = math.log(code.M) / lb
    if eps >= 1.0:
        return BoundReport("tilt", lhs, INF, "<=", units=units(base), verdict="inconclusive")
    a = 2.0 / math.sqrt(1.0 - eps)
    extra = (a * math.sqrt(S_n + t * t * SF_n) + math.log(2.0 / (1.0 - eps))) / lb
    return BoundReport("tilt", lhs, d_cond - logM + extra, "<=",
                       constants={"eps": eps, "t": t, "S": S_n / lb ** 2, "S_F": SF_n / lb ** 2,
                                  "a": a, "additive": math.log(2.0 / (1.0 - eps)) / lb},
                       details={"D_cond": d_cond, "E_F": float(py @ F),
                                "log_E_exp_tF": log_mgf / lb},
                       units=units(base))


def poor_verdu_bound(hypotheses, rhos, base=2):
    """Error lower bound for M-ary testing with equiprobable hypotheses.

    eps >= (1 - exp(mean rho)/M) min_j P[i(j;Y) <= rho_j | W = j],
    with i(j;y) = log P_j(y)/P_Y(y).  Compared with the exact minimax
    (optimal maximal) error, obtained by linear programming over all
    randomized decision rules; the ML maximal error is reported too.
    """
    from scipy.optimize import linprog

    Pm = np.array([as_masses(h) for h in hypotheses], dtype=float)
    M, K = Pm.shape
    if M < 2:
        raise ValueError("need at least two hypotheses")
    rhos = np.broadcast_to(np.asarray(rhos, float), (M,))
    lb = ln_base(base)
    py = Pm.mean(axis=0)
    pos = Pm > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(pos, np.log(np.where(pos, Pm, 1.0)) - np.log(np.where(py > 0, py, 1.0)), -INF) / lb
    tol = 1e-12 * (1.0 + np.abs(rhos))
    probs = np.sum(np.where(dens <= (rhos + tol)[:, None], Pm, 0.0), axis=1)
    rhs = (1.0 - float(bexp(rhos.mean(), base)) / M) * float(probs.min())

    # minimax error: min t s.t. 1 - sum_y P_j(y) g(j|y) <= t, sum_j g(j|y) = 1
    nv = M * K + 1
    c = np.zeros(nv)
    c[-1] = 1.0
    A_ub = np.zeros((M, nv))
    for j in range(M):
        A_ub[j, j * K:(j + 1) * K] = -Pm[j]
        A_ub[j, -1] = -1.0
    b_ub = -np.ones(M)
    A_eq = np.zeros((K, nv))
    for y in range(K):
        A_eq[y, y:M * K:K] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=np.ones(K),
                  bounds=[(0, 1)] * (M * K) + [(0, 1)], method="highs")
    minimax = float(res.x[-1])
    top = Pm.max(axis=0)
    dec = np.argmax(Pm >= top * (1 - 1e-12), axis=0)
    ml_max = float(np.max(1.0 - np.array([Pm[j, dec == j].sum() for j in range(M)])))
    return BoundReport("poor-verdu", minimax, rhs, ">=", constants={"rho_mean": float(rhos.mean())},
                       details={"ml_max_error": ml_max, "min_prob": float(probs.min())},
                       units=units(base), tol=1e-8)
