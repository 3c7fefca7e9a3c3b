"""Channel models, capacity and caod solvers, dispersion, information density."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import rel_entr

from ._units import INF, ln_base, units
from .divergences import FiniteDist
from .reports import BoundReport

ROW_TOL = 1e-12


@dataclass
class DmcSpec:
    """Discrete memoryless channel W[x][y], optionally with a cost constraint."""

    W: np.ndarray
    cost: np.ndarray | None = None
    budget: float | None = None

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.size == 0:
            raise ValueError("W must be a non-empty matrix")
        if np.any(~np.isfinite(W)):
            raise ValueError("W has non-finite entries")
        neg = np.argwhere(W < 0)
        if neg.size:
            raise ValueError(f"negative probability at row {neg[0][0]}")
        for x, s in enumerate(W.sum(axis=1)):
            if abs(s - 1.0) > ROW_TOL:
                raise ValueError(f"row {x} not stochastic")
        self.W = W
        if (self.cost is None) != (self.budget is None):
            raise ValueError("budget without cost" if self.cost is None else "cost without budget")
        if self.cost is not None:
            c = np.array(self.cost, dtype=float).ravel()
            if c.size != W.shape[0] or np.any(c < 0):
                raise ValueError("cost must be a non-negative vector over inputs")
            if not self.budget >= 0:
                raise ValueError("budget must be non-negative")
            self.cost = c
            self.budget = float(self.budget)

    @property
    def input_size(self):
        return self.W.shape[0]

    @property
    def output_size(self):
        return self.W.shape[1]

    @property
    def constrained(self):
        return self.cost is not None

    def to_dict(self):
        d = {"type": "dmc", "W": self.W.tolist()}
        if self.constrained:
            d["cost"] = self.cost.tolist()
            d["budget"] = self.budget
        return d


@dataclass
class AwgnSpec:
    """AWGN channel with per-dimension power P and unit noise variance."""

    power: float

    def __post_init__(self):
        p = float(self.power)
        if not (math.isfinite(p) and p > 0):
            raise ValueError("power must be finite and positive")
        self.power = p

    def to_dict(self):
        return {"type": "awgn", "power": self.power}


def bsc(delta):
    return DmcSpec([[1 - delta, delta], [delta, 1 - delta]])


def bec(e):
    return DmcSpec([[1 - e, e, 0.0], [0.0, e, 1 - e]])


def noiseless(k=2):
    return DmcSpec(np.eye(k))


def channel_from_dict(obj):
    kind = obj.get("type")
    if kind == "dmc":
        return DmcSpec(obj["W"], obj.get("cost"), obj.get("budget"))
    if kind == "awgn":
        return AwgnSpec(obj["power"])
    raise ValueError(f"unknown channel type {kind!r}")


def load_channel(path):
    """Read a channel JSON file (``{"type": "dmc", "W": ...}`` or ``{"type": "awgn", ...}``)."""
    with open(path) as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValueError("channel file must hold a JSON object")
    return channel_from_dict(obj)


@dataclass
class CapacitySolution:
    """Capacity, optimal input/output laws and derived constants.

    Information quantities are in ``base`` units; ``V`` and ``a1`` in
    squared units.  For AWGN ``caod`` is the variance ``1 + P`` of the
    Gaussian output and ``input_dist`` is None.
    """

    C: float
    input_dist: FiniteDist | None
    caod: object
    V: float
    d_per_input: np.ndarray | None
    a1: float
    gap: float
    base: float = 2
    kind: str = "dmc"
    iterations: int = 0
    multiplier: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"kind": self.kind, "units": units(self.base), "C": self.C, "V": self.V,
               "a1": self.a1, "gap": self.gap, "iterations": self.iterations}
        if self.kind == "dmc":
            out["input_dist"] = self.input_dist.masses.tolist()
            out["caod"] = self.caod.masses.tolist()
            out["d_per_input"] = np.asarray(self.d_per_input).tolist()
            out["multiplier"] = self.multiplier
        else:
            out["caod_variance"] = self.caod
        out.update(self.extra)
        return out


def _divergences(W, q):
    """D(W_x || q) for every row, in nats (inf where not dominated)."""
    return np.sum(rel_entr(W, q[None, :]), axis=1)


def _ba_inner(W, lam, cost, tol, max_iter, r0, stall=2000):
    """Blahut-Arimoto on I(r) - lam * E[c] until the sandwich gap <= tol (nats).

    Near-collinear rows make the plain iteration crawl, so every
    ``stall`` iterations an active-set Newton polish is tried.  Its
    result is accepted only if the sandwich over the full alphabet
    certifies it.
    """
    r = r0.copy()
    for it in range(1, max_iter + 1):
        q = r @ W
        d = _divergences(W, q)
        score = d - lam * cost
        upper = float(np.max(score))
        lower = float(r @ score)
        if upper - lower <= tol:
            return r, q, d, upper - lower, it
        if it % stall == 0:
            hit = _newton_polish(W, lam, cost, tol, r)
            if hit is not None:
                return (*hit, it)
        with np.errstate(invalid="ignore"):
            r = r * np.exp(score - upper)
        r /= r.sum()
    raise RuntimeError(f"Blahut-Arimoto did not reach gap {tol:g} in {max_iter} iterations")


def _objective(W, lam, cost, r):
    q = r @ W
    d = _divergences(W, q)
    return float(r @ (d - lam * cost)), q, d


def _face_steps(Ws, q, grad):
    """Candidate ascent directions on the face sum(r) = 1.

    Along (numerically) flat eigendirections of the projected Hessian
    the objective is linear, so the gradient there is followed to the
    boundary; on the curved directions a Newton step is taken.
    """
    k = len(grad)
    m = q > 0
    H = -(Ws[:, m] / q[m]) @ Ws[:, m].T
    # orthonormal basis of {v : sum(v) = 0}
    B = np.linalg.qr(np.eye(k) - 1.0 / k)[0][:, : k - 1]
    ev, U = np.linalg.eigh(B.T @ H @ B)
    V = B @ U
    gv = V.T @ grad
    curved = ev < -1e-9 * max(1.0, float(np.max(-ev, initial=0.0)))
    out = []
    flat = V[:, ~curved] @ gv[~curved]
    if np.max(np.abs(flat), initial=0.0) > 1e-15:
        out.append(flat * (1e6 / np.max(np.abs(flat))))
    newton = V[:, curved] @ (gv[curved] / -ev[curved])
    if np.max(np.abs(newton), initial=0.0) > 1e-17:
        out.append(newton)
    return out


def _newton_polish(W, lam, cost, tol, r, rounds=None, steps=60):
    """Active-set Newton ascent of I(r) - lam * E[c] on the simplex.

    Works on the face spanned by the current support; letters that
    reach zero are dropped and the best letter outside the face is added
    while the full-alphabet sandwich is not met.
    """
    nx = len(r)
    rounds = 2 * nx + 4 if rounds is None else rounds
    S = np.flatnonzero(r > 1e-12 * r.max())
    rs = r[S] / r[S].sum()
    for _ in range(rounds):
        for _ in range(steps):
            f, q, d = _objective(W[S], lam, cost[S], rs)
            g = d - lam * cost[S]
            if len(S) == 1:
                break
            improved = False
            for step in _face_steps(W[S], q, g - g @ rs):
                # largest feasible step, then backtrack on the objective
                neg = step < 0
                t = min(1.0, float(np.min(-rs[neg] / step[neg]))) if np.any(neg) else 1.0
                while t > 1e-12:
                    cand = np.clip(rs + t * step, 0.0, None)
                    cand /= cand.sum()
                    if _objective(W[S], lam, cost[S], cand)[0] > f:
                        rs, improved = cand, True
                        break
                    t *= 0.5
                if improved:
                    break
            if not improved:
                break
            keep = rs > 1e-15
            if not np.all(keep):
                S, rs = S[keep], rs[keep] / rs[keep].sum()
        full = np.zeros(nx)
        full[S] = rs
        _, q, d = _objective(W, lam, cost, full)
        score = d - lam * cost
        gap = float(np.max(score) - full @ score)
        if gap <= tol:
            return full, q, d, gap
        best = int(np.argmax(score))
        if best in S:
            return None
        S = np.sort(np.append(S, best))
        rs = np.where(S == best, 1e-3, full[S])
        rs /= rs.sum()
    return None


def blahut_arimoto(dmc, tol=1e-9, max_iter=1_000_000, base=2, init=None):
    """Capacity of a DMC with a certified optimality gap.

    Uses the classical alternating maximization from a uniform input
    law.  The stopping rule is the sandwich
    ``max_x D(W_x||q) - sum_x r(x) D(W_x||q) <= tol``, which bounds the
    distance to capacity.  A cost constraint ``E c(X) <= P`` is handled
    by bisection on the Lagrange multiplier.

    Parameters
    ----------
    dmc : DmcSpec
    tol : float
        Gap tolerance in ``base`` units.
    init : array_like, optional
        Starting input law (default uniform).

    Returns
    -------
    CapacitySolution
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    W = dmc.W
    lb = ln_base(base)
    tol_n = tol * lb
    nx = W.shape[0]
    r0 = np.full(nx, 1.0 / nx) if init is None else np.asarray(init, float) / np.sum(init)
    cost = np.zeros(nx) if not dmc.constrained else dmc.cost
    lam = 0.0
    total_it = 0
    if dmc.constrained and dmc.budget < cost.min() - 1e-12:
        raise ValueError("infeasible budget: below the cheapest input cost")

    r, q, d, gap, it = _ba_inner(W, 0.0, cost, tol_n, max_iter, r0)
    total_it += it
    if dmc.constrained and r @ cost > dmc.budget * (1 + 1e-9) + 1e-15:
        P = dmc.budget
        lo, hi = 0.0, 1.0
        while True:
            r, q, d, gap, it = _ba_inner(W, hi, cost, tol_n * 1e-2, max_iter, r0)
            total_it += it
            if r @ cost <= P:
                break
            lo, hi = hi, 2 * hi
            if hi > 1e12:
                raise RuntimeError("could not bracket the Lagrange multiplier")
        for _ in range(200):
            lam = 0.5 * (lo + hi)
            # keep every letter alive: pruning may have zeroed some for the previous lam
            r, q, d, gap, it = _ba_inner(W, lam, cost, tol_n * 1e-2, max_iter, 0.99 * r + 0.01 * r0)
            total_it += it
            ec = r @ cost
            if abs(ec - P) <= 1e-9 * max(P, 1e-12):
                break
            if ec > P:
                lo = lam
            else:
                hi = lam
        # certified sandwich for the constrained problem
        lower = float(r @ d)
        upper = float(np.max(d - lam * cost)) + lam * P
        gap = upper - lower
    else:
        lam = 0.0
        gap = float(np.max(d) - r @ d)

    C = float(r @ d) / lb
    sol = CapacitySolution(C=C, input_dist=FiniteDist(r, normalize=True),
                           caod=FiniteDist(q, normalize=True), V=0.0,
                           d_per_input=d / lb, a1=0.0, gap=gap / lb, base=base,
                           kind="dmc", iterations=total_it, multiplier=lam)
    var = _info_variances(W, q) / lb ** 2
    sol.a1 = float(np.max(var))
    sol.V = dmc_dispersion(dmc, sol)
    return sol


def _info_variances(W, q):
    """Var[log W(Y|x)/q(Y) | X = x] in nats^2 for every input x."""
    out = np.empty(W.shape[0])
    for x, row in enumerate(W):
        m = row > 0
        if np.any(q[m] == 0):
            out[x] = INF
            continue
        lr = np.log(row[m] / q[m])
        mean = row[m] @ lr
        out[x] = max(float(row[m] @ (lr - mean) ** 2), 0.0)
    return out


def dmc_dispersion(dmc, sol):
    """Dispersion V = sum_x P*(x) Var[i(x;Y) | X=x].

    This is the conditional-variance form.  When every input in the
    support has d(x) = C it equals the unconditional variance of the
    information density; the unconditional value is stored in
    ``sol.extra["V_unconditional"]`` for comparison.
    """
    lb = ln_base(sol.base)
    q = sol.caod.masses
    p = sol.input_dist.masses
    var = _info_variances(dmc.W, q)
    used = p > 0
    V = float(p[used] @ var[used]) / lb ** 2
    d = np.asarray(sol.d_per_input) * lb
    between = float(p[used] @ (d[used] - p[used] @ d[used]) ** 2)
    sol.extra["V_unconditional"] = V + between / lb ** 2
    return V


def awgn_capacity_dispersion(spec, base=2):
    """C = (1/2) log(1+P) and V = (log^2 e / 2) P (P+2) / (P+1)^2."""
    P = spec.power
    lb = ln_base(base)
    C = 0.5 * math.log1p(P) / lb
    V = 0.5 * P * (P + 2.0) / (P + 1.0) ** 2 / lb ** 2
    return C, V


def awgn_solution(spec, base=2):
    C, V = awgn_capacity_dispersion(spec, base)
    return CapacitySolution(C=C, input_dist=None, caod=1.0 + spec.power, V=V,
                            d_per_input=None, a1=V, gap=0.0, base=base, kind="awgn")


def solve(channel, tol=1e-9, base=2):
    """Capacity solution for either channel type."""
    if isinstance(channel, AwgnSpec):
        return awgn_solution(channel, base)
    return blahut_arimoto(channel, tol=tol, base=base)


def awgn_kl(x, P, base=2):
    """D(N(x, I_n) || N(0, (1+P) I_n)) in closed form."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    s = 1.0 + P
    nats = 0.5 * n * math.log(s) + 0.5 * ((x @ x + n) / s - n)
    return nats / ln_base(base)


def awgn_info_variance(x, P, base=2):
    """Var[i(x;Y) | X = x] for AWGN: (|x|^2 + n P^2 / 2) / (1+P)^2 log^2 e."""
    x = np.asarray(x, dtype=float).ravel()
    s = 1.0 + P
    return (x @ x + 0.5 * x.size * P * P) / s ** 2 / ln_base(base) ** 2


def information_density(channel, sol, x_vec, y_vec, base=None):
    """i(x^n; y^n) = sum_j log W(y_j|x_j) / P*_Y(y_j).

    Returns -inf when some transition has zero probability.
    """
    base = sol.base if base is None else base
    lb = ln_base(base)
    if len(x_vec) != len(y_vec):
        raise ValueError("x and y must have the same length")
    if len(x_vec) == 0:
        return 0.0
    if isinstance(channel, AwgnSpec):
        x = np.asarray(x_vec, float)
        y = np.asarray(y_vec, float)
        s = 1.0 + channel.power
        nats = 0.5 * x.size * math.log(s) + 0.5 * (y @ y) / s - 0.5 * ((y - x) @ (y - x))
        return nats / lb
    W = channel.W
    q = sol.caod.masses
    total = 0.0
    for a, b in zip(x_vec, y_vec):
        w = W[int(a), int(b)]
        if w == 0:
            return -INF
        total += math.log(w / q[int(b)])
    return total / lb


def caod_audit(channel, sol, tol=1e-6, x=None, support_tol=1e-4):
    """Check d(x) <= C for every input and report the variance constant a1.

    For a DMC the report compares ``max_x d(x)`` with ``C + tol`` and
    records the KKT slack ``max |d(x) - C|`` over inputs with
    ``P*(x) > support_tol``.  For AWGN a codeword ``x`` must be given
    and the closed-form ``D(P_{Y^n|X^n=x} || P*)`` is compared with nC.
    """
    u = units(sol.base)
    if isinstance(channel, AwgnSpec):
        if x is None:
            raise ValueError("AWGN audit needs an input word x")
        x = np.asarray(x, float).ravel()
        n = x.size
        D = awgn_kl(x, channel.power, sol.base)
        return BoundReport("caod-property", D, n * sol.C, "<=",
                           constants={"a1": sol.a1, "P": channel.power},
                           details={"n": n, "norm_sq": float(x @ x),
                                    "var_i": awgn_info_variance(x, channel.power, sol.base)},
                           units=u, tol=max(1e-9, 1e-12 * n))
    d = np.asarray(sol.d_per_input)
    p = sol.input_dist.masses
    supp = p > support_tol
    kkt = float(np.max(np.abs(d[supp] - sol.C)))
    return BoundReport("caod-property", float(np.max(d)), sol.C + tol, "<=",
                       constants={"a1": sol.a1, "tol": tol},
                       details={"max_d_minus_C": float(np.max(d) - sol.C),
                                "kkt_support_slack": kkt,
                                "support": np.flatnonzero(supp).tolist(),
                                "d_per_input": d.tolist()},
                       units=u)
