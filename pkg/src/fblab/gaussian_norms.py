"""AWGN codebook generators, l_q norm profiles and quadratic-form checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import rng as _rng
from ._units import ln_base, log_e, units
from .channels import AwgnSpec, awgn_capacity_dispersion
from .codes import Codebook, awgn_mc_report
from .reports import BoundReport

KINDS = ("iid-gaussian", "spherical", "peaky")


@dataclass
class GaussianGenSpec:
    kind: str
    n: int
    M: int
    P: float = 1.0
    seed: int = 0
    delta_n: float | None = None
    project: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator {self.kind!r}")
        if self.n < 1 or self.M < 1 or self.P <= 0:
            raise ValueError("need n >= 1, M >= 1 and P > 0")
        if self.kind == "peaky":
            if self.delta_n is None or not 0.0 < self.delta_n < 1.0:
                raise ValueError("peaky codes need delta_n in (0, 1)")
            if self.n < 2:
                raise ValueError("peaky codes need n >= 2")


def _normal_rows(seed, M, n, label):
    # one stream per row so that rows do not depend on M or on threading
    return np.stack([_rng.stream(seed, label, i).standard_normal(n) for i in range(M)])


def _sphere(seed, M, n, radius, label):
    z = _normal_rows(seed, M, n, label)
    return z * (radius / np.linalg.norm(z, axis=1))[:, None]


def generate(spec):
    """Codebook drawn per ``spec``.

    iid-gaussian
        Rows iid N(0, P I_n); rows outside the ball ||x||^2 <= nP are
        rescaled onto its boundary unless ``project=False``.  The number of
        rescaled rows is stored in ``meta["rescaled"]``.
    spherical
        Rows uniform on the sphere of radius sqrt(nP).
    peaky
        x_1 = sqrt(n delta P), the remaining n-1 coordinates uniform on the
        sphere of radius sqrt((n-1)(1-delta) P).
    """
    n, M, P = spec.n, spec.M, spec.P
    meta = {"kind": spec.kind, "P": P, "seed": spec.seed}
    if spec.kind == "iid-gaussian":
        x = math.sqrt(P) * _normal_rows(spec.seed, M, n, 0)
        sq = np.einsum("ij,ij->i", x, x)
        out = sq > n * P
        meta["rescaled"] = int(out.sum())
        meta["project"] = bool(spec.project)
        if spec.project and out.any():
            x[out] *= np.sqrt(n * P / sq[out])[:, None]
    elif spec.kind == "spherical":
        x = _sphere(spec.seed, M, n, math.sqrt(n * P), 1)
    else:
        d = spec.delta_n
        rest = _sphere(spec.seed, M, n - 1, math.sqrt((n - 1) * (1.0 - d) * P), 2)
        x = np.hstack([np.full((M, 1), math.sqrt(n * d * P)), rest])
        meta["delta_n"] = d
    return Codebook(x, alphabet="awgn", meta=meta)


def rescale_oracle(n, M, P=1.0):
    """Mean and standard deviation of the rescale count, Binomial(M, P[chi2_n > n])."""
    p = float(stats.chi2.sf(n, n))
    return M * p, math.sqrt(M * p * (1.0 - p))


def norms(words, q):
    x = np.abs(np.asarray(words, float))
    if q == math.inf:
        return x.max(axis=1) if x.shape[1] else np.zeros(x.shape[0])
    if q < 1:
        raise ValueError("q must lie in [1, inf]")
    return np.sum(x ** q, axis=1) ** (1.0 / q)


def _parse_q(q):
    if isinstance(q, str):
        return math.inf if q.lower() in ("inf", "infinity") else float(q)
    return float(q)


def lq_profile(code, qs=(1, 2, 4, math.inf), thresholds=None):
    """Per-codeword l_q norms with medians and upper-half quantiles.

    ``thresholds`` maps q to a value; the fraction of codewords with a norm
    above it is reported.  For q = 4 the codebook average of ||x||_4^4 is
    reported with its sample standard deviation and standard error.
    """
    words = np.asarray(code.words if hasattr(code, "words") else code, float)
    out = {"n": words.shape[1], "M": words.shape[0], "q": {}}
    for q in qs:
        q = _parse_q(q)
        v = norms(words, q)
        key = "inf" if q == math.inf else f"{q:g}"
        row = {"values": v, "median": float(np.median(v)), "mean": float(v.mean()),
               "upper_half": float(np.quantile(v, 0.75))}
        if thresholds and key in thresholds:
            row["frac_above"] = float(np.mean(v > thresholds[key]))
        if q == 4:
            f = v ** 4
            sd = float(f.std(ddof=1)) if f.size > 1 else 0.0
            row["mean_pow4"] = float(f.mean())
            row["sd_pow4"] = sd
            row["se_pow4"] = sd / math.sqrt(f.size)
        out["q"][key] = row
    return out


def interpolation_check(words, p, q):
    """Largest violation of the l_p / l_q interpolation inequalities (<= 0 means all hold).

    q <= p:  ||x||_q <= n^{1/q - 1/p} ||x||_p
    q >= p:  ||x||_q <= ||x||_inf^{1 - p/q} ||x||_p^{p/q}  and  ||x||_q <= ||x||_p
    """
    words = np.asarray(words, float)
    n = words.shape[1]
    nq, npn, ni = norms(words, q), norms(words, p), norms(words, math.inf)
    scale = np.maximum(1.0, npn)
    if q <= p:
        gap = nq - n ** (1.0 / q - (0.0 if p == math.inf else 1.0 / p)) * npn
    else:
        e = 0.0 if q == math.inf else p / q
        gap = np.maximum(nq - ni ** (1.0 - e) * npn ** e, nq - npn)
    return float(np.max(gap / scale))


def b0_constant(P, eps):
    """(6/(1+eps))^{1/4} + 6^{1/4} sqrt(1+P)."""
    return (6.0 / (1.0 + eps)) ** 0.25 + 6.0 ** 0.25 * math.sqrt(1.0 + P)


def qft_constant(P, eps, base=2):
    """b = sqrt(2(9/4 + 3P)/(1-eps)) log e + log(2/(1-eps))."""
    return (math.sqrt(2.0 * (2.25 + 3.0 * P) / (1.0 - eps)) * log_e(base)
            + math.log(2.0 / (1.0 - eps)) / ln_base(base))


def spectral_check(A, tol=1e-9):
    A = np.asarray(A, float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if np.max(np.abs(A - A.T), initial=0.0) > tol:
        raise ValueError("A must be symmetric")
    ev = np.linalg.eigvalsh(0.5 * (A + A.T))
    if ev.size and (ev[0] < -1.0 - tol or ev[-1] > 1.0 + tol):
        raise ValueError(f"spectrum [{ev[0]:.6g}, {ev[-1]:.6g}] not inside [-1, 1]")
    return (float(ev[0]), float(ev[-1])) if ev.size else (0.0, 0.0)


def random_contraction(n, rng):
    """Symmetric A with spectrum inside [-1, 1] (random eigenbasis and eigenvalues)."""
    Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = rng.uniform(-1.0, 1.0, n)
    A = (Qm * lam) @ Qm.T
    return 0.5 * (A + A.T)


@dataclass
class QuadraticFormReport:
    A_range: tuple
    lhs: float
    rhs: float
    lhs_identity: float
    rhs_identity: float
    eigen_summary: dict
    constants: dict
    report: BoundReport
    identity_report: BoundReport
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {"A_spectrum": list(self.A_range), "lhs": self.lhs, "rhs": self.rhs,
                "lhs_identity": self.lhs_identity, "rhs_identity": self.rhs_identity,
                "eigen_summary": self.eigen_summary, "constants": self.constants,
                "report": self.report.to_dict(), "identity_report": self.identity_report.to_dict(),
                **self.extra}


def quadratic_form_report(code, A, eps, P=None, base=2, certified=True):
    """Compare |E(AX, X) - P tr A| with the explicit quadratic-form bound.

    Expectations are exact averages over the codebook (equiprobable
    messages).  With bracket = nC - log M + b sqrt(n),

        rhs   = 2 (1+P) sqrt(n) / sqrt(log e) * sqrt(bracket)
        rhs_I = 2 (1+P) / log e * bracket          (A = I).

    A negative bracket means no code with this (n, M, eps) exists, so the
    check fails.  ``certified=False`` (eps not certified) gives an
    inconclusive verdict.
    """
    words = np.asarray(code.words, float)
    M, n = words.shape
    P = float(code.meta.get("P")) if P is None else float(P)
    A = np.asarray(A, float)
    if A.shape != (n, n):
        raise ValueError(f"A must be {n} x {n}")
    A_range = spectral_check(A)
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    Sigma = words.T @ words / M
    lam = np.linalg.eigvalsh(Sigma)
    lhs = abs(float(np.sum(Sigma * A)) - P * float(np.trace(A)))
    lhs_I = abs(float(np.einsum("ij,ij->", words, words)) / M - n * P)
    C, _ = awgn_capacity_dispersion(AwgnSpec(P), base)
    b = qft_constant(P, eps, base)
    bracket = n * C - math.log(M) / ln_base(base) + b * math.sqrt(n)
    le = log_e(base)
    if bracket >= 0:
        rhs = 2.0 * (1.0 + P) * math.sqrt(n) / math.sqrt(le) * math.sqrt(bracket)
        rhs_I = 2.0 * (1.0 + P) / le * bracket
    else:
        rhs = rhs_I = -math.inf
    verdict = "" if certified else "inconclusive"
    consts = {"P": P, "eps": eps, "b": b, "C": C, "bracket": bracket, "n": n, "M": M}
    u = units(base)
    rep = BoundReport("qform", lhs, rhs, "<=", constants=consts, units=u, verdict=verdict)
    rep_I = BoundReport("qform-identity", lhs_I, rhs_I, "<=", constants=consts, units=u,
                        verdict=verdict)
    eig = {"min": float(lam[0]), "max": float(lam[-1]),
           "sum_abs_dev": float(np.abs(lam - P).sum())}
    return QuadraticFormReport(A_range, lhs, rhs, lhs_I, rhs_I, eig, consts, rep, rep_I)


def certified_eps(code, P, samples=20_000, seed=0, threads=None):
    """99% upper confidence bound on the maximal error (nearest-neighbour decoding)."""
    mc = awgn_mc_report(AwgnSpec(P), code, samples=samples, seed=seed, threads=threads)
    return mc["eps_max"].hi, mc


def scaling_exponent_fit(kind, n_grid, q, M=256, P=1.0, seed=0, delta_rule=None, stat="median"):
    """Least-squares slope of log(stat ||x||_q) against log n.

    ``delta_rule(n)`` gives delta_n for peaky codes.  Returns the slope,
    its standard error, a 95% interval, the per-n statistics and, for
    q = inf, the slope against log log n.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 5 or len(set(n_grid)) != len(n_grid):
        raise ValueError("need at least 5 distinct blocklengths")
    q = _parse_q(q)
    med, mean = [], []
    for n in n_grid:
        d = delta_rule(n) if delta_rule is not None else None
        code = generate(GaussianGenSpec(kind, n, M, P, seed, d))
        v = norms(code.words, q)
        med.append(float(np.median(v)))
        mean.append(float(v.mean()))
    y = np.log(med if stat == "median" else mean)
    x = np.log(n_grid)
    fit = stats.linregress(x, y)
    if not np.isfinite(fit.slope):
        raise ArithmeticError("degenerate fit")
    tq = float(stats.t.ppf(0.975, len(n_grid) - 2))
    out = {"alpha": float(fit.slope), "se": float(fit.stderr),
           "ci95": [float(fit.slope - tq * fit.stderr), float(fit.slope + tq * fit.stderr)],
           "n_grid": n_grid, "median": med, "mean": mean, "stat": stat,
           "alpha_mean": float(stats.linregress(x, np.log(mean)).slope)}
    if q == math.inf:
        out["alpha_loglog"] = float(stats.linregress(np.log(x), y).slope)
    return out


def linf_excess_tail(code, lambda_grid, eps=None, P=None, base=2):
    """Fraction of codewords with ||x||_inf >= sqrt(lambda n) for each lambda.

    With ``eps`` given, the bracket nC - sqrt(nV) Q^{-1}(eps) + 2 log n - log(M/2)
    is evaluated; its non-negativity (after adding an unspecified log b)
    can only be reported, so the attached report is formula-only.
    """
    words = np.asarray(code.words, float)
    M, n = words.shape
    m = norms(words, math.inf)
    rows = []
    for lam in np.atleast_1d(lambda_grid):
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        rows.append({"lambda": float(lam), "fraction": float(np.mean(m >= math.sqrt(lam * n)))})
    out = {"n": n, "M": M, "rows": rows}
    if eps is not None:
        P = float(code.meta.get("P")) if P is None else float(P)
        C, V = awgn_capacity_dispersion(AwgnSpec(P), base)
        lb = ln_base(base)
        bracket = (n * C - math.sqrt(n * V) * float(stats.norm.isf(eps))
                   + 2.0 * math.log(n) / lb - math.log(M / 2.0) / lb)
        out["bracket"] = bracket
        out["report"] = BoundReport("linf-bracket", bracket, 0.0, ">=", units=units(base),
                                    verdict="formula-only",
                                    details={"note": "log b term unspecified"})
    return out


def gaussian_max_oracle(n, threshold):
    """P[max_j |Z_j| >= threshold] for Z ~ N(0, I_n)."""
    p_in = float(stats.norm.cdf(threshold) - stats.norm.cdf(-threshold))
    return 1.0 - p_in ** n
