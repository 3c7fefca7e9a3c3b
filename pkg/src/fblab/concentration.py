"""(b, c)-concentration certificates and expectation/tail transfers.

A function F is (b, c)-concentrated under mu when

    E_mu exp{t (F - E_mu F)} <= b exp{c t^2}   for all real t,

with exp and log in the configured base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._enum import DEFAULT_GUARD, digits, space_size
from ._units import bexp, ln_base, log_e, units
from .channels import blahut_arimoto
from .codes import conditional_rows, empirical_output, exact_error
from .converses import output_kl_constants
from .divergences import ProductDist, as_masses, kl
from .reports import BoundReport

#: 17 geometric points per sign, 2^-4 ... 2^4
T_GRID = np.concatenate([-(2.0 ** np.linspace(-4, 4, 17))[::-1], 2.0 ** np.linspace(-4, 4, 17)])


@dataclass
class LipschitzFn:
    """Function on Y^n given by its table in mixed-radix order."""

    table: np.ndarray
    q: int
    n: int
    declared_lip: float | None = None
    metric: str = "hamming"

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=float).ravel()
        if self.table.size != self.q ** self.n:
            raise ValueError("table size must be q**n")

    @classmethod
    def from_letters(cls, f, n, scale=1.0):
        """F(y) = scale * sum_j f(y_j)."""
        f = np.asarray(f, dtype=float)
        d = digits(0, f.size ** n, f.size, n)
        return cls(scale * f[d].sum(axis=1) if n else np.zeros(1), f.size, n)

    @classmethod
    def hamming_weight(cls, n, q=2):
        return cls.from_letters(np.minimum(np.arange(q), 1), n)


@dataclass
class ConcentrationCert:
    b: float
    c: float
    measure_kind: str
    basis: str
    base: float = 2
    notes: dict = field(default_factory=dict)

    def to_dict(self):
        return {"b": self.b, "c": self.c, "measure_kind": self.measure_kind,
                "basis": self.basis, "units": units(self.base), "notes": self.notes}


def lipschitz_constant(F, guard=DEFAULT_GUARD):
    """Largest change of F under a single-coordinate substitution.

    Falls back to ``F.declared_lip`` when the domain exceeds ``guard``.
    """
    try:
        space_size(F.q, F.n, guard)
    except ValueError:
        if F.declared_lip is None:
            raise
        return float(F.declared_lip)
    if F.n == 0:
        return 0.0
    T = F.table.reshape((F.q,) * F.n)
    return float(max(np.max(T.max(axis=j) - T.min(axis=j)) for j in range(F.n)))


def mgf_excess(values, masses, b, c, base=2, t_grid=T_GRID):
    """max_t [log E exp{t(F - EF)} - log b - c t^2] over the grid (<= 0 means valid)."""
    v = np.asarray(values, float)
    w = as_masses(masses)
    lb = ln_base(base)
    keep = w > 0
    v, w = v[keep], w[keep]
    dev = (v - w @ v) * lb
    logb = math.log(b) / lb
    worst = -math.inf
    for t in t_grid:
        lm = float(logsumexp(t * dev, b=w)) / lb
        worst = max(worst, lm - logb - c * t * t)
    return worst


def make_cert(F, measure_kind="product-discrete", basis="azuma", params=None, base=2,
              measure=None):
    """Issue a concentration certificate.

    Bases
    -----
    azuma
        Hamming-Lipschitz F under a product measure: (1, n L^2/(2 log e)).
    gaussian-lipschitz
        L-Lipschitz F under N(0, s I): (1, s L^2/(2 log e)); ``params["variance"]``
        defaults to 1 + P with ``params["P"]``.
    declared
        Bounded |F| <= A with a chosen c: (exp{A^2/(4c)}, c).  This value
        is only issued for c >= A^2/(2 log e), where Hoeffding's lemma
        makes it valid; below that the always-valid exp{A^2/c} is used.
    empirical-mgf
        Smallest b for a given c that satisfies the MGF bound on the
        t-grid for the supplied enumerable ``measure``.

    When ``measure`` (masses over the table domain) is given, the MGF
    inequality is validated on the t-grid and the worst excess recorded.
    """
    params = dict(params or {})
    le = log_e(base)
    notes = {}
    if basis == "azuma":
        if (getattr(F, "metric", "hamming") != "hamming"
                or measure_kind not in ("product-discrete", "code-conditional")):
            raise ValueError("azuma basis needs a Hamming-Lipschitz F and a product measure")
        L = lipschitz_constant(F)
        if F.declared_lip is not None:
            if L > F.declared_lip + 1e-9:
                raise ValueError(f"measured Lipschitz constant {L} exceeds declared {F.declared_lip}")
            L = F.declared_lip
        b, c = 1.0, F.n * L * L / (2.0 * le)
        notes["lip"] = L
    elif basis == "gaussian-lipschitz":
        L = params.get("lip", getattr(F, "declared_lip", None))
        if L is None:
            raise ValueError("gaussian-lipschitz basis needs a declared Lipschitz constant")
        s = params.get("variance", 1.0 + params.get("P", 0.0))
        b, c = 1.0, s * L * L / (2.0 * le)
        notes["lip"] = L
    elif basis == "declared":
        A, c = float(params["A"]), float(params["c"])
        with np.errstate(over="ignore"):
            if c >= A * A / (2.0 * le):
                b = float(bexp(A * A / (4.0 * c), base))
                notes["rule"] = "exp(A^2/(4c))"
            else:
                b = float(bexp(A * A / c, base))
                notes["rule"] = "exp(A^2/c)"
    elif basis == "empirical-mgf":
        if measure is None:
            raise ValueError("empirical-mgf basis needs an enumerable measure")
        c = float(params["c"])
        excess = mgf_excess(F.table, measure, 1.0, c, base)
        b = float(bexp(max(excess, 0.0), base)) * (1.0 + 1e-12)
    else:
        raise ValueError(f"unknown basis {basis!r}")
    if measure is not None:
        values = F.table if hasattr(F, "table") else np.asarray(F, float)
        notes["mgf_excess"] = mgf_excess(values, measure, b, c, base)
        notes["t_grid"] = "+-2^(k/2), k = -8..8"
    return ConcentrationCert(b=b, c=c, measure_kind=measure_kind, basis=basis, base=base, notes=notes)


def variance_from_cert(values, masses, cert):
    """Check Var[F] <= 4 c log(2 b e)."""
    v = np.asarray(values, float)
    w = as_masses(masses)
    m = w @ v
    var = float(w @ (v - m) ** 2)
    lb = ln_base(cert.base)
    rhs = 4.0 * cert.c * (math.log(2.0 * cert.b) + 1.0) / lb
    return BoundReport("cert-variance", var, rhs, "<=", constants=cert.to_dict(),
                       units=units(cert.base))


def expectation_transfer(F, P_out, caod, cert, D=None):
    """|E_P F - E_* F| <= 2 sqrt(c D(P || P*) + c log b)."""
    base = cert.base
    p = as_masses(P_out)
    q = caod.masses() if isinstance(caod, ProductDist) else as_masses(caod)
    vals = F.table if hasattr(F, "table") else np.asarray(F, float)
    D = kl(p, q, base) if D is None else D
    lhs = abs(float(p @ vals) - float(q @ vals))
    logb = math.log(cert.b) / ln_base(base)
    rhs = 2.0 * math.sqrt(max(cert.c * D + cert.c * logb, 0.0))
    return BoundReport("expectation-transfer", lhs, rhs, "<=",
                       constants={**cert.to_dict(), "D": D},
                       details={"E_code": float(p @ vals), "E_caod": float(q @ vals)},
                       units=units(base))


def empirical_average_transfer(f, dmc, code, sol, c, D=None):
    """|(1/n) sum_j E f(Y_j) - E f(Y*)| <= 2 sqrt((c/n) D) for (1, c)-concentrated f."""
    base = sol.base
    f = np.asarray(f, float)
    pbar = empirical_output(dmc, code, 1)
    if D is None:
        py = conditional_rows(dmc, code).mean(axis=0)
        D = kl(py, ProductDist(sol.caod, code.n).masses(), base)
    lhs = abs(float(pbar @ f) - float(sol.caod.masses @ f))
    rhs = 2.0 * math.sqrt(max(c * D / code.n, 0.0))
    return BoundReport("empirical-average-transfer", lhs, rhs, "<=",
                       constants={"c": c, "D": D}, units=units(base))


def tail_transfer(F, dmc, code, cert, t_grid, sol=None, eps=None, guard=DEFAULT_GUARD):
    """Tail and variance transfer for a maximal-error code.

    Checks, for each t in the grid,

        P[|F(Y^n) - E F(Y*^n)| > t] <= 3 b exp{nC - log M + a sqrt(n) - t^2/(16 c)}

    and Var[F(Y^n)] <= 16 c (nC - log M + a sqrt(n) + log(6 b e)), with
    a sqrt(n) the explicit output-KL excess at the code's exact maximal
    error.  The returned report compares the largest ratio tail/bound
    with 1; the variance check is attached under ``details["variance"]``.
    """
    sol = blahut_arimoto(dmc) if sol is None else sol
    base = sol.base
    lb = ln_base(base)
    n, M = code.n, code.M
    if eps is None:
        eps = exact_error(dmc, code, guard=guard)[1]
    if eps >= 1.0:
        return BoundReport("tail-transfer", math.nan, math.inf, "<=", constants={"eps": eps},
                           units=units(base), verdict="inconclusive")
    consts = output_kl_constants(dmc, sol, n, eps)
    # C1 = inf: only the formula-only output-KL budget exists
    verdict = "" if math.isfinite(consts["excess"]) else "inconclusive"
    budget = n * sol.C - math.log(M) / lb + consts["excess"]
    py = conditional_rows(dmc, code, guard).mean(axis=0)
    q = ProductDist(sol.caod, n).masses(guard)
    vals = F.table
    fbar = float(q @ vals)
    rows = []
    worst = 0.0
    for t in np.atleast_1d(t_grid):
        tail = float(py[np.abs(vals - fbar) > t].sum())
        bound = 3.0 * cert.b * float(bexp(budget - t * t / (16.0 * cert.c), base))
        rows.append({"t": float(t), "tail": tail, "bound": bound})
        worst = max(worst, tail / bound if bound > 0 else math.inf)
    m = float(py @ vals)
    var = float(py @ (vals - m) ** 2)
    vbound = 16.0 * cert.c * (budget + math.log(6.0 * cert.b * math.e) / lb)
    var_rep = BoundReport("variance-transfer", var, vbound, "<=", units=units(base))
    return BoundReport("tail-transfer", worst, 1.0, "<=",
                       constants={**cert.to_dict(), "budget": budget, "eps": eps,
                                  "a_sqrt_n": consts["excess"]},
                       details={"rows": rows, "variance": var_rep.to_dict(),
                                "variance_verdict": var_rep.verdict},
                       units=units(base), verdict=verdict)


def cramer_constant(f, theta, caod, base=2):
    """b with 2 log e * b = m2 + 4 e^-2 m1 log e / theta^2."""
    f = np.asarray(f, float)
    q = as_masses(caod)
    le = log_e(base)
    m1 = float(q @ bexp(theta * f, base))
    m2 = float(q @ f ** 2)
    return (m2 + 4.0 * math.exp(-2.0) * m1 * le / theta ** 2) / (2.0 * le), m1, m2


def cramer_transfer(f, theta, dmc, code, sol=None, D=None, guard=DEFAULT_GUARD):
    """(1/n) sum_j E f(Y_j) <= E f(Y*) + n^{-3/4} D(P_{Y^n}||P*) + b n^{-1/4}.

    Requires n >= 16/theta^4; otherwise the verdict is inconclusive.
    """
    sol = blahut_arimoto(dmc) if sol is None else sol
    base = sol.base
    f = np.asarray(f, float)
    n = code.n
    b, m1, m2 = cramer_constant(f, theta, sol.caod, base)
    lhs = float(empirical_output(dmc, code, 1) @ f)
    if D is None:
        py = conditional_rows(dmc, code, guard).mean(axis=0)
        D = kl(py, ProductDist(sol.caod, n).masses(guard), base)
    ef = float(sol.caod.masses @ f)
    rhs = ef + n ** -0.75 * D + b * n ** -0.25
    consts = {"theta": theta, "b": b, "m1": m1, "m2": m2, "D": D, "n": n}
    verdict = "" if n >= 16.0 / theta ** 4 else "inconclusive"
    return BoundReport("cramer-transfer", lhs, rhs, "<=", constants=consts,
                       details={"E_f_caod": ef}, units=units(base), verdict=verdict)
