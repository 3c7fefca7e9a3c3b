"""Information measures, transport distances and small analytic lemmas.

Conventions, fixed globally: ``0 log 0 = 0`` and ``p log(p/0) = +inf``.
Infinite values are represented by IEEE ``inf``, which is absorbing
under addition and compares correctly, so no code path ever relies on
a floating overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.special import rel_entr, logsumexp

from ._enum import DEFAULT_GUARD, product_block, product_full, space_size
from ._units import INF, bexp, ln_base, log_e, units
from .reports import BoundReport

MASS_TOL = 1e-12
OT_GUARD = 512


class FiniteDist:
    """Probability vector over an indexed alphabet."""

    def __init__(self, masses, tol=MASS_TOL, normalize=False):
        m = np.array(masses, dtype=float).ravel()
        if m.size == 0:
            raise ValueError("empty distribution")
        if np.any(~np.isfinite(m)) or np.any(m < 0):
            raise ValueError("masses must be finite and non-negative")
        s = m.sum()
        if normalize:
            m = m / s
        elif abs(s - 1.0) > tol:
            raise ValueError(f"masses sum to {s!r}, not 1")
        self.masses = m

    def __len__(self):
        return self.masses.size

    def __array__(self, dtype=None, copy=None):
        return self.masses if dtype is None else self.masses.astype(dtype)

    def __repr__(self):
        return f"FiniteDist({np.array2string(self.masses, precision=6)})"


class ProductDist:
    """Lazily evaluated n-fold product of a finite base distribution."""

    def __init__(self, base, n):
        self.base = base if isinstance(base, FiniteDist) else FiniteDist(base)
        self.n = int(n)

    @property
    def size(self):
        return len(self.base) ** self.n

    def mass(self, word):
        b = self.base.masses
        return float(np.prod([b[int(s)] for s in word])) if len(word) else 1.0

    def block(self, start, stop):
        return product_block(self.base.masses, self.n, start, stop)

    def masses(self, guard=DEFAULT_GUARD):
        return product_full(self.base.masses, self.n, guard)


def as_masses(P):
    """Plain float vector from a FiniteDist, ProductDist or array-like."""
    if isinstance(P, ProductDist):
        return P.masses()
    if isinstance(P, FiniteDist):
        return P.masses
    return np.asarray(P, dtype=float).ravel()


def _pair(P, Q):
    p, q = as_masses(P), as_masses(Q)
    if p.shape != q.shape:
        raise ValueError(f"alphabet mismatch: {p.size} vs {q.size}")
    return p, q


def kl(P, Q, base=2):
    """Relative entropy D(P||Q); +inf when P is not dominated by Q."""
    p, q = _pair(P, Q)
    return float(np.sum(rel_entr(p, q))) / ln_base(base)


def binary_kl(x, y, base=2):
    """d(x||y) = x log(x/y) + (1-x) log((1-x)/(1-y))."""
    if not 0.0 <= x <= 1.0 or not 0.0 <= y <= 1.0:
        raise ValueError("binary_kl arguments must lie in [0, 1]")
    v = rel_entr(x, y) + rel_entr(1.0 - x, 1.0 - y)
    return float(v) / ln_base(base)


def tv(P, Q):
    """Total variation, half the L1 distance."""
    p, q = _pair(P, Q)
    return 0.5 * float(np.abs(p - q).sum())


def pinsker_check(P, Q, base=2):
    """Check TV^2 <= D / (2 log e)."""
    d = kl(P, Q, base)
    t = tv(P, Q)
    return BoundReport("pinsker", t * t, d / (2.0 * log_e(base)), "<=",
                       constants={"log_e": log_e(base)},
                       details={"D": d, "TV": t}, units=units(base))


def conditional_kl_identity(W, P_X, Q_Y, base=2):
    """Golden formula I(X;Y) = D(P_{Y|X}||Q|P_X) - D(P_Y||Q).

    Parameters
    ----------
    W : array_like or DmcSpec
        Row-stochastic kernel, one row per input (or per codeword).
    P_X, Q_Y : array_like
        Input law and reference output law.

    Returns
    -------
    D_cond, D_marg, I : float
        ``I`` is computed from the identity; a direct double sum
        ``sum P_X W log(W / P_Y)`` is checked against it within 1e-9
        whenever both are finite.
    """
    W = np.asarray(getattr(W, "W", W), dtype=float)
    px = as_masses(P_X)
    q = as_masses(Q_Y)
    lb = ln_base(base)
    py = px @ W
    used = px > 0
    d_rows = np.sum(rel_entr(W[used], q[None, :]), axis=1)
    d_cond = float(px[used] @ d_rows) / lb
    d_marg = float(np.sum(rel_entr(py, q))) / lb
    direct = float(px[used] @ np.sum(rel_entr(W[used], py[None, :]), axis=1)) / lb
    if math.isinf(d_cond) or math.isinf(d_marg):
        ident = direct
    else:
        ident = d_cond - d_marg
        if abs(ident - direct) > 1e-9 * max(1.0, abs(direct)):
            raise ArithmeticError(f"identity mismatch {ident} vs {direct}")
    return d_cond, d_marg, ident


def donsker_varadhan_gap(P, Q, g, base=2):
    """Check E_P g - log E_Q exp(g) <= D(P||Q); ``g`` in base units."""
    p, q = _pair(P, Q)
    g = np.asarray(g, dtype=float)
    lb = ln_base(base)
    mask = p > 0
    ep = float(p[mask] @ g[mask])
    qmask = q > 0
    log_mgf = float(logsumexp(g[qmask] * lb, b=q[qmask])) / lb
    d = kl(p, q, base)
    return BoundReport("donsker-varadhan", ep - log_mgf, d, "<=",
                       details={"E_P_g": ep, "log_E_Q_exp_g": log_mgf},
                       units=units(base))


@dataclass
class TransportProblem:
    """Optimal transport between two finite measures.

    ``cost`` is the ground distance; for ``order=2`` it is squared
    before solving and the square root of the optimum is returned.
    """

    source: object
    target: object
    cost: np.ndarray
    order: int = 1

    def __post_init__(self):
        self.source = as_masses(self.source)
        self.target = as_masses(self.target)
        self.cost = np.asarray(self.cost, dtype=float)
        if self.cost.shape != (self.source.size, self.target.size):
            raise ValueError("cost matrix does not match the supports")
        if np.any(self.cost < 0):
            raise ValueError("ground cost must be non-negative")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")


@dataclass
class TransportResult:
    value: float
    coupling: np.ndarray
    potentials: tuple
    primal: float
    dual: float
    gap: float
    marginal_error: float

    def __iter__(self):
        yield self.value
        yield self.coupling


def wasserstein(prob, guard=OT_GUARD):
    """Exact W_1 or W_2 by linear programming over couplings.

    The dual returned by HiGHS is made exactly feasible by a c-transform
    of the source potentials, so ``primal - dual`` is a certified
    duality gap.
    """
    p, q, d = prob.source, prob.target, prob.cost
    m, k = d.shape
    if m > guard or k > guard:
        raise ValueError(f"support size {max(m, k)} exceeds guard {guard}")
    if abs(p.sum() - q.sum()) > 1e-9:
        raise ValueError("source and target masses differ")
    c = d ** 2 if prob.order == 2 else d
    rows = sparse.kron(sparse.eye(m), np.ones((1, k)))
    cols = sparse.kron(np.ones((1, m)), sparse.eye(k))
    A = sparse.vstack([rows, cols]).tocsr()
    b = np.concatenate([p, q])
    res = linprog(c.ravel(), A_eq=A, b_eq=b, bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    pi = np.clip(res.x.reshape(m, k), 0.0, None)
    u = np.asarray(res.eqlin.marginals[:m], dtype=float)
    v = np.min(c - u[:, None], axis=0)
    primal = float(np.sum(pi * c))
    dual = float(p @ u + q @ v)
    marg = max(float(np.abs(pi.sum(1) - p).max()), float(np.abs(pi.sum(0) - q).max()))
    value = math.sqrt(max(primal, 0.0)) if prob.order == 2 else primal
    return TransportResult(value, pi, (u, v), primal, dual, primal - dual, marg)


def ratio_mean_lemma_check(values, masses=None):
    """Check E|X - 1| <= sqrt(2 E ln(1/X)) for X > 0 with E X <= 1."""
    x = np.asarray(values, dtype=float).ravel()
    w = np.full(x.size, 1.0 / x.size) if masses is None else as_masses(masses)
    if np.any(x <= 0):
        raise ValueError("X must be positive")
    mean = float(w @ x)
    if mean > 1.0 + 1e-12:
        raise ValueError(f"E[X] = {mean} exceeds 1")
    lhs = float(w @ np.abs(x - 1.0))
    e_ln = float(w @ -np.log(x))
    rhs = math.sqrt(max(2.0 * e_ln, 0.0))
    return BoundReport("ratio-mean-lemma", lhs, rhs, "<=",
                       details={"E_X": mean, "E_ln_inv_X": e_ln}, units="nats")


def gaussian_quadrature(var=1.0, m=256):
    """m-point quantization of N(0, var) with equal-probability cells.

    Each cell is represented by its conditional mean, so the quantized
    law has the right mean and a variance slightly below ``var``.
    """
    from scipy.stats import norm

    edges = norm.ppf(np.linspace(0.0, 1.0, m + 1))
    pdf = norm.pdf(edges)
    pts = (pdf[:-1] - pdf[1:]) * m * math.sqrt(var)
    return pts, np.full(m, 1.0 / m)


def w2_to_gaussian(points, masses=None, var=1.0, m=256):
    """Illustrative W_2 between a 1-D discrete law and quantized N(0, var).

    Only one dimension is supported; the quadrature is an approximation
    and the value is never used in an assertion.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 1:
        raise ValueError("only one-dimensional laws are supported")
    w = np.full(x.size, 1.0 / x.size) if masses is None else as_masses(masses)
    g, gw = gaussian_quadrature(var, m)
    return wasserstein(TransportProblem(w, gw, np.abs(x[:, None] - g[None, :]), 2)).value


def w2_conjecture_refutation(n, M, P, base=2):
    """Rate-distortion lower bound on W_2 between a code and N(0, P I_n).

    An M-point input law satisfies W_2^2 >= n P exp(-(2/n) log M), so
    W_2 / sqrt(n) stays bounded away from zero whenever log M grows
    linearly.  Returns the normalized lower bound as a report whose
    claim is ``W_2/sqrt(n) >= 0``; the interesting number is ``rhs``.
    """
    lb = ln_base(base)
    logM = math.log(M) / lb
    w2_sq = n * P * float(bexp(-2.0 * logM / n, base))
    norm_w2 = math.sqrt(w2_sq / n)
    return BoundReport("w2-rate-distortion", norm_w2, 0.0, ">=",
                       constants={"n": n, "M": M, "P": P},
                       details={"W2_sq_lower": w2_sq, "rate": logM / n},
                       units=units(base))


def product_kl(base_P, base_Q, n, base=2):
    """D(P^n||Q^n) = n D(P||Q)."""
    return n * kl(base_P, base_Q, base)


def product_masses(dist, n, guard=DEFAULT_GUARD):
    space_size(len(as_masses(dist)), n, guard)
    return product_full(as_masses(dist), n, guard)


__all__ = [
    "FiniteDist", "ProductDist", "TransportProblem", "TransportResult", "INF",
    "kl", "binary_kl", "tv", "pinsker_check", "conditional_kl_identity",
    "donsker_varadhan_gap", "wasserstein", "ratio_mean_lemma_check",
    "w2_to_gaussian", "w2_conjecture_refutation", "as_masses",
]
