"""Codebooks, ML decoding, exact and Monte Carlo output statistics.

Exact quantities are obtained by enumerating every output word y^n
(mixed-radix index, see ``_enum``) in contiguous blocks; per-block
partial sums are reduced in block order so results do not depend on
the number of worker threads.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import entr, logsumexp, rel_entr

from . import rng as _rng
from ._enum import (BLOCK, DEFAULT_GUARD, GuardExceeded, block_ranges, cond_block,
                    space_size)
from ._parallel import ordered_map
from ._units import INF, ln_base, units
from .channels import AwgnSpec, blahut_arimoto
from .divergences import ProductDist, as_masses, kl
from .reports import BoundReport

TIE_RTOL = 1e-12
Z99 = float(stats.norm.ppf(0.995))


@dataclass
class Codebook:
    """M codewords of blocklength n, stored as an (M, n) array.

    Repeated codewords are allowed.  ``alphabet`` is ``"dmc"`` (integer
    symbols) or ``"awgn"`` (real coordinates).
    """

    words: np.ndarray
    alphabet: str = "dmc"
    criterion: str = "max"
    encoder: str = "deterministic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.alphabet not in ("dmc", "awgn"):
            raise ValueError(f"unknown alphabet {self.alphabet!r}")
        if self.criterion not in ("max", "avg"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        dtype = np.int64 if self.alphabet == "dmc" else float
        w = np.array(self.words, dtype=dtype)
        if w.ndim == 1:
            w = w.reshape(-1, 1) if w.size else w.reshape(1, 0)
        if w.ndim != 2 or w.shape[0] == 0:
            raise ValueError("words must be a non-empty M x n array")
        self.words = w

    @property
    def M(self):
        return self.words.shape[0]

    @property
    def n(self):
        return self.words.shape[1]

    def validate(self, channel):
        if isinstance(channel, AwgnSpec):
            if self.alphabet != "awgn":
                raise ValueError("AWGN channel needs a real-valued codebook")
            limit = self.n * channel.power
            norms = np.einsum("ij,ij->i", self.words, self.words)
            if np.any(norms > limit + 1e-9 * limit):
                raise ValueError("codeword violates the power constraint")
        else:
            if self.alphabet != "dmc":
                raise ValueError("DMC needs an integer codebook")
            if self.words.size and (self.words.min() < 0 or self.words.max() >= channel.input_size):
                raise ValueError("codeword symbol out of range")
            if channel.constrained:
                tot = channel.cost[self.words].sum(axis=1)
                if np.any(tot > self.n * channel.budget * (1 + 1e-12) + 1e-12):
                    raise ValueError("codeword violates the cost constraint")
        return self

    def to_dict(self):
        out = {"n": self.n, "M": self.M, "alphabet": self.alphabet,
               "words": self.words.tolist(), "criterion": self.criterion}
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_dict(cls, obj):
        words = obj["words"]
        code = cls(words, obj.get("alphabet", "dmc"), obj.get("criterion", "max"),
                   meta=dict(obj.get("meta", {})))
        if "n" in obj and int(obj["n"]) != code.n:
            raise ValueError("declared n does not match the words")
        if "M" in obj and int(obj["M"]) != code.M:
            raise ValueError("declared M does not match the words")
        return code


def load_code(path):
    with open(path) as fh:
        return Codebook.from_dict(json.load(fh))


def random_code(q, n, M, rng, distinct=True):
    """M random words over a q-ary alphabet; distinct unless disabled."""
    if distinct and M > q ** n:
        raise ValueError("not enough distinct words")
    if distinct:
        idx = rng.choice(q ** n, size=M, replace=False)
        words = np.array([[(i // q ** (n - 1 - j)) % q for j in range(n)] for i in idx])
    else:
        words = rng.integers(0, q, size=(M, n))
    return Codebook(words.reshape(M, n))


def all_codebooks(q, n, M):
    """Every set of M distinct q-ary words of length n, lexicographic order."""
    words = list(itertools.product(range(q), repeat=n))
    for combo in itertools.combinations(words, M):
        yield Codebook(np.array(combo, dtype=np.int64).reshape(M, n))


def repetition_code(n, q=2):
    return Codebook(np.repeat(np.arange(q)[:, None], n, axis=1))


# ----------------------------------------------------------------------
# exact enumeration core


def _reference(Q, code, sol):
    """Block function for the reference output law on Y^n."""
    if Q is None:
        Q = ProductDist(sol.caod, code.n)
    if isinstance(Q, ProductDist):
        return Q.block
    q = as_masses(Q)
    return lambda a, b: q[a:b]


def _decide(cond):
    """ML winners per column, ties (relative 1e-12) to the lowest index."""
    top = cond.max(axis=0)
    return np.argmax(cond >= top * (1.0 - TIE_RTOL), axis=0)


def _xlog(a, b):
    """a * log b with 0 * log 0 = 0 (b may be zero where a is zero)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a > 0, a * np.log(np.where(b > 0, b, 1.0)), 0.0)


def _block_stats(W, words, qfun, decoder, a, b):
    cond = cond_block(W, words, a, b)
    py = cond.mean(axis=0)
    qy = qfun(a, b)
    dec = _decide(cond) if decoder is None else np.asarray(decoder)[a:b]
    hit = np.zeros_like(cond)
    hit[dec, np.arange(cond.shape[1])] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        lpy = np.where(py > 0, np.log(np.where(py > 0, py, 1.0)), 0.0)
        lq = np.log(np.where(qy > 0, qy, 1.0))
        lc = np.log(np.where(cond > 0, cond, 1.0))
    pos = cond > 0
    lr_q = np.where(pos, lc - lq[None, :], 0.0)
    lr_py = np.where(pos, lc - lpy[None, :], 0.0)
    dominated = np.all(qy[None, :] > 0, axis=1) | ~np.any(pos & (qy[None, :] == 0), axis=1)
    return {
        "correct": np.sum(cond * hit, axis=1),
        "dq": np.where(dominated, np.sum(cond * lr_q, axis=1), INF),
        "m2q": np.sum(cond * lr_q ** 2, axis=1),
        "dpy": np.sum(cond * lr_py, axis=1),
        "m2py": np.sum(cond * lr_py ** 2, axis=1),
        "d_out": float(np.sum(rel_entr(py, qy))),
        "h_out": float(np.sum(entr(py))),
        "v": -np.sum(cond * lpy[None, :], axis=1),
        "s": np.sum(cond * lpy[None, :] ** 2, axis=1),
        "py_m2": float(np.sum(py * lpy ** 2)),
        "mass": float(np.sum(py)),
        "decoder": dec,
    }


@dataclass
class _Totals:
    correct: np.ndarray
    dq: np.ndarray
    m2q: np.ndarray
    dpy: np.ndarray
    m2py: np.ndarray
    d_out: float
    h_out: float
    v: np.ndarray
    s: np.ndarray
    py_m2: float
    mass: float
    decoder: np.ndarray
    M: int
    n: int


def enumerate_code(dmc, code, Q=None, sol=None, decoder=None, guard=DEFAULT_GUARD,
                   threads=None, block=BLOCK):
    """One exhaustive pass over Y^n collecting every exact statistic (nats)."""
    size = space_size(dmc.output_size, code.n, guard)
    if Q is None and sol is None:
        sol = blahut_arimoto(dmc)
    qfun = _reference(Q, code, sol)
    parts = ordered_map(lambda r: _block_stats(dmc.W, code.words, qfun, decoder, *r),
                        block_ranges(size, block), threads)
    def red(key):
        return np.sum(np.stack([np.asarray(p[key], dtype=float) for p in parts]), axis=0)
    return _Totals(correct=red("correct"), dq=red("dq"), m2q=red("m2q"), dpy=red("dpy"),
                   m2py=red("m2py"), d_out=float(red("d_out")), h_out=float(red("h_out")),
                   v=red("v"), s=red("s"), py_m2=float(red("py_m2")), mass=float(red("mass")),
                   decoder=np.concatenate([p["decoder"] for p in parts]),
                   M=code.M, n=code.n)


def conditional_rows(dmc, code, guard=DEFAULT_GUARD):
    """Full (M, |Y|^n) matrix of P(y | c_i)."""
    size = space_size(dmc.output_size, code.n, guard)
    return cond_block(dmc.W, code.words, 0, size)


def ml_decode(dmc, code, guard=DEFAULT_GUARD, threads=None):
    """Maximum-likelihood decoder table indexed by output word; ties to lowest index."""
    size = space_size(dmc.output_size, code.n, guard)
    parts = ordered_map(lambda r: _decide(cond_block(dmc.W, code.words, *r)),
                        block_ranges(size), threads)
    return np.concatenate(parts)


def exact_error(dmc, code, decoder=None, guard=DEFAULT_GUARD, threads=None):
    """Exact (eps_avg, eps_max) of ``decoder`` (ML when omitted)."""
    size = space_size(dmc.output_size, code.n, guard)
    def part(r):
        cond = cond_block(dmc.W, code.words, *r)
        dec = _decide(cond) if decoder is None else np.asarray(decoder)[r[0]:r[1]]
        return cond[dec, np.arange(cond.shape[1])], dec
    correct = np.zeros(code.M)
    for (a, b), (val, dec) in zip(block_ranges(size), ordered_map(part, block_ranges(size), threads)):
        correct += np.bincount(dec, weights=val, minlength=code.M)
    err = np.clip(1.0 - correct, 0.0, 1.0)
    return float(err.mean()), float(err.max())


def induced_output(dmc, code, guard=DEFAULT_GUARD):
    """P_{Y^n}(y) = (1/M) sum_i prod_j W(y_j | c_ij)."""
    return conditional_rows(dmc, code, guard).mean(axis=0)


def empirical_output(dmc, code, k=1):
    """k-th order empirical output law: average of the n-k+1 window marginals."""
    n = code.n
    if not 1 <= k <= n:
        raise ValueError("k must lie in 1..n")
    W = dmc.W
    acc = np.zeros(dmc.output_size ** k)
    for j in range(n - k + 1):
        rows = W[code.words[:, j]]
        for l in range(1, k):
            nxt = W[code.words[:, j + l]]
            rows = (rows[:, :, None] * nxt[:, None, :]).reshape(code.M, -1)
        acc += rows.mean(axis=0)
    return acc / (n - k + 1)


@dataclass
class CodeMetrics:
    """Exact statistics of a DMC code under equiprobable messages.

    Information quantities in ``base`` units, variances in squared units.
    ``checks`` holds the residuals of the identity and second-pass
    cross-checks; ``dconvk`` holds one report per computed k.
    """

    n: int
    M: int
    eps_avg: float
    eps_max: float
    D_out: float
    I_code: float
    H_out: float
    D_cond: float
    empirical_k: list
    aep_var: float
    aep_split: dict
    S_code: float
    base: float = 2
    dconvk: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "n": self.n, "M": self.M, "units": units(self.base),
            "eps_avg": self.eps_avg, "eps_max": self.eps_max, "D_out": self.D_out,
            "I_code": self.I_code, "H_out": self.H_out, "D_cond": self.D_cond,
            "aep_var": self.aep_var, "aep_split": self.aep_split, "S_code": self.S_code,
            "empirical_k": [{"k": k, "dist": np.asarray(p).tolist(), "D": d}
                            for k, p, d in self.empirical_k],
            "dconvk": [r.to_dict() for r in self.dconvk],
            "checks": self.checks,
        }


def _second_pass(dmc, code, sol, guard):
    """D_out, I and H recomputed from full arrays in reverse order with fsum."""
    cond = conditional_rows(dmc, code, guard)[:, ::-1]
    py = cond.mean(axis=0)
    q = ProductDist(sol.caod, code.n).masses(guard)[::-1]
    d_out = math.fsum(rel_entr(py, q).tolist())
    h = math.fsum(entr(py).tolist())
    i_terms = rel_entr(cond, py[None, :]).ravel()[::-1]
    info = math.fsum(i_terms.tolist()) / code.M
    return d_out, info, h


def code_metrics(dmc, code, sol=None, base=None, ks=(1, 2), guard=DEFAULT_GUARD,
                 threads=None, verify=True):
    """Exact output statistics of a DMC code.

    Computes the ML error probabilities, D(P_{Y^n}||P*^n), I(X^n;Y^n),
    H(Y^n), the k-th order empirical output laws with the convexity
    check D(Pbar^(k)||P*^k) <= k/(n-k+1) D_out, and the output AEP
    variance with its law-of-total-variance split.
    """
    sol = blahut_arimoto(dmc) if sol is None else sol
    base = sol.base if base is None else base
    lb = ln_base(base)
    T = enumerate_code(dmc, code, sol=sol, guard=guard, threads=threads)
    err = np.clip(1.0 - T.correct, 0.0, 1.0)
    d_cond = float(T.dq.mean())
    info = float(T.dpy.mean())
    ident = d_cond - T.d_out
    var, split = _aep_from_totals(T)
    S_code = float(np.max(T.m2q - T.dq ** 2)) if np.all(np.isfinite(T.dq)) else INF

    emp, reports = [], []
    for k in ks:
        if k > code.n:
            continue
        pk = empirical_output(dmc, code, k)
        ref = sol.caod.masses
        for _ in range(k - 1):
            ref = np.outer(ref, sol.caod.masses).ravel()
        dk = kl(pk, ref, base)
        emp.append((k, pk, dk))
        reports.append(BoundReport(f"dconv{k}", dk, k / (code.n - k + 1) * T.d_out / lb, "<=",
                                   constants={"k": k, "n": code.n}, units=units(base)))

    checks = {"mass": T.mass, "identity_residual": abs(ident - info) / lb}
    if verify:
        d2, i2, h2 = _second_pass(dmc, code, sol, guard)
        checks["second_pass_max_diff"] = max(abs(d2 - T.d_out), abs(i2 - info),
                                             abs(h2 - T.h_out)) / lb
    return CodeMetrics(n=code.n, M=code.M, eps_avg=float(err.mean()), eps_max=float(err.max()),
                       D_out=T.d_out / lb, I_code=info / lb, H_out=T.h_out / lb,
                       D_cond=d_cond / lb, empirical_k=emp, aep_var=var / lb ** 2,
                       aep_split={k: v / lb ** 2 for k, v in split.items()},
                       S_code=S_code / lb ** 2, base=base, dconvk=reports, checks=checks)


def _aep_from_totals(T):
    """Var[log P_Y(Y)] and its split E[Var | X] + Var[E(-log P_Y | X)] (nats^2)."""
    total = T.py_m2 - T.h_out ** 2
    within = float(np.mean(T.s - T.v ** 2))
    between = float(np.mean(T.v ** 2) - np.mean(T.v) ** 2)
    return float(total), {"within": within, "between": between,
                          "split_residual": float(total - within - between)}


def aep_variance(dmc, code, base=2, guard=DEFAULT_GUARD, threads=None):
    """Exact Var[log P_{Y^n}(Y^n)] and its law-of-total-variance split."""
    q = np.full(dmc.output_size, 1.0 / dmc.output_size)
    T = enumerate_code(dmc, code, Q=ProductDist(q, code.n), guard=guard, threads=threads)
    var, split = _aep_from_totals(T)
    lb2 = ln_base(base) ** 2
    return var / lb2, {k: v / lb2 for k, v in split.items()}


def two_composition_code(n, M_each, fractions=(0.25, 0.75), seed=0):
    """Binary code merging two constant-composition subcodes.

    Subcode ``i`` holds ``M_each`` distinct words with exactly
    ``round(fractions[i] * n)`` ones.  Over a channel whose conditional
    entropy depends on the input letter the two halves have different
    H(Y^n | X^n = x), which makes Var[log P_{Y^n}] grow like n^2.
    """
    g = _rng.stream(seed, n)
    words = []
    for frac in fractions:
        w = int(round(frac * n))
        seen = set()
        while len(seen) < M_each:
            row = np.zeros(n, dtype=np.int64)
            row[g.choice(n, size=w, replace=False)] = 1
            seen.add(tuple(row))
            if len(seen) >= math.comb(n, w):
                break
        words.extend(sorted(seen))
    return Codebook(np.array(words, dtype=np.int64), criterion="avg")


def counterexample_extend(dmc, base_code, x0, eps_target, sol=None, base=None,
                          guard=DEFAULT_GUARD):
    """Average-error code whose output is far from the caod.

    Appends ``ceil((eps - eps') / (1 - eps) * M')`` copies of the
    constant word (x0, ..., x0) to a maximal-error code with error eps'.
    The copies are almost never decoded, so the average error stays
    near ``eps_target``, while a fixed fraction of the output mass now
    comes from a product law at divergence n D(W_x0 || P*).

    Returns the extended codebook and a report asserting

        D(P_Y || P*) >= P_S(1) n D(W_x0 || P*) + P_S(0) D(P'_Y || P*) - log 2,

    where S indicates a transmitted copy and P' is the base output law.
    If the ML average error of the extension exceeds the target the
    number of copies is lowered until it does not; ``details["k_rule"]``
    records which rule produced the final count.
    """
    sol = blahut_arimoto(dmc) if sol is None else sol
    base = sol.base if base is None else base
    lb = ln_base(base)
    d_x0 = kl(dmc.W[int(x0)], sol.caod.masses, base)
    if not d_x0 > 0:
        raise ValueError("D(W_x0 || P*) must be positive")
    _, eps_p = exact_error(dmc, base_code, guard=guard)
    if eps_p > eps_target + 1e-15:
        raise ValueError(f"base max error {eps_p} exceeds the target {eps_target}")
    n, Mp = base_code.n, base_code.M
    k = max(0, math.ceil((eps_target - eps_p) / (1.0 - eps_target) * Mp - 1e-9))
    rule = "ceil"

    def build(k):
        extra = np.full((k, n), int(x0), dtype=np.int64)
        return Codebook(np.vstack([base_code.words, extra]), criterion="avg")

    code = build(k)
    eps_avg, eps_max = exact_error(dmc, code, guard=guard)
    while eps_avg > eps_target and k > 0:
        k -= 1
        rule = "reduced"
        code = build(k)
        eps_avg, eps_max = exact_error(dmc, code, guard=guard)

    q = ProductDist(sol.caod, n)
    D = kl(induced_output(dmc, code, guard), q.masses(guard), base)
    D_base = kl(induced_output(dmc, base_code, guard), q.masses(guard), base)
    ps1 = k / (Mp + k)
    rhs = ps1 * n * d_x0 + (1.0 - ps1) * D_base - math.log(2.0) / lb
    rep = BoundReport("counterexample-decomposition", D, rhs, ">=",
                      constants={"P_S1": ps1, "D_x0": d_x0, "D_base": D_base,
                                 "copies": k, "eps_base_max": eps_p},
                      details={"eps_avg": eps_avg, "eps_max": eps_max, "D_per_n": D / n,
                               "k_rule": rule, "eps_target": eps_target},
                      units=units(base))
    return code, rep


# ----------------------------------------------------------------------
# AWGN Monte Carlo


@dataclass
class McEstimate:
    value: float
    lo: float
    hi: float

    def to_dict(self):
        return {"value": self.value, "ci99": [self.lo, self.hi]}


def _mean_ci(x):
    x = np.asarray(x, float)
    m = float(x.mean())
    h = Z99 * float(x.std(ddof=1)) / math.sqrt(x.size)
    return McEstimate(m, m - h, m + h)


def _var_ci(x):
    x = np.asarray(x, float)
    c = x - x.mean()
    v = float(np.mean(c ** 2))
    m4 = float(np.mean(c ** 4))
    h = Z99 * math.sqrt(max(m4 - v * v, 0.0) / x.size)
    return McEstimate(v * x.size / (x.size - 1), v - h, v + h)


def _clopper_pearson(k, n, level=0.99):
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def _awgn_shard(words, norms, P, seed, shard, start, size):
    M, n = words.shape
    g = _rng.stream(seed, shard)
    z = g.standard_normal((size, n))
    msg = (start + np.arange(size)) % M
    y = words[msg] + z
    corr = y @ words.T
    score = corr - 0.5 * norms[None, :]
    dec = np.argmax(score, axis=1)
    y2 = np.einsum("ij,ij->i", y, y)
    # log p_Y(y) + (n/2) log 2pi, mixture in log-sum-exp form
    lpy = logsumexp(-0.5 * (y2[:, None] - 2.0 * corr + norms[None, :]), axis=1) - math.log(M)
    s = 1.0 + P
    lps = -0.5 * y2 / s - 0.5 * n * math.log(s)
    errs = np.bincount(msg, weights=(dec != msg).astype(float), minlength=M)
    trials = np.bincount(msg, minlength=M).astype(float)
    return lpy - lps, lpy - 0.5 * n * math.log(2 * math.pi), errs, trials


def awgn_mc_report(awgn, code, samples=100_000, seed=0, threads=None, base=2,
                   shard_size=_rng.SHARD_SIZE, max_M=2 ** 16):
    """Monte Carlo error, D(P_Y||P*) and output AEP variance for an AWGN code.

    Messages are assigned round-robin (sample g carries message g mod M),
    which stratifies over the codebook.  Shard s draws its noise from the
    counter-based stream ``rng.stream(seed, s)``.  All intervals are 99%:
    normal intervals for means and the variance, Clopper-Pearson for the
    average error and a Bonferroni-corrected Clopper-Pearson bound for the
    maximal error.
    """
    if samples < 10_000:
        raise ValueError("at least 10^4 samples are required")
    if code.M > max_M:
        raise GuardExceeded(f"M = {code.M} exceeds the mixture guard {max_M}")
    code.validate(awgn)
    words = np.asarray(code.words, float)
    norms = np.einsum("ij,ij->i", words, words)
    sizes = _rng.shard_sizes(samples, shard_size)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    parts = ordered_map(lambda s: _awgn_shard(words, norms, awgn.power, seed, s, starts[s], sizes[s]),
                        range(len(sizes)), threads)
    lr = np.concatenate([p[0] for p in parts])
    lpy = np.concatenate([p[1] for p in parts])
    errs = np.sum(np.stack([p[2] for p in parts]), axis=0)
    trials = np.sum(np.stack([p[3] for p in parts]), axis=0)
    lb = ln_base(base)

    d = _mean_ci(lr / lb)
    v = _var_ci(lpy / lb)
    k = int(round(errs.sum()))
    lo, hi = _clopper_pearson(k, samples)
    per = errs / np.maximum(trials, 1)
    level = 1.0 - 0.01 / code.M
    max_hi = max(_clopper_pearson(int(round(e)), int(t), level)[1] for e, t in zip(errs, trials))
    return {
        "n": code.n, "M": code.M, "samples": int(samples), "seed": int(seed), "units": units(base),
        "eps_avg": McEstimate(k / samples, lo, hi),
        "eps_max": McEstimate(float(per.max()), 0.0, max_hi),
        "D_out": d,
        "aep_var": v,
    }
