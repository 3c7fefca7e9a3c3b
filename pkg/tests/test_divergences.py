import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblab.channels import bsc, blahut_arimoto
from fblab.divergences import (FiniteDist, ProductDist, TransportProblem, binary_kl,
                               conditional_kl_identity, donsker_varadhan_gap, kl, pinsker_check,
                               ratio_mean_lemma_check, tv, w2_conjecture_refutation,
                               w2_to_gaussian, wasserstein)

from oracles import w1_line

dist = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6).filter(lambda v: sum(v) > 1e-3)


def _norm(v):
    v = np.asarray(v, float)
    return v / v.sum()


def test_kl_examples():
    assert kl([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.2075187496, abs=1e-9)
    assert kl([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert kl([1, 0], [0, 1]) == math.inf
    assert kl([0.5, 0.5], [0.25, 0.75], base=math.e) == pytest.approx(0.2075187496 * math.log(2))


def test_binary_kl_examples():
    assert binary_kl(0.5, 0.25) == pytest.approx(0.2075187496, abs=1e-9)
    assert binary_kl(0.3, 0.3) == 0.0
    assert binary_kl(1.0, 0.5) == pytest.approx(1.0)


def test_tv_examples():
    assert tv([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.25)
    assert tv([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert tv([1, 0], [0, 1]) == 1.0


def test_pinsker_example():
    r = pinsker_check([0.5, 0.5], [0.9, 0.1])
    assert r.lhs == pytest.approx(0.16)
    assert r.details["D"] == pytest.approx(0.7369655941, abs=1e-9)
    assert r.rhs == pytest.approx(0.7369655941 / (2 * math.log2(math.e)), abs=1e-9)
    assert r.verdict == "pass"
    assert pinsker_check([0.5, 0.5], [0.5, 0.5]).slack == 0.0


def test_finite_dist_validation():
    with pytest.raises(ValueError):
        FiniteDist([0.5, 0.6])
    with pytest.raises(ValueError):
        FiniteDist([1.2, -0.2])


def test_product_dist_mass():
    d = ProductDist(FiniteDist([0.3, 0.7]), 3)
    assert d.mass([1, 0, 1]) == pytest.approx(0.7 * 0.3 * 0.7, abs=1e-12)
    assert d.masses().sum() == pytest.approx(1.0, abs=1e-12)


def test_conditional_identity_examples():
    ch = bsc(0.11)
    s = blahut_arimoto(ch)
    d_cond, d_marg, i = conditional_kl_identity(ch, [0.5, 0.5], s.caod.masses)
    assert i == pytest.approx(s.C, abs=1e-9) and d_marg == pytest.approx(0, abs=1e-12)
    py = np.array([0.5, 0.5]) @ ch.W
    d_cond, d_marg, i = conditional_kl_identity(ch, [0.3, 0.7], [0.3, 0.7] @ ch.W)
    assert d_marg == 0.0 and i == pytest.approx(d_cond)
    W = np.eye(3)
    assert conditional_kl_identity(W, np.full(3, 1 / 3), np.full(3, 1 / 3))[2] == pytest.approx(math.log2(3))
    assert py.sum() == pytest.approx(1)


def test_donsker_varadhan_examples():
    p, q = _norm([1, 2, 3]), _norm([3, 2, 1])
    r = donsker_varadhan_gap(p, q, np.log2(p / q))
    assert r.slack == pytest.approx(0.0, abs=1e-12)
    r = donsker_varadhan_gap(p, q, np.full(3, 2.5))
    assert r.lhs == pytest.approx(0.0, abs=1e-12) and r.verdict == "pass"


def test_w1_equals_tv_two_point():
    p, q = [0.3, 0.7], [0.6, 0.4]
    res = wasserstein(TransportProblem(p, q, 1 - np.eye(2)))
    assert res.value == pytest.approx(tv(p, q), abs=1e-12)


def test_w1_self_is_zero_with_diagonal_coupling():
    p = _norm([1, 2, 3, 4])
    res = wasserstein(TransportProblem(p, p, 1 - np.eye(4)))
    assert res.value == pytest.approx(0, abs=1e-12)
    assert np.allclose(res.coupling, np.diag(p), atol=1e-10)


def test_w1_line_matches_quantile_oracle():
    xs, ys = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    p, q = np.array([0.5, 0.5]), np.array([0.2, 0.8])
    res = wasserstein(TransportProblem(p, q, np.abs(xs[:, None] - ys[None, :])))
    assert res.value == pytest.approx(w1_line(xs, p, ys, q), abs=1e-10)
    rng = np.random.default_rng(0)
    for _ in range(20):
        xs = np.sort(rng.normal(size=5))
        ys = np.sort(rng.normal(size=4))
        p, q = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(4))
        res = wasserstein(TransportProblem(p, q, np.abs(xs[:, None] - ys[None, :])))
        assert res.value == pytest.approx(w1_line(xs, p, ys, q), abs=1e-9)
        assert res.gap <= 1e-9 and res.marginal_error <= 1e-9


def test_w2_squares_cost():
    xs = np.array([0.0, 2.0])
    res = wasserstein(TransportProblem([1, 0], [0, 1], np.abs(xs[:, None] - xs[None, :]), order=2))
    assert res.value == pytest.approx(2.0)


def test_kantorovich_rubinstein_spot_check():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(6, 2))
    D = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    for _ in range(20):
        p, q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
        w1 = wasserstein(TransportProblem(p, q, D)).value
        # g(x) = distance to a random anchor is 1-Lipschitz
        g = np.linalg.norm(pts - rng.normal(size=2), axis=1)
        assert abs(p @ g - q @ g) <= w1 + 1e-9


def test_ratio_lemma_example():
    r = ratio_mean_lemma_check([0.5, 1.5])
    assert r.lhs == pytest.approx(0.5)
    assert r.rhs == pytest.approx(0.5363600, abs=1e-6)
    assert ratio_mean_lemma_check([1.0]).slack == 0.0
    with pytest.raises(ValueError):
        ratio_mean_lemma_check([2.0, 1.0])


def test_w2_gaussian_and_refutation():
    v = w2_to_gaussian([0.0])
    assert v == pytest.approx(1.0, abs=0.01)
    with pytest.raises(ValueError):
        w2_to_gaussian(np.zeros((2, 2)))
    r = w2_conjecture_refutation(100, 2 ** 25, 1.0)
    assert r.lhs == pytest.approx(math.sqrt(2 ** -0.5), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(dist, dist)
def test_kl_tv_properties(a, b):
    n = min(len(a), len(b))
    p, q = _norm(np.asarray(a[:n]) + 1e-9), _norm(np.asarray(b[:n]) + 1e-9)
    assert kl(p, q) >= -1e-12
    assert kl(p, p) == pytest.approx(0, abs=1e-12)
    assert tv(p, q) == pytest.approx(tv(q, p))
    assert pinsker_check(p, q).verdict == "pass"


@settings(max_examples=40, deadline=None)
@given(dist, dist, dist)
def test_tv_triangle(a, b, c):
    n = min(len(a), len(b), len(c))
    p, q, r = (_norm(np.asarray(v[:n]) + 1e-9) for v in (a, b, c))
    assert tv(p, r) <= tv(p, q) + tv(q, r) + 1e-12


@settings(max_examples=40, deadline=None)
@given(dist, st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_dv_never_violated(a, g):
    p = _norm(np.asarray(a) + 1e-9)
    q = _norm(np.arange(1, p.size + 1))
    assert donsker_varadhan_gap(p, q, np.asarray(g[:p.size])).slack >= -1e-9


@settings(max_examples=40, deadline=None)
@given(dist, dist)
def test_ot_duality_and_diameter(a, b):
    n = min(len(a), len(b))
    p, q = _norm(np.asarray(a[:n]) + 1e-9), _norm(np.asarray(b[:n]) + 1e-9)
    cost = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :]).astype(float)
    res = wasserstein(TransportProblem(p, q, cost))
    assert res.primal >= res.dual - 1e-9
    assert res.gap <= 1e-9
    assert res.value <= (n - 1) * tv(p, q) + 1e-9
