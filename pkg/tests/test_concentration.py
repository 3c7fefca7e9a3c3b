import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblab.channels import DmcSpec, blahut_arimoto, bsc
from fblab.codes import Codebook, induced_output, random_code
from fblab.concentration import (T_GRID, LipschitzFn, cramer_transfer, empirical_average_transfer,
                                 expectation_transfer, lipschitz_constant, make_cert, mgf_excess,
                                 tail_transfer, variance_from_cert)
from fblab.divergences import ProductDist, TransportProblem, tv, wasserstein


@pytest.fixture(scope="module")
def bsc11():
    ch = bsc(0.11)
    return ch, blahut_arimoto(ch)


def test_t_grid():
    assert T_GRID.size == 34
    assert np.allclose(np.sort(np.abs(T_GRID))[::2], 2.0 ** (np.arange(-8, 9) / 2))


def test_lipschitz_examples():
    assert lipschitz_constant(LipschitzFn.hamming_weight(6)) == 1.0
    A, n = 0.7, 5
    F = LipschitzFn.from_letters([A, -A], n, scale=1 / math.sqrt(n))
    assert lipschitz_constant(F) == pytest.approx(2 * A / math.sqrt(n))
    assert lipschitz_constant(LipschitzFn(np.full(16, 3.0), 2, 4)) == 0.0


def test_lipschitz_guard_needs_declaration():
    F = LipschitzFn.hamming_weight(12)
    with pytest.raises(ValueError):
        lipschitz_constant(F, guard=1024)
    F.declared_lip = 1.0
    assert lipschitz_constant(F, guard=1024) == 1.0


def test_declared_lipschitz_checked():
    F = LipschitzFn.hamming_weight(4)
    F.declared_lip = 0.5
    with pytest.raises(ValueError):
        make_cert(F)


def test_azuma_cert_and_mgf(bsc11):
    ch, s = bsc11
    n = 8
    F = LipschitzFn.hamming_weight(n)
    q = ProductDist(s.caod, n).masses()
    cert = make_cert(F, measure=q)
    assert cert.b == 1.0 and cert.c == pytest.approx(n / (2 * math.log2(math.e)))
    assert cert.notes["mgf_excess"] <= 1e-12
    with pytest.raises(ValueError):
        make_cert(F, measure_kind="gaussian")


def test_gaussian_cert():
    F = LipschitzFn.hamming_weight(2)
    cert = make_cert(F, "gaussian", "gaussian-lipschitz", {"lip": 2.0, "P": 1.0})
    assert cert.b == 1.0 and cert.c == pytest.approx(2 * 4 / (2 * math.log2(math.e)))
    with pytest.raises(ValueError):
        make_cert(F, "gaussian", "gaussian-lipschitz")


def test_bounded_cert_values():
    cert = make_cert(None, basis="declared", params={"A": 1.0, "c": 1.0}, base=math.e)
    assert cert.b == pytest.approx(math.exp(0.25))
    cert = make_cert(None, basis="declared", params={"A": 2.0, "c": 4.0}, base=2)
    assert cert.b == pytest.approx(2 ** 0.25)


def test_bounded_cert_small_c_stays_valid():
    # two-point F with |F| <= 1 and P[F = 1] = 0.1: exp(A^2/(4c)) fails at c = 0.1
    vals, w = np.array([1.0, -1.0]), np.array([0.1, 0.9])
    c = 0.1
    naive_b = math.exp(1 / (4 * c))
    assert mgf_excess(vals, w, naive_b, c, math.e, t_grid=[10.0]) > 0
    cert = make_cert(None, basis="declared", params={"A": 1.0, "c": c}, base=math.e)
    assert mgf_excess(vals, w, cert.b, cert.c, math.e, t_grid=np.linspace(-60, 60, 2001)) <= 1e-12


def test_empirical_mgf_cert(bsc11):
    _, s = bsc11
    F = LipschitzFn.from_letters([0.0, 3.0], 4)
    q = ProductDist(s.caod, 4).masses()
    cert = make_cert(F, basis="empirical-mgf", params={"c": 1.0}, measure=q)
    assert cert.b >= 1.0 and cert.notes["mgf_excess"] <= 1e-9


def test_expectation_transfer_examples(bsc11):
    ch, s = bsc11
    n = 8
    q = ProductDist(s.caod, n).masses()
    F = LipschitzFn.hamming_weight(n)
    cert = make_cert(F, measure=q)
    code = random_code(2, n, 4, np.random.default_rng(1))
    assert expectation_transfer(F, induced_output(ch, code), q, cert).verdict == "pass"
    r = expectation_transfer(F, q, q, cert)
    assert r.lhs == pytest.approx(0, abs=1e-12) and r.rhs == 0.0
    const = LipschitzFn(np.ones(2 ** n), 2, n)
    r = expectation_transfer(const, induced_output(ch, code), q, make_cert(const, measure=q))
    assert r.lhs == pytest.approx(0, abs=1e-12)


def test_kantorovich_rubinstein_route():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p, q = rng.dirichlet(np.ones(8)), rng.dirichlet(np.ones(8))
        F = rng.uniform(0, 1, 8)  # 1-Lipschitz under the 0/1 cost
        w1 = wasserstein(TransportProblem(p, q, 1 - np.eye(8))).value
        assert abs(p @ F - q @ F) <= w1 + 1e-9
        assert w1 == pytest.approx(tv(p, q), abs=1e-10)


def test_tail_transfer(bsc11):
    ch, s = bsc11
    n = 10
    F = LipschitzFn.hamming_weight(n)
    q = ProductDist(s.caod, n).masses()
    cert = make_cert(F, measure=q)
    code = random_code(2, n, 8, np.random.default_rng(3))
    r = tail_transfer(F, ch, code, cert, np.arange(0, 11.0), s)
    assert r.verdict == "pass"
    assert r.details["variance_verdict"] == "pass"
    assert r.details["rows"][0]["bound"] >= 1.0


def test_tail_transfer_infinite_a1_inconclusive():
    ch = DmcSpec([[1.0, 0.0], [0.2, 0.8]])
    s = blahut_arimoto(ch)
    F = LipschitzFn.hamming_weight(4)
    cert = make_cert(F, measure=ProductDist(s.caod, 4).masses())
    r = tail_transfer(F, ch, Codebook([[0, 0, 0, 0], [1, 1, 1, 1]]), cert, [1.0], s)
    assert r.verdict == "inconclusive"


def test_cramer_transfer(bsc11):
    ch, s = bsc11
    rng = np.random.default_rng(5)
    code = random_code(2, 16, 8, rng)
    assert cramer_transfer([1.0, 0.0], 1.0, ch, code, s).verdict == "pass"
    r = cramer_transfer([2.0, 2.0], 1.0, ch, code, s)
    assert r.verdict == "pass" and r.rhs - r.lhs >= r.constants["b"] * 16 ** -0.25 - 1e-12
    assert cramer_transfer([0.0, 25.0], 1.0, ch, code, s).verdict == "pass"
    short = random_code(2, 8, 4, rng)
    assert cramer_transfer([1.0, 0.0], 1.0, ch, short, s).verdict == "inconclusive"


def test_cramer_adversarial_sweep():
    ch = DmcSpec([[0.9, 0.08, 0.02], [0.1, 0.3, 0.6]])
    s = blahut_arimoto(ch)
    rng = np.random.default_rng(2)
    code = random_code(2, 6, 6, rng)
    for _ in range(20):
        f = np.zeros(3)
        f[int(rng.integers(3))] = rng.uniform(0, 50)
        # n = 6 < 16/theta^4 only for theta < 1.28
        assert cramer_transfer(f, 1.3, ch, code, s).verdict == "pass"


def test_empirical_average_transfer(bsc11):
    ch, s = bsc11
    code = random_code(2, 8, 4, np.random.default_rng(0))
    # f in [0, 1]: (1, 1/(8 log e))-concentrated by Hoeffding
    c = 1 / (8 * math.log2(math.e))
    assert empirical_average_transfer([1.0, 0.0], ch, code, s, c).verdict == "pass"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8),
       st.lists(st.floats(0.05, 1.0), min_size=2, max_size=2))
def test_azuma_property(table, base_p):
    p = np.asarray(base_p) / sum(base_p)
    F = LipschitzFn(table, 2, 3)
    q = ProductDist(p, 3).masses()
    cert = make_cert(F, measure=q)
    assert cert.notes["mgf_excess"] <= 1e-9
    assert variance_from_cert(F.table, q, cert).verdict == "pass"


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.01, 0.99), st.floats(0.02, 10.0))
def test_declared_cert_property(A, p, c):
    vals, w = np.array([A, -A]), np.array([p, 1 - p])
    cert = make_cert(None, basis="declared", params={"A": A, "c": c}, base=math.e)
    assert mgf_excess(vals, w, cert.b, cert.c, math.e, t_grid=np.linspace(-40, 40, 801)) <= 1e-9
