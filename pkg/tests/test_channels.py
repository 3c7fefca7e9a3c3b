import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblab.channels import (AwgnSpec, DmcSpec, awgn_capacity_dispersion, awgn_kl, bec,
                            blahut_arimoto, bsc, caod_audit, channel_from_dict,
                            information_density, load_channel, noiseless, solve)
from fblab.divergences import tv

from oracles import capacity_slsqp, h2


def test_load_bsc_and_awgn(tmp_path):
    p = tmp_path / "bsc.json"
    p.write_text(json.dumps({"type": "dmc", "W": [[0.89, 0.11], [0.11, 0.89]]}))
    ch = load_channel(p)
    assert np.allclose(ch.W, [[0.89, 0.11], [0.11, 0.89]])
    p.write_text(json.dumps({"type": "awgn", "power": 1.0}))
    assert load_channel(p) == AwgnSpec(power=1.0)


@pytest.mark.parametrize("obj, msg", [
    ({"type": "dmc", "W": [[0.9, 0.07], [0.5, 0.5]]}, "row 0 not stochastic"),
    ({"type": "dmc", "W": [[1.1, -0.1], [0.5, 0.5]]}, "negative probability"),
    ({"type": "dmc", "W": [[1, 0], [0, 1]], "budget": 1.0}, "budget without cost"),
])
def test_channel_validation(obj, msg):
    with pytest.raises(ValueError, match=msg):
        channel_from_dict(obj)


def test_bsc_capacity_and_dispersion():
    s = blahut_arimoto(bsc(0.11))
    assert abs(s.C - (1 - h2(0.11))) < 1e-6
    assert abs(s.C - 0.5000840418) < 1e-6
    assert np.allclose(s.caod.masses, [0.5, 0.5])
    v = 0.11 * 0.89 * math.log2(0.89 / 0.11) ** 2
    assert abs(s.V - v) < 1e-7
    assert abs(s.V - 0.8907017) < 1e-6


def test_bec_and_noiseless():
    s = blahut_arimoto(bec(0.5))
    assert abs(s.C - 0.5) < 1e-6 and abs(s.V - 0.25) < 1e-6
    s = blahut_arimoto(noiseless(2))
    assert abs(s.C - 1.0) < 1e-9 and abs(s.V) < 1e-9
    assert np.allclose(s.input_dist.masses, [0.5, 0.5])


def test_awgn_closed_forms():
    C, V = awgn_capacity_dispersion(AwgnSpec(1.0))
    assert C == pytest.approx(0.5, abs=1e-12)
    assert V == pytest.approx(0.75 * math.log2(math.e) ** 2 / 2, rel=1e-12)
    assert V == pytest.approx(0.78051, abs=1e-5)
    C, V = awgn_capacity_dispersion(AwgnSpec(1e-6))
    assert C == pytest.approx(0.5 * math.log2(math.e) * 1e-6, rel=1e-5)
    assert V < 1e-5


def test_awgn_kl_at_power_boundary():
    P, n = 1.0, 16
    x = np.full(n, math.sqrt(P))
    C, _ = awgn_capacity_dispersion(AwgnSpec(P))
    assert awgn_kl(x, P) == pytest.approx(n * C, rel=1e-12)
    assert awgn_kl(0.5 * x, P) < n * C


def test_information_density_examples():
    ch = bsc(0.11)
    s = blahut_arimoto(ch)
    assert information_density(ch, s, [0], [0]) == pytest.approx(math.log2(1.78), abs=1e-9)
    assert information_density(ch, s, [0], [1]) == pytest.approx(math.log2(0.22), abs=1e-9)
    assert information_density(ch, s, [], []) == 0.0
    z = DmcSpec([[1.0, 0.0], [0.5, 0.5]])
    assert information_density(z, blahut_arimoto(z), [0], [1]) == -math.inf


def test_caod_audit_bsc_and_unused_letter():
    ch = bsc(0.11)
    s = blahut_arimoto(ch)
    rep = caod_audit(ch, s)
    assert rep.verdict == "pass"
    assert np.allclose(s.d_per_input, s.C, atol=1e-7)
    assert s.a1 == pytest.approx(0.8907017, abs=1e-6)
    # third letter is a bad copy: d(x) < C strictly
    W = DmcSpec([[0.9, 0.1], [0.1, 0.9], [0.5, 0.5]])
    s = blahut_arimoto(W)
    assert s.d_per_input[2] < s.C - 1e-3
    assert caod_audit(W, s).verdict == "pass"


def _random_dmc(rng, k=4, m=4):
    W = rng.dirichlet(np.ones(m), size=k)
    return DmcSpec(W)


def test_capacity_matches_generic_optimizer():
    rng = np.random.default_rng(11)
    for _ in range(5):
        ch = _random_dmc(rng, 3, 3)
        assert blahut_arimoto(ch).C == pytest.approx(capacity_slsqp(ch.W), abs=1e-6)


def test_caod_unique_from_different_inits():
    rng = np.random.default_rng(3)
    ch = _random_dmc(rng)
    a = blahut_arimoto(ch, tol=1e-10)
    b = blahut_arimoto(ch, tol=1e-10, init=rng.dirichlet(np.ones(4)))
    assert tv(a.caod.masses, b.caod.masses) <= 1e-8


def test_sandwich_gap_certified():
    rng = np.random.default_rng(5)
    ch = _random_dmc(rng)
    s = blahut_arimoto(ch, tol=1e-9)
    assert 0 <= s.gap <= 1e-9
    lower = float(s.input_dist.masses @ s.d_per_input)
    assert lower <= s.C + 1e-12 <= s.d_per_input.max() + 1e-9


def test_single_letter_density_mean_is_d():
    ch = bsc(0.2)
    s = blahut_arimoto(ch)
    for x in (0, 1):
        m = sum(ch.W[x, y] * information_density(ch, s, [x], [y]) for y in (0, 1))
        assert m == pytest.approx(s.d_per_input[x], abs=1e-9)


def test_cost_constrained_budget_met():
    ch = DmcSpec([[0.9, 0.1], [0.2, 0.8], [0.5, 0.5]], cost=[0.0, 1.0, 0.3], budget=0.4)
    s = blahut_arimoto(ch)
    assert float(s.input_dist.masses @ ch.cost) <= 0.4 + 1e-9
    free = blahut_arimoto(DmcSpec(ch.W))
    assert s.C <= free.C + 1e-9


def test_base_e_units():
    s2 = solve(bsc(0.11))
    se = solve(bsc(0.11), base=math.e)
    assert se.C == pytest.approx(s2.C * math.log(2), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=9, max_size=9))
def test_kkt_property_random_3x3(vals):
    W = np.array(vals).reshape(3, 3)
    W /= W.sum(axis=1, keepdims=True)
    ch = DmcSpec(W)
    s = blahut_arimoto(ch)
    assert s.d_per_input.max() <= s.C + 1e-6
    supp = s.input_dist.masses > 1e-4
    assert np.all(np.abs(s.d_per_input[supp] - s.C) <= 1e-5)
    assert np.allclose(W.sum(axis=1), 1.0, atol=1e-12)


def test_ba_near_duplicate_rows_prunes_support():
    # rows 2 and 3 almost coincide; plain iterations would need ~1e7 steps
    W = np.array([[0.5620432825, 0.99999, 0.3994017386],
                  [0.99999, 0.99999, 0.0555506431],
                  [1.0, 0.99999, 0.0555506431]])
    W /= W.sum(axis=1, keepdims=True)
    s = blahut_arimoto(DmcSpec(W))
    assert s.gap <= 1e-9
    assert s.C == pytest.approx(capacity_slsqp(W), abs=1e-8)
    assert s.d_per_input.max() <= s.C + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=8, max_size=8),
       st.lists(st.floats(-1e-5, 1e-5), min_size=4, max_size=4))
def test_ba_near_collinear_rows_property(vals, jitter):
    W = np.array(vals).reshape(2, 4)
    W = np.vstack([W, W[:1] * (1 + np.array(jitter))])
    W /= W.sum(axis=1, keepdims=True)
    s = blahut_arimoto(DmcSpec(W))
    assert s.d_per_input.max() <= s.C + 1e-9
    assert s.C == pytest.approx(capacity_slsqp(W), abs=1e-7)
