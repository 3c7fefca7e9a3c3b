import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblab.codes import Codebook
from fblab.gaussian_norms import (GaussianGenSpec, b0_constant, gaussian_max_oracle, generate,
                                  interpolation_check, linf_excess_tail, lq_profile, norms,
                                  qft_constant, quadratic_form_report, random_contraction,
                                  rescale_oracle, scaling_exponent_fit, spectral_check)


def test_spec_validation():
    with pytest.raises(ValueError):
        GaussianGenSpec("peaky", 16, 4, 1.0, delta_n=1.5)
    with pytest.raises(ValueError):
        GaussianGenSpec("lattice", 16, 4)


def test_spherical_radius():
    code = generate(GaussianGenSpec("spherical", 64, 32, 2.0, 1))
    assert np.allclose(np.sum(code.words ** 2, axis=1), 128.0, atol=1e-9)


def test_peaky_first_coordinate():
    n, P = 256, 1.0
    d = n ** -0.5
    code = generate(GaussianGenSpec("peaky", n, 16, P, 2, d))
    assert np.allclose(code.words[:, 0], math.sqrt(n * d * P))
    assert np.all(norms(code.words, math.inf) >= math.sqrt(P) * n ** 0.25 - 1e-12)
    assert np.all(np.sum(code.words ** 2, axis=1) <= n * P * (1 + 1e-12))


def test_iid_rescale_count_matches_chi2_oracle():
    code = generate(GaussianGenSpec("iid-gaussian", 128, 1024, 1.0, 7))
    mu, sd = rescale_oracle(128, 1024)
    assert abs(code.meta["rescaled"] - mu) <= 3 * sd
    assert np.all(np.sum(code.words ** 2, axis=1) <= 128 * (1 + 1e-12))


def test_generation_deterministic_per_row():
    a = generate(GaussianGenSpec("iid-gaussian", 32, 8, 1.0, 3))
    b = generate(GaussianGenSpec("iid-gaussian", 32, 16, 1.0, 3))
    assert np.array_equal(a.words, b.words[:8])


def test_lq_profile_examples():
    prof = lq_profile(Codebook(np.zeros((3, 5)), alphabet="awgn"), [1, 2, 4, "inf"])
    assert all(r["median"] == 0 for r in prof["q"].values())
    n, d = 64, 0.2
    code = generate(GaussianGenSpec("peaky", n, 32, 1.0, 4, d))
    prof = lq_profile(code, [1, 2, 4, math.inf])
    for r in prof["q"].values():
        assert r["median"] >= math.sqrt(n * d) - 1e-12


def test_mean_fourth_power_unprojected():
    code = generate(GaussianGenSpec("iid-gaussian", 128, 1024, 1.0, 7, project=False))
    r = lq_profile(code, [4])["q"]["4"]
    assert abs(r["mean_pow4"] - 384.0) <= 3 * r["se_pow4"]


def test_scaling_fits():
    grid = [64, 128, 256, 512, 1024]
    assert scaling_exponent_fit("iid-gaussian", grid, 2)["alpha"] == pytest.approx(0.5, abs=0.05)
    fit = scaling_exponent_fit("iid-gaussian", grid, 4)
    assert fit["alpha"] == pytest.approx(0.25, abs=0.05)
    with pytest.raises(ValueError):
        scaling_exponent_fit("iid-gaussian", grid[:3], 4)


def test_linf_tail_examples():
    n = 64
    sph = generate(GaussianGenSpec("spherical", n, 64, 1.0, 1))
    assert linf_excess_tail(sph, [1.0])["rows"][0]["fraction"] == 0.0
    d = 0.3
    pk = generate(GaussianGenSpec("peaky", n, 16, 1.0, 1, d))
    assert linf_excess_tail(pk, [d])["rows"][0]["fraction"] == 1.0
    iid = generate(GaussianGenSpec("iid-gaussian", 128, 1024, 1.0, 7, project=False))
    frac = linf_excess_tail(iid, [9 / 128])["rows"][0]["fraction"]
    p = gaussian_max_oracle(128, 3.0)
    assert abs(frac - p) <= 3 * math.sqrt(p * (1 - p) / 1024)
    out = linf_excess_tail(iid, [0.1], eps=0.1, P=1.0)
    assert out["report"].verdict == "formula-only"


def test_qform_zero_and_identity():
    code = generate(GaussianGenSpec("spherical", 32, 16, 1.0, 5))
    r = quadratic_form_report(code, np.zeros((32, 32)), 0.1)
    assert r.lhs == 0.0 and r.report.verdict == "pass"
    r = quadratic_form_report(code, np.eye(32), 0.1)
    assert r.lhs == pytest.approx(0.0, abs=1e-9) and r.identity_report.verdict == "pass"


def test_qform_identity_lhs_independent():
    code = generate(GaussianGenSpec("iid-gaussian", 16, 64, 1.0, 2))
    r = quadratic_form_report(code, np.eye(16), 0.1)
    direct = abs(sum(float(x @ x) for x in code.words) / 64 - 16.0)
    assert r.lhs == pytest.approx(direct, abs=1e-9)
    assert r.lhs_identity == pytest.approx(direct, abs=1e-9)


def test_qform_rotation_invariance():
    code = generate(GaussianGenSpec("iid-gaussian", 16, 32, 1.0, 9))
    Q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(16, 16)))
    rot = Codebook(code.words @ Q.T, alphabet="awgn", meta=code.meta)
    a = quadratic_form_report(code, np.eye(16), 0.1)
    b = quadratic_form_report(rot, np.eye(16), 0.1)
    assert a.lhs == pytest.approx(b.lhs, abs=1e-9)
    assert np.allclose(norms(code.words, 2), norms(rot.words, 2), atol=1e-9)


def test_spectral_check_rejects():
    with pytest.raises(ValueError):
        spectral_check(2 * np.eye(3))
    with pytest.raises(ValueError):
        spectral_check(np.array([[0, 1], [0, 0.0]]))
    lo, hi = spectral_check(random_contraction(8, np.random.default_rng(1)))
    assert -1 <= lo <= hi <= 1


def test_constants():
    b = qft_constant(1.0, 0.1)
    assert b == pytest.approx(math.sqrt(2 * 5.25 / 0.9) * math.log2(math.e) + math.log2(2 / 0.9))
    assert b0_constant(1.0, 0.0) == pytest.approx(6 ** 0.25 * (1 + math.sqrt(2)))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["iid-gaussian", "spherical", "peaky"]), st.integers(2, 40),
       st.integers(1, 8), st.integers(0, 1000))
def test_norm_interpolation_and_ball(kind, n, M, seed):
    code = generate(GaussianGenSpec(kind, n, M, 1.5, seed, 0.3 if kind == "peaky" else None))
    assert np.all(np.sum(code.words ** 2, axis=1) <= n * 1.5 * (1 + 1e-12))
    for p, q in [(2, 1), (4, 2), (math.inf, 4), (2, 4), (1, 3), (4, math.inf)]:
        assert interpolation_check(code.words, p, q) <= 1e-12
