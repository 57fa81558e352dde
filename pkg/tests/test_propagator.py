"""Band-integral quadrature, evolution of piecewise-constant Fourier data and certificates."""
import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carleson_lab.builder import build_f, build_omega
from carleson_lab.errors import QuadratureError
from carleson_lab.propagator import (BandData, CutoffProfile, band_integral_1d, band_integrals, dk_certificate,
                                     dk_factor, evolve, evolve_truncated, galilean_check, phase1_check,
                                     position_l2_sq)
from oracles import riemann_band, riemann_box_2d, smoothstep_psi

TWO_PI = 2 * math.pi


def test_band_integral_flat_integrand():
    assert band_integral_1d(0, 0, 0, 0.05) == pytest.approx(0.1, abs=1e-15)


def test_band_integral_closed_form_a_zero():
    expected = cmath.exp(6j) * 2 * math.sin(0.15) / 3
    assert abs(band_integral_1d(3, 0, 2, 0.05) - expected) < 1e-14


def test_band_integral_far_band_against_riemann():
    v = band_integral_1d(5, 0.37, 100, 0.05)
    assert abs(v - riemann_band(5, 0.37, 100, 0.05)) < 1e-8


def test_band_integral_random_panel_against_riemann():
    rng = np.random.default_rng(11)
    for _ in range(10):
        x, a, c, h = rng.uniform(-10, 10), rng.uniform(0, 1), rng.uniform(-30, 30), rng.uniform(0.01, 0.5)
        v = band_integral_1d(x, a, c, h)
        w = band_integrals(x, a, c, h)
        o = riemann_band(x, a, c, h)
        assert abs(v - o) < 1e-8
        assert abs(w - o) < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.floats(-50, 50), st.floats(-2, 2), st.floats(-200, 200), st.floats(1e-3, 2.0))
def test_vector_and_adaptive_paths_agree(x, a, c, h):
    assert abs(band_integrals(x, a, c, h) - band_integral_1d(x, a, c, h)) < 1e-8 * max(1.0, 2 * h)


def test_band_integral_depth_cap_raises():
    with pytest.raises(QuadratureError):
        band_integral_1d(0.3, 5.0, 0.0, 20.0, tol=1e-15, max_depth=1)


def test_band_integral_rejects_bad_width():
    with pytest.raises(ValueError):
        band_integral_1d(0, 0, 0, 0.0)


def test_evolve_single_box_at_origin():
    d = BandData.from_pieces([(2.5, [1.0, -3.0], [0.2, 0.05])])
    assert evolve(d, [0.0, 0.0], 0.0) == pytest.approx(2.5 * 0.4 * 0.1 / TWO_PI, abs=1e-15)


def test_evolve_time_zero_is_sinc_product():
    d = BandData.from_pieces([(1.0, [2.0, 0.5], [0.3, 0.1]), (-0.5j, [-1.0, 4.0], [0.2, 0.2])])
    x = np.array([[0.7, -1.3], [2.0, 0.1]])
    def factor(xi, c, h):
        return np.exp(1j * xi * c) * 2 * np.sin(h * xi) / xi
    exp = sum(a * factor(x[:, 0], c[0], h[0]) * factor(x[:, 1], c[1], h[1])
              for a, c, h in zip(d.amps, d.centers, d.halves)) / TWO_PI
    assert np.allclose(evolve(d, x, 0.0), exp, atol=1e-14)


def test_evolve_one_dimensional_box_against_riemann():
    d = BandData.from_pieces([(1.0, [3.0], [0.4])])
    v = evolve(d, [0.7], 0.2)
    assert abs(v - riemann_band(0.7, 0.2, 3.0, 0.4) / math.sqrt(TWO_PI)) < 1e-7


def test_evolve_two_dimensional_box_against_riemann():
    d = BandData.from_pieces([(0.8 - 0.3j, [3.0, -1.0], [0.4, 0.25])])
    x, t = np.array([0.7, 1.9]), 0.2
    assert abs(evolve(d, x, t) - riemann_box_2d(x, t, 0.8 - 0.3j, [3.0, -1.0], [0.4, 0.25])) < 1e-7


def test_adaptive_method_matches_vector():
    d = BandData.from_pieces([(1.0, [30.0, 2.0], [0.5, 0.5]), (2.0, [-7.0, 0.0], [0.1, 0.3])])
    x, t = np.array([[0.3, -0.2], [1.1, 4.0]]), np.array([0.01, 0.2])
    assert np.allclose(evolve(d, x, t), evolve(d, x, t, method="adaptive"), atol=1e-9)


def test_truncation_identity_inside_cutoff():
    d = BandData.from_pieces([(1.0, [3.0], [0.4])])
    assert evolve_truncated(d, [0.7], 0.2, 10.0) == evolve(d, [0.7], 0.2)


def test_truncation_kills_boxes_beyond_twice_cutoff():
    d = BandData.from_pieces([(1.0, [25.0], [0.4])])
    assert evolve_truncated(d, [0.7], 0.2, 10.0) == 0


def test_truncation_ramp_against_riemann():
    N = 10.0
    d = BandData.from_pieces([(1.0, [14.0], [4.5])])
    v = evolve_truncated(d, [0.7], 0.01, N)
    o = riemann_band(0.7, 0.01, 14.0, 4.5, weight=lambda xi: smoothstep_psi(xi / N)) / math.sqrt(TWO_PI)
    assert abs(v - o) < 1e-6


def test_cutoff_profiles():
    for kind in ("smoothstep", "sharp"):
        p = CutoffProfile(kind)
        assert p.psi(0.5) == 1 and p.psi(2.5) == 0 and p.psi(-1.0) == 1
        assert 0 < p.psi(1.5) < 1
    with pytest.raises(ValueError):
        CutoffProfile("box")


def test_band_data_overlap_rejected():
    with pytest.raises(ValueError):
        BandData.from_pieces([(1.0, [0.0], [1.0]), (1.0, [1.5], [1.0])])


def test_band_data_roundtrip_and_transforms():
    d = BandData.from_pieces([(1 + 2j, [1.0], [0.5]), (0.5, [4.0], [0.25])])
    assert BandData.from_dict(d.to_dict()).to_dict() == d.to_dict()
    assert d.l2_norm_sq() == pytest.approx(5 * 1.0 + 0.25 * 0.5)
    s = d.shifted([2.0])
    assert np.allclose(s.centers.ravel(), [3.0, 6.0])
    # frequency translation multiplies by a unimodular factor in space
    assert abs(abs(evolve(s, [0.4], 0.0)) - abs(evolve(d, [0.4], 0.0))) < 1e-14
    t = d.tensor(BandData.from_pieces([(2.0, [0.0], [0.1])]))
    assert t.dim == 2 and len(t) == 2 and t.l2_norm_sq() == pytest.approx(4 * 0.2 * d.l2_norm_sq())


def test_plancherel_position_vs_fourier():
    f = build_f(2.0 ** 10, 0.3, 0.25, 2, 0.05).band
    four = f.l2_norm_sq()
    pos = position_l2_sq(f)
    assert abs(pos / four - 1) < 0.01


def test_dk_factor_values():
    base = (TWO_PI) ** -0.5 * 2 * 0.05
    assert dk_factor(0.0, 0.0, 2 ** 12) == pytest.approx(base, rel=1e-14)
    assert dk_factor(0.5, 0.5, 2 ** 12) >= 0.99 * base
    # at t = 0 the factor is base * sin(u)/u with u = rho R^{1/2} |x1|; it halves near u = 1.8955
    assert dk_factor(10 * 2 ** -6, 0.0, 2 ** 12) == pytest.approx(base * math.sin(0.5) / 0.5, rel=1e-12)
    assert dk_factor(40 * 2 ** -6, 0.0, 2 ** 12) < 0.5 * base
    assert dk_factor(36 * 2 ** -6, 0.0, 2 ** 12) > 0.5 * base


def test_dk_certificate_window():
    cert = dk_certificate(2 ** 12, 0.05, grid=5)
    assert cert.passed and cert.samples == 25 and cert.min_ratio >= 0.9


def test_galilean_identity():
    rng = np.random.default_rng(3)
    g = build_omega(256, 0.3, 2, 0.05).band()
    xs = rng.uniform(-1, 1, size=(20, 1))
    ts = rng.uniform(0, 1, size=20)
    assert np.max(galilean_check(g, 0.61, 256, xs, ts)) < 1e-7
    assert galilean_check(g, 0.61, 256, [0.3], 0.0) < 1e-12
    assert galilean_check(g, 0.0, 256, [0.3], 0.4) < 1e-12


def test_factorization_dk_times_boosted_comb():
    R, sigma, theta = 2.0 ** 12, 0.3, 0.2
    b = build_f(R, sigma, theta, 2, 0.05)
    lv = b.levels[0]
    x = np.array([[0.31, -0.2], [0.05, 0.47]])
    s = np.array([0.3, 0.7]) / (TWO_PI * R)
    lhs = np.abs(evolve(b.band, x, s))
    rhs = np.abs(evolve(lv.x1_band(), x[:, :1], s)) * np.abs(evolve(lv.xbar_band(), x[:, 1:], s))
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-14)


def test_phase1_certificates():
    exact = phase1_check(2.0 ** 20, 0.3, eps=1e-9, sample_budget=200, seed=0)
    assert exact.passed and exact.min_ratio >= 0.92
    off = phase1_check(2.0 ** 20, 0.3, eps=0.01, sample_budget=200, seed=1)
    assert off.min_ratio >= 0.9


def test_midpoint_has_no_claim_but_is_finite():
    R, sigma = 2.0 ** 12, 0.3
    g = build_omega(R, sigma, 2, 0.05).band()
    sp = R ** (sigma - 1)
    v = abs(evolve(g, [sp / 2], R ** (2 * sigma - 1) / (TWO_PI * R)))
    assert math.isfinite(v)
