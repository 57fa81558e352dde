"""Torus flows, covering radii and translated-lattice density certificates."""
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carleson_lab.errors import GeometryError, ParameterError
from carleson_lab.torus import (ErgParams, TorusPointSet, certify_theta, corollary_param_map, covering_radius,
                                erg_search_theta, flow_samples, grid_slack, lattice_window,
                                rescaled_flow_params, sphere_directions, verify_gamma_density)


def brute_torus_radius(points, res):
    """Independent oracle: dense probe grid and explicit periodic distances (no k-d tree)."""
    d = points.shape[1]
    m = int(math.ceil(1 / res))
    axis = np.arange(m) / m
    probes = np.array(list(itertools.product(axis, repeat=d)))
    diff = np.abs(probes[:, None, :] - points[None, :, :])
    diff = np.minimum(diff, 1 - diff)
    return float(np.sqrt((diff ** 2).sum(-1)).min(axis=1).max())


def test_single_point_circle():
    r = covering_radius(TorusPointSet(np.array([[0.0]])), 1e-3)
    assert abs(r - 0.5) <= grid_slack(1, 1e-3)


def test_uniform_grid_circle():
    pts = TorusPointSet((np.arange(16) / 16)[:, None])
    assert abs(covering_radius(pts, 1e-3) - 1 / 32) <= grid_slack(1, 1e-3)


def test_random_points_torus_against_brute_oracle():
    rng = np.random.default_rng(3)
    pts = rng.random((100, 2))
    r = covering_radius(TorusPointSet(pts), 0.02)
    fine = brute_torus_radius(pts, 0.005)
    assert fine / 2 <= r <= 2 * fine
    assert abs(r - fine) <= grid_slack(2, 0.02) + grid_slack(2, 0.005)


def test_points_wrap_modulo_one():
    s = TorusPointSet(np.array([[1.25], [-0.5]]))
    assert np.allclose(s.points.ravel(), [0.25, 0.5])
    assert len(s.add([0.1])) == 3


def test_flow_sample_enumeration():
    # open window (0, 256): multiples of 16 strictly inside, so 0 and 256 are excluded
    p = ErgParams(R=256, delta_t=0.5, kappa=0.6, eps=0.5, d=1, a=0.0, theta=1 / 256)
    pts = np.sort(flow_samples(p).points.ravel())
    assert len(pts) == 15
    assert np.allclose(pts, np.arange(1, 16) / 16)


def test_flow_samples_shift_by_one_step():
    p = ErgParams(R=256, delta_t=0.5, kappa=0.6, eps=0.5, d=1, a=3.0, theta=0.0123)
    a = set(np.round(flow_samples(p).points.ravel(), 12))
    b = set(np.round(flow_samples(p.with_a(3.0 + 16)).points.ravel(), 12))
    assert len(a ^ b) <= 2


def test_axis_flow_never_dense():
    p = ErgParams(R=4096, delta_t=0.3, kappa=0.4, eps=0.9, d=2, theta=[1.0, 0.0])
    r = covering_radius(flow_samples(p), 0.01)
    assert r >= 0.5 - grid_slack(2, 0.01)


@given(st.floats(0.0, 1.0), st.integers(1, 40))
def test_lattice_window_open_interval(lo, count):
    step = 1 / count
    t = lattice_window(step, lo, lo + 1)
    assert np.all((t > lo) & (t < lo + 1))
    assert count - 1 <= len(t) <= count


def test_erg_params_preconditions():
    with pytest.raises(ParameterError):
        ErgParams(R=1024, delta_t=0.6, kappa=0.6, eps=0.5)
    with pytest.raises(ParameterError):
        ErgParams(R=1024, delta_t=0.1, kappa=0.3, eps=0.5, d=2)


def test_d1_search_certifies_near_one_over_R():
    cert = erg_search_theta(ErgParams(1024, 0.3, 0.6, 0.5, 1))
    assert cert.passed and cert.attempts_used == 1
    assert math.isclose(cert.theta[0], 1 / 1024)
    # oracle: consecutive samples differ by R^delta * theta = R^{delta-1} = 1/128 and wrap the
    # circle exactly once per window, so the radius is 1/256
    for a, r in cert.radii_by_a:
        assert abs(r - 2.0 ** -8) <= cert.slack


def test_d2_search_seeded_and_rechecked():
    p = ErgParams(4096, 0.3, 0.4, 0.9, 2)
    panel = [0.0, 0.37 * 4096, 0.8 * 4096]
    c1 = erg_search_theta(p, 64, panel, seed=7)
    c2 = erg_search_theta(p, 64, panel, seed=7)
    assert c1.passed
    assert c1.to_dict() == c2.to_dict()
    for a, r in c1.radii_by_a:
        fine = covering_radius(flow_samples(ErgParams(4096, 0.3, 0.4, 0.9, 2, a, c1.theta)), c1.probe_resolution / 4)
        assert fine <= c1.target_radius
        assert abs(fine - r) <= c1.slack


def test_certify_reports_failure_with_radii():
    p = ErgParams(4096, 0.3, 0.4, 0.9, 2)
    cert = certify_theta(p, [1.0, 0.0], [0.0])
    assert not cert.passed
    assert cert.worst_radius > cert.target_radius


@pytest.mark.parametrize("sigma, gamma, d, expected", [(0.1, 1, 1, (0.25, 0.75)), (0.1, 2, 2, (0.25, 0.5))])
def test_corollary_param_map(sigma, gamma, d, expected):
    dt, ka = corollary_param_map(sigma, gamma, d)
    assert dt == pytest.approx(expected[0]) and ka == pytest.approx(expected[1])
    # recheck (kappa-1)/d against the relation solved for kappa
    w = 0.5 - sigma
    assert (ka - 1) / d == pytest.approx((1 - sigma) / w - gamma / (d * w))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_corollary_sigma_limit_at_three_quarter_gamma(d):
    hi = (1 + d / 2) / (2 * (d + 2))
    corollary_param_map(hi * 0.999, 0.75 * d, d)
    with pytest.raises(ParameterError):
        corollary_param_map(hi * 1.001, 0.75 * d, d)


def test_rescaled_search_certifies_lattice_density_for_a_panel():
    flow = rescaled_flow_params(0.1, 1, 1, 4096, 0.8)
    assert flow.R == pytest.approx(4096 ** 0.4)
    cert = erg_search_theta(flow, 64)
    assert cert.passed
    for a in (np.arange(10) + 0.5) / 10:
        dc = verify_gamma_density(cert.theta, 0.1, 1, 0.8, 4096, a)
        assert dc.passed


def test_verify_density_against_brute_oracle():
    theta = [0.0359]
    R, sigma, a = 4096.0, 0.1, 0.3
    dc = verify_gamma_density(theta, sigma, 1, 0.8, R, a)
    # oracle: enumerate every translate explicitly on a fine grid over B(0,1/2)
    times = lattice_window(R ** (2 * sigma - 1), a, a + R ** -0.5)
    sp = R ** (sigma - 1)
    k = np.arange(-int(2 / sp), int(2 / sp) + 1) * sp
    pts = np.sort(np.concatenate([k + t * theta[0] for t in times]))
    probes = np.linspace(-0.5, 0.5, 200_001)
    idx = np.clip(np.searchsorted(pts, probes), 1, len(pts) - 1)
    dist = np.minimum(np.abs(probes - pts[idx - 1]), np.abs(pts[idx] - probes))
    assert dc.radius == pytest.approx(dist.max(), abs=dc.slack + 1e-6)


def test_single_translate_cannot_be_dense():
    # at sigma = 1/4 there is at most one lattice time and the set is a single lattice
    dc = verify_gamma_density([0.01], 0.2499, 1, 0.8, 2.0 ** 16, 0.0001)
    assert dc.n_times <= 1 and not dc.passed


def test_empty_time_lattice_raises():
    with pytest.raises(GeometryError):
        verify_gamma_density([0.01], 0.26, 1, 0.8, 2.0 ** 16, 0.0001)


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 4), st.integers(0, 50))
def test_sphere_directions_unit_and_deterministic(d, seed):
    a = sphere_directions(d, 8, seed)
    assert a.shape == (8, d)
    assert np.allclose(np.linalg.norm(a, axis=1), 1)
    assert np.array_equal(a, sphere_directions(d, 8, seed))
