"""Exact pseudo-cube measures, union measures, content brackets and density checks."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carleson_lab.builder import select_thetas
from carleson_lab.errors import CoverError, ParameterError
from carleson_lab.geometry import (LatticeCubes, PseudoCubes, PseudoCubeSet, PseudoPiece, build_gamma_j,
                                   lattice_nodes, quasi_lattice)
from carleson_lab.measure import (ContentEstimate, box_lattice_overlap, content_lower_mass, content_upper,
                                  cover_cost_compare, falconer_density_check, gamma_total_measure,
                                  hole_fraction_estimate, merge_intervals, pseudo_cube_certificate,
                                  pseudo_cube_measure, pseudo_cube_measures, subtract_intervals, union_measure)
from carleson_lab.params import ExperimentParams

P = ExperimentParams()


@pytest.fixture(scope="module")
def thetas():
    return select_thetas(P, levels=range(1, 9), strict=False).thetas


def brute_1d_measure(lo, hi, holes):
    """Independent oracle: enumerate every hole interval meeting [lo, hi], merge by sorting, subtract."""
    iv = []
    for H in holes:
        m0 = math.floor((lo - H.offset[0] - H.side) / H.spacing)
        m1 = math.ceil((hi - H.offset[0] + H.side) / H.spacing)
        for m in range(m0, m1 + 1):
            c = m * H.spacing + H.offset[0]
            a, b = max(lo, c - H.side / 2), min(hi, c + H.side / 2)
            if b > a:
                iv.append((a, b))
    iv.sort()
    covered, cur_a, cur_b = 0.0, None, None
    for a, b in iv:
        if cur_b is None or a > cur_b:
            if cur_b is not None:
                covered += cur_b - cur_a
            cur_a, cur_b = a, b
        else:
            cur_b = max(cur_b, b)
    if cur_b is not None:
        covered += cur_b - cur_a
    return (hi - lo) - covered


def test_no_holes_full_cube():
    assert pseudo_cube_measure([0.1, 0.2], 0.01, []) == pytest.approx(1e-4, rel=1e-15)


def test_single_central_hole():
    hole = LatticeCubes(10.0, [0.3, -0.2], 0.05, closed=True)
    assert pseudo_cube_measure([0.3, -0.2], 0.1, [hole]) == pytest.approx(0.01 - 0.0025, abs=1e-15)


def test_box_lattice_overlap_periodic_closed_form():
    H = LatticeCubes(0.1, [0.0], 0.02, closed=True)
    # [0, 1] meets eleven holes: nine full ones and two halves
    assert box_lattice_overlap(np.array([[0.0]]), np.array([[1.0]]), H)[0] == pytest.approx(0.2)


def test_exact_measure_matches_interval_oracle(thetas):
    g = build_gamma_j(0.2, 2, P, thetas)
    pcs = g.pseudo_cubes()
    meas = pseudo_cube_measures(pcs)
    for i in range(0, len(pcs), max(1, len(pcs) // 40)):
        c, h = pcs.centers[i, 0], pcs.side / 2
        assert meas[i] == pytest.approx(brute_1d_measure(c - h, c + h, pcs.holes_of(i)), abs=1e-12 * pcs.side)


def test_exact_measure_three_levels_against_oracle(thetas):
    g = build_gamma_j(0.2, 3, P, thetas)
    pcs = g.pseudo_cubes()
    meas = pseudo_cube_measures(pcs)
    # about a hundred hole endpoints per cube, each rounded at absolute coordinates of order 0.1,
    # so the two summation orders agree to roughly 100 * 1e-17 rather than to 1e-12 of the side
    for i in range(0, len(pcs), max(1, len(pcs) // 25)):
        c, h = pcs.centers[i, 0], pcs.side / 2
        assert meas[i] == pytest.approx(brute_1d_measure(c - h, c + h, pcs.holes_of(i)), abs=1e-14)


def test_two_dimensional_measure_against_grid_oracle():
    holes = [LatticeCubes(0.013, [0.001, 0.002], 0.004, closed=True),
             LatticeCubes(0.0031, [0.0005, 0.0], 0.0007, closed=True)]
    c, side = np.array([0.02, -0.01]), 0.05
    m = 2000
    ax = (np.arange(m) + 0.5) / m * side - side / 2
    X, Y = np.meshgrid(ax + c[0], ax + c[1], indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    keep = np.ones(len(pts), bool)
    for H in holes:
        keep &= ~H.contains(pts)
    oracle = keep.mean() * side ** 2
    assert pseudo_cube_measure(c, side, holes) == pytest.approx(oracle, rel=2e-3)


def test_default_pseudo_cubes_keep_half_volume(thetas):
    for j in (2, 3):
        cert = pseudo_cube_certificate(build_gamma_j(0.2, j, P, thetas).pseudo_cubes())
        assert cert.passed and cert.ratio >= 0.5
        # on average a cube loses the hole-area share of each level
        assert cert.detail["mean_ratio"] == pytest.approx(1 - hole_fraction_estimate(j, P), abs=0.05)


def test_union_bound_is_below_exact(thetas):
    pcs = build_gamma_j(0.2, 3, P, thetas).pseudo_cubes()
    assert np.all(pseudo_cube_measures(pcs, exact=False) <= pseudo_cube_measures(pcs) + 1e-18)


def test_interval_helpers():
    lo, hi = merge_intervals(np.array([-0.3, -0.5, 0.1]), np.array([-0.1, -0.2, 0.2]))
    assert np.allclose(lo, [-0.5, 0.1]) and np.allclose(hi, [-0.1, 0.2])
    lo, hi = subtract_intervals(np.array([0.0]), np.array([1.0]), np.array([0.2, 0.5]), np.array([0.3, 0.6]))
    assert np.allclose(np.sum(hi - lo), 0.8)


def test_union_measure_synthetic_half_density():
    cubes = LatticeCubes(0.1, [0.0], 0.05, closed=False, radius=2.0)
    s = PseudoCubeSet(1, 0.0, [PseudoPiece(0.0, cubes, [])], d=1)
    value, method = union_measure(s, 0.5)
    assert value == pytest.approx(0.5 * 1.0) and method == "exact-intervals"


def test_union_measure_lower_bound_path(thetas):
    g = build_gamma_j(0.2, 3, P, thetas)
    exact, m1 = union_measure(g, 0.5)
    lower, m2 = union_measure(g, 0.5, budget=10)
    assert m1 == "exact-intervals" and m2 == "lower-bound"
    assert lower <= exact


def test_total_measure_certificate(thetas):
    ok = gamma_total_measure(0.2, 3, P, thetas)
    assert ok.passed and ok.value <= 1.0
    low = gamma_total_measure(0.2, 1, P, thetas)
    assert not low.passed and 0 < low.value < 0.25


def test_content_upper_covers():
    pcs = PseudoCubes(np.array([[0.0], [0.3]]), 0.1, np.zeros(2, np.int64), [[]])
    assert content_upper(pcs, "per-pseudo-cube", 0.5)[0] == pytest.approx(2 * 0.1 ** 0.5)
    assert content_upper(pcs, "single-cube", 0.5)[0] == pytest.approx(0.4 ** 0.5)
    assert content_upper(pcs, [([0.15], 0.5)], 0.7)[0] == pytest.approx(0.5 ** 0.7)
    empty = PseudoCubes(np.zeros((0, 1)), 0.1, np.zeros(0, np.int64), [[]])
    assert content_upper(empty, "per-pseudo-cube", 0.5) == (0.0, "empty")
    with pytest.raises(CoverError) as exc:
        content_upper(pcs, [([0.0], 0.2)], 0.5)
    assert abs(exc.value.witness[0] - 0.3) <= 0.05


@pytest.mark.parametrize("d", [1, 2])
def test_single_cube_lower_bound(d):
    L = 0.2
    pcs = PseudoCubes(np.zeros((1, d)), L, np.zeros(1, np.int64), [[]])
    est = content_lower_mass(pcs, float(d))
    assert est.value >= 2.0 ** -d * L ** d
    assert est.value <= content_upper(pcs, "per-pseudo-cube", float(d))[0] + 1e-15


def test_lower_bound_degrades_for_excess_exponent():
    L = 0.2
    pcs = PseudoCubes(np.zeros((1, 1)), L, np.zeros(1, np.int64), [[]])
    values = []
    for k in range(1, 8):
        scales = [L * 2.0 ** -i for i in range(k)]
        values.append(content_lower_mass(pcs, 1.5, probe_scales=scales, analytic_tail=False).value)
    assert all(b < a for a, b in zip(values, values[1:]))
    assert content_lower_mass(pcs, 1.5).value == 0.0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.45, 0.45), min_size=1, max_size=30), st.floats(0.2, 1.0),
       st.floats(0.001, 0.02))
def test_bracket_consistent_on_random_sets(xs, beta, side):
    hole = [LatticeCubes(side / 1.7, [0.0003], side / 9, closed=True)]
    pcs = PseudoCubes(np.array(xs)[:, None], side, np.zeros(len(xs), np.int64), [hole])
    lower = content_lower_mass(pcs, beta).value
    for cover in ("per-pseudo-cube", "single-cube"):
        upper = content_upper(pcs, cover, beta)[0]
        assert ContentEstimate(beta, lower, upper).consistent


def test_per_pseudo_cube_cover_matches_closed_form():
    p = ExperimentParams(alpha=1.9)
    th = select_thetas(p, levels=range(1, 11), strict=False).thetas
    delta, beta = 0.05, 0.85
    lo, hi = np.array([0.19 - delta / 2]), np.array([0.19 + delta / 2])
    for j in (4, 5):
        sp = p.lam ** (-j * (p.alpha - 1))
        pcs = build_gamma_j(0.2, j, p, th).pseudo_cubes(lo, hi)
        sel = quasi_lattice(pcs.centers, sp, lattice_nodes(sp, 1, None, lo, hi))
        direct = content_upper(pcs.subset(sel), "per-pseudo-cube", beta)[0]
        closed = p.eps2 ** beta * delta * p.lam ** (j * (p.alpha - 1 - beta))
        assert direct == pytest.approx(closed, rel=0.01)


def test_cover_cost_slopes_and_verdicts():
    p = ExperimentParams(alpha=1.9)
    out = cover_cost_compare([2, 3, 4, 5], 0.05, 0.8, p)
    assert abs(out["fitted_slope"] - 0.1 * math.log(16)) < 1e-9 and out["verdict"] == "increasing"
    assert cover_cost_compare([2, 3, 4, 5], 0.05, 0.9, p)["verdict"] == "constant"
    assert cover_cost_compare([2, 3, 4, 5], 0.05, 1.0, p)["verdict"] == "decreasing"


def test_falconer_rejects_bad_inputs(thetas):
    p = ExperimentParams(alpha=1.9)
    with pytest.raises(ParameterError):
        falconer_density_check(0.2, 0.95, p, thetas, (2,))
    with pytest.raises(ParameterError):
        falconer_density_check(0.2, 0.85, p, thetas, (2,), [([0.49], 0.05)])
