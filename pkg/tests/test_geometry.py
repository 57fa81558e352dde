"""Symbolic cube lattices, time lattices, level sets and quasi-lattice selection."""
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from carleson_lab.builder import select_thetas
from carleson_lab.errors import DensityViolation, GeometryError, ParameterError
from carleson_lab.geometry import (LatticeCubes, build_gamma_j, build_T, build_X, build_X_hole, lattice_nodes,
                                   quasi_lattice)
from carleson_lab.params import ExperimentParams

P = ExperimentParams()


@pytest.fixture(scope="module")
def thetas():
    return select_thetas(P, levels=range(1, 7), strict=False).thetas


def test_time_lattice_count_level_two():
    T = build_T(2, 0.2, 16.0, 0.1)
    step = 16.0 ** -1.6
    brute = [k * step for k in range(0, 1000) if 0.2 < k * step < 0.2 + 16.0 ** -1]
    assert np.allclose(T.members, brute)
    assert abs(len(T) - 16 ** 0.6) <= 1


@pytest.mark.parametrize("j", [1, 2, 3, 4])
def test_quarter_sigma_gives_at_most_one_time(j):
    assert len(build_T(j, 0.1234, 16.0, 0.25)) <= 1


@given(st.floats(0.01, 0.45), st.integers(1, 4))
def test_time_count_invariant_under_step_shift(x1, j):
    a = build_T(j, x1, 16.0, 0.1)
    b = build_T(j, x1 + a.step, 16.0, 0.1)
    assert abs(len(a) - len(b)) <= 1
    assert np.allclose(a.members + a.step, b.members[:len(a)]) or abs(len(a) - len(b)) == 1


def test_time_lattice_empty_error():
    step = 16.0 ** (3 * (2 * 0.3 - 1))
    # the window (6 step, 6 step + lam^{-3/2}) is shorter than one step and misses 7 step
    with pytest.raises(GeometryError, match="sigma too large"):
        build_T(3, 6 * step + 1e-12, 16.0, 0.3)


def test_open_cubes_at_time_zero_and_count():
    X = build_X(2, 0.0, [0.3], P)
    assert np.allclose(X.offset, 0)
    sp = 16.0 ** (2 * (0.1 - 1))
    c = X.centers_in_box([-3.0], [3.0])
    brute = [m * sp for m in range(-10_000, 10_001) if abs(m * sp) <= 2.0]
    assert len(c) == len(brute)
    assert X.side / X.spacing == pytest.approx(0.1 * 16.0 ** (-0.2))


def test_hole_side_and_level_bounds():
    H = build_X_hole(4, 2, 0.01, [0.2], P)
    assert H.side == pytest.approx(0.1 * 16.0 ** (-4 * (1 - 2 * 0.02)))
    assert H.closed and H.radius is None
    with pytest.raises(ParameterError):
        build_X_hole(5, 2, 0.01, [0.2], P)
    with pytest.raises(ParameterError):
        build_X_hole(2, 2, 0.01, [0.2], P)


def test_gamma_needs_thetas_up_to_2j():
    with pytest.raises(ParameterError, match="need thetas up to 2j"):
        build_gamma_j(0.2, 2, P, {1: [0.3], 2: [0.2], 3: [0.1]})


def test_boundary_open_vs_closed_exact_dyadics():
    opened = LatticeCubes(0.25, [0.0], 0.125, closed=False)
    closed = LatticeCubes(0.25, [0.0], 0.125, closed=True)
    edge = np.array([[0.0625], [0.25 - 0.0625], [0.5 + 0.0625]])
    assert not opened.contains(edge).any()
    assert closed.contains(edge).all()
    assert opened.contains([[0.03125]])[0]


def test_radius_restriction():
    X = LatticeCubes(0.5, [0.0], 0.1, closed=False, radius=1.0)
    assert X.contains([[1.0]])[0] and not X.contains([[1.5]])[0]


def test_lattice_cubes_reject_overlapping_side():
    with pytest.raises(GeometryError):
        LatticeCubes(0.1, [0.0], 0.2, closed=True)


def defining_formula(y, x1, j, params, thetas):
    """Direct evaluation: some time t and lattice point put y in an open level-j cube, and no hole contains y."""
    lam, sig, eps2, dw = params.lam, params.sigma, params.eps2, params.delta_w
    step = lam ** (j * (2 * sig - 1))
    k0 = math.floor(x1 / step) + 1
    times = [k * step for k in range(k0, k0 + 10_000) if x1 < k * step < x1 + lam ** (-j / 2)]
    for t in times:
        sp = lam ** (j * (sig - 1))
        m = math.floor((y - t * thetas[j][0]) / sp + 0.5)
        if abs(m * sp) > 2 or not abs(y - t * thetas[j][0] - m * sp) < eps2 * lam ** (-j) / 2:
            continue
        hit = False
        for k in range(j + 1, 2 * j + 1):
            spk = lam ** (k * (sig - 1))
            off = lam ** (k - j) * t * thetas[k][0]
            mk = math.floor((y - off) / spk + 0.5)
            if abs(y - off - mk * spk) <= eps2 * lam ** (-k * (1 - 2 * dw)) / 2:
                hit = True
        if not hit:
            return True
    return False


def test_membership_against_defining_formula(thetas):
    rng = np.random.default_rng(4)
    g = build_gamma_j(0.2, 2, P, thetas)
    # half the probes near cube centres so that both outcomes occur
    pcs = g.pseudo_cubes()
    near = pcs.centers[rng.integers(len(pcs), size=50), 0] + rng.uniform(-1, 1, 50) * pcs.side / 2
    ys = np.concatenate([rng.uniform(-0.5, 0.5, 50), near])
    got = g.contains(ys[:, None])
    expect = np.array([defining_formula(y, 0.2, 2, P, thetas) for y in ys])
    assert np.array_equal(got, expect)
    assert got.any() and not got.all()


def test_level_two_intervals_on_three_cubes(thetas):
    g = build_gamma_j(0.2, 2, P, thetas)
    pcs = g.pseudo_cubes()
    for i in (0, len(pcs) // 2, len(pcs) - 1):
        c, h = pcs.centers[i, 0], pcs.side / 2
        # interval arithmetic: the cube minus every hole interval meeting it
        holes = []
        for H in pcs.holes_of(i):
            for hc in H.centers_in_box([c - h], [c + h])[:, 0]:
                holes.append((hc - H.side / 2, hc + H.side / 2))
        gaps = sorted(holes)
        piece = g.pieces[pcs.piece[i]]
        for a, b in gaps:
            mid = 0.5 * (a + b)
            if c - h < mid < c + h:
                assert not piece.contains([[mid]])[0]
                for inner in (a + 1e-3 * (b - a), b - 1e-3 * (b - a)):
                    if c - h < inner < c + h:
                        assert not piece.contains([[inner]])[0]
        assert piece.contains([[c]])[0] or any(a <= c <= b for a, b in gaps)
        assert not piece.contains([[c - h * (1 + 1e-6)]])[0]  # just outside the open cube


def test_quasi_lattice_identity_selection():
    nodes = lattice_nodes(0.1, 2, 0.5)
    idx = quasi_lattice(nodes, 0.1)
    assert np.array_equal(idx, np.arange(len(nodes)))


def test_quasi_lattice_jittered_unique():
    rng = np.random.default_rng(0)
    nodes = lattice_nodes(0.05, 2, 0.5)
    centers = nodes + rng.uniform(-1, 1, nodes.shape) * 0.05 / 4 / math.sqrt(2)
    idx = quasi_lattice(centers, 0.05)
    assert len(set(idx.tolist())) == len(nodes)
    assert np.all(np.linalg.norm(centers[idx] - nodes, axis=1) < 0.05)


def test_quasi_lattice_gap_witness():
    sp = 0.05
    nodes = lattice_nodes(sp, 2, 0.5)
    keep = np.linalg.norm(nodes - [0.1, 0.1], axis=1) > 1.5 * sp
    with pytest.raises(DensityViolation) as exc:
        quasi_lattice(nodes[keep], sp)
    w = np.asarray(exc.value.witness)
    assert np.linalg.norm(w - [0.1, 0.1]) <= 1.5 * sp


def test_dump_inventory(thetas):
    g = build_gamma_j(0.2, 2, P, thetas)
    d = g.to_dict([-0.1], [0.1])
    assert d["level"] == 2 and len(d["pieces"]) == len(build_T(2, 0.2, 16.0, 0.1))
    assert all(-0.1 <= c[0] <= 0.1 for c in d["inventory"]["centers"])
