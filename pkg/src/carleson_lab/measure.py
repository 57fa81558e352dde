"""Lebesgue measure of pseudo-cube sets and brackets for their Hausdorff content.

Hole lattices are periodic, so the measure of a box intersected with one hole
lattice is a product of one-dimensional closed forms.  Intersections of
several hole lattices are handled by expanding the coarser levels into
explicit boxes and applying the closed form at the finest level; inclusion and
exclusion over hole levels then gives exact pseudo-cube measures.
"""
from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import BudgetError, CoverError, DensityViolation, ParameterError
from .geometry import (LatticeCubes, PseudoCubes, PseudoCubeSet, build_gamma_j, lattice_nodes,
                       quasi_lattice)
from .params import ExperimentParams, as_fraction, beta_interval

EXPAND_BUDGET = 30_000_000


# --------------------------------------------------------------------------- closed forms


def periodic_overlap_1d(lo, hi, spacing: float, offset: float, width: float) -> np.ndarray:
    """Length of [lo, hi] intersected with the union of [offset + m spacing +- width/2]."""
    lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    start = offset - width / 2
    ul, uh = lo - start, hi - start
    kl, kh = np.floor(ul / spacing), np.floor(uh / spacing)
    rl = np.minimum(ul - kl * spacing, width)
    rh = np.minimum(uh - kh * spacing, width)
    out = (kh - kl) * width + rh - rl
    return np.where(hi > lo, out, 0.0)


def box_lattice_overlap(lo: np.ndarray, hi: np.ndarray, lat: LatticeCubes) -> np.ndarray:
    """Measure of each box [lo, hi] (rows) intersected with an unrestricted cube lattice."""
    lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
    out = np.ones(lo.shape[0])
    for i in range(lat.d):
        out *= periodic_overlap_1d(lo[:, i], hi[:, i], lat.spacing, lat.offset[i], lat.side)
    return out


def _expand(lo: np.ndarray, hi: np.ndarray, owner: np.ndarray, lat: LatticeCubes,
            budget: int = EXPAND_BUDGET):
    """Intersect each box with every cube of ``lat`` meeting it; returns the nonempty pieces."""
    B, d = lo.shape
    h = lat.side / 2
    a = np.ceil((lo - lat.offset - h) / lat.spacing).astype(np.int64)
    b = np.floor((hi - lat.offset + h) / lat.spacing).astype(np.int64)
    cnt = np.maximum(b - a + 1, 0)
    tot = np.prod(cnt, axis=1)
    total = int(tot.sum())
    if total > budget:
        raise BudgetError(f"hole expansion of {total} boxes exceeds budget")
    if total == 0:
        return np.zeros((0, d)), np.zeros((0, d)), np.zeros(0, np.int64)
    bidx = np.repeat(np.arange(B), tot)
    local = np.arange(total) - np.repeat(np.cumsum(tot) - tot, tot)
    m = np.empty((total, d), dtype=np.int64)
    for i in range(d - 1, -1, -1):
        ci = cnt[bidx, i]
        m[:, i] = a[bidx, i] + local % ci
        local //= ci
    cen = m * lat.spacing + lat.offset
    nlo = np.maximum(lo[bidx], cen - h)
    nhi = np.minimum(hi[bidx], cen + h)
    keep = np.all(nhi > nlo, axis=1)
    return nlo[keep], nhi[keep], owner[bidx[keep]]


def _multi_intersection(lo: np.ndarray, hi: np.ndarray, lats: list[LatticeCubes]) -> np.ndarray:
    """Per-box measure of box intersected with every lattice in ``lats`` (coarse to fine)."""
    B = lo.shape[0]
    owner = np.arange(B)
    clo, chi = lo, hi
    for lat in lats[:-1]:
        clo, chi, owner = _expand(clo, chi, owner, lat)
        if owner.size == 0:
            return np.zeros(B)
    vals = box_lattice_overlap(clo, chi, lats[-1])
    return np.bincount(owner, weights=vals, minlength=B)


def _cube_bounds(centers: np.ndarray, side: float) -> tuple[np.ndarray, np.ndarray]:
    return centers - side / 2, centers + side / 2


def pseudo_cube_measure(center, side: float, holes: list[LatticeCubes]) -> float:
    """Exact measure of one open cube minus the closed hole lattices (inclusion-exclusion)."""
    c = np.atleast_2d(np.asarray(center, float))
    if c.shape[1] > 3:
        raise ParameterError("exact arithmetic unsupported beyond three dimensions")
    pcs = PseudoCubes(c, side, np.zeros(1, np.int64), [holes])
    return float(pseudo_cube_measures(pcs)[0])


def pseudo_cube_measures(pcs: PseudoCubes, exact: bool = True) -> np.ndarray:
    """Measure of every pseudo-cube; exact by inclusion-exclusion or a union-bound lower bound."""
    if len(pcs) == 0:
        return np.zeros(0)
    if pcs.d > 3:
        raise ParameterError("exact arithmetic unsupported beyond three dimensions")
    vol = pcs.side ** pcs.d
    out = np.full(len(pcs), vol)
    for piece in np.unique(pcs.piece):
        sel = np.nonzero(pcs.piece == piece)[0]
        lo, hi = _cube_bounds(pcs.centers[sel], pcs.side)
        holes = sorted(pcs.holes[int(piece)], key=lambda h: -h.spacing)
        if not exact:
            for hl in holes:
                out[sel] -= box_lattice_overlap(lo, hi, hl)
            continue
        for r in range(1, len(holes) + 1):
            sign = -1.0 if r % 2 else 1.0
            for combo in itertools.combinations(holes, r):
                out[sel] += sign * _multi_intersection(lo, hi, list(combo))
    return np.maximum(out, 0.0) if not exact else out


def hole_fraction_estimate(j: int, params: ExperimentParams) -> float:
    """Closed-form hole share of a level-j cube: sum_k (hole side / hole spacing)^{n-1}."""
    lam, d = params.lam, params.d
    return sum((params.eps2 * lam ** (-k * (1 - 2 * params.delta_w)) / lam ** (k * (params.sigma - 1))) ** d
               for k in range(j + 1, 2 * j + 1))


@dataclass
class MeasureCertificate:
    value: float
    reference: float
    ratio: float
    threshold: float
    passed: bool
    method: str
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "reference": self.reference, "ratio": self.ratio,
                "threshold": self.threshold, "pass": bool(self.passed), "method": self.method,
                "detail": self.detail}


def pseudo_cube_certificate(pcs: PseudoCubes, exact: bool = True, c: float = 0.5) -> MeasureCertificate:
    """Smallest pseudo-cube measure relative to the full cube volume."""
    meas = pseudo_cube_measures(pcs, exact)
    vol = pcs.side ** pcs.d
    if meas.size == 0:
        return MeasureCertificate(0.0, vol, 0.0, c, False, "empty")
    k = int(np.argmin(meas))
    ratio = float(meas[k] / vol)
    return MeasureCertificate(float(meas[k]), vol, ratio, c, ratio >= c,
                              "inclusion-exclusion" if exact else "union-bound",
                              {"count": int(meas.size), "mean_ratio": float(meas.mean() / vol),
                               "witness": pcs.centers[k].tolist()})


# --------------------------------------------------------------------------- interval arithmetic (d = 1)


def merge_intervals(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Union of intervals as sorted disjoint arrays."""
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    if lo.size == 0:
        return lo, hi
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    reach = np.maximum.accumulate(hi)
    start = np.ones(lo.size, bool)
    start[1:] = lo[1:] > reach[:-1]
    gid = np.cumsum(start) - 1
    mlo = lo[start]
    mhi = np.full(mlo.size, -np.inf)
    np.maximum.at(mhi, gid, hi)
    return mlo, mhi


def subtract_intervals(alo, ahi, blo, bhi) -> tuple[np.ndarray, np.ndarray]:
    """A minus B for sorted disjoint A and B."""
    if blo.size == 0:
        return alo.copy(), ahi.copy()
    glo = np.concatenate([[-np.inf], bhi])
    ghi = np.concatenate([blo, [np.inf]])
    s = np.searchsorted(ghi, alo, side="right")
    e = np.searchsorted(glo, ahi, side="left")
    cnt = np.maximum(e - s, 0)
    idx_a = np.repeat(np.arange(alo.size), cnt)
    idx_g = np.repeat(s, cnt) + (np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt))
    lo = np.maximum(alo[idx_a], glo[idx_g])
    hi = np.minimum(ahi[idx_a], ghi[idx_g])
    keep = hi > lo
    return lo[keep], hi[keep]


def piece_intervals(pcset: PseudoCubeSet, lo: float, hi: float, budget: int = EXPAND_BUDGET):
    """Exact interval decomposition of a one-dimensional pseudo-cube set within [lo, hi]."""
    if pcset.d != 1:
        raise ParameterError("interval arithmetic needs n - 1 = 1")
    outs_lo, outs_hi = [], []
    for pc in pcset.pieces:
        c = pc.cubes.centers_in_box([lo], [hi], budget)[:, 0]
        clo = np.maximum(c - pc.cubes.side / 2, lo)
        chi = np.minimum(c + pc.cubes.side / 2, hi)
        clo, chi = merge_intervals(clo, chi)
        hlo, hhi = [], []
        for hl in pc.holes:
            a, b, _ = _expand(clo[:, None], chi[:, None], np.arange(clo.size), hl, budget)
            hlo.append(a[:, 0])
            hhi.append(b[:, 0])
        if hlo:
            mlo, mhi = merge_intervals(np.concatenate(hlo), np.concatenate(hhi))
            clo, chi = subtract_intervals(clo, chi, mlo, mhi)
        outs_lo.append(clo)
        outs_hi.append(chi)
    if not outs_lo:
        return np.zeros(0), np.zeros(0)
    return merge_intervals(np.concatenate(outs_lo), np.concatenate(outs_hi))


def union_measure(pcset: PseudoCubeSet, radius: float = 0.5, budget: int = 5_000_000) -> tuple[float, str]:
    """Measure of the set inside B(0, radius): exact when affordable, otherwise a lower bound.

    One-dimensional sets are handled exactly by interval arithmetic while the
    hole expansion fits in ``budget``; beyond that the bound
    |union of cubes| - sum over pieces and hole levels of |cubes meet holes| is used.
    In higher dimensions a Bonferroni bound over fully contained pseudo-cubes is used.
    """
    d = pcset.d
    if d == 1:
        try:
            lo, hi = piece_intervals(pcset, -radius, radius, budget)
            return float(np.sum(hi - lo)), "exact-intervals"
        except BudgetError:
            pass
        clo_all, chi_all, loss = [], [], 0.0
        for pc in pcset.pieces:
            c = pc.cubes.centers_in_box([-radius], [radius])[:, 0]
            clo = np.maximum(c - pc.cubes.side / 2, -radius)
            chi = np.minimum(c + pc.cubes.side / 2, radius)
            clo_all.append(clo)
            chi_all.append(chi)
            for hl in pc.holes:
                loss += float(box_lattice_overlap(clo[:, None], chi[:, None], hl).sum())
        mlo, mhi = merge_intervals(np.concatenate(clo_all), np.concatenate(chi_all))
        return max(0.0, float(np.sum(mhi - mlo)) - loss), "lower-bound"
    pcs = pcset.pseudo_cubes(inside_only=True)
    inside = np.linalg.norm(np.abs(pcs.centers) + pcs.side / 2, axis=1) <= radius
    pcs = pcs.subset(np.nonzero(inside)[0])
    meas = pseudo_cube_measures(pcs, exact=False)
    tree = cKDTree(pcs.centers)
    pairs = tree.query_pairs(pcs.side, p=np.inf, output_type="ndarray")
    overlap = 0.0
    if pairs.size:
        diff = np.abs(pcs.centers[pairs[:, 0]] - pcs.centers[pairs[:, 1]])
        overlap = float(np.prod(np.maximum(pcs.side - diff, 0.0), axis=1).sum())
    return max(0.0, float(meas.sum()) - overlap), "bonferroni-lower-bound"


def ball_volume(d: int, r: float) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r ** d


def gamma_total_measure(x1: float, j: int, params: ExperimentParams, thetas: dict, c: float = 0.25,
                        radius: float = 0.5, budget: int = 5_000_000) -> MeasureCertificate:
    """Measure of the level-j divergence scaffold in B(0, 1/2) against c vol(B(0, 1/2))."""
    if params.alpha != params.n:
        raise ParameterError("total measure certificate applies to alpha = n")
    pcset = build_gamma_j(x1, j, params, thetas)
    value, method = union_measure(pcset, radius, budget)
    ref = ball_volume(params.d, radius)
    ratio = value / ref
    return MeasureCertificate(value, ref, ratio, c, ratio >= c, method,
                              {"x1": x1, "j": j, "pieces": len(pcset.pieces)})


# --------------------------------------------------------------------------- content brackets


@dataclass
class ContentEstimate:
    """Bracket lower <= H^beta_infinity <= upper for one set."""

    beta: float
    lower: float
    upper: float
    lower_method: str = "mass-distribution"
    upper_method: str = "per-pseudo-cube"
    set_id: str = ""

    def __post_init__(self):
        if self.lower < 0 or self.upper < 0:
            raise ValueError("content bounds must be nonnegative")

    @property
    def consistent(self) -> bool:
        return self.lower <= self.upper * (1 + 1e-12)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "lower": self.lower, "upper": self.upper,
                "lower_method": self.lower_method, "upper_method": self.upper_method,
                "set_id": self.set_id, "consistent": self.consistent}


def _set_point_outside(pcs: PseudoCubes, i: int, clo: np.ndarray, chi: np.ndarray):
    """A point of pseudo-cube i not covered by the cubes [clo, chi], if a probe finds one."""
    d, s = pcs.d, pcs.side
    ticks = np.linspace(-0.499, 0.499, 9) * s
    grid = np.stack([g.ravel() for g in np.meshgrid(*([ticks] * d), indexing="ij")], axis=1) + pcs.centers[i]
    inside = np.ones(grid.shape[0], bool)
    for hl in pcs.holes_of(i):
        inside &= ~hl.contains(grid)
    covered = np.zeros(grid.shape[0], bool)
    for a, b in zip(clo, chi):
        covered |= np.all((grid >= a) & (grid <= b), axis=1)
    bad = np.nonzero(inside & ~covered)[0]
    return grid[bad[0]] if bad.size else None


def content_upper(pcs: PseudoCubes, cover="per-pseudo-cube", beta: float = 1.0) -> tuple[float, str]:
    """Cost sum side_i^beta of a cover of the pseudo-cube set.

    ``cover`` is ``"single-cube"``, ``"per-pseudo-cube"`` or a sequence of
    ``(center, side)`` pairs, each pseudo-cube having to sit inside one cover cube.
    """
    if len(pcs) == 0:
        return 0.0, "empty"
    s = pcs.side
    if isinstance(cover, str):
        if cover == "per-pseudo-cube":
            return len(pcs) * s ** beta, cover
        if cover == "single-cube":
            lo, hi = _cube_bounds(pcs.centers, s)
            side = float(np.max(hi.max(axis=0) - lo.min(axis=0)))
            return side ** beta, cover
        raise ValueError(f"unknown cover {cover!r}")
    cen = np.array([np.atleast_1d(c) for c, _ in cover], dtype=float).reshape(-1, pcs.d)
    sides = np.array([float(w) for _, w in cover])
    clo, chi = cen - sides[:, None] / 2, cen + sides[:, None] / 2
    plo, phi = _cube_bounds(pcs.centers, s)
    for i in range(len(pcs)):
        ok = np.any(np.all((clo <= plo[i]) & (phi[i] <= chi), axis=1))
        if not ok:
            w = _set_point_outside(pcs, i, clo, chi)
            if w is not None:
                raise CoverError(f"cover misses point {w.tolist()}", witness=w.tolist())
            raise CoverError("containment not verified: pseudo-cube not inside a single cover cube",
                             witness=pcs.centers[i].tolist())
    return float(np.sum(sides ** beta)), "custom cover"


def _max_multiplicity(lo: np.ndarray, hi: np.ndarray) -> int:
    """Largest number of the (one-dimensional) intervals sharing a point."""
    ev = np.concatenate([lo, hi])
    kind = np.concatenate([np.ones(lo.size), -np.ones(hi.size)])
    order = np.lexsort((kind, ev))
    return int(np.max(np.cumsum(kind[order]))) if ev.size else 0


@dataclass
class MassProbe:
    value: float
    C: float
    total_mass: float
    argmax: dict
    scales: list[float]
    probes: int


def _mu_1d(a: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray, m: np.ndarray,
           prefix: np.ndarray, K: int) -> np.ndarray:
    """sum_i min(m_i, |[a,b] meet [lo_i, hi_i]|) for sorted equal-length intervals."""
    full_s = np.searchsorted(lo, a, side="left")
    full_e = np.searchsorted(hi, b, side="right")
    out = np.where(full_e > full_s, prefix[np.maximum(full_e, full_s)] - prefix[full_s], 0.0)
    for point, other in ((a, None), (b, a)):
        s = np.searchsorted(hi, point, side="right")
        e = np.searchsorted(lo, point, side="left")
        for q in range(K):
            idx = s + q
            ok = idx < e
            if not ok.any():
                break
            ii = np.where(ok, idx, 0)
            if other is not None:
                ok &= ~(lo[ii] < other)
            ov = np.clip(np.minimum(hi[ii], b) - np.maximum(lo[ii], a), 0.0, None)
            out += np.where(ok, np.minimum(m[ii], ov), 0.0)
    return out


def content_lower_mass(pcs: PseudoCubes, beta: float, probe_scales=None, masses=None,
                       exact: bool = False, analytic_tail: bool = True) -> MassProbe:
    """Mass-distribution lower bound for H^beta_infinity of a pseudo-cube list.

    Pseudo-cube i carries mass m_i (its measure, or a union-bound lower bound),
    spread uniformly, so mu(Q) <= sum_i min(m_i, |Q meet cube_i|).  Probes are
    every pseudo-cube's own cube, the bounding cube, and sliding cubes (step r/2)
    at dyadic sides r from the bounding side down to the pseudo-cube side.
    Below that side mu(Q) <= K r^d with K the largest cube overlap multiplicity,
    which for beta <= d is maximised at r = side.  For beta > d that bound is
    unbounded as r -> 0, so with ``analytic_tail`` the lower bound is 0; with
    ``analytic_tail=False`` only the listed probe scales (which may then go
    below the side) are used, giving the value seen at that resolution.
    """
    d = pcs.d
    if not beta > 0:
        raise ParameterError("beta must be positive")
    if len(pcs) == 0:
        return MassProbe(0.0, math.inf, 0.0, {}, [], 0)
    m = pseudo_cube_measures(pcs, exact) if masses is None else np.asarray(masses, float)
    total = float(m.sum())
    if total <= 0:
        return MassProbe(0.0, math.inf, 0.0, {}, [], 0)
    s = pcs.side
    lo, hi = _cube_bounds(pcs.centers, s)
    blo, bhi = lo.min(axis=0), hi.max(axis=0)
    D = float(np.max(bhi - blo))
    best = {"ratio": float(np.max(m)) / s ** beta, "kind": "own-cube",
            "center": pcs.centers[int(np.argmax(m))].tolist(), "side": s}
    cand = total / D ** beta
    if cand > best["ratio"]:
        best = {"ratio": cand, "kind": "bounding-cube", "center": ((blo + bhi) / 2).tolist(), "side": D}
    if probe_scales is None:
        probe_scales = []
        r = D / 2
        while r >= s:
            probe_scales.append(r)
            r /= 2
    probe_scales = [float(r) for r in probe_scales if (r > 0 if not analytic_tail else r >= s)]
    nprobe = 0
    if d == 1:
        order = np.argsort(pcs.centers[:, 0], kind="stable")
        l1, h1, mm = lo[order, 0], hi[order, 0], m[order]
        prefix = np.concatenate([[0.0], np.cumsum(mm)])
        K = max(1, _max_multiplicity(l1, h1))
        for r in probe_scales:
            starts = blo[0] - r / 2 + (r / 2) * np.arange(int(math.ceil((D + r / 2) / (r / 2))) + 1)
            mu = _mu_1d(starts, starts + r, l1, h1, mm, prefix, K)
            nprobe += starts.size
            k = int(np.argmax(mu))
            if mu[k] / r ** beta > best["ratio"]:
                best = {"ratio": float(mu[k] / r ** beta), "kind": "dyadic", "center": [float(starts[k] + r / 2)],
                        "side": r}
    else:
        tree = cKDTree(pcs.centers)
        K = 1
        for r in probe_scales:
            axes = [blo[i] - r / 2 + (r / 2) * np.arange(int(math.ceil((D + r / 2) / (r / 2))) + 1)
                    for i in range(d)]
            corners = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
            if corners.shape[0] > 2_000_000:
                raise BudgetError("probe family exceeds budget")
            centers = corners + r / 2
            nbrs = tree.query_ball_point(centers, (r + s) / 2, p=np.inf)
            for q, idx in enumerate(nbrs):
                if not idx:
                    continue
                idx = np.asarray(idx)
                ov = np.prod(np.clip(np.minimum(hi[idx], corners[q] + r) - np.maximum(lo[idx], corners[q]),
                                     0.0, None), axis=1)
                mu = float(np.minimum(m[idx], ov).sum())
                if mu / r ** beta > best["ratio"]:
                    best = {"ratio": mu / r ** beta, "kind": "dyadic", "center": centers[q].tolist(), "side": r}
            nprobe += corners.shape[0]
        pairs = tree.query_pairs(s, p=np.inf, output_type="ndarray")
        if pairs.size:
            K = 1 + int(np.bincount(pairs.ravel()).max())
    if analytic_tail:
        if beta > d:
            return MassProbe(0.0, math.inf, total, {"kind": "sub-side analytic", "center": None, "side": 0.0},
                             probe_scales, nprobe)
        small = K * s ** (d - beta)
        if small > best["ratio"]:
            best = {"ratio": small, "kind": "sub-side analytic", "center": None, "side": s}
    C = best["ratio"]
    return MassProbe(total / C, C, total, best, probe_scales, nprobe)


@dataclass
class FalconerCertificate:
    beta: float
    rows: list[dict]
    c_by_j: dict[int, float]
    median: float
    tail_min: float
    passed: bool
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {"beta": self.beta, "rows": self.rows,
                "c_by_j": {str(k): v for k, v in sorted(self.c_by_j.items())},
                "median": self.median, "tail_min": self.tail_min, "pass": bool(self.passed),
                "witness": self.witness}


def default_query_cubes(side: float = 0.05) -> list[tuple[list[float], float]]:
    """Five query cubes spread across B(0, 1/2) on the axis."""
    return [([c], side) for c in (-0.31, -0.13, 0.02, 0.19, 0.37)]


def _check_query(center, side: float, d: int) -> tuple[np.ndarray, np.ndarray]:
    c = np.broadcast_to(np.asarray(center, float), (d,))
    lo, hi = c - side / 2, c + side / 2
    far = np.maximum(np.abs(lo), np.abs(hi))
    if np.linalg.norm(far) > 0.5:
        raise ParameterError(f"query cube centred at {c.tolist()} is not inside B(0, 1/2)")
    return lo, hi


def falconer_density_check(x1: float, beta: float, params: ExperimentParams, thetas: dict,
                           j_panel=(2, 3, 4, 5), query_cubes=None) -> FalconerCertificate:
    """Mass-distribution content of the quasi-lattice part of the level-j set inside query cubes.

    For each (j, Q) the constant c = lower / side(Q)^beta is recorded.  The
    check passes when the smallest c over the two largest levels is at least
    half the panel median (a finite stand-in for a liminf).
    """
    d = params.d
    lo_b, hi_b = beta_interval(params.n, params.alpha)
    if not lo_b < as_fraction(beta) < hi_b:
        raise ParameterError(f"beta={beta} outside ({float(lo_b):.6g}, {float(hi_b):.6g})")
    query_cubes = default_query_cubes() if query_cubes is None else query_cubes
    boxes = [_check_query(c, w, d) + (w,) for c, w in query_cubes]
    rows, witness = [], None
    c_by_j: dict[int, float] = {}
    for j in j_panel:
        pcset = build_gamma_j(x1, j, params, thetas)
        spacing = params.lam ** (-j * (params.alpha - 1) / d)
        cs = []
        for qi, (lo, hi, w) in enumerate(boxes):
            pcs = pcset.pseudo_cubes(lo, hi, inside_only=True)
            nodes = lattice_nodes(spacing, d, radius=None, lo=lo + spacing, hi=hi - spacing)
            row = {"j": j, "cube": qi, "center": ((lo + hi) / 2).tolist(), "side": w,
                   "pseudo_cubes": len(pcs), "nodes": int(nodes.shape[0])}
            try:
                sel = quasi_lattice(pcs.centers, spacing, nodes)
            except DensityViolation as exc:
                row.update({"lower": 0.0, "c": 0.0, "error": str(exc)})
                witness = witness or {"j": j, "cube": qi, "node": exc.witness}
                rows.append(row)
                cs.append(0.0)
                continue
            sub = pcs.subset(sel)
            masses = pseudo_cube_measures(sub, exact=False)
            est = content_lower_mass(sub, beta, masses=masses)
            upper = len(sub) * sub.side ** beta
            c = est.value / w ** beta
            row.update({"selected": len(sub), "lower": est.value, "upper_per_pc": upper,
                        "C": est.C, "probe": est.argmax["kind"], "c": c,
                        "min_mass_ratio": float(masses.min() / sub.side ** d) if masses.size else 0.0})
            rows.append(row)
            cs.append(c)
        c_by_j[j] = float(min(cs))
    vals = [c_by_j[j] for j in j_panel]
    med = float(statistics.median(vals))
    top = sorted(j_panel)[-2:]
    tail = float(min(c_by_j[j] for j in top))
    passed = tail > 0 and tail >= med / 2
    if not passed and witness is None:
        jw = min(top, key=lambda j: c_by_j[j])
        witness = {"j": jw, "c": c_by_j[jw], "median": med}
    return FalconerCertificate(float(beta), rows, c_by_j, med, tail, passed, witness)


def cover_cost_compare(j_panel, delta: float, beta: float, params: ExperimentParams) -> dict:
    """Per-pseudo-cube cover cost relative to a single cube of side delta, across levels."""
    js = np.asarray(list(j_panel), dtype=float)
    a, lam, d = params.alpha, params.lam, params.d
    ratio = params.eps2 ** beta * delta ** d * lam ** (js * (a - 1 - beta)) / delta ** beta
    logs = np.log(ratio)
    slope, intercept = np.polyfit(js, logs, 1)
    resid = float(np.max(np.abs(logs - (slope * js + intercept))))
    diffs = np.diff(ratio)
    scale = np.max(np.abs(ratio))
    if np.all(np.abs(diffs) <= 1e-12 * scale):
        verdict = "constant"
    elif np.all(diffs > 0):
        verdict = "increasing"
    elif np.all(diffs < 0):
        verdict = "decreasing"
    else:
        verdict = "mixed"
    return {"j": js.astype(int).tolist(), "ratio": ratio.tolist(), "fitted_slope": float(slope),
            "expected_slope": float((a - 1 - beta) * math.log(lam)), "residual": resid, "verdict": verdict}
