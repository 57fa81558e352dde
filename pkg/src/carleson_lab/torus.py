"""Equidistribution of linear flows on the torus, sampled at equally spaced times.

Density is certified numerically: a probe grid of resolution ``res`` is laid
over the ambient region and the distance from every probe to the point set is
computed with a KD-tree.  Every ambient point lies within ``res * sqrt(d) / 2``
of a probe, so ``radius + slack <= target`` is a rigorous certificate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc
from scipy.special import ndtri

from .errors import BudgetError, GeometryError, ParameterError, SearchExhausted

PROBE_BUDGET = 4_000_000
SAMPLE_CAP = 2_000_000


@dataclass
class TorusPointSet:
    """Finite point set on the torus T^d or in a Euclidean ball.

    For ``metric="euclidean"`` the ambient region is the ball of radius
    ``ball_radius`` centred at the origin.
    """

    points: np.ndarray
    metric: str = "torus"
    ball_radius: float = 0.5

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError("points must be an (m, d) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite coordinates")
        if self.metric == "torus":
            pts = np.mod(pts, 1.0)
            pts[pts >= 1.0] = 0.0
        elif self.metric != "euclidean":
            raise ValueError(f"unknown metric {self.metric!r}")
        self.points = pts

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def add(self, extra) -> "TorusPointSet":
        extra = np.asarray(extra, dtype=float).reshape(-1, self.d)
        return TorusPointSet(np.vstack([self.points, extra]), self.metric, self.ball_radius)


def probe_grid(d: int, resolution: float, metric: str = "torus", ball_radius: float = 0.5) -> np.ndarray:
    """Regular probe grid for the torus [0,1)^d or the ball B(0, ball_radius)."""
    if resolution <= 0:
        raise ParameterError("probe_resolution must be positive")
    if metric == "torus":
        m = int(math.ceil(1.0 / resolution))
        axis = np.arange(m) / m
    else:
        m = int(math.ceil(2 * ball_radius / resolution)) + 1
        axis = np.linspace(-ball_radius, ball_radius, m)
    if float(m) ** d > PROBE_BUDGET:
        raise BudgetError(f"probe grid of {m}^{d} points exceeds budget")
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    if metric != "torus":
        pts = pts[np.linalg.norm(pts, axis=1) <= ball_radius]
    return pts


def grid_slack(d: int, resolution: float) -> float:
    """Worst-case distance from an ambient point to the probe grid."""
    return resolution * math.sqrt(d) / 2


def covering_radius(pset: TorusPointSet, probe_resolution: float) -> float:
    """Largest probe-to-set distance over a regular probe grid."""
    if len(pset) == 0:
        raise ValueError("no points")
    probes = probe_grid(pset.d, probe_resolution, pset.metric, pset.ball_radius)
    if pset.metric == "torus":
        tree = cKDTree(pset.points, boxsize=1.0)
    else:
        tree = cKDTree(pset.points)
    dist, _ = tree.query(probes, k=1)
    return float(dist.max())


@dataclass
class ErgParams:
    """Parameters of the sampled linear flow t -> t*theta on T^d."""

    R: float
    delta_t: float
    kappa: float
    eps: float
    d: int = 1
    a: float = 0.0
    theta: np.ndarray | float | None = None

    def __post_init__(self):
        if not self.R > 1:
            raise ParameterError("R must exceed 1")
        if not 0 < self.delta_t < 1:
            raise ParameterError("delta_t must lie in (0, 1)")
        if not 0 < self.eps < 1:
            raise ParameterError("eps must lie in (0, 1)")
        if not self.kappa > 1.0 / (self.d + 1):
            raise ParameterError(f"kappa must exceed 1/(d+1) = {1 / (self.d + 1):.6g}")
        if not self.delta_t < self.kappa:
            raise ParameterError("need delta_t < kappa")
        if self.d < 1 or self.d > 4:
            raise ParameterError("supported dimensions are 1..4")
        if self.theta is not None:
            self.theta = _as_direction(self.theta, self.d)

    @property
    def target_radius(self) -> float:
        return self.eps * self.R ** ((self.kappa - 1.0) / self.d)

    def with_theta(self, theta) -> "ErgParams":
        return ErgParams(self.R, self.delta_t, self.kappa, self.eps, self.d, self.a, theta)

    def with_a(self, a: float) -> "ErgParams":
        return ErgParams(self.R, self.delta_t, self.kappa, self.eps, self.d, a, self.theta)


def _as_direction(theta, d: int) -> np.ndarray:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if th.shape != (d,):
        raise ParameterError(f"theta must have {d} components")
    return th


def lattice_window(step: float, lo: float, hi: float, cap: int = SAMPLE_CAP) -> np.ndarray:
    """All multiples of ``step`` in the open interval (lo, hi)."""
    kmin = math.floor(lo / step) + 1
    kmax = math.ceil(hi / step) - 1
    if kmax - kmin + 1 > cap:
        raise BudgetError(f"sample budget: {kmax - kmin + 1} lattice points exceed cap {cap}")
    k = np.arange(kmin, kmax + 1, dtype=float)
    t = k * step
    return t[(t > lo) & (t < hi)]


def flow_samples(p: ErgParams, cap: int = SAMPLE_CAP) -> TorusPointSet:
    """Points t*theta mod 1 for t in R^delta Z intersected with (a, a+R)."""
    if p.theta is None:
        raise ParameterError("theta required")
    t = lattice_window(p.R ** p.delta_t, p.a, p.a + p.R, cap)
    return TorusPointSet(np.outer(t, p.theta), metric="torus")


def sphere_directions(d: int, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic scrambled-Sobol points pushed to the unit sphere S^{d-1}."""
    if d < 2:
        raise ParameterError("sphere sampling needs d >= 2")
    m = max(1, int(math.ceil(math.log2(max(count, 2)))))
    u = qmc.Sobol(d=d, scramble=True, seed=seed).random_base2(m)[:count]
    u = np.clip(u, 1e-12, 1 - 1e-12)
    g = ndtri(u)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def default_a_panel(R: float, count: int = 10) -> np.ndarray:
    """Ten evenly spread window offsets in [0, R)."""
    return np.arange(count) * (R / count)


@dataclass
class ErgCertificate:
    theta: np.ndarray
    target_radius: float
    probe_resolution: float
    slack: float
    radii_by_a: list[tuple[float, float]]
    passed: bool
    attempts_used: int
    counts_by_a: list[int] = field(default_factory=list)

    @property
    def worst_radius(self) -> float:
        return max(r for _, r in self.radii_by_a)

    def to_dict(self) -> dict:
        return {
            "theta": [float(v) for v in self.theta],
            "target_radius": self.target_radius,
            "probe_resolution": self.probe_resolution,
            "slack": self.slack,
            "radii_by_a": [[float(a), float(r)] for a, r in self.radii_by_a],
            "sample_counts": [int(c) for c in self.counts_by_a],
            "attempts_used": self.attempts_used,
            "pass": bool(self.passed),
        }


def _d1_candidates(R: float, attempts: int) -> list[np.ndarray]:
    """theta = (1+u)/R with u walking outwards from 0 in steps of 1/(attempts R)."""
    out = []
    for i in range(attempts):
        k = (i + 1) // 2
        u = (k if i % 2 else -k) / (attempts * R) if i else 0.0
        th = (1.0 + u) / R
        if 0 < th < 1:
            out.append(np.array([th]))
    return out


def certify_theta(p: ErgParams, theta, a_panel=None, probe_factor: int = 8) -> ErgCertificate:
    """Covering-radius certificate for one direction over a panel of window offsets."""
    a_panel = default_a_panel(p.R) if a_panel is None else np.asarray(a_panel, dtype=float)
    target = p.target_radius
    res = target / probe_factor
    slack = grid_slack(p.d, res)
    radii, counts = [], []
    q = p.with_theta(theta)
    for a in a_panel:
        pts = flow_samples(q.with_a(float(a)))
        counts.append(len(pts))
        if len(pts) == 0:
            radii.append((float(a), math.inf))
            continue
        radii.append((float(a), covering_radius(pts, res)))
    ok = all(r + slack <= target for _, r in radii)
    return ErgCertificate(q.theta, target, res, slack, radii, ok, 1, counts)


def erg_search_theta(p: ErgParams, attempts: int = 64, a_panel=None, seed: int = 0,
                     probe_factor: int = 8, raise_on_fail: bool = True) -> ErgCertificate:
    """Search a direction whose sampled flow is eps R^{(kappa-1)/d}-dense for every offset.

    In dimension one the candidates are (1+u)/R for small u; in higher
    dimensions they come from seeded low-discrepancy sampling of the sphere.
    """
    if p.d == 1:
        cands = _d1_candidates(p.R, attempts)
    else:
        cands = list(sphere_directions(p.d, attempts, seed))
    best = None
    for i, th in enumerate(cands, start=1):
        cert = certify_theta(p, th, a_panel, probe_factor)
        cert.attempts_used = i
        if cert.passed:
            return cert
        if best is None or cert.worst_radius < best.worst_radius:
            best = cert
    if raise_on_fail:
        raise SearchExhausted(f"search exhausted after {len(cands)} candidates "
                              f"(best radius {best.worst_radius:.4g}, target {best.target_radius:.4g})")
    best.attempts_used = len(cands)
    return best


def corollary_param_map(sigma: float, gamma: float, d: int) -> tuple[float, float]:
    """Spacing and density exponents of the rescaled flow problem."""
    if not 0.75 * d <= gamma <= d:
        raise ParameterError(f"gamma={gamma} outside [3d/4, d]")
    hi = (1 + 2 * (d - gamma)) / (2 * (d + 2))
    if not 0 < sigma < hi:
        raise ParameterError(f"sigma={sigma} outside (0, {hi:.6g})")
    w = 0.5 - sigma
    delta_t = sigma / w
    kappa = 1 + d * (1 - sigma) / w - gamma / w
    if not (0 < delta_t < 1 and delta_t < kappa and kappa > 1 / (d + 1)):
        raise ParameterError("derived exponents violate 0 < delta < 1, delta < kappa, kappa > 1/(d+1)")
    return delta_t, kappa


@dataclass
class DensityCertificate:
    theta: np.ndarray
    R: float
    a: float
    radius: float
    target: float
    slack: float
    n_times: int
    passed: bool

    def to_dict(self) -> dict:
        return {"theta": [float(v) for v in self.theta], "R": self.R, "a": self.a,
                "radius": self.radius, "target": self.target, "slack": self.slack,
                "n_times": self.n_times, "pass": bool(self.passed)}


def _lattice_distance(y: np.ndarray, shifts: np.ndarray, spacing: float) -> np.ndarray:
    """Distance from each row of y to the union over shifts of spacing*Z^d + shift."""
    out = np.full(y.shape[0], np.inf)
    for s in shifts:
        z = (y - s) / spacing
        frac = z - np.round(z)
        out = np.minimum(out, spacing * np.linalg.norm(frac, axis=1))
    return out


def density_probes(d: int, spacing: float, res: float) -> np.ndarray:
    """Probe points covering a few fundamental lattice cells inside B(0,1/2).

    The translated-lattice union is periodic with the lattice, and its points
    of norm at most 2 cover every probe near B(0,1/2), so a single cell is
    exhaustive; three anchors guard against indexing mistakes.
    """
    if spacing >= 0.25:
        return probe_grid(d, res, "euclidean", 0.5)
    m = int(math.ceil(spacing / res))
    if float(m) ** d * 3 > PROBE_BUDGET:
        raise BudgetError("density probe budget exceeded")
    axis = np.arange(m + 1) * (spacing / m)
    cell = np.stack([g.ravel() for g in np.meshgrid(*([axis] * d), indexing="ij")], axis=1)
    anchors = [np.zeros(d), np.full(d, 0.2 / math.sqrt(d)), np.full(d, -0.35 / math.sqrt(d))]
    pts = np.vstack([cell + anc for anc in anchors])
    return pts[np.linalg.norm(pts, axis=1) <= 0.5]


def verify_gamma_density(theta, sigma: float, gamma: float, eps: float, R: float, a: float,
                         probe_factor: int = 8) -> DensityCertificate:
    """Certify that translated lattices cover B(0,1/2) to within eps R^{-gamma/d}.

    The set is the union over t in R^{2 sigma - 1} Z, a < t < a + R^{-1/2}, of
    the lattice R^{sigma-1} Z^d (restricted to |x| <= 2) shifted by t*theta.
    """
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    d = th.size
    times = lattice_window(R ** (2 * sigma - 1), a, a + R ** -0.5)
    if times.size == 0:
        raise GeometryError("empty time lattice")
    spacing = R ** (sigma - 1)
    target = eps * R ** (-gamma / d)
    res = target / probe_factor
    probes = density_probes(d, spacing, res)
    dist = _lattice_distance(probes, np.outer(times, th), spacing)
    radius = float(dist.max())
    slack = grid_slack(d, res)
    return DensityCertificate(th, float(R), float(a), radius, target, slack, int(times.size), radius + slack <= target)


def rescaled_flow_params(sigma: float, gamma: float, d: int, R: float, eps: float, a: float = 0.0) -> ErgParams:
    """Flow problem equivalent to the translated-lattice density problem at scale R."""
    delta_t, kappa = corollary_param_map(sigma, gamma, d)
    return ErgParams(R=R ** (0.5 - sigma), delta_t=delta_t, kappa=kappa, eps=eps, d=d,
                     a=a * R ** (1 - sigma))
