"""Symbolic lattice-cube sets in the transverse variable x̄ and the time lattices.

A :class:`LatticeCubes` is ``{p m + offset : m in Z^d} + cube(side)``, possibly
restricted to lattice points of norm at most ``radius``.  Membership is decided
by rounding to the nearest lattice point, which is exact because the cube side
is smaller than the spacing.  Nothing is ever rasterised.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import BudgetError, DensityViolation, GeometryError, ParameterError
from .params import ExperimentParams
from .torus import lattice_window

ENUM_BUDGET = 20_000_000


@dataclass
class LatticeCubes:
    """Cubes of side ``side`` centred at ``spacing * Z^d + offset``."""

    spacing: float
    offset: np.ndarray
    side: float
    closed: bool
    radius: float | None = None
    level: int | None = None

    def __post_init__(self):
        self.offset = np.atleast_1d(np.asarray(self.offset, dtype=float))
        if not 0 < self.side < self.spacing:
            raise GeometryError("cube side must be positive and below the lattice spacing")

    @property
    def d(self) -> int:
        return self.offset.size

    def nearest(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest lattice index and the sup-norm deviation from that cube's centre."""
        y = np.asarray(y, dtype=float).reshape(-1, self.d)
        m = np.round((y - self.offset) / self.spacing)
        dev = np.max(np.abs(y - self.offset - m * self.spacing), axis=1)
        return m, dev

    def contains(self, y) -> np.ndarray:
        m, dev = self.nearest(y)
        half = self.side / 2
        inside = dev <= half if self.closed else dev < half
        if self.radius is not None:
            inside &= np.linalg.norm(m * self.spacing, axis=1) <= self.radius
        return inside

    def index_ranges(self, lo, hi) -> list[np.ndarray]:
        """Per-axis lattice indices whose cubes meet the box [lo, hi]."""
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (self.d,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (self.d,))
        h = self.side / 2
        out = []
        for i in range(self.d):
            a = math.ceil((lo[i] - self.offset[i] - h) / self.spacing)
            b = math.floor((hi[i] - self.offset[i] + h) / self.spacing)
            out.append(np.arange(a, b + 1, dtype=np.int64))
        return out

    def centers_in_box(self, lo, hi, budget: int = ENUM_BUDGET) -> np.ndarray:
        """Centres of cubes meeting the box [lo, hi] (respecting the radius restriction)."""
        ranges = self.index_ranges(lo, hi)
        total = math.prod(r.size for r in ranges)
        if total > budget:
            raise BudgetError(f"cube enumeration of {total} exceeds budget {budget}")
        if total == 0:
            return np.zeros((0, self.d))
        grids = np.meshgrid(*ranges, indexing="ij")
        m = np.stack([g.ravel() for g in grids], axis=1).astype(float)
        if self.radius is not None:
            m = m[np.linalg.norm(m * self.spacing, axis=1) <= self.radius]
        return m * self.spacing + self.offset

    def to_dict(self) -> dict:
        return {"spacing": self.spacing, "offset": self.offset.tolist(), "side": self.side,
                "closed": self.closed, "radius": self.radius, "level": self.level}


@dataclass
class TimeLattice:
    level: int
    x1: float
    step: float
    window: tuple[float, float]
    members: np.ndarray

    def __len__(self) -> int:
        return self.members.size

    def to_dict(self) -> dict:
        return {"level": self.level, "x1": self.x1, "step": self.step,
                "window": list(self.window), "members": self.members.tolist()}


def build_T(j: int, x1: float, lam: float, sigma: float) -> TimeLattice:
    """Times in lam^{j(2 sigma - 1)} Z strictly inside (x1, x1 + lam^{-j/2})."""
    expected = lam ** (j * (0.5 - 2 * sigma))
    step = lam ** (j * (2 * sigma - 1))
    window = (x1, x1 + lam ** (-j / 2))
    members = lattice_window(step, *window)
    if expected < 1 and members.size == 0:
        raise GeometryError(f"sigma too large for level {j}: empty time lattice")
    return TimeLattice(j, x1, step, window, members)


def _theta(theta, d: int) -> np.ndarray:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if th.size != d:
        raise ParameterError(f"theta must have {d} components")
    return th


def build_X(j: int, t: float, theta_j, params: ExperimentParams) -> LatticeCubes:
    """Open cubes of side eps2 lam^{-j} around lam^{j(sigma-1)} Z^{n-1} (|x| <= 2) shifted by t theta_j."""
    lam = params.lam
    return LatticeCubes(lam ** (j * (params.sigma - 1)), t * _theta(theta_j, params.d),
                        params.eps2 * lam ** (-j), closed=False, radius=2.0, level=j)


def build_X_hole(k: int, j: int, t: float, theta_k, params: ExperimentParams) -> LatticeCubes:
    """Closed cubes of side eps2 lam^{-k(1-2 delta)} around lam^{k(sigma-1)} Z^{n-1} + lam^{k-j} t theta_k."""
    if not j < k <= 2 * j:
        raise ParameterError(f"hole level k={k} outside ({j}, {2 * j}]")
    lam = params.lam
    return LatticeCubes(lam ** (k * (params.sigma - 1)), lam ** (k - j) * t * _theta(theta_k, params.d),
                        params.eps2 * lam ** (-k * (1 - 2 * params.delta_w)), closed=True, radius=None, level=k)


@dataclass
class PseudoPiece:
    """Open cubes for one lattice time with the finer closed hole lattices removed."""

    t: float
    cubes: LatticeCubes
    holes: list[LatticeCubes]

    def contains(self, y) -> np.ndarray:
        inside = self.cubes.contains(y)
        for h in self.holes:
            inside &= ~h.contains(y)
        return inside


@dataclass
class PseudoCubes:
    """An explicit list of pseudo-cubes: equal open cubes minus per-piece hole lattices."""

    centers: np.ndarray
    side: float
    piece: np.ndarray
    holes: list[list[LatticeCubes]]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def __len__(self) -> int:
        return self.centers.shape[0]

    def subset(self, idx) -> "PseudoCubes":
        return PseudoCubes(self.centers[idx], self.side, self.piece[idx], self.holes)

    def holes_of(self, i: int) -> list[LatticeCubes]:
        return self.holes[int(self.piece[i])]


@dataclass
class PseudoCubeSet:
    """Union over lattice times of hole-punched open cube lattices at level j."""

    level: int
    x1: float
    pieces: list[PseudoPiece]
    d: int
    region_radius: float = 0.5
    meta: dict = field(default_factory=dict)

    @property
    def side(self) -> float:
        return self.pieces[0].cubes.side if self.pieces else 0.0

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1, self.d)
        out = np.zeros(y.shape[0], bool)
        for pc in self.pieces:
            out |= pc.contains(y)
        return out

    def certifying_piece(self, y) -> np.ndarray:
        """Index of the first piece containing each point, or -1."""
        y = np.asarray(y, dtype=float).reshape(-1, self.d)
        out = np.full(y.shape[0], -1, dtype=np.int64)
        for i, pc in enumerate(self.pieces):
            hit = (out < 0) & pc.contains(y)
            out[hit] = i
        return out

    def in_open_cube(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1, self.d)
        out = np.zeros(y.shape[0], bool)
        for pc in self.pieces:
            out |= pc.cubes.contains(y)
        return out

    def pseudo_cubes(self, lo=None, hi=None, inside_only: bool = True,
                     budget: int = ENUM_BUDGET) -> PseudoCubes:
        """Enumerate pseudo-cubes whose cubes lie in (or meet) the box [lo, hi]."""
        if lo is None:
            lo = np.full(self.d, -self.region_radius)
        if hi is None:
            hi = np.full(self.d, self.region_radius)
        lo = np.broadcast_to(np.asarray(lo, float), (self.d,))
        hi = np.broadcast_to(np.asarray(hi, float), (self.d,))
        cs, ps = [], []
        for i, pc in enumerate(self.pieces):
            c = pc.cubes.centers_in_box(lo, hi, budget)
            if inside_only:
                h = pc.cubes.side / 2
                c = c[np.all((c - h >= lo) & (c + h <= hi), axis=1)]
            cs.append(c)
            ps.append(np.full(c.shape[0], i, dtype=np.int64))
        if sum(c.shape[0] for c in cs) > budget:
            raise BudgetError("pseudo-cube enumeration exceeds budget")
        centers = np.vstack(cs) if cs else np.zeros((0, self.d))
        piece = np.concatenate(ps) if ps else np.zeros(0, np.int64)
        return PseudoCubes(centers, self.side, piece, [pc.holes for pc in self.pieces])

    def to_dict(self, lo=None, hi=None, budget: int = 200_000) -> dict:
        out = {"level": self.level, "x1": self.x1, "d": self.d,
               "pieces": [{"t": pc.t, "cubes": pc.cubes.to_dict(),
                           "holes": [h.to_dict() for h in pc.holes]} for pc in self.pieces]}
        if lo is not None:
            pcs = self.pseudo_cubes(lo, hi, budget=budget)
            out["inventory"] = {"centers": pcs.centers.tolist(), "piece": pcs.piece.tolist(),
                                "side": pcs.side}
        return out


def build_gamma_j(x1: float, j: int, params: ExperimentParams, thetas: dict) -> PseudoCubeSet:
    """Union over t in T^j_{x1} of level-j open cubes minus holes of levels j+1..2j."""
    missing = [k for k in range(j, 2 * j + 1) if k not in thetas]
    if missing:
        raise ParameterError(f"need thetas up to 2j = {2 * j}; missing levels {missing}")
    T = build_T(j, x1, params.lam, params.sigma)
    if len(T) == 0:
        raise GeometryError(f"empty time lattice at level {j}")
    pieces = []
    for t in T.members:
        cubes = build_X(j, float(t), thetas[j], params)
        holes = [build_X_hole(k, j, float(t), thetas[k], params) for k in range(j + 1, 2 * j + 1)]
        pieces.append(PseudoPiece(float(t), cubes, holes))
    return PseudoCubeSet(j, x1, pieces, params.d, meta={"times": T.members.tolist()})


def lattice_nodes(spacing: float, d: int, radius: float = 0.5, lo=None, hi=None) -> np.ndarray:
    """Points of spacing*Z^d in the ball B(0, radius), or in the box [lo, hi] if given."""
    if lo is None:
        lo, hi = np.full(d, -radius), np.full(d, radius)
    lo = np.broadcast_to(np.asarray(lo, float), (d,))
    hi = np.broadcast_to(np.asarray(hi, float), (d,))
    ranges = [np.arange(math.ceil(lo[i] / spacing), math.floor(hi[i] / spacing) + 1) for i in range(d)]
    if math.prod(r.size for r in ranges) > ENUM_BUDGET:
        raise BudgetError("node enumeration exceeds budget")
    grids = np.meshgrid(*ranges, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1) * spacing
    if radius is not None:
        pts = pts[np.linalg.norm(pts, axis=1) <= radius]
    return pts


def quasi_lattice(centers, spacing: float, nodes=None, radius: float = 0.5) -> np.ndarray:
    """Pick one distinct centre within ``spacing`` of every node of spacing*Z^d.

    Nodes default to spacing*Z^d inside B(0, radius).  Nodes are processed in
    lexicographic order and take the nearest unused centre; ties go to the
    lexicographically smallest centre.  Returns indices into ``centers``.
    """
    centers = np.asarray(centers, dtype=float)
    if centers.ndim == 1:
        centers = centers[:, None]
    d = centers.shape[1]
    if nodes is None:
        nodes = lattice_nodes(spacing, d, radius)
    nodes = np.asarray(nodes, dtype=float).reshape(-1, d)
    if nodes.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if centers.shape[0] == 0:
        raise DensityViolation("density violated: no centres", witness=nodes[0].tolist())
    order = np.lexsort(nodes.T[::-1])
    tree = cKDTree(centers)
    used: set[int] = set()
    chosen = np.empty(nodes.shape[0], dtype=np.int64)
    for pos in order:
        y = nodes[pos]
        cand = tree.query_ball_point(y, spacing * (1 + 1e-12))
        cand = [c for c in cand if c not in used]
        if not cand:
            raise DensityViolation(f"density violated near node {y.tolist()}", witness=y.tolist())
        best = min(cand, key=lambda c: (float(np.linalg.norm(centers[c] - y)), tuple(centers[c])))
        used.add(best)
        chosen[pos] = best
    return chosen
