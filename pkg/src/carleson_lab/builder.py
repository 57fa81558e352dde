"""Initial data built from frequency combs: single-scale and multi-scale constructions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ParameterError, QuadratureError, SearchExhausted
from .params import ExperimentParams, lambda_from_M, sparse_comb_warning
from .propagator import BandData
from .torus import _d1_candidates, rescaled_flow_params, sphere_directions, verify_gamma_density

COMB_CAP = 1_000_000


@dataclass
class FrequencyComb:
    """Lattice of equal cubes ``step * indices + shift +- half_width`` in R^d."""

    step: float
    indices: np.ndarray
    half_width: float
    shift: np.ndarray
    level: int | None = None
    amplitude: float = 1.0

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.shift.size)

    @property
    def d(self) -> int:
        return self.indices.shape[1]

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self.step * self.indices.astype(float)

    @property
    def measure(self) -> float:
        return len(self) * (2.0 * self.half_width) ** self.d

    def band(self, modulated: bool = False) -> BandData:
        """The comb as (n-1)-dimensional data, optionally translated by its shift."""
        cen = self.points + (self.shift if modulated else 0.0)
        hal = np.full_like(cen, self.half_width)
        return BandData(np.full(len(self), self.amplitude, dtype=complex), cen, hal, check=False)

    def to_dict(self) -> dict:
        return {"level": self.level, "step": self.step, "count": len(self),
                "half_width": self.half_width, "shift": self.shift.tolist(),
                "amplitude": self.amplitude, "measure": self.measure,
                "indices": self.indices.tolist()}


@dataclass
class LevelData:
    """One scale of the data: an x1-factor box tensored with a shifted comb."""

    level: int
    x1_center: float
    x1_half: float
    x1_amp: float
    comb: FrequencyComb
    theta: np.ndarray

    def x1_band(self) -> BandData:
        return BandData([self.x1_amp], [[self.x1_center]], [[self.x1_half]])

    def xbar_band(self) -> BandData:
        return self.comb.band(modulated=True)

    def band(self) -> BandData:
        return self.x1_band().tensor(self.xbar_band())


@dataclass
class DataBundle:
    band: BandData
    levels: list[LevelData]
    thetas: dict[int, list[float]]
    params: dict
    meta: dict = field(default_factory=dict)

    def level(self, j: int) -> LevelData:
        for lv in self.levels:
            if lv.level == j:
                return lv
        raise KeyError(j)

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "thetas": {str(k): v for k, v in sorted(self.thetas.items())},
            "combs": [lv.comb.to_dict() for lv in self.levels],
            "levels": [{"level": lv.level, "x1_center": lv.x1_center, "x1_half": lv.x1_half,
                        "x1_amp": lv.x1_amp, "l2_sq": lv.band().l2_norm_sq()} for lv in self.levels],
            "pieces": self.band.to_dict(),
            "l2_sq": self.band.l2_norm_sq(),
            "meta": self.meta,
        }


def _grid_indices(ranges: list[np.ndarray]) -> np.ndarray:
    grids = np.meshgrid(*ranges, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def build_omega(R: float, sigma: float, n: int = 2, rho: float = 0.05, cap: int = COMB_CAP) -> FrequencyComb:
    """Comb of cubes of half-width rho at 2 pi R^{1-sigma} Z^{n-1} within the ball of radius R."""
    if not R > 4:
        raise ParameterError("R must exceed 4")
    if n < 2:
        raise ParameterError("the comb lives in n-1 >= 1 dimensions")
    d = n - 1
    step = 2 * math.pi * R ** (1 - sigma)
    mmax = int(math.floor(R / step))
    if (2 * mmax + 1) ** d > cap:
        raise BudgetError(f"comb enumeration {(2 * mmax + 1) ** d} exceeds cap {cap}")
    idx = _grid_indices([np.arange(-mmax, mmax + 1)] * d)
    idx = idx[np.linalg.norm(idx * step, axis=1) <= R]
    return FrequencyComb(step, idx, rho, np.zeros(d), None, 1.0)


def _theta_vector(theta, d: int) -> np.ndarray:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if th.size != d:
        raise ParameterError(f"theta must have {d} components")
    if d == 1:
        if not 0 < th[0] < 1:
            raise ParameterError("scalar theta must lie in (0, 1)")
    elif not math.isclose(float(np.linalg.norm(th)), 1.0, rel_tol=1e-9):
        raise ParameterError("theta must be a unit vector")
    return th


def build_f(R: float, sigma: float, theta, n: int = 2, rho: float = 0.05) -> DataBundle:
    """Single-scale data: x1-box at pi R of half-width rho R^{1/2}, times the comb shifted by pi R theta."""
    comb = build_omega(R, sigma, n, rho)
    th = _theta_vector(theta, n - 1)
    comb.shift = math.pi * R * th
    lv = LevelData(0, math.pi * R, rho * math.sqrt(R), R ** -0.5, comb, th)
    band = lv.band()
    params = {"R": R, "sigma": sigma, "n": n, "rho": rho}
    return DataBundle(band, [lv], {0: th.tolist()}, params, {"K": len(comb)})


def _coord_range(j: int, lam: float, sigma: float) -> np.ndarray:
    step = 2 * math.pi * lam ** (j * (1 - sigma))
    lo, hi = lam ** j, lam ** (j + 1)
    m = np.arange(max(1, math.floor(lo / step) - 1), math.ceil(hi / step) + 2)
    k = m * step
    return m[(k >= lo) & (k < hi)]


def minimal_M(j: int, sigma: float, limit: int = 400) -> int:
    """Smallest integer M whose base 2^{M/(1-sigma)} gives a nonempty comb at level j."""
    for M in range(1, limit + 1):
        if _coord_range(j, lambda_from_M(M, sigma), sigma).size:
            return M
    raise ParameterError("no admissible M found")


def build_omega_j(j: int, lam: float, sigma: float, n: int = 2, eps1: float = 0.05,
                  cap: int = COMB_CAP) -> FrequencyComb:
    """Level-j comb: coordinates in 2 pi lam^{j(1-sigma)} Z with lam^j <= |xi_m| < lam^{j+1}.

    Cubes have side eps1/sqrt(n-1), i.e. half-width eps1/(2 sqrt(n-1)).
    """
    if j < 1:
        raise ParameterError("level must be >= 1")
    d = n - 1
    step = 2 * math.pi * lam ** (j * (1 - sigma))
    m = _coord_range(j, lam, sigma)
    if m.size == 0:
        raise ParameterError(f"scale too small at level {j}: minimal admissible M = {minimal_M(j, sigma)}")
    sparse_comb_warning(m.size, j)
    coords = np.concatenate([-m[::-1], m])
    if coords.size ** d > cap:
        raise BudgetError(f"comb enumeration {coords.size ** d} exceeds cap {cap}")
    idx = _grid_indices([coords] * d)
    return FrequencyComb(step, idx, eps1 / (2 * math.sqrt(d)), np.zeros(d), j, 1.0)


def build_u0(params: ExperimentParams, thetas: dict[int, object], J: int | None = None) -> DataBundle:
    """Multi-scale data truncated to levels 1..J.

    Level j: x1-box at pi lam^j of half-width eps1 lam^{j/2} and amplitude
    lam^{-j/2}; comb boxes carry lam^{j delta} / |Omega^j| and are shifted by
    pi lam^j theta_j.
    """
    J = params.J if J is None else J
    if J < 1:
        raise ParameterError("need J >= 1")
    lam, sig, n = params.lam, params.sigma, params.n
    levels = []
    band = None
    for j in range(1, J + 1):
        if j not in thetas:
            raise ParameterError(f"missing theta for level {j}")
        th = _theta_vector(thetas[j], n - 1)
        comb = build_omega_j(j, lam, sig, n, params.eps1)
        comb.shift = math.pi * lam ** j * th
        comb.amplitude = lam ** (j * params.delta_w) / comb.measure
        lv = LevelData(j, math.pi * lam ** j, params.eps1 * lam ** (j / 2), lam ** (-j / 2), comb, th)
        levels.append(lv)
        piece = lv.band()
        if band is None:
            band = piece
        else:
            try:
                band = band.combine(piece)
            except ValueError as exc:
                raise ParameterError(f"level collision at level {j}: {exc}") from None
    tdict = {j: np.atleast_1d(np.asarray(thetas[j], dtype=float)).tolist() for j in range(1, J + 1)}
    return DataBundle(band, levels, tdict, params.to_dict(), {"J": J})


def hs_norm(data: BandData, s: float, tol: float = 1e-10, max_nodes: int = 128) -> float:
    """int (1+|xi|^2)^s |uhat|^2 d xi by tensor Gauss-Legendre on every box."""
    if s < 0:
        raise ParameterError("s must be nonnegative")
    if len(data) == 0:
        return 0.0
    if s == 0:
        return data.l2_norm_sq()
    w2 = np.abs(data.amps) ** 2
    prev = None
    m = 8
    while m <= max_nodes:
        x, w = np.polynomial.legendre.leggauss(m)
        grids = np.meshgrid(*([x] * data.dim), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        wts = np.prod(np.stack(np.meshgrid(*([w] * data.dim), indexing="ij"), axis=0), axis=0).ravel()
        total = 0.0
        for p0 in range(0, len(data), 256):
            c = data.centers[p0:p0 + 256, None, :]
            h = data.halves[p0:p0 + 256, None, :]
            xi = c + h * nodes[None, :, :]
            vals = (1.0 + np.sum(xi * xi, axis=2)) ** s
            per_box = (vals @ wts) * np.prod(h[:, 0, :], axis=1)
            total += float(np.dot(w2[p0:p0 + 256], per_box))
        if prev is not None and abs(total - prev) <= tol * abs(total):
            return total
        prev = total
        m *= 2
    raise QuadratureError("Sobolev weight quadrature did not converge")


def level_hs_masses(bundle: DataBundle, s: float, tol: float = 1e-10) -> list[float]:
    return [hs_norm(lv.band(), s, tol) for lv in bundle.levels]


@dataclass
class ThetaSelection:
    thetas: dict[int, np.ndarray]
    certified: dict[int, bool]
    certificates: dict[int, list[dict]]
    seed: int = 0

    def all_certified(self, levels=None) -> bool:
        levels = self.certified.keys() if levels is None else levels
        return all(self.certified[j] for j in levels)

    def to_dict(self) -> dict:
        return {"seed": self.seed,
                "thetas": {str(j): self.thetas[j].tolist() for j in sorted(self.thetas)},
                "certified": {str(j): bool(self.certified[j]) for j in sorted(self.certified)},
                "certificates": {str(j): self.certificates[j] for j in sorted(self.certificates)}}


def density_a_panel(count: int = 10) -> np.ndarray:
    """Offsets (i + 1/2)/count in (0, 1)."""
    return (np.arange(count) + 0.5) / count


def select_thetas(params: ExperimentParams, levels=None, strict: bool = True, attempts: int = 16,
                  a_panel=None, seed: int | None = None, probe_factor: int = 8) -> ThetaSelection:
    """Choose theta_j per level and certify the translated-lattice density at scale lam^j.

    For n = 2 the candidates are (1+u)/R' with R' = lam^{j(1/2 - sigma)}, the
    rescaled flow scale; for n >= 3 they are seeded sphere samples.  With
    ``strict=False`` an uncertified level keeps its best candidate and is
    marked as such instead of raising.
    """
    levels = list(range(1, 2 * params.J + 1)) if levels is None else list(levels)
    seed = params.seed if seed is None else seed
    a_panel = density_a_panel() if a_panel is None else np.asarray(a_panel, dtype=float)
    d, sig, gam = params.n - 1, params.sigma, params.gamma
    thetas, ok, certs = {}, {}, {}
    for j in levels:
        R = params.lam ** j
        flow = rescaled_flow_params(sig, gam, d, R, params.eps2)
        cands = _d1_candidates(flow.R, attempts) if d == 1 else list(sphere_directions(d, attempts, seed + j))
        best, best_score, best_list = None, math.inf, []
        for th in cands:
            rows, score, passed = [], 0.0, True
            for a in a_panel:
                c = verify_gamma_density(th, sig, gam, params.eps2, R, float(a), probe_factor)
                rows.append(c.to_dict())
                score = max(score, (c.radius + c.slack) / c.target)
                if not c.passed:
                    passed = False
                    break
            if passed:
                best, best_list, best_score = th, rows, score
                break
            if score < best_score:
                best, best_score, best_list = th, score, rows
        thetas[j] = np.asarray(best, dtype=float)
        ok[j] = bool(best_score <= 1.0 and len(best_list) == len(a_panel) and all(r["pass"] for r in best_list))
        certs[j] = best_list
        if strict and not ok[j]:
            raise SearchExhausted(f"theta certification failed at level {j} "
                                  f"(best radius/target = {best_score:.3g})")
    return ThetaSelection(thetas, ok, certs, seed)
