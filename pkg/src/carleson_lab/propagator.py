"""Free Schrödinger evolution of data with piecewise-constant Fourier transform.

Convention: ``u(x, t) = (2 pi)^{-n/2} int uhat(xi) exp(i x.xi - i t |xi|^2) dxi``.
For a box the integral factorises into one-dimensional band integrals
``int_{c-h}^{c+h} exp(i x xi - i a xi^2) dxi``.  These are computed after the
shift ``xi = c + eta`` so that the large carrier phase ``x c - a c^2`` is
factored out exactly and the remaining integrand varies slowly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import QuadratureError

_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)
_GL10_X, _GL10_W = np.polynomial.legendre.leggauss(10)

PANEL_PHASE = 1.0           # max phase variation (radians) per Gauss panel, vectorised path
_CHUNK = 1 << 21            # complex samples per vectorised block

DEFAULT_TOL = 1e-10
DEFAULT_DEPTH = 40


# --------------------------------------------------------------------------- band integrals


def band_integral_1d(x: float, a: float, c: float, h: float, tol: float = DEFAULT_TOL,
                     max_depth: int = DEFAULT_DEPTH) -> complex:
    """Adaptive evaluation of int_{c-h}^{c+h} exp(i x xi - i a xi^2) d xi.

    For ``a == 0`` the closed form ``exp(i x c) 2 sin(h x) / x`` is used.
    Otherwise Gauss-Legendre panels are bisected until two successive levels
    agree to within the panel's share of ``tol``.
    """
    if not h > 0:
        raise ValueError("half-width must be positive")
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    x, a, c, h = float(x), float(a), float(c), float(h)
    carrier = np.exp(1j * c * (x - a * c))
    b = x - 2.0 * a * c
    if a == 0.0:
        return complex(carrier * 2.0 * h * np.sinc(h * b / math.pi))

    def gl(lo: float, hi: float) -> complex:
        mid, rad = 0.5 * (lo + hi), 0.5 * (hi - lo)
        eta = mid + rad * _GL10_X
        return complex(rad * np.dot(_GL10_W, np.exp(1j * (b * eta - a * eta * eta))))

    variation = 2.0 * h * (abs(b) + 2.0 * abs(a) * h)
    n0 = max(1, int(math.ceil(variation / (math.pi / 2))))
    edges = np.linspace(-h, h, n0 + 1)
    stack = [(edges[i], edges[i + 1], 0, gl(edges[i], edges[i + 1])) for i in range(n0)]
    total = 0.0 + 0.0j
    while stack:
        lo, hi, depth, whole = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right = gl(lo, mid), gl(mid, hi)
        if abs(whole - (left + right)) <= tol * (hi - lo) / (2.0 * h):
            total += left + right
            continue
        if depth >= max_depth:
            raise QuadratureError(f"quadrature depth {max_depth} exceeded at x={x}, a={a}, c={c}, h={h}")
        stack.append((lo, mid, depth + 1, left))
        stack.append((mid, hi, depth + 1, right))
    return complex(carrier * total)


def _gauss_panels(b: np.ndarray, a: np.ndarray, h: np.ndarray, panels: int,
                  weight: Callable[[np.ndarray], np.ndarray] | None = None,
                  c: np.ndarray | None = None) -> np.ndarray:
    """Sum of 16-point Gauss rules on ``panels`` equal panels of [-h, h], vectorised."""
    m = b.size
    out = np.zeros(m, dtype=complex)
    per = max(1, _CHUNK // (panels * 16))
    k = np.arange(panels)
    for s in range(0, m, per):
        bb, aa, hh = b[s:s + per, None, None], a[s:s + per, None, None], h[s:s + per, None, None]
        w = hh / panels
        eta = -hh + (2 * k[None, :, None] + 1) * w + w * _GL16_X[None, None, :]
        vals = np.exp(1j * (bb * eta - aa * eta * eta))
        if weight is not None:
            vals = vals * weight(c[s:s + per, None, None] + eta)
        out[s:s + per] = (w[:, :, 0] * np.tensordot(vals, _GL16_W, axes=([2], [0]))).sum(axis=1)
    return out


def band_integrals(x, a, c, h, weight: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Vectorised band integrals with NumPy broadcasting over all four arguments.

    Each integral is split into equal Gauss panels so that the phase varies by
    at most ``PANEL_PHASE`` radians per panel.  An optional smooth ``weight``
    of ``xi`` multiplies the integrand (used for the cutoff ramp).
    """
    x, a, c, h = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, a, c, h)))
    shape = x.shape
    x, a, c, h = (np.ascontiguousarray(v).ravel() for v in (x, a, c, h))
    if np.any(h <= 0):
        raise ValueError("half-widths must be positive")
    out = np.empty(x.size, dtype=complex)
    carrier = np.exp(1j * c * (x - a * c))
    b = x - 2.0 * a * c
    closed = (a == 0.0) if weight is None else np.zeros(x.size, bool)
    if closed.any():
        out[closed] = 2.0 * h[closed] * np.sinc(h[closed] * b[closed] / math.pi)
    rest = ~closed
    if rest.any():
        variation = 2.0 * h * (np.abs(b) + 2.0 * np.abs(a) * h)
        panels = np.maximum(1, np.ceil(variation / PANEL_PHASE)).astype(np.int64)
        if weight is not None:
            panels = np.maximum(panels, 4)
        bucket = np.where(rest, 1 << np.ceil(np.log2(panels)).astype(np.int64), 0)
        for p in np.unique(bucket[rest]):
            idx = np.nonzero(bucket == p)[0]
            out[idx] = _gauss_panels(b[idx], a[idx], h[idx], int(p), weight,
                                     c[idx] if weight is not None else None)
    return (carrier * out).reshape(shape)


# --------------------------------------------------------------------------- data


@dataclass
class BandData:
    """Field whose Fourier transform is sum_p amps[p] * indicator(box_p).

    Box p is the product of intervals ``centers[p, i] +- halves[p, i]``.
    """

    amps: np.ndarray
    centers: np.ndarray
    halves: np.ndarray
    meta: dict = field(default_factory=dict)
    check: bool = True

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex).ravel()
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.halves = np.atleast_2d(np.asarray(self.halves, dtype=float))
        if self.halves.shape != self.centers.shape or self.centers.shape[0] != self.amps.size:
            raise ValueError("inconsistent piece arrays")
        if np.any(self.halves <= 0):
            raise ValueError("box half-widths must be positive")
        if self.check:
            self.check_disjoint()

    @classmethod
    def from_pieces(cls, pieces: Sequence[tuple[complex, Sequence[float], Sequence[float]]],
                    dim: int | None = None) -> "BandData":
        if not pieces:
            if dim is None:
                raise ValueError("empty data needs an explicit dimension")
            return cls(np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim)))
        amps = [p[0] for p in pieces]
        cen = [np.atleast_1d(p[1]) for p in pieces]
        hal = [np.atleast_1d(p[2]) for p in pieces]
        return cls(np.array(amps), np.array(cen), np.array(hal))

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def __len__(self) -> int:
        return self.amps.size

    def volumes(self) -> np.ndarray:
        return np.prod(2.0 * self.halves, axis=1)

    def l2_norm_sq(self) -> float:
        """Plancherel: sum |amp|^2 vol(box)."""
        return float(np.sum(np.abs(self.amps) ** 2 * self.volumes()))

    def check_disjoint(self) -> None:
        """Raise if two boxes share interior points (sweep along the first axis)."""
        P = len(self)
        if P < 2:
            return
        lo, hi = self.centers - self.halves, self.centers + self.halves
        order = np.argsort(lo[:, 0], kind="stable")
        lo, hi = lo[order], hi[order]
        ends = np.searchsorted(lo[:, 0], hi[:, 0], side="left")
        for i in range(P):
            j = np.arange(i + 1, ends[i])
            if j.size == 0:
                continue
            hit = np.all((lo[j] < hi[i]) & (lo[i] < hi[j]), axis=1)
            if hit.any():
                raise ValueError(f"overlapping boxes: pieces {order[i]} and {order[j[hit][0]]}")

    def shifted(self, v) -> "BandData":
        """Frequency translation (multiplication by exp(i v.x) in space)."""
        v = np.broadcast_to(np.asarray(v, dtype=float), (self.dim,))
        return BandData(self.amps, self.centers + v, self.halves, dict(self.meta), check=False)

    def scaled(self, s: complex) -> "BandData":
        return BandData(self.amps * s, self.centers, self.halves, dict(self.meta), check=False)

    def combine(self, other: "BandData") -> "BandData":
        """Union of two piece sets (boxes must stay disjoint)."""
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return BandData(np.concatenate([self.amps, other.amps]),
                        np.vstack([self.centers, other.centers]),
                        np.vstack([self.halves, other.halves]))

    def tensor(self, other: "BandData") -> "BandData":
        """Product data: boxes are Cartesian products, amplitudes multiply."""
        P, Q = len(self), len(other)
        amps = np.outer(self.amps, other.amps).ravel()
        cen = np.hstack([np.repeat(self.centers, Q, axis=0), np.tile(other.centers, (P, 1))])
        hal = np.hstack([np.repeat(self.halves, Q, axis=0), np.tile(other.halves, (P, 1))])
        return BandData(amps, cen, hal, check=False)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "amps_re": self.amps.real.tolist(),
            "amps_im": self.amps.imag.tolist(),
            "centers": self.centers.tolist(),
            "halves": self.halves.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BandData":
        amps = np.asarray(d["amps_re"]) + 1j * np.asarray(d["amps_im"])
        cen = np.asarray(d["centers"], dtype=float).reshape(-1, d["dim"])
        hal = np.asarray(d["halves"], dtype=float).reshape(-1, d["dim"])
        return cls(amps, cen, hal)


@dataclass(frozen=True)
class CutoffProfile:
    """Even cutoff psi with psi = 1 on [-1, 1] and psi = 0 outside [-2, 2].

    ``smoothstep``: 1 - (3u^2 - 2u^3) with u = clamp(|r| - 1, 0, 1).
    ``sharp``: the linear ramp 1 - u (continuous, not differentiable).
    """

    kind: str = "smoothstep"

    def __post_init__(self):
        if self.kind not in ("smoothstep", "sharp"):
            raise ValueError(f"unknown cutoff profile {self.kind!r}")

    def psi(self, r):
        u = np.clip(np.abs(np.asarray(r, dtype=float)) - 1.0, 0.0, 1.0)
        if self.kind == "smoothstep":
            return 1.0 - (3.0 * u * u - 2.0 * u ** 3)
        return 1.0 - u

    def Psi(self, xi):
        """Tensor-product cutoff prod_j psi(xi_j) for points in the last axis."""
        return np.prod(self.psi(xi), axis=-1)


SMOOTHSTEP = CutoffProfile("smoothstep")


# --------------------------------------------------------------------------- evolution


def _prep(data: BandData, x, t) -> tuple[np.ndarray, np.ndarray, bool]:
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1 and X.size == data.dim and np.ndim(t) == 0
    X = X.reshape(-1, data.dim)
    T = np.broadcast_to(np.asarray(t, dtype=float).ravel() if np.ndim(t) else float(t),
                        (X.shape[0],)).astype(float)
    return X, T, single


def _combine_factors(data: BandData, factors: np.ndarray) -> np.ndarray:
    return (2 * math.pi) ** (-data.dim / 2) * (factors @ data.amps)


def evolve(data: BandData, x, t, method: str = "vector", tol: float = DEFAULT_TOL):
    """Solution of the free equation with initial data ``data`` at points x and times t.

    ``x`` is a point of shape (n,) or a batch (m, n); ``t`` a scalar or (m,).
    ``method="adaptive"`` uses the scalar adaptive quadrature for every factor.
    """
    X, T, single = _prep(data, x, t)
    m, P = X.shape[0], len(data)
    if P == 0:
        out = np.zeros(m, dtype=complex)
        return complex(out[0]) if single else out
    fac = np.ones((m, P), dtype=complex)
    for i in range(data.dim):
        if method == "vector":
            fac *= band_integrals(X[:, i, None], T[:, None], data.centers[None, :, i], data.halves[None, :, i])
        elif method == "adaptive":
            for r in range(m):
                for p in range(P):
                    fac[r, p] *= band_integral_1d(X[r, i], T[r], data.centers[p, i], data.halves[p, i], tol)
        else:
            raise ValueError(f"unknown method {method!r}")
    out = _combine_factors(data, fac)
    return complex(out[0]) if single else out


def _ramp_factor(x: np.ndarray, a: np.ndarray, lo: float, hi: float, N: float,
                 profile: CutoffProfile) -> np.ndarray:
    """int_lo^hi psi(xi/N) exp(i x xi - i a xi^2) d xi, split at the ramp breakpoints."""
    out = np.zeros(x.size, dtype=complex)
    cuts = sorted({lo, hi, *[v for v in (-2 * N, -N, N, 2 * N) if lo < v < hi]})
    for u, v in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (u + v)
        if abs(mid) >= 2 * N:
            continue
        c, h = mid, 0.5 * (v - u)
        if abs(mid) <= N:
            out += band_integrals(x, a, c, h)
        else:
            out += band_integrals(x, a, c, h, weight=lambda xi: profile.psi(xi / N))
    return out


def evolve_truncated(data: BandData, x, t, N: float, profile: CutoffProfile = SMOOTHSTEP,
                     tol: float = DEFAULT_TOL):
    """Evolution with the frequency cutoff Psi(xi/N) folded into the integrand."""
    if not N > 0:
        raise ValueError("cutoff N must be positive")
    lo, hi = data.centers - data.halves, data.centers + data.halves
    inside = (lo >= -N) & (hi <= N)
    if inside.all():
        return evolve(data, x, t, tol=tol)
    X, T, single = _prep(data, x, t)
    m, P = X.shape[0], len(data)
    fac = np.ones((m, P), dtype=complex)
    for i in range(data.dim):
        ins = inside[:, i]
        if ins.any():
            fac[:, ins] *= band_integrals(X[:, i, None], T[:, None], data.centers[None, ins, i],
                                          data.halves[None, ins, i])
        for p in np.nonzero(~ins)[0]:
            fac[:, p] *= _ramp_factor(X[:, i], T, lo[p, i], hi[p, i], N, profile)
    out = _combine_factors(data, fac)
    return complex(out[0]) if single else out


def position_l2_sq(data: BandData, t: float = 0.0, tail: float = 300.0, max_points: int = 20_000_000) -> float:
    """Position-space quadrature of int |u(x, t)|^2 dx over a large box.

    |u|^2 expands into products of one-dimensional cross terms, so the
    integral over a tensor grid reduces to per-axis Gram matrices.  Along each
    axis the trapezoid rule is exact for band-limited integrands once the step
    is below 2 pi / bandwidth; the box half-length is ``tail / min half-width``
    beyond the furthest drifted packet, which leaves a relative tail of about
    ``1 / (pi * tail)`` per axis.
    """
    P = len(data)
    gram = np.ones((P, P), dtype=complex)
    for i in range(data.dim):
        c, h = data.centers[:, i], data.halves[:, i]
        drift = float(np.max(2 * abs(t) * (np.abs(c) + h)))
        L = drift + tail / float(h.min())
        W = float(np.max(c + h) - np.min(c - h))
        dx = min(math.pi / max(W, 1e-12), L / 64)
        npts = int(math.ceil(2 * L / dx)) + 1
        if npts > max_points:
            raise ValueError(f"position grid of {npts} points exceeds budget")
        G = np.zeros((P, P), dtype=complex)
        block = max(1, _CHUNK // max(P, 1) // 8)
        for s in range(0, npts, block):
            xs = -L + dx * np.arange(s, min(npts, s + block))
            B = band_integrals(xs[:, None], t, c[None, :], h[None, :])
            G += B.T @ B.conj() * dx
        gram *= G
    amps = data.amps
    total = np.einsum("p,q,pq->", amps, amps.conj(), gram)
    return float(total.real) / (2 * math.pi) ** data.dim


# --------------------------------------------------------------------------- certificates


def dk_factor(x1, t, R: float, rho: float = 0.05):
    """Modulus of the evolved x1-factor via its rescaled one-dimensional integral.

    Equals (2 pi)^{-1/2} |int_{-rho}^{rho} exp(i R^{1/2} (x1 - t) y - i t y^2 / (2 pi)) dy|.
    """
    if not R > 4:
        raise ValueError("R must exceed 4")
    x1, t = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(t, dtype=float))
    val = band_integrals(math.sqrt(R) * (x1 - t), t / (2 * math.pi), 0.0, rho)
    out = np.abs(val) / math.sqrt(2 * math.pi)
    return float(out) if out.ndim == 0 else out


@dataclass
class Certificate:
    """Generic pass/fail record with the worst observed ratio and its witness."""

    name: str
    passed: bool
    min_ratio: float
    threshold: float
    witness: dict
    samples: int
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "pass": bool(self.passed), "min_ratio": float(self.min_ratio),
                "threshold": self.threshold, "witness": self.witness, "samples": self.samples,
                "detail": self.detail}


def dk_certificate(R: float, rho: float = 0.05, grid: int = 5, t_max: float = 1.0,
                   c: float = 0.9) -> Certificate:
    """Scan |t| <= t_max and |x1 - t| <= R^{-1/2} on a grid x grid panel."""
    ts = np.linspace(-t_max, t_max, grid)
    offs = np.linspace(-1.0, 1.0, grid) / math.sqrt(R)
    T, O = np.meshgrid(ts, offs, indexing="ij")
    vals = dk_factor(T.ravel() + O.ravel(), T.ravel(), R, rho)
    ratio = vals / ((2 * math.pi) ** -0.5 * 2 * rho)
    k = int(np.argmin(ratio))
    return Certificate("dk_window", bool(ratio.min() >= c), float(ratio.min()), c,
                       {"x1": float(T.ravel()[k] + O.ravel()[k]), "t": float(T.ravel()[k])}, ratio.size)


def galilean_check(g: BandData, theta, R: float, xbar, t, tol: float = DEFAULT_TOL):
    """| |evolve(f_theta, xbar, s)| - |evolve(g, xbar - t theta, s)| | with s = t/(2 pi R).

    ``f_theta`` is ``g`` translated by pi R theta in frequency.
    """
    th = np.broadcast_to(np.asarray(theta, dtype=float), (g.dim,))
    X = np.asarray(xbar, dtype=float).reshape(-1, g.dim)
    T = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
    s = T / (2 * math.pi * R)
    f_theta = g.shifted(math.pi * R * th)
    A = evolve(f_theta, X, s, tol=tol)
    B = evolve(g, X - T[:, None] * th[None, :], s, tol=tol)
    res = np.abs(np.abs(A) - np.abs(B))
    return float(res[0]) if np.ndim(xbar) <= 1 and np.ndim(t) == 0 else res


def _ball_offsets(rng: np.random.Generator, m: int, d: int, radius: float) -> np.ndarray:
    v = rng.standard_normal((m, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random(m) ** (1.0 / d)
    return v * r[:, None]


def lattice_ball_points(rng: np.random.Generator, m: int, d: int, spacing: float, radius: float) -> np.ndarray:
    """m random points of spacing*Z^d with norm at most radius (rejection sampling)."""
    kmax = int(math.floor(radius / spacing))
    out = np.zeros((0, d))
    while out.shape[0] < m:
        cand = rng.integers(-kmax, kmax + 1, size=(2 * m, d)) * spacing
        cand = cand[np.linalg.norm(cand, axis=1) <= radius]
        out = np.vstack([out, cand])
    return out[:m]


def phase1_check(R: float, sigma: float, rho: float = 0.05, eps: float = 0.1, sample_budget: int = 200,
                 n: int = 2, seed: int = 0, c: float = 0.5) -> Certificate:
    """No-cancellation certificate for the comb data at lattice space-time points.

    Samples x in R^{sigma-1} Z^{n-1} (|x| <= 2) plus offsets of size at most
    eps/R and t in R^{2 sigma - 1} Z intersected with (0, 1); records the ratio
    |evolve(g, x, t/(2 pi R))| / ((2 pi)^{-(n-1)/2} |Omega|).
    """
    from .builder import build_omega  # local import: the builder depends on this module

    comb = build_omega(R, sigma, n, rho)
    g = comb.band()
    d = n - 1
    rng = np.random.default_rng(seed)
    spacing = R ** (sigma - 1)
    xs = lattice_ball_points(rng, sample_budget, d, spacing, 2.0) + _ball_offsets(rng, sample_budget, d, eps / R)
    tstep = R ** (2 * sigma - 1)
    kmax = int(math.ceil(1.0 / tstep)) - 1
    if kmax < 1:
        raise ValueError("no lattice times in (0, 1)")
    ts = rng.integers(1, kmax + 1, size=sample_budget) * tstep
    vals = np.abs(evolve(g, xs, ts / (2 * math.pi * R)))
    ratio = vals / ((2 * math.pi) ** (-d / 2) * comb.measure)
    k = int(np.argmin(ratio))
    return Certificate("phase1", bool(ratio.min() >= c), float(ratio.min()), c,
                       {"xbar": xs[k].tolist(), "t": float(ts[k])}, sample_budget,
                       {"R": R, "sigma": sigma, "rho": rho, "eps": eps, "K": len(comb)})
