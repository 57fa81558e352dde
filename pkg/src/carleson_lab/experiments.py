"""End-to-end experiment drivers and report persistence."""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .builder import build_f, build_u0, select_thetas
from .errors import ConfigError, GeometryError, LabError, ParameterError
from .geometry import build_T, build_gamma_j
from .measure import (cover_cost_compare, falconer_density_check, gamma_total_measure,
                      pseudo_cube_certificate)
from .params import (ConfigDocument, ExperimentParams, as_fraction, beta_interval, dimension_lower_bound,
                     load_config, sharp_exponent, theorem1_threshold)
from .propagator import evolve, evolve_truncated, lattice_ball_points, phase1_check, dk_certificate
from .torus import ErgParams, erg_search_theta, lattice_window, sphere_directions, verify_gamma_density


# --------------------------------------------------------------------------- reports


def to_jsonable(obj: Any) -> Any:
    """Plain-Python copy of nested numpy/dataclass-free structures; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


@dataclass
class ProbeReport:
    """Serializable record of one experiment; wall-clock time is kept out of the JSON."""

    experiment: str
    params: dict
    records: list[dict] = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    certificates: list[dict] = field(default_factory=list)
    seed: int = 0
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.get("pass", False) for c in self.certificates)

    def certificate(self, name: str) -> dict:
        for c in self.certificates:
            if c["name"] == name:
                return c
        raise KeyError(name)

    def add_certificate(self, name: str, passed: bool, witness=None, **detail) -> None:
        if not passed and witness is None:
            witness = {"note": "no witness recorded"}
        self.certificates.append({"name": name, "pass": bool(passed), "witness": witness, **detail})

    def to_dict(self) -> dict:
        return to_jsonable({"experiment": self.experiment, "params": self.params, "records": self.records,
                            "fits": self.fits, "certificates": self.certificates, "seed": self.seed,
                            "pass": self.passed})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ProbeReport":
        d = json.loads(text)
        return cls(d["experiment"], d["params"], d["records"], d["fits"], d["certificates"], d["seed"])

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _fit_loglog(xs, ys) -> dict:
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = max(1, lx.size - 2)
    s2 = float(resid @ resid) / dof
    se = math.sqrt(s2 / float(np.sum((lx - lx.mean()) ** 2)))
    return {"slope": float(coef[0]), "intercept": float(coef[1]), "max_residual": float(np.max(np.abs(resid))),
            "slope_stderr": se}


# --------------------------------------------------------------------------- maximal estimate


def _theta_for(source, R: float, sigma: float, n: int, seed: int, eps: float):
    d = n - 1
    if isinstance(source, (int, float, list, tuple, np.ndarray)) and not isinstance(source, (str, bool)):
        return np.atleast_1d(np.asarray(source, float)), {"source": "given"}
    if source not in ("constructive", "certified"):
        raise ParameterError(f"unknown theta source {source!r}")
    if d == 1:
        th = np.array([R ** (-(0.5 - sigma))])
    else:
        th = sphere_directions(d, 1, seed)[0]
    info = {"source": source}
    if source == "certified":
        cert = verify_gamma_density(th, sigma, float(d), eps, R, 0.25)
        info["certificate"] = cert.to_dict()
        if not cert.passed:
            raise GeometryError(f"theta not certified at R={R}")
    return th, info


def maximal_scan(n: int = 2, sigma: float = 0.3, R_list=(2.0 ** 14, 2.0 ** 16, 2.0 ** 18, 2.0 ** 20),
                 theta_source="constructive", rho: float = 0.05, eps: float = 0.1, times_per_R: int = 16,
                 points_per_time: int = 8, seed: int = 0, oracle_points: int = 4,
                 dense_grid: int = 2000) -> ProbeReport:
    """Growth of the sampled maximal function relative to the data norm across scales R.

    Points are taken at x1 = t - R^{-1/2}/2 for lattice times t, with x̄ on the
    shifted lattice R^{sigma-1} Z^{n-1} + t theta inside B(0, 1) and at the
    corresponding cell midpoints.  M(x) is the largest modulus over lattice
    times in (x1, x1 + R^{-1/2}); Q(R) is the root mean square of M over the
    sample divided by the data norm.
    """
    start = time.perf_counter()
    R_list = [float(R) for R in R_list]
    if any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise ParameterError("R_list must be ascending")
    d = n - 1
    rng = np.random.default_rng(seed)
    rep = ProbeReport("maximal_scan", {"n": n, "sigma": sigma, "R_list": R_list, "theta_source":
                                       theta_source if isinstance(theta_source, str) else "given",
                                       "rho": rho, "eps": eps, "times_per_R": times_per_R,
                                       "points_per_time": points_per_time}, seed=seed)
    Qs, Rs = [], []
    sanity_min, sanity_wit = math.inf, None
    for R in R_list:
        try:
            th, tinfo = _theta_for(theta_source, R, sigma, n, seed, eps)
        except (GeometryError, ParameterError) as exc:
            rep.records.append({"R": R, "skipped": str(exc)})
            continue
        bundle = build_f(R, sigma, th, n, rho)
        f = bundle.band
        norm = math.sqrt(f.l2_norm_sq())
        comb = bundle.levels[0].comb
        tstep = R ** (2 * sigma - 1)
        spacing = R ** (sigma - 1)
        win = R ** -0.5
        tl = lattice_window(tstep, win, 0.5)
        pick = np.unique(np.round(np.linspace(0, tl.size - 1, min(times_per_R, tl.size))).astype(int))
        xs, kinds = [], []
        for t in tl[pick]:
            x1 = t - win / 2
            lat = lattice_ball_points(rng, points_per_time, d, spacing, 1.0) + t * th
            lat = lat[np.linalg.norm(lat, axis=1) <= 1.0]
            mids = lat + spacing / 2
            mids = mids[np.linalg.norm(mids, axis=1) <= 1.0]
            for pts, kind in ((lat, "lattice"), (mids, "midpoint")):
                for p in pts:
                    xs.append(np.concatenate([[x1], p]))
                    kinds.append(kind)
        X = np.array(xs)
        kinds = np.array(kinds)
        pair_x, pair_s, owner = [], [], []
        for i, x in enumerate(X):
            taus = lattice_window(tstep, x[0], x[0] + win)
            for tau in taus:
                pair_x.append(x)
                pair_s.append(tau / (2 * math.pi * R))
                owner.append(i)
        vals = np.abs(evolve(f, np.array(pair_x), np.array(pair_s)))
        M = np.zeros(X.shape[0])
        np.maximum.at(M, np.array(owner), vals)
        Q = float(np.sqrt(np.mean(M ** 2)) / norm)
        pred = (2 * math.pi) ** (-n / 2) * 2 * rho * comb.measure
        lat_ratio = M[kinds == "lattice"] / pred
        k = int(np.argmin(lat_ratio))
        if lat_ratio[k] < sanity_min:
            sanity_min = float(lat_ratio[k])
            sanity_wit = {"R": R, "x": X[kinds == "lattice"][k].tolist()}
        rec = {"R": R, "theta": th.tolist(), "theta_info": tinfo, "K": len(comb), "norm": norm, "Q": Q,
               "points": int(X.shape[0]), "lattice_points": int(np.sum(kinds == "lattice")),
               "min_lattice_ratio": float(lat_ratio.min()), "mean_midpoint_M": float(M[kinds == "midpoint"].mean())
               if np.any(kinds == "midpoint") else 0.0, "prediction": pred}
        if R == R_list[0] and oracle_points > 0:
            rows = []
            lat_idx = np.nonzero(kinds == "lattice")[0][:oracle_points]
            for i in lat_idx:
                x = X[i]
                taus = np.concatenate([np.linspace(x[0], x[0] + win, dense_grid + 2)[1:-1],
                                       lattice_window(tstep, x[0], x[0] + win)])
                dense = float(np.max(np.abs(evolve(f, np.repeat(x[None, :], taus.size, 0),
                                                   taus / (2 * math.pi * R)))))
                rows.append({"x": x.tolist(), "lattice": float(M[i]), "dense": dense,
                             "ratio": dense / M[i] if M[i] > 0 else math.inf})
            rec["dense_oracle"] = rows
            ok = all(r["lattice"] <= r["dense"] * (1 + 1e-12) and r["ratio"] <= 1.5 for r in rows)
            worst = max(rows, key=lambda r: r["ratio"]) if rows else None
            rep.add_certificate("dense_oracle", ok, None if ok else worst,
                                max_ratio=max((r["ratio"] for r in rows), default=0.0))
        rep.records.append(rec)
        Qs.append(Q)
        Rs.append(R)
    target = (n - 1) * sigma / 2 + 0.25
    if len(Rs) >= 4:
        fit = _fit_loglog(Rs, Qs)
        fit.update({"target": target, "threshold": target - 0.05})
        rep.fits["log_Q_vs_log_R"] = fit
        ok = fit["slope"] >= target - 0.05
        rep.add_certificate("slope", ok, None if ok else {"slope": fit["slope"]},
                            slope=fit["slope"], threshold=target - 0.05)
    else:
        rep.add_certificate("slope", False, {"reason": "fewer than 4 usable R values", "usable": len(Rs)})
    rep.add_certificate("lattice_sanity", sanity_min >= 0.5, None if sanity_min >= 0.5 else sanity_wit,
                        min_ratio=sanity_min, threshold=0.5)
    rep.wall_clock = time.perf_counter() - start
    return rep


# --------------------------------------------------------------------------- divergence


def _level_values(levels, x: np.ndarray, s: np.ndarray, N: float) -> np.ndarray:
    """Matrix of truncated evolutions: rows = levels, columns = times."""
    X = np.repeat(x[None, :], s.size, axis=0)
    return np.array([evolve_truncated(lv.band(), X, s, N) for lv in levels])


def divergence_probe(params: ExperimentParams, n_points: int = 24, levels=None, seed: int | None = None,
                     thetas=None, dense_points: int = 3, dense_grid: int = 4000, c_own: float = 0.5,
                     max_attempts: int = 20000) -> ProbeReport:
    """Level-by-level size of the truncated solution at points of the divergence scaffold.

    Points are drawn in the intersection of the probed level sets.  At each
    point and level j the certifying time (the lattice time whose hole-punched
    cube contains x̄) splits the solution into the level-j term, the lower
    levels (A1) and the higher levels (A2).
    """
    start = time.perf_counter()
    seed = params.seed if seed is None else seed
    J = params.J
    levels = ([J - 1, J] if J >= 2 else [1]) if levels is None else sorted(levels)
    jmax = max(levels)
    if jmax > J:
        raise ParameterError("probed levels exceed J")
    need = 2 * math.pi * params.lam ** (2 * jmax)
    if params.N_cut < need * (1 - 1e-12):
        raise ParameterError(f"N_cut={params.N_cut:.6g} too small: need N >= 2 pi lambda^(2j) = {need:.6g}")
    if thetas is None:
        sel = select_thetas(params, levels=range(1, max(2 * jmax, J) + 1), strict=False, seed=seed)
        thetas, cert_map = sel.thetas, sel.certified
    else:
        cert_map = {}
    bundle = build_u0(params, thetas)
    lam, d = params.lam, params.d
    sets = {j: None for j in levels}
    rng = np.random.default_rng(seed)
    rep = ProbeReport("divergence_probe", {**params.to_dict(), "levels": levels, "n_points": n_points,
                                           "c_own": c_own}, seed=seed)
    rep.fits["theta_certified"] = {str(k): bool(v) for k, v in sorted(cert_map.items())}
    rep.fits["thetas"] = {str(k): np.atleast_1d(v).tolist() for k, v in sorted(thetas.items())}
    skipped: dict[str, int] = {}
    points = []
    attempts = 0
    while len(points) < n_points and attempts < max_attempts:
        attempts += 1
        x1 = float(rng.uniform(0.02, 0.48))
        try:
            T = build_T(jmax, x1, lam, params.sigma)
        except GeometryError:
            skipped["empty time lattice"] = skipped.get("empty time lattice", 0) + 1
            continue
        if len(T) == 0:
            skipped["empty time lattice"] = skipped.get("empty time lattice", 0) + 1
            continue
        t = float(T.members[rng.integers(len(T))])
        p = lam ** (jmax * (params.sigma - 1))
        kmax = int(math.floor(0.5 / p))
        l = rng.integers(-kmax, kmax + 1, size=d)
        side = params.eps2 * lam ** (-jmax)
        xbar = l * p + t * np.atleast_1d(thetas[jmax]) + rng.uniform(-0.5, 0.5, size=d) * side
        if np.linalg.norm(xbar) > 0.5:
            skipped["outside B(0,1/2)"] = skipped.get("outside B(0,1/2)", 0) + 1
            continue
        ok = True
        for j in levels:
            g = build_gamma_j(x1, j, params, thetas)
            if not g.contains(xbar)[0]:
                reason = f"outside Gamma^{j}" + (" (in a hole)" if g.in_open_cube(xbar)[0] else "")
                skipped[reason] = skipped.get(reason, 0) + 1
                ok = False
                break
        if ok:
            points.append((x1, xbar))
    rep.fits["sampling"] = {"accepted": len(points), "attempts": attempts, "skipped": skipped}
    own_fail, ledger_fail, ratio_fail = [], [], []
    lo_band, hi_band = lam ** params.delta_w / 2, 2 * lam ** params.delta_w
    N2 = 2 * params.N_cut
    sens = 0.0
    for pi, (x1, xbar) in enumerate(points):
        x = np.concatenate([[x1], xbar])
        rec = {"x": x.tolist(), "levels": {}}
        maxima = {}
        for j in levels:
            g = build_gamma_j(x1, j, params, thetas)
            T = build_T(j, x1, lam, params.sigma).members
            s = T / (2 * math.pi * lam ** j)
            V = _level_values(bundle.levels, x, s, params.N_cut)
            total = V.sum(axis=0)
            piece = int(g.certifying_piece(xbar)[0])
            tc = g.pieces[piece].t
            ic = int(np.argmin(np.abs(T - tc)))
            own = float(abs(V[j - 1, ic]))
            A1 = float(abs(V[:j - 1, ic].sum()))
            A2 = float(abs(V[j:, ic].sum()))
            unit = (2 * math.pi) ** (-params.n / 2) * 2 * params.eps1 * lam ** (j * params.delta_w)
            ia = int(np.argmax(np.abs(total)))
            M = float(np.abs(total[ia]))
            maxima[j] = M
            margin = own - A1 - A2
            entry = {"t_cert": tc, "t_argmax": float(T[ia]), "times": int(T.size), "own": own, "A1": A1, "A2": A2,
                     "own_normalized": own / unit, "A1_normalized": A1 / unit, "A2_normalized": A2 / unit,
                     "max_total": M, "ledger_margin": margin / own if own > 0 else -math.inf}
            if own < c_own * unit:
                own_fail.append({"point": pi, "level": j, "own_normalized": own / unit})
            if not margin > 0.25 * own:
                ledger_fail.append({"point": pi, "level": j, "own": own, "A1": A1, "A2": A2})
            if pi == 0:
                V2 = _level_values(bundle.levels, x, s, N2)
                sens = max(sens, float(np.max(np.abs(V2 - V))))
            if pi < dense_points:
                win = lam ** (-j / 2)
                taus = np.concatenate([np.linspace(x1, x1 + win, dense_grid + 2)[1:-1], T])
                Vd = _level_values(bundle.levels, x, taus / (2 * math.pi * lam ** j), params.N_cut).sum(axis=0)
                entry["dense_max"] = float(np.max(np.abs(Vd)))
                entry["dense_ratio"] = entry["dense_max"] / M if M > 0 else math.inf
            rec["levels"][str(j)] = entry
        ratios = {}
        for a, b in zip(levels, levels[1:]):
            r = maxima[b] / maxima[a] if maxima[a] > 0 else math.inf
            ratios[f"{b}/{a}"] = r
            if not lo_band <= r <= hi_band:
                ratio_fail.append({"point": pi, "pair": f"{b}/{a}", "ratio": r})
        rec["ratios"] = ratios
        rep.records.append(rec)
    rep.fits["ratio_band"] = [lo_band, hi_band]
    rep.fits["N_cut_sensitivity"] = {"N_cut": params.N_cut, "N_alt": N2, "max_abs_difference": sens}
    enough = len(points) >= min(n_points, 20)
    rep.add_certificate("sample_count", enough, None if enough else rep.fits["sampling"],
                        accepted=len(points), required=min(n_points, 20))
    rep.add_certificate("own_term", not own_fail, own_fail[0] if own_fail else None,
                        failures=len(own_fail), threshold=c_own)
    rep.add_certificate("ledger", bool(points) and not ledger_fail, ledger_fail[0] if ledger_fail else None,
                        failures=len(ledger_fail), checks=len(points) * len(levels))
    if len(levels) > 1:
        rep.add_certificate("growth_ratio", bool(points) and not ratio_fail, ratio_fail[0] if ratio_fail else None,
                            failures=len(ratio_fail), band=[lo_band, hi_band])
    dense_rows = [e for r in rep.records for e in r["levels"].values() if "dense_max" in e]
    dense_ok = all(e["max_total"] <= e["dense_max"] * (1 + 1e-12) and e["dense_ratio"] <= 1.5 for e in dense_rows)
    worst = max(dense_rows, key=lambda e: e["dense_ratio"]) if dense_rows else None
    rep.add_certificate("dense_oracle", dense_ok, None if dense_ok else worst,
                        max_ratio=max((e["dense_ratio"] for e in dense_rows), default=0.0), threshold=1.5)
    rep.wall_clock = time.perf_counter() - start
    return rep


# --------------------------------------------------------------------------- smaller experiments


def threshold_table(n_max: int = 8) -> ProbeReport:
    rep = ProbeReport("thresholds", {"n_max": n_max})
    ok = True
    for n in range(1, n_max + 1):
        row = {"n": n, "sharp": str(sharp_exponent(n)), "theorem1_at_alpha_n": str(theorem1_threshold(n, n))}
        if n >= 2:
            s0 = as_fraction(n + 1) / 8
            eps = as_fraction(1) / 10 ** 9
            left = n + as_fraction(n) / (n - 1) - as_fraction(2 * (n + 1)) / (n - 1) * s0
            jump = left - dimension_lower_bound(n, s0)
            row["jump"] = str(jump)
            row["jump_expected"] = str(as_fraction(1) / (2 * n))
            ok &= jump == as_fraction(1) / (2 * n)
            ok &= abs(dimension_lower_bound(n, s0 - eps) - left) < 10 * eps * n
        rep.records.append(row)
    rep.add_certificate("jumps", ok, None if ok else {"records": rep.records})
    return rep


def erg_experiment(R: float = 1024.0, delta_t: float = 0.3, kappa: float = 0.6, eps: float = 0.5, d: int = 1,
                   attempts: int = 64, a_panel=None, seed: int = 0) -> ProbeReport:
    rep = ProbeReport("erg_search", {"R": R, "delta_t": delta_t, "kappa": kappa, "eps": eps, "d": d,
                                     "attempts": attempts, "a_panel": a_panel}, seed=seed)
    p = ErgParams(R, delta_t, kappa, eps, d)
    cert = erg_search_theta(p, attempts, a_panel, seed, raise_on_fail=False)
    rep.records.append(cert.to_dict())
    rep.add_certificate("density", cert.passed, None if cert.passed else
                        {"worst_radius": cert.worst_radius, "target": cert.target_radius})
    return rep


def phase1_experiment(R: float = 2.0 ** 20, sigma: float = 0.3, rho: float = 0.05, eps: float = 0.1,
                      samples: int = 200, n: int = 2, seed: int = 0) -> ProbeReport:
    rep = ProbeReport("phase1_check", {"R": R, "sigma": sigma, "rho": rho, "eps": eps, "samples": samples,
                                       "n": n}, seed=seed)
    cert = phase1_check(R, sigma, rho, eps, samples, n, seed)
    rep.records.append(cert.to_dict())
    rep.add_certificate("phase1", cert.passed, None if cert.passed else cert.witness, min_ratio=cert.min_ratio)
    dk = dk_certificate(2.0 ** 12, rho)
    rep.records.append(dk.to_dict())
    rep.add_certificate("dk_window", dk.passed, None if dk.passed else dk.witness, min_ratio=dk.min_ratio)
    return rep


def content_experiment(params: ExperimentParams, x1: float = 0.2, beta: float | None = None,
                       j_panel=(2, 3, 4, 5), delta: float = 0.05, centers=None, seed: int | None = None) -> ProbeReport:
    seed = params.seed if seed is None else seed
    if beta is None:
        lo, hi = beta_interval(params.n, params.alpha)
        beta = float(params.beta) if params.beta is not None else float((lo + hi) / 2)
    centers = [-0.31, -0.13, 0.02, 0.19, 0.37] if centers is None else list(np.atleast_1d(centers))
    cubes = [([c] if params.d == 1 else list(np.atleast_1d(c)), delta) for c in centers]
    rep = ProbeReport("content_check", {**params.to_dict(), "x1": x1, "beta": beta, "j_panel": list(j_panel),
                                        "delta": delta, "centers": centers}, seed=seed)
    sel = select_thetas(params, levels=range(1, 2 * max(j_panel) + 1), strict=False, seed=seed)
    fc = falconer_density_check(x1, beta, params, sel.thetas, j_panel, cubes)
    rep.records.extend(fc.rows)
    rep.fits["c_by_j"] = {str(k): v for k, v in fc.c_by_j.items()}
    rep.fits["cover_cost"] = cover_cost_compare(j_panel, delta, beta, params)
    rep.add_certificate("falconer", fc.passed, fc.witness, median=fc.median, tail_min=fc.tail_min)
    j0 = min(j_panel)
    pcs = build_gamma_j(x1, j0, params, sel.thetas).pseudo_cubes()
    pc = pseudo_cube_certificate(pcs)
    rep.fits["pseudo_cube_measure"] = pc.to_dict()
    rep.add_certificate("pseudo_cube_measure", pc.passed, None if pc.passed else pc.detail, ratio=pc.ratio)
    return rep


def gamma_measure_experiment(params: ExperimentParams, x1: float = 0.2, j: int = 3,
                             seed: int | None = None) -> ProbeReport:
    seed = params.seed if seed is None else seed
    rep = ProbeReport("gamma_measure", {**params.to_dict(), "x1": x1, "j": j}, seed=seed)
    sel = select_thetas(params, levels=range(1, 2 * j + 1), strict=False, seed=seed)
    cert = gamma_total_measure(x1, j, params, sel.thetas)
    rep.records.append(cert.to_dict())
    rep.fits["theta_certified"] = {str(k): v for k, v in sorted(sel.certified.items())}
    rep.add_certificate("total_measure", cert.passed, None if cert.passed else cert.to_dict(), ratio=cert.ratio)
    return rep


# --------------------------------------------------------------------------- config dispatch


SECTION_KEYS: dict[str, set[str]] = {
    "thresholds": {"n_max"},
    "erg_search": {"R", "delta_t", "kappa", "eps", "d", "attempts", "a_panel", "seed"},
    "phase1_check": {"R", "sigma", "rho", "eps", "samples", "n", "seed"},
    "maximal_scan": {"n", "sigma", "R_list", "theta_source", "rho", "eps", "times_per_R", "points_per_time",
                     "seed", "oracle_points", "dense_grid"},
    "divergence_probe": {"n_points", "levels", "seed", "dense_points", "dense_grid", "c_own"},
    "content_check": {"x1", "beta", "j_panel", "delta", "centers", "seed"},
    "gamma_measure": {"x1", "j", "seed"},
}


def _listify(v):
    return v if isinstance(v, list) else [v]


def run_experiment(name: str, doc: ConfigDocument) -> ProbeReport:
    sec = dict(doc.sections.get(name, {}))
    p = doc.params
    if name == "thresholds":
        return threshold_table(int(sec.get("n_max", 8)))
    if name == "erg_search":
        if "a_panel" in sec:
            sec["a_panel"] = [float(a) for a in _listify(sec["a_panel"])]
        sec.setdefault("seed", p.seed)
        return erg_experiment(**sec)
    if name == "phase1_check":
        sec.setdefault("seed", p.seed)
        return phase1_experiment(**sec)
    if name == "maximal_scan":
        if "R_list" in sec:
            sec["R_list"] = [float(r) for r in _listify(sec["R_list"])]
        sec.setdefault("seed", p.seed)
        return maximal_scan(**sec)
    if name == "divergence_probe":
        if "levels" in sec:
            sec["levels"] = [int(v) for v in _listify(sec["levels"])]
        return divergence_probe(p, **sec)
    if name == "content_check":
        if "j_panel" in sec:
            sec["j_panel"] = [int(v) for v in _listify(sec["j_panel"])]
        if "centers" in sec:
            sec["centers"] = [float(v) for v in _listify(sec["centers"])]
        return content_experiment(p, **sec)
    if name == "gamma_measure":
        return gamma_measure_experiment(p, **sec)
    raise ConfigError(f"unknown experiment {name!r}")


def apply_overrides(doc: ConfigDocument, overrides: dict[str, Any]) -> ConfigDocument:
    """Apply ``key`` (global parameter) or ``section.key`` overrides given on the command line."""
    changes = {}
    for key, val in overrides.items():
        if "." in key:
            sec, _, k = key.partition(".")
            if sec not in SECTION_KEYS or k not in SECTION_KEYS[sec]:
                raise ConfigError(f"unknown override {key!r}")
            doc.sections.setdefault(sec, {})[k] = val
        elif key == "experiments":
            doc.experiments = [str(v) for v in _listify(val)]
        else:
            changes[key] = val
    if changes:
        try:
            doc.params = doc.params.replace(**changes)
        except (TypeError, ParameterError) as exc:
            raise ConfigError(f"bad override: {exc}") from None
    return doc


def run_config(path: str | Path, run_dir: str | Path | None = None,
               overrides: dict[str, Any] | None = None) -> tuple[list[ProbeReport], dict]:
    """Run every experiment named in the config and write reports plus a manifest.

    Reports contain no timestamps, so identical configs and seeds give
    byte-identical JSON; timing lives in ``manifest.json``.
    """
    doc = load_config(path, SECTION_KEYS)
    if overrides:
        doc = apply_overrides(doc, overrides)
    for name in doc.experiments:
        if name not in SECTION_KEYS:
            raise ConfigError(f"unknown experiment {name!r}", doc.line_of.get(("", "experiments")))
    run_dir = Path(run_dir) if run_dir is not None else Path(path).with_suffix("").parent / (Path(path).stem + "_run")
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"config": str(path), "started": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "experiments": []}
    reports = []
    for name in doc.experiments:
        t0 = time.perf_counter()
        try:
            rep = run_experiment(name, doc)
        except LabError as exc:
            rep = ProbeReport(name, doc.params.to_dict(), seed=doc.params.seed)
            rep.add_certificate("completed", False, {"error": f"{type(exc).__name__}: {exc}"})
        rep.wall_clock = time.perf_counter() - t0
        text = rep.to_json()
        (run_dir / f"{name}.json").write_text(text, encoding="utf-8")
        manifest["experiments"].append({"name": name, "file": f"{name}.json", "pass": rep.passed,
                                        "sha256": hashlib.sha256(text.encode()).hexdigest(),
                                        "wall_clock_s": rep.wall_clock})
        reports.append(rep)
    manifest["finished"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    manifest["pass"] = all(r.passed for r in reports)
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return reports, manifest
