"""Command-line entry point: ``carleson-lab <subcommand> ...``.

Exit codes: 0 when every certificate passes, 1 when a certificate fails,
2 for usage, configuration or parameter errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .builder import build_f, build_u0, level_hs_masses, select_thetas
from .errors import ConfigError, LabError, ParameterError
from .experiments import (SECTION_KEYS, ProbeReport, apply_overrides, content_experiment, divergence_probe,
                          maximal_scan, run_config, to_jsonable)
from .geometry import build_gamma_j
from .params import ConfigDocument, ExperimentParams, load_config, parse_value
from .propagator import evolve, evolve_truncated
from .torus import ErgParams, erg_search_theta

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- helpers


def _parse_sets(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, _, v = item.partition("=")
        try:
            out[k.strip()] = parse_value(v)
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"bad value in --set {item!r}: {exc}") from None
    return out


def _document(args) -> ConfigDocument:
    if getattr(args, "config", None):
        doc = load_config(args.config, SECTION_KEYS)
    else:
        doc = ConfigDocument(ExperimentParams(), [], {}, {}, "<defaults>")
    sets = _parse_sets(getattr(args, "set", None))
    return apply_overrides(doc, sets) if sets else doc


def _grid(spec: str) -> np.ndarray:
    """``lo:hi:count`` or a single value."""
    parts = spec.split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parse_value(parts[0]))])
        if len(parts) == 3:
            return np.linspace(float(parse_value(parts[0])), float(parse_value(parts[1])), int(parts[2]))
    except (ValueError, ZeroDivisionError):
        pass
    raise UsageError(f"grid spec must be 'value' or 'lo:hi:count', got {spec!r}")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_json(obj, out: str | None) -> None:
    _emit(json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n", out)


def _report_exit(rep: ProbeReport, out: str | None) -> int:
    _emit(rep.to_json(), out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _data(args, doc: ConfigDocument):
    """Band data selected by ``--data``: the single-scale f or the multi-scale u0."""
    p = doc.params
    if args.data == "f":
        R = args.R if args.R is not None else 2.0 ** 12
        theta = args.theta if args.theta is not None else R ** (-(0.5 - p.sigma))
        return build_f(R, p.sigma, theta, p.n, p.rho)
    sel = select_thetas(p, strict=False)
    return build_u0(p, sel.thetas)


# --------------------------------------------------------------------------- subcommands


def cmd_run(args) -> int:
    overrides = _parse_sets(args.set)
    reports, manifest = run_config(args.config, args.out, overrides)
    for r in reports:
        print(f"{r.experiment}: {'PASS' if r.passed else 'FAIL'}")
    print(f"manifest: {Path(args.out or Path(args.config).parent / (Path(args.config).stem + '_run')) / 'manifest.json'}")
    return EXIT_OK if manifest["pass"] else EXIT_FAIL


def cmd_erg_search(args) -> int:
    p = ErgParams(args.R, args.delta_t, args.kappa, args.eps, args.d)
    panel = [float(parse_value(a)) for a in args.a_panel.split(",")] if args.a_panel else None
    cert = erg_search_theta(p, args.attempts, panel, args.seed, raise_on_fail=False)
    _emit_json(cert.to_dict(), args.out)
    return EXIT_OK if cert.passed else EXIT_FAIL


def cmd_evolve_dump(args) -> int:
    doc = _document(args)
    band = _data(args, doc).band
    axes = [_grid(s) for s in args.x]
    if len(axes) != band.dim:
        raise UsageError(f"need {band.dim} --x specs (one per coordinate), got {len(axes)}")
    ts = _grid(args.t)
    mesh = np.stack(np.meshgrid(*axes, ts, indexing="ij"), axis=-1).reshape(-1, band.dim + 1)
    X, T = mesh[:, :-1], mesh[:, -1]
    u = evolve_truncated(band, X, T, args.N) if args.N else evolve(band, X, T)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(band.dim)] + ["t", "re", "im", "abs"])
    for row, val in zip(mesh, np.atleast_1d(u)):
        w.writerow([repr(float(v)) for v in row] + [repr(float(val.real)), repr(float(val.imag)), repr(float(abs(val)))])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_build_dump(args) -> int:
    doc = _document(args)
    bundle = _data(args, doc)
    out = bundle.to_dict()
    out["norms"] = {"l2": math.sqrt(bundle.band.l2_norm_sq())}
    if args.data == "u0" and args.s is not None:
        out["norms"]["hs_level_masses"] = level_hs_masses(bundle, args.s)
    _emit_json(out, args.out)
    return EXIT_OK


def _gamma(args, doc):
    p = doc.params
    sel = select_thetas(p, levels=range(1, 2 * args.j + 1), strict=False)
    return build_gamma_j(args.x1, args.j, p, sel.thetas)


def cmd_geometry_dump(args) -> int:
    doc = _document(args)
    g = _gamma(args, doc)
    lo = None if args.lo is None else [args.lo] * g.d
    hi = None if args.hi is None else [args.hi] * g.d
    _emit_json(g.to_dict(lo, hi), args.out)
    return EXIT_OK


def cmd_member(args) -> int:
    doc = _document(args)
    g = _gamma(args, doc)
    for lineno, line in enumerate(sys.stdin, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            pt = [float(v) for v in line.replace(",", " ").split()]
        except ValueError:
            raise UsageError(f"stdin line {lineno}: not a point: {line!r}") from None
        if len(pt) != g.d:
            raise UsageError(f"stdin line {lineno}: expected {g.d} coordinates")
        print(int(g.contains(pt)[0]))
    return EXIT_OK


def cmd_content_check(args) -> int:
    doc = _document(args)
    j_panel = [int(v) for v in args.j_panel.split(",")]
    centers = [float(v) for v in args.centers.split(",")] if args.centers else None
    rep = content_experiment(doc.params, args.x1, args.beta, j_panel, args.delta, centers)
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = sorted({k for r in rep.records for k in r})
        w.writerow(keys)
        for r in rep.records:
            w.writerow([json.dumps(to_jsonable(r.get(k))) if isinstance(r.get(k), (list, dict)) else r.get(k)
                        for k in keys])
        Path(args.csv).write_text(buf.getvalue(), encoding="utf-8")
    return _report_exit(rep, args.out)


def cmd_maximal_scan(args) -> int:
    R_list = [float(parse_value(v)) for v in args.R_list.split(",")]
    src = args.theta_source
    if src not in ("constructive", "certified"):
        try:
            src = float(parse_value(src))
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"--theta-source must be constructive, certified or a number, got {src!r}") from None
    rep = maximal_scan(args.n, args.sigma, R_list, src, args.rho, args.eps, args.times, args.points, args.seed)
    return _report_exit(rep, args.out)


def cmd_diverge_probe(args) -> int:
    doc = _document(args)
    levels = [int(v) for v in args.levels.split(",")] if args.levels else None
    rep = divergence_probe(doc.params, args.n_points, levels, args.seed)
    return _report_exit(rep, args.out)


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="carleson-lab", description="Numerical laboratory for pointwise "
                                 "convergence counterexamples of the free Schrödinger equation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        if config_required:
            p.add_argument("config", help="configuration file")
        else:
            p.add_argument("--config", help="configuration file (defaults used when omitted)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key; use section.key for experiment sections")
        p.add_argument("--out", help="output path (stdout when omitted)")

    def data_opts(p):
        p.add_argument("--data", choices=("u0", "f"), default="u0", help="multi-scale u0 or single-scale f")
        p.add_argument("--R", type=float, help="scale for --data f (default 2^12)")
        p.add_argument("--theta", type=float, help="boost direction for --data f (n = 2)")

    p = sub.add_parser("run", help="run every experiment listed in a config file")
    p.add_argument("config")
    p.add_argument("--out", help="run directory (default <config stem>_run next to the config)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("erg-search", help="search and certify a dense flow direction")
    p.add_argument("--R", type=float, default=1024.0)
    p.add_argument("--delta-t", type=float, default=0.3)
    p.add_argument("--kappa", type=float, default=0.6)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--attempts", type=int, default=64)
    p.add_argument("--a-panel", help="comma-separated offsets (default: R/10 panel)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_erg_search)

    p = sub.add_parser("evolve-dump", help="CSV of the evolved data on a rectangular (x, t) grid")
    common(p)
    data_opts(p)
    p.add_argument("--x", action="append", required=True, metavar="LO:HI:COUNT",
                   help="grid for one spatial coordinate; repeat once per coordinate")
    p.add_argument("--t", required=True, metavar="LO:HI:COUNT")
    p.add_argument("--N", type=float, help="frequency cutoff (untruncated when omitted)")
    p.set_defaults(func=cmd_evolve_dump)

    p = sub.add_parser("build-dump", help="JSON dump of the constructed data")
    common(p)
    data_opts(p)
    p.add_argument("--s", type=float, help="also report per-level H^s masses")
    p.set_defaults(func=cmd_build_dump)

    for name, func, hlp in (("geometry-dump", cmd_geometry_dump, "JSON cube inventory of a level set"),
                            ("member", cmd_member, "membership of stdin points (one per line) as 0/1")):
        p = sub.add_parser(name, help=hlp)
        common(p)
        p.add_argument("--x1", type=float, required=True)
        p.add_argument("--j", type=int, required=True)
        if name == "geometry-dump":
            p.add_argument("--lo", type=float, help="lower corner coordinate of the dump window")
            p.add_argument("--hi", type=float, help="upper corner coordinate of the dump window")
        p.set_defaults(func=func)

    p = sub.add_parser("content-check", help="Hausdorff content brackets and density panel")
    common(p)
    p.add_argument("--x1", type=float, default=0.2)
    p.add_argument("--beta", type=float, help="exponent (default: middle of the admissible interval)")
    p.add_argument("--j-panel", default="2,3,4,5")
    p.add_argument("--delta", type=float, default=0.05, help="query cube side")
    p.add_argument("--centers", help="comma-separated query cube centres on the first axis")
    p.add_argument("--csv", help="also write per-cube rows as CSV")
    p.set_defaults(func=cmd_content_check)

    p = sub.add_parser("maximal-scan", help="growth rate of the sampled maximal function")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--R-list", default="2^14,2^16,2^18,2^20")
    p.add_argument("--theta-source", default="constructive")
    p.add_argument("--rho", type=float, default=0.05)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--times", type=int, default=16, help="lattice times per R")
    p.add_argument("--points", type=int, default=8, help="lattice points per time")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_maximal_scan)

    p = sub.add_parser("diverge-probe", help="level-by-level growth on the divergence scaffold")
    common(p)
    p.add_argument("--n-points", type=int, default=24)
    p.add_argument("--levels", help="comma-separated levels (default J-1,J)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_diverge_probe)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, ParameterError) as exc:
        print(f"carleson-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LabError as exc:
        print(f"carleson-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"carleson-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
