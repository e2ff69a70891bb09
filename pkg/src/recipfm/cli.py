"""Command-line front end: define systems and densities, run residual suites,
apply transformations, and emit machine-readable JSON reports.

Exit codes: 0 all checks passed, 1 a numerical check failed, 2 configuration or
evaluation error.  All randomness flows from --seed and sample points are
recorded in the report, so identical (config, seed) pairs produce byte-identical
reports.
"""

from __future__ import annotations

import argparse
import json
import sys as _sys
from typing import Sequence

from . import catalog as cat
from . import geometry as geo
from . import reciprocal as rec
from .exprlang import EvalError, ParseError, ScalarField, field
from .geometry import DiagonalSystem, ResidualReport
from .jets import JetError, Point

SCHEMA = "recip-fm/1"

_CONFIG_ERRORS = (
    ParseError,
    EvalError,
    JetError,
    geo.GeometryError,
    rec.ReciprocalError,
    KeyError,
    ValueError,
)

_DEFAULT_BANDS = {
    2: ((-1.8, -0.7), (0.7, 1.8)),
    3: ((-2.0, -1.4), (-1.0, -0.5), (0.5, 1.2)),
}

_SUITES = ("flatness", "dual", "sh", "density", "a-system", "grading-e", "grading-E", "biflat", "all")


class ConfigError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recipfm",
        description="Residual suites for diagonal hydrodynamic systems and their reciprocal transformations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    parser._recipfm_subparsers = []  # so --config can reach subcommand defaults

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON file supplying any of the long options")
        p.add_argument("--builtin", help="built-in system id (eps-system)")
        p.add_argument("--dim", type=int, help="number of components")
        p.add_argument("--eps", type=float, help="parameter of the built-in system")
        p.add_argument("--velocity", action="append", default=None, help="velocity field source (repeat per component)")
        p.add_argument("--density", help="density field source")
        p.add_argument("--catalog", help="catalog entry id for the density")
        p.add_argument("--param", action="append", default=None, metavar="NAME=VALUE", help="expression parameter binding")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--num-points", type=int, default=20)
        p.add_argument("--tol-second", type=float, default=geo.TOL_SECOND, help="tolerance for second-derivative residuals")
        p.add_argument("--tol-third", type=float, default=geo.TOL_THIRD, help="tolerance for third-derivative residuals")
        p.add_argument("--grading-tol", type=float, default=rec.GRADING_TOL)
        p.add_argument("--output", help="write the JSON report here instead of stdout")
        p.add_argument("--summary", action="store_true", help="also print a one-line human summary")

    p_check = sub.add_parser("check", help="run residual suites on a system (and optional density)")
    parser._recipfm_subparsers.append(p_check)
    common(p_check)
    p_check.add_argument("--suite", default="all", help=f"comma-separated subset of {', '.join(_SUITES)}")

    p_tr = sub.add_parser("transform", help="apply the reciprocal transformation of a density")
    parser._recipfm_subparsers.append(p_tr)
    common(p_tr)
    p_tr.add_argument("--biflat", action="store_true", help="also check the dual connection and admissibility")

    p_orbit = sub.add_parser("orbit", help="compare two-step against one-step composition")
    parser._recipfm_subparsers.append(p_orbit)
    common(p_orbit)
    p_orbit.add_argument("--gen0", help="first generator source")
    p_orbit.add_argument("--composite", help="composite generator source (second generator = composite / gen0)")

    p_dx = sub.add_parser("darboux", help="act on a rotation frame with a density")
    parser._recipfm_subparsers.append(p_dx)
    common(p_dx)
    p_dx.add_argument("--frame-builtin", help="built-in frame id (eps2)")
    p_dx.add_argument("--beta", action="append", default=None, metavar="I,J:SRC", help="rotation coefficient field")
    p_dx.add_argument("--lame", action="append", default=None, help="Lame field source (repeat per component)")
    p_dx.add_argument("--frame-d", type=float, help="homogeneity degree of the Lame fields")
    return parser


def _parse_params(items: Sequence[str] | None) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise ConfigError(f"--param expects NAME=VALUE, got {item!r}")
        out[name] = float(value)
    return out


def _apply_config(argv: Sequence[str], parser: argparse.ArgumentParser) -> argparse.Namespace:
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    pre, _ = probe.parse_known_args(argv[1:] if argv and not argv[0].startswith("-") else argv)
    if pre.config:
        with open(pre.config, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("--config file must hold a JSON object")
        defaults = {k.replace("-", "_"): v for k, v in data.items()}
        parser.set_defaults(**defaults)
        # subcommand parsing rebuilds the namespace from the subparser's own
        # defaults, so the config has to reach those parsers as well
        for sp in getattr(parser, "_recipfm_subparsers", ()):
            sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def _build_system(args) -> DiagonalSystem:
    params = _parse_params(args.param)
    if args.velocity:
        dim = args.dim if args.dim else len(args.velocity)
        if len(args.velocity) != dim:
            raise ConfigError(f"got {len(args.velocity)} velocity fields for dimension {dim}")
        if args.eps is not None:
            params.setdefault("eps", args.eps)
        return DiagonalSystem(tuple(field(src, dim, params) for src in args.velocity))
    builtin = args.builtin or "eps-system"
    if builtin != "eps-system":
        raise ConfigError(f"unknown builtin system {builtin!r}")
    if args.dim is None or args.eps is None:
        raise ConfigError("--builtin eps-system needs --dim and --eps")
    return cat.epsilon_system(args.dim, args.eps)


def _build_density(args, dim: int):
    """Returns (field, catalog_entry_or_None, label) or (None, None, None)."""
    if args.catalog:
        e = cat.entry(args.catalog)
        if e.dim != dim:
            raise ConfigError(f"catalog entry {e.entry_id} lives in dimension {e.dim}, system has {dim}")
        return e.density_field(), e, e.entry_id
    if args.density:
        params = _parse_params(args.param)
        if args.eps is not None:
            params.setdefault("eps", args.eps)
        return field(args.density, dim, params), None, args.density
    return None, None, None


def _density_predicates(A: ScalarField | None, entry) -> tuple:
    if entry is not None:
        return entry.sample_predicates()
    if A is not None:
        return (rec.density_window(A),)
    return ()


def _check_payload(rep: ResidualReport, tolerance: float | None = None) -> dict:
    return {
        "max_abs": rep.max_abs,
        "tolerance": tolerance if tolerance is not None else rep.tolerance,
        "pass": rep.passed,
    }


def _report_skeleton(args, points: Sequence[Point]) -> dict:
    inputs = {
        "builtin": args.builtin,
        "dim": args.dim,
        "eps": args.eps,
        "velocities": args.velocity,
        "density": args.density,
        "catalog": args.catalog,
        "params": _parse_params(args.param),
        "num_points": args.num_points,
        "tolerances": {
            "second": args.tol_second,
            "third": args.tol_third,
            "grading": args.grading_tol,
        },
    }
    return {
        "schema": SCHEMA,
        "command": args.command,
        "inputs": inputs,
        "seed": args.seed,
        "points": [list(p.coords) for p in points],
        "checks": {},
    }


def cmd_check(args) -> tuple[dict, int]:
    system = _build_system(args)
    A, entry, label = _build_density(args, system.dim)
    suites = [s.strip() for s in args.suite.split(",") if s.strip()]
    for s in suites:
        if s not in _SUITES:
            raise ConfigError(f"unknown suite {s!r}; choose from {', '.join(_SUITES)}")
    if "all" in suites:
        # grading-E and biflat stay opt-in: they are conditions on homogeneous
        # generators, not on arbitrary densities
        suites = ["flatness", "dual", "sh"]
        if A is not None:
            suites += ["density", "a-system", "grading-e"]
    needs_density = {"density", "a-system", "grading-e", "grading-E", "biflat"}
    if needs_density & set(suites) and A is None:
        raise ConfigError("the selected suites need --density or --catalog")

    points = geo.sample_points(
        system.dim, args.num_points, args.seed, predicates=_density_predicates(A, entry)
    )
    report = _report_skeleton(args, points)
    if label:
        report["inputs"]["density_label"] = label
    checks = report["checks"]

    natural = geo.natural_connection(system)
    if "flatness" in suites:
        checks["curvature-natural"] = _check_payload(
            geo.curvature_natural_residual(natural, points, args.tol_second)
        )
        checks["parallel-e"] = _check_payload(geo.identity_parallel_residual(natural, "e", points))
    if "dual" in suites:
        dual = geo.dual_connection(system)
        checks["curvature-dual"] = _check_payload(geo.curvature_full_residual(dual, points, args.tol_second))
        checks["parallel-E"] = _check_payload(geo.identity_parallel_residual(dual, "E", points))
    if "sh" in suites:
        checks["semi-hamiltonian"] = _check_payload(geo.sh_residual(system, points, args.tol_second))
    if "density" in suites:
        checks["density"] = _check_payload(rec.density_residual(system, A, points, args.tol_second))
    if "a-system" in suites:
        checks["a-system"] = _check_payload(rec.a_system_residual(system, A, points, args.tol_second))
        checks["theta-system"] = _check_payload(rec.theta_system_residual(system, A, points, args.tol_second))
    if "grading-e" in suites:
        h_est, h_rep = rec.grading_residual(A, "e", points, args.grading_tol)
        checks["grading-e"] = _check_payload(h_rep)
        report["grading_e_estimate"] = h_est
    if "grading-E" in suites:
        k_est, k_rep = rec.grading_residual(A, "E", points, args.grading_tol)
        checks["grading-E"] = _check_payload(k_rep)
        report["grading_E_estimate"] = k_est
    if "biflat" in suites:
        verdict = rec.biflat_admissibility(
            system, A, points, tolerance=args.tol_second, grading_tol=args.grading_tol
        )
        checks["biflat-admissible"] = {
            "max_abs": max(r.max_abs for r in verdict.reports.values()),
            "tolerance": args.tol_second,
            "pass": verdict.passed,
        }
        report["biflat"] = {"h": verdict.h, "k": verdict.k, "admissible": verdict.passed}

    overall = all(c["pass"] for c in checks.values())
    report["pass"] = overall
    return report, 0 if overall else 1


def cmd_transform(args) -> tuple[dict, int]:
    system = _build_system(args)
    A, entry, label = _build_density(args, system.dim)
    if A is None:
        raise ConfigError("transform needs --density or --catalog")
    points = geo.sample_points(
        system.dim, args.num_points, args.seed, predicates=_density_predicates(A, entry)
    )
    report = _report_skeleton(args, points)
    report["inputs"]["density_label"] = label
    checks = report["checks"]

    gen = rec.ConservationDensity(A)
    result = rec.transform(system, gen, points[0], with_dual=args.biflat, check_generator=False)

    checks["generator-density"] = _check_payload(
        rec.density_residual(system, A, points, args.tol_second)
    )
    h_est, h_rep = rec.grading_residual(A, "e", points, args.grading_tol)
    checks["grading-e"] = _check_payload(h_rep)
    checks["transformed-curvature"] = _check_payload(
        geo.curvature_natural_residual(result.natural, points, args.tol_second)
    )
    checks["intrinsic-agreement"] = _check_payload(
        rec.intrinsic_agreement_report(system, A, result, points[:3])
    )
    report["generator"] = {"h": h_est}

    probe = points[0]
    gammas = {}
    for i in range(system.dim):
        for j in range(system.dim):
            if i != j:
                gammas[f"G^{i + 1}_{i + 1}{j + 1}"] = result.natural.off(i, j, probe, 0).value
    report["transformed_christoffels"] = {"point": list(probe.coords), "values": gammas}

    if args.biflat:
        k_est, k_rep = rec.grading_residual(A, "E", points, args.grading_tol)
        checks["grading-E"] = _check_payload(k_rep)
        checks["transformed-dual-curvature"] = _check_payload(
            geo.curvature_full_residual(result.dual, points, args.tol_second)
        )
        checks["transformed-parallel-E"] = _check_payload(
            geo.identity_parallel_residual(result.dual, "E", points)
        )
        verdict = rec.biflat_admissibility(
            system, A, points, tolerance=args.tol_second, grading_tol=args.grading_tol
        )
        checks["biflat-admissible"] = {
            "max_abs": max(r.max_abs for r in verdict.reports.values()),
            "tolerance": args.tol_second,
            "pass": verdict.passed,
        }
        report["generator"]["k"] = k_est
        report["biflat"] = {"h": verdict.h, "k": verdict.k, "admissible": verdict.passed}

    overall = all(c["pass"] for c in checks.values())
    report["pass"] = overall
    return report, 0 if overall else 1


def cmd_orbit(args) -> tuple[dict, int]:
    system = _build_system(args)
    if not args.gen0 or not args.composite:
        raise ConfigError("orbit needs --gen0 and --composite")
    params = _parse_params(args.param)
    if args.eps is not None:
        params.setdefault("eps", args.eps)
    gen0_field = field(args.gen0, system.dim, params)
    composite_field = field(args.composite, system.dim, params)
    gen1_field = composite_field / gen0_field

    bands = _DEFAULT_BANDS.get(system.dim)
    if bands is None:
        raise ConfigError(f"orbit has built-in sample bands only for dimensions {sorted(_DEFAULT_BANDS)}")
    preds = (rec.density_window(gen0_field), rec.density_window(composite_field))
    points = geo.banded_points(bands, args.num_points, args.seed, predicates=preds)
    base = Point(tuple((lo + hi) / 2.0 for lo, hi in bands))

    report = _report_skeleton(args, points)
    report["inputs"]["gen0"] = args.gen0
    report["inputs"]["composite"] = args.composite
    report["base"] = list(base.coords)

    rep = rec.orbit_compose(
        system,
        rec.ConservationDensity(gen0_field),
        rec.ConservationDensity(gen1_field),
        points,
        base,
    )
    report["checks"]["orbit-compose"] = _check_payload(rep)
    g0, _ = rec.grading_residual(gen0_field, "e", points)
    g1, _ = rec.grading_residual(gen1_field, "e", points)
    gc, _ = rec.grading_residual(composite_field, "e", points)
    report["gradings"] = {"gen0": g0, "gen1": g1, "composite": gc}

    overall = rep.passed
    report["pass"] = overall
    return report, 0 if overall else 1


def _build_frame(args) -> rec.RotationFrame:
    if args.frame_builtin:
        if args.frame_builtin != "eps2":
            raise ConfigError(f"unknown builtin frame {args.frame_builtin!r}")
        if args.eps is None:
            raise ConfigError("--frame-builtin eps2 needs --eps")
        return cat.epsilon_frame_n2(args.eps)
    if not args.beta or not args.lame or args.frame_d is None:
        raise ConfigError("darboux needs --frame-builtin, or --beta/--lame/--frame-d")
    dim = args.dim if args.dim else len(args.lame)
    if len(args.lame) != dim:
        raise ConfigError(f"got {len(args.lame)} Lame fields for dimension {dim}")
    params = _parse_params(args.param)
    if args.eps is not None:
        params.setdefault("eps", args.eps)
    beta = {}
    for item in args.beta:
        head, sep, src = item.partition(":")
        if not sep:
            raise ConfigError(f"--beta expects I,J:SRC, got {item!r}")
        try:
            i_s, j_s = head.split(",")
            i, j = int(i_s) - 1, int(j_s) - 1
        except ValueError:
            raise ConfigError(f"--beta expects I,J:SRC, got {item!r}") from None
        beta[(i, j)] = field(src, dim, params)
    lame = tuple(field(src, dim, params) for src in args.lame)
    return rec.RotationFrame(dim, beta, lame, args.frame_d)


def cmd_darboux(args) -> tuple[dict, int]:
    frame = _build_frame(args)
    if not args.density:
        raise ConfigError("darboux needs --density")
    params = _parse_params(args.param)
    if args.eps is not None:
        params.setdefault("eps", args.eps)
    A = field(args.density, frame.dim, params)
    points = geo.sample_points(
        frame.dim, args.num_points, args.seed, predicates=(rec.density_window(A),)
    )
    report = _report_skeleton(args, points)
    checks = report["checks"]

    before = rec.darboux_residual(frame, points, args.tol_second)
    checks["frame-before"] = _check_payload(before)
    gen = rec.ConservationDensity(A)
    new_frame = rec.darboux_transform(frame, gen, points, tolerance=args.tol_second, grading_tol=args.grading_tol)
    checks["frame-after"] = _check_payload(rec.darboux_residual(new_frame, points, args.tol_second))

    old_off = rec.darboux_gamma_off(frame)
    new_off = rec.darboux_gamma_off(new_frame)
    dlog = [rec.log_derivative_field(A, j) for j in range(frame.dim)]
    entries = []
    for p in points:
        for i in range(frame.dim):
            for j in range(frame.dim):
                if i != j:
                    expected = old_off(i, j, p, 0).value - dlog[j].jet(p, 0).value
                    entries.append((p, (i, j), new_off(i, j, p, 0).value - expected))
    checks["christoffel-shift"] = _check_payload(ResidualReport.build("christoffel-shift", entries, 1e-10))

    report["degree_before"] = frame.degree
    report["degree_after"] = new_frame.degree
    overall = all(c["pass"] for c in checks.values())
    report["pass"] = overall
    return report, 0 if overall else 1


_COMMANDS = {
    "check": cmd_check,
    "transform": cmd_transform,
    "orbit": cmd_orbit,
    "darboux": cmd_darboux,
}


def _emit(report: dict, args) -> None:
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.summary:
        worst_label, worst = None, -1.0
        for name, c in report.get("checks", {}).items():
            if c["max_abs"] > worst:
                worst_label, worst = name, c["max_abs"]
        status = "PASS" if report.get("pass") else "FAIL"
        line = f"{status} {report['command']}: {len(report.get('checks', {}))} checks"
        if worst_label is not None:
            line += f", worst {worst_label} max_abs={worst:.3e}"
        print(line)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        _sys.stdout.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(list(argv) if argv is not None else _sys.argv[1:], parser)
        report, code = _COMMANDS[args.command](args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    _emit(report, args)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
