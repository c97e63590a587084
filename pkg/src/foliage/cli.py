"""foliage: batch checks for basic operators, pseudogroups and averaged metrics.

Every command writes a JSON report (stdout or --out) and a one-line summary on
stderr. Exit codes: 0 success, 1 a check failed, 2 bad input.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .averaging import (
    ConstantMetric, GluedMetric, build_metric, metric_from_json, verify_invariance,
)
from .errors import FoliageError, ParseError
from .examples import SCENARIOS, Scenario, get_scenario, torus_counterexample
from .geom_core import Box, coords, operator_norm
from .operators import (
    BasicOperator, describe_operator, random_coordinate_change, search_triangularizing_change,
    verify_coordinate_change_rule,
)
from .pseudogroup import (
    PseudogroupSpec, commuting_residual, coverage_gap, equicontinuity_check, jacobian_bounds, orbit,
)

DEFAULT_GRID = 17
DEFAULT_TOL = 1e-8
DEFAULT_MAX_LEN = 20


class InputError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive and finite, got {v}")
    return v


def _seed() -> int:
    raw = os.environ.get("FOLIAGE_SEED", "42")
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"FOLIAGE_SEED must be an integer, got {raw!r}") from None


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise InputError(f"bad point {text!r}; expected comma-separated numbers") from None


def _parse_box(text: str) -> Box:
    try:
        return Box.from_json(json.loads(text))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise InputError(f"bad box {text!r}: {exc}") from None


def _load_scenario(args) -> Scenario:
    if getattr(args, "scenario", None) and getattr(args, "scenario_file", None):
        raise InputError("give either --scenario or --scenario-file, not both")
    if getattr(args, "scenario_file", None):
        return Scenario.from_json(_load_json(args.scenario_file))
    if getattr(args, "scenario", None):
        try:
            return get_scenario(args.scenario)
        except KeyError as exc:
            raise InputError(str(exc.args[0])) from None
    raise InputError("a scenario is required (--scenario NAME or --scenario-file PATH)")


def _load_pseudogroup(args) -> tuple[PseudogroupSpec, dict]:
    """(H, operators per chart) from --pseudogroup/--operator or a scenario."""
    if getattr(args, "pseudogroup", None):
        H = PseudogroupSpec.from_json(_load_json(args.pseudogroup))
        ops = {}
        if getattr(args, "operator", None):
            P = BasicOperator.from_json(_load_json(args.operator))
            ops = {c.id: P for c in H.charts}
        return H, ops
    s = _load_scenario(args)
    return s.H, dict(s.operators)


def _emit(args, report: dict, summary: str) -> None:
    report = dict(report)
    report["command"] = args.command
    report["version"] = __version__
    if not args.no_timestamp:
        report["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    report["summary"] = summary
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(summary, file=sys.stderr)


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# -- commands ---------------------------------------------------------------------------

def cmd_describe_operator(args) -> int:
    data = _load_json(args.operator_file)
    P = BasicOperator.from_json(data)
    region = _parse_box(args.region) if args.region else (
        Box.from_json(data["region"]) if "region" in data else Box.cube(P.q, -1.0, 1.0))
    rep = describe_operator(P, region, args.grid or DEFAULT_GRID, args.sphere, args.tol or DEFAULT_TOL)
    rep["region"] = region.to_json()
    summary = (f"elliptic={rep['elliptic']} constant_coeffs={rep['constant_coeffs']} "
               f"triangular_1part={rep['triangular_1part']}")
    _emit(args, {"operator": P.to_json(), "verdicts": rep}, summary)
    return 0


def cmd_check_commute(args) -> int:
    H, ops = _load_pseudogroup(args)
    if not ops:
        raise InputError("no operator: pass --operator with --pseudogroup")
    tol = args.tol or DEFAULT_TOL
    grid = args.grid or 9
    rows = []
    for i, g in enumerate(H.generators, start=1):
        h = g.map
        r = commuting_residual(ops[h.chart_src], h, grid_n=grid, P_dst=ops[h.chart_dst])
        rows.append({"generator": i, "label": h.label, "residual": r})
    worst = max(r["residual"] for r in rows) if rows else 0.0
    ok = worst < tol
    _emit(args, {"residuals": rows, "max_residual": worst, "tol": tol, "passed": ok},
          f"commuting residual {worst:.3e} over {len(rows)} generators ({'pass' if ok else 'FAIL'})")
    return 0 if ok else 1


def cmd_jacobian_bounds(args) -> int:
    H, _ = _load_pseudogroup(args)
    max_len = args.max_len or DEFAULT_MAX_LEN
    jb = jacobian_bounds(H, max_len, args.grid or 3)
    report = {"lambda_lower": jb.lambda_lower, "mu_upper": jb.mu_upper, "states": jb.words_seen,
              "worst_word": list(jb.worst_word), "max_len": max_len,
              "by_length": [{"length": n, "min_norm": lo, "max_norm": hi} for n, lo, hi in jb.by_length],
              "note": "empirical bounds over the enumerated words"}
    status = 0
    if args.mu is not None:
        rng = np.random.default_rng(_seed())
        eq = equicontinuity_check(H, args.mu, max_len=min(max_len, 6), rng=rng)
        report["equicontinuity"] = {"mu": args.mu, "passed": eq.passed, "worst_ratio": eq.worst_ratio,
                                    "worst_word": list(eq.worst_word), "pairs": eq.pairs_checked}
        status = 0 if eq.passed else 1
    if args.emit_csv:
        _write_csv(args.emit_csv, ["length", "min_norm", "max_norm"], jb.by_length)
    _emit(args, report, f"lambda_lower={jb.lambda_lower:.6g} mu_upper={jb.mu_upper:.6g}")
    return status


def cmd_orbit(args) -> int:
    H, _ = _load_pseudogroup(args)
    if args.point:
        z = _parse_point(args.point)
        chart = args.chart or H.chart_of(z)
    elif getattr(args, "scenario", None) or getattr(args, "scenario_file", None):
        chart, z = _load_scenario(args).base_point
        z = np.asarray(z)
    else:
        chart, z = H.charts[0].id, H.charts[0].box.center
    if chart is None or len(z) != H.q:
        raise InputError(f"point {tuple(z)} is not in any chart box of dimension {H.q}")
    max_len = args.max_len or DEFAULT_MAX_LEN
    orb = orbit(H, z, max_len, chart)
    region = _parse_box(args.region) if args.region else H.chart(chart).box
    gap = coverage_gap(orb, region, chart, args.grid or 101)
    if args.emit_csv:
        _write_csv(args.emit_csv, ["chart"] + [f"y{k + 1}" for k in range(H.q)],
                   [[c] + list(map(float, p)) for c, p in zip(orb.charts, orb.points.T)])
    _emit(args, {"chart": chart, "z": [float(v) for v in z], "max_len": max_len, "orbit_size": len(orb.charts),
                 "region": region.to_json(), "coverage_gap": gap},
          f"{len(orb.charts)} orbit points, coverage gap {gap:.4g}")
    return 0


def cmd_counterexample_1(args) -> int:
    rows, ok, prev = [], True, 0.0
    for n in range(args.n_max + 1):
        A, norm, eig = torus_counterexample(n)
        svd = operator_norm(A)
        good = abs(norm - svd) < 1e-10 and norm > prev
        ok &= good
        prev = norm
        rows.append({"n": n, "norm": norm, "eig": eig, "svd_norm": svd, "ok": good})
    if args.emit_csv:
        _write_csv(args.emit_csv, ["n", "norm", "eig", "svd_norm"],
                   [[r["n"], r["norm"], r["eig"], r["svd_norm"]] for r in rows])
    _emit(args, {"table": rows, "passed": ok}, f"{len(rows)} rows, eig(1)={rows[min(1, len(rows) - 1)]['eig']:.9f}")
    return 0 if ok else 1


def cmd_verify_coordinate_rule(args) -> int:
    rng = np.random.default_rng(_seed())
    y1, y2 = coords(2)
    a = (-y2, y1)
    residuals = []
    for _ in range(args.samples):
        phi = random_coordinate_change(rng)
        z = rng.uniform(-0.3, 0.3, 2)
        residuals.append(verify_coordinate_change_rule(a, phi, z))
    search = search_triangularizing_change(a, rng, args.candidates)
    worst = max(residuals)
    ok = worst < 1e-5 and search.triangular_found == 0
    _emit(args, {"rule_residuals": residuals, "max_rule_residual": worst,
                 "search": {"candidates": search.candidates, "nonsingular": search.nonsingular,
                            "triangular_found": search.triangular_found,
                            "min_off_diagonal": search.min_off_diagonal}, "passed": ok},
          f"rule residual {worst:.2e}; {search.triangular_found} triangularizing changes found")
    return 0 if ok else 1


def cmd_build_metric(args) -> int:
    s = _load_scenario(args)
    base = np.asarray(json.loads(args.base), dtype=float) if args.base else None
    rep = build_metric(s, base=base, max_len=args.max_len or 4, eps=args.eps,
                       probe_n=args.grid or 5, rng=np.random.default_rng(_seed()))
    tol = args.tol or DEFAULT_TOL
    ok = rep.passed(invariance_tol=tol)
    out = rep.to_json()
    out["passed"] = ok
    if rep.ok:
        summary = (f"{s.name}: g_z={np.round(rep.g_z, 12).tolist()} overlap={rep.overlap_residual:.2e} "
                   f"invariance={rep.invariance_residual:.2e}")
    else:
        summary = f"{s.name}: stopped after {rep.stage}: {rep.error}"
    _emit(args, out, summary)
    return 0 if ok else 1


def cmd_verify_invariance(args) -> int:
    s = _load_scenario(args)
    if bool(args.metric) == bool(args.constant):
        raise InputError("give exactly one of --metric REPORT or --constant MATRIX")
    if args.constant:
        value = np.asarray(json.loads(args.constant), dtype=float)
        if value.shape != (s.q, s.q):
            raise InputError(f"--constant must be a {s.q}x{s.q} matrix")
        g = ConstantMetric(s.base_point[0], s.H.charts[0].box, value)
    else:
        report = _load_json(args.metric)
        if "local_metric" not in report:
            raise InputError(f"{args.metric} has no local_metric (did build-metric finish?)")
        local = metric_from_json(report["local_metric"])
        words = [tuple(w) for w in report.get("cover_words", [[]])]
        g = GluedMetric(local, local.region, local.chart, s.H, words)
    res = verify_invariance(g, s.H, args.samples, np.random.default_rng(_seed()))
    tol = args.tol or DEFAULT_TOL
    ok = res < tol
    _emit(args, {"scenario": s.name, "invariance_residual": res, "tol": tol, "passed": ok},
          f"invariance residual {res:.3e} ({'pass' if ok else 'FAIL'})")
    return 0 if ok else 1


def cmd_scenario(args) -> int:
    if args.action == "list":
        rows = []
        for name in SCENARIOS:
            s = get_scenario(name)
            rows.append({"name": name, "q": s.q, "charts": len(s.H.charts),
                         "generators": len(s.H.generators), "description": s.description})
        _emit(args, {"scenarios": rows}, f"{len(rows)} scenarios")
        return 0
    if not args.name:
        raise InputError("scenario export needs a NAME")
    try:
        s = get_scenario(args.name)
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from None
    text = json.dumps(s.to_json(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"exported {s.name}", file=sys.stderr)
    return 0


# -- parser -----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", type=_positive_int, default=None,
                        help=f"grid points per axis (default {DEFAULT_GRID}; see each command)")
    common.add_argument("--tol", type=_positive_float, default=None, help=f"pass threshold (default {DEFAULT_TOL:g})")
    common.add_argument("--max-len", type=_positive_int, default=None,
                        help=f"maximum word length (default {DEFAULT_MAX_LEN}; build-metric uses 4)")
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--emit-csv", metavar="PATH", help="also dump a CSV table (orbit points or norms)")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("--scenario", help=f"bundled scenario: {', '.join(SCENARIOS)}")
    source.add_argument("--scenario-file", help="scenario bundle written by `scenario export`")

    pg = argparse.ArgumentParser(add_help=False)
    pg.add_argument("--pseudogroup", help="pseudogroup JSON file")
    pg.add_argument("--operator", help="operator JSON file (used with --pseudogroup)")

    parser = argparse.ArgumentParser(prog="foliage", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe-operator", parents=[common], help="ellipticity, constant coefficients, 1-part")
    p.add_argument("operator_file")
    p.add_argument("--region", help='box as JSON, e.g. "[[-1,1],[-1,1]]" (default (-1,1)^q)')
    p.add_argument("--sphere", type=_positive_int, default=16, help="covector samples per angle")
    p.set_defaults(func=cmd_describe_operator)

    p = sub.add_parser("check-commute", parents=[common, source, pg], help="commuting residual of every generator")
    p.set_defaults(func=cmd_check_commute)

    p = sub.add_parser("jacobian-bounds", parents=[common, source, pg], help="empirical Jacobian norm bounds")
    p.add_argument("--mu", type=_positive_float, help="also test equicontinuity with this constant")
    p.set_defaults(func=cmd_jacobian_bounds)

    p = sub.add_parser("orbit", parents=[common, source, pg], help="orbit enumeration and coverage gap")
    p.add_argument("--point", help="start point, comma-separated (default: scenario base point)")
    p.add_argument("--chart", help="chart of the start point")
    p.add_argument("--region", help="probe box as JSON (default: the chart box)")
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("counterexample-1", parents=[common], help="norm table of the shear holonomy")
    p.add_argument("--n-max", type=_positive_int, default=10)
    p.set_defaults(func=cmd_counterexample_1)

    p = sub.add_parser("verify-coordinate-rule", parents=[common],
                       help="one-part coordinate-change identity and triangularization search")
    p.add_argument("--samples", type=_positive_int, default=20)
    p.add_argument("--candidates", type=_positive_int, default=1000)
    p.set_defaults(func=cmd_verify_coordinate_rule)

    p = sub.add_parser("build-metric", parents=[common, source], help="run the averaging pipeline")
    p.add_argument("--base", help="base inner product as a JSON matrix (default: the scenario's)")
    p.add_argument("--eps", type=_positive_float, default=0.01, help="transport margin")
    p.set_defaults(func=cmd_build_metric)

    p = sub.add_parser("verify-invariance", parents=[common, source], help="pullback residual of a metric")
    p.add_argument("--metric", help="report written by build-metric")
    p.add_argument("--constant", help="constant metric as a JSON matrix")
    p.add_argument("--samples", type=_positive_int, default=50)
    p.set_defaults(func=cmd_verify_invariance)

    p = sub.add_parser("scenario", parents=[common], help="list or export bundled scenarios")
    p.add_argument("action", choices=["list", "export"])
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _seed()  # reject a malformed FOLIAGE_SEED even for commands that draw nothing
        return args.func(args)
    except (InputError, ParseError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FoliageError as exc:
        print(f"check failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
