"""Command-line entry point ``lcvx``.

Exit codes: 0 success, 2 scenario error, 3 solver failure, 4 assumption
failure.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .exceptions import (
    AssumptionError,
    DimensionError,
    NotDiagonalizableError,
    ProblemDataError,
    ScenarioError,
    SolverError,
)
from .longhorizon import bisection_search, post_bisection_quality
from .model import validate
from .pipeline import (
    SWEEP_N,
    build_problem,
    emit_outputs,
    jsonable,
    long_horizon_setup,
    reproduce_checks,
    run_pipeline,
    run_sweep,
)
from .scenario import BUNDLED, bundled_path, parse_scenario

EXIT_OK = 0
EXIT_SCENARIO = 2
EXIT_SOLVER = 3
EXIT_ASSUMPTION = 4

log = logging.getLogger("lcvx")


def _common(p, scenario_required=True):
    p.add_argument("--scenario", required=scenario_required, help="scenario JSON file")
    p.add_argument("--out", help="directory for report.json and the CSV files")
    p.add_argument("--seed", type=int, help="perturbation seed (overrides the scenario)")
    p.add_argument("--eps-q", type=float, help="perturbation half-width epsilon")
    p.add_argument("--eps-t", type=float, help="bisection width tolerance")
    p.add_argument("--tol", type=float, help="solver tolerance for all residuals")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lcvx",
        description="Lossless convexification of input-magnitude constrained optimal control.",
    )
    parser.add_argument("--version", action="version", version=f"lcvx {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("validate", help="check the standing assumptions of a scenario"))
    _common(sub.add_parser("solve", help="run the full pipeline on a scenario"))
    _common(sub.add_parser("bisect", help="run only the switching-time bisection"))
    rep = sub.add_parser("reproduce", help="run one of the bundled examples")
    rep.add_argument("example", choices=sorted(BUNDLED))
    _common(rep, scenario_required=False)
    sw = sub.add_parser("sweep-N", help="rerun a scenario over several horizon lengths")
    _common(sw)
    sw.add_argument("--n-values", type=int, nargs="+", default=list(SWEEP_N),
                    help=f"values of N (default {' '.join(map(str, SWEEP_N))})")
    sw.add_argument("--jobs", type=int, default=1, help="runs to execute concurrently")
    return parser


def _load(args, path=None):
    sc = parse_scenario(Path(path or args.scenario))
    return sc.with_overrides(seed=args.seed, eps_q=args.eps_q, eps_t=args.eps_t, tol=args.tol)


def _print(obj):
    print(json.dumps(jsonable(obj), indent=2, sort_keys=True))


def _summary(report):
    d = report.to_dict()
    return {
        "scenario": d["scenario"],
        "branch": d["branch"],
        "classification": d["classification"]["final"]["kind"],
        "objective": d["objective"],
        "violation_count": d["violation_count"],
        "bound": d["bound"],
        "violating_nodes": [r["node"] for r in d["per_node"] if r["validity"] == "VIOLATING"],
        "t_s_star": (d["bisection"] or {}).get("t_s_star"),
        "wall_time_s": round(report.wall_time, 3),
    }


def _finish(report, args):
    if args.out:
        for p in emit_outputs(report, args.out):
            log.info("wrote %s", p)
    _print(_summary(report))


def cmd_validate(args):
    sc = _load(args)
    problem = build_problem(sc)
    rep = validate(problem, sc.settings)
    out = dict(vars(rep), ok=rep.ok, scenario=sc.name)
    _print(out)
    return EXIT_OK if rep.ok else EXIT_ASSUMPTION


def cmd_solve(args):
    _finish(run_pipeline(_load(args)), args)
    return EXIT_OK


def cmd_bisect(args):
    sc = _load(args)
    setup = long_horizon_setup(sc)
    lh = sc.long_horizon
    trace = bisection_search(setup, eps_t=lh.eps_t, max_iter=lh.max_iter, early_stop=lh.early_stop)
    quality = post_bisection_quality(setup, trace, tol_v=sc.tol_v)
    result = {"scenario": sc.name, "bisection": trace.as_dict(), "quality": quality.as_dict()}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bisection.json").write_text(
            json.dumps(jsonable(result), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _print({"t_s_star": trace.t_s_star, "solves": trace.solves,
            "certificate": trace.certificate.kind.value,
            "violation_count": quality.violation_count, "bound": quality.bound})
    return EXIT_OK


def cmd_reproduce(args):
    report = run_pipeline(_load(args, args.scenario or bundled_path(args.example)))
    _finish(report, args)
    checks = reproduce_checks(args.example, report)
    for label, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {args.example}: {label}")
    return EXIT_OK


def cmd_sweep(args):
    sc = _load(args)
    rows = run_sweep(sc, args.n_values, jobs=max(1, args.jobs))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stable = [{k: v for k, v in r.items() if k != "wall_time_s"} for r in rows]
        (out / "sweep.json").write_text(
            json.dumps(jsonable(stable), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        cols = ["N", "classification", "branch", "violation_count", "bound",
                "violating_nodes", "objective", "solver_status", "seed", "error"]
        with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, cols, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({**r, "violating_nodes": " ".join(map(str, r.get("violating_nodes", [])))})
    _print(rows)
    failed = [r for r in rows if "error" in r]
    if failed:
        return EXIT_SOLVER if any("SolverError" in r["error"] for r in failed) else EXIT_ASSUMPTION
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "bisect": cmd_bisect,
    "reproduce": cmd_reproduce,
    "sweep-N": cmd_sweep,
}


def _write_partial(exc, args):
    partial = getattr(exc, "partial_report", None)
    if partial is not None and getattr(args, "out", None):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(
            json.dumps(partial, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, DimensionError, ProblemDataError) as exc:
        print(f"lcvx: scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except SolverError as exc:
        _write_partial(exc, args)
        print(f"lcvx: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (AssumptionError, NotDiagonalizableError) as exc:
        _write_partial(exc, args)
        print(f"lcvx: assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION


if __name__ == "__main__":
    sys.exit(main())
