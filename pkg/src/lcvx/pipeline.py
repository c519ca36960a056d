"""End-to-end runs: scenario in, report and CSV files out.

``run_pipeline`` discretizes, solves the relaxation and classifies it. A
normal instance is checked against the ``n_x - 1`` violation bound and
perturbed only when it exceeds it. A long-horizon instance goes through
the switching-time bisection first and then gets the same check at the
switching time it finds. Every report ends with the radial correction
step.
"""

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import CaseKind, check_validity, classify_case, correct_controls, solve_relaxed
from .exceptions import AssumptionError, LcvxError
from .linalg import controllability_rank, discretize_zoh
from .longhorizon import LongHorizonSetup, bisection_search, post_bisection_quality
from .model import DiscreteProblem
from .perturb import PerturbationSpec, derive_seeds, perturb_problem, perturbation_report

log = logging.getLogger(__name__)

SWEEP_N = (10, 30, 50, 100, 300, 500)


class Branch(str, Enum):
    NORMAL = "normal"
    NORMAL_PERTURBED = "normal_perturbed"
    LONG_HORIZON = "long_horizon"
    LONG_HORIZON_PERTURBED = "long_horizon_perturbed"


def jsonable(obj):
    """Plain-Python copy of ``obj`` that ``json.dumps`` accepts.

    Non-finite floats become ``None``; numpy scalars and arrays are unpacked.
    """
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def build_problem(scenario, N=None):
    """The discrete instance a scenario describes (full horizon)."""
    N = scenario.N if N is None else int(N)
    if scenario.continuous:
        dt = scenario.t_f / N
        A, B, drift = discretize_zoh(scenario.plant, dt)
    else:
        dt = scenario.t_f / N
        A, B, drift = scenario.A, scenario.B, scenario.drift
    cost = scenario.cost.scaled(dt) if scenario.time_weighted else scenario.cost
    return DiscreteProblem(
        A=A, B=B, N=N, x_init=scenario.x0, rho_min=scenario.rho_min,
        rho_max=scenario.rho_max, boundary=scenario.boundary, g=scenario.g,
        cost=cost, drift=drift, dt=dt, plant=scenario.plant,
    )


def long_horizon_setup(scenario):
    """Two-phase data for a scenario.

    Raises:
        AssumptionError: the plant is not continuous or ``u_s`` is missing.
    """
    if not scenario.continuous:
        raise AssumptionError(
            "the two-phase construction needs a continuous plant; this scenario is discrete"
        )
    if scenario.long_horizon.u_s is None:
        raise AssumptionError("long-horizon instance but the scenario gives no long_horizon.u_s")
    if not scenario.time_weighted:
        raise AssumptionError("the two-phase split assumes a time-weighted running cost")
    return LongHorizonSetup(
        plant=scenario.plant, t_f=scenario.t_f, N=scenario.N,
        rho_min=scenario.rho_min, rho_max=scenario.rho_max,
        boundary=scenario.boundary, u_s=scenario.long_horizon.u_s, x_s=scenario.x0,
        g=scenario.g, cost=scenario.cost, settings=scenario.settings, tol_c=scenario.tol_c,
    )


@dataclass
class RunReport:
    """Outcome of one pipeline run.

    ``to_dict`` leaves out ``wall_time`` by default so that two runs with
    the same seed serialize to identical bytes.
    """

    scenario: str
    seed: int
    branch: Branch
    classification: dict
    objective: float
    per_node: list
    violation_count: int
    bound: int
    correction: dict
    solver: dict
    controllability_rank: int
    bisection: Optional[dict] = None
    quality: Optional[dict] = None
    perturbation: Optional[dict] = None
    wall_time: float = 0.0
    problem: DiscreteProblem = field(default=None, repr=False)
    solution: object = field(default=None, repr=False)
    corrected: object = field(default=None, repr=False)
    t_offset: float = 0.0

    def to_dict(self, timing=False):
        out = {
            "lcvx_version": __version__,
            "scenario": self.scenario,
            "seed": self.seed,
            "branch": self.branch,
            "classification": self.classification,
            "objective": self.objective,
            "violation_count": self.violation_count,
            "bound": self.bound,
            "within_bound": self.violation_count <= self.bound,
            "per_node": self.per_node,
            "correction": self.correction,
            "bisection": self.bisection,
            "quality": self.quality,
            "perturbation": self.perturbation,
            "solver": self.solver,
            "controllability_rank": self.controllability_rank,
        }
        if timing:
            out["wall_time_s"] = self.wall_time
        return jsonable(out)

    def to_json(self, timing=False):
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n"

    @property
    def times(self):
        return self.t_offset + self.problem.dt * np.arange(self.problem.N + 1)


def _solver_stats(sol):
    stats = dict(sol.solver_stats)
    stats["polished"] = bool(sol.solver.info.get("polished", False))
    return stats


def _violation_branch(scenario, problem, sol):
    """Algorithm lines for a normal instance: perturb only above the bound.

    Returns:
        (solution, validity report, perturbation record or None)
    """
    report = check_validity(sol, problem, scenario.tol_v)
    if report.violation_count <= report.bound:
        return sol, report, None
    cfg = scenario.perturbation
    spec = PerturbationSpec(epsilon=cfg.epsilon, seed=cfg.seed)
    if cfg.q is None:
        spec.check_floor(scenario.settings.tol_p)
    dyn = perturb_problem(problem, spec, q=cfg.q)
    log.info("%d violations exceed the bound %d; re-solving with q=%s",
             report.violation_count, report.bound, dyn.q)
    sol_p = solve_relaxed(problem, scenario.settings, A_tilde=dyn.A_tilde,
                          backend=scenario.backend)
    record = perturbation_report(problem, sol, sol_p, dyn.q, scenario.tol_v).as_dict()
    record.update({
        "epsilon": cfg.epsilon,
        "seed": cfg.seed,
        "q_source": "scenario" if cfg.q is not None else "sampled",
        "mode": dyn.mode,
        "distinct_eigenvalues": len(dyn.distinct_eigenvalues),
        "objective_unperturbed": sol.objective,
    })
    return sol_p, check_validity(sol_p, problem, scenario.tol_v), record


def _correction_summary(corr, problem):
    gv = problem.g(corr.u)
    resid = problem.boundary.residual(corr.x[-1])
    return {
        "corrected_nodes": corr.corrected_nodes,
        "final_state_deviation": corr.deviation,
        "bound": corr.bound,
        "within_bound": None if corr.bound is None else corr.deviation <= corr.bound,
        "min_g_corrected": float(gv.min()),
        "boundary_residual_corrected": resid,
    }


def run_pipeline(scenario):
    """Run the full method on one scenario.

    Raises:
        SolverError: a relaxed solve failed.
        AssumptionError: a structural assumption (long-horizon data,
            perturbation floor, diagonalizability) does not hold.

        Both carry ``partial_report``, a dict with whatever was known when
        the run stopped.
    """
    start = time.perf_counter()
    partial = {"scenario": scenario.name, "seed": scenario.perturbation.seed, "stage": "setup"}
    try:
        return _run(scenario, start, partial)
    except LcvxError as exc:
        partial["error"] = f"{type(exc).__name__}: {exc}"
        exc.partial_report = jsonable(partial)
        raise


def _run(scenario, start, partial):
    problem = build_problem(scenario)
    rank = controllability_rank(problem.A, problem.B)
    partial.update(stage="solve", controllability_rank=rank)
    sol = solve_relaxed(problem, scenario.settings, backend=scenario.backend)
    label = classify_case(sol, problem, scenario.tol_c)
    partial.update(stage="classify", classification=label.as_dict(), objective=sol.objective)
    classification = {"initial": label.as_dict(), "final": label.as_dict()}
    bisection = quality = None
    t_offset = 0.0

    if label.kind is CaseKind.LONG_HORIZON:
        partial["stage"] = "bisection"
        setup = long_horizon_setup(scenario)
        lh = scenario.long_horizon
        trace = bisection_search(setup, eps_t=lh.eps_t, max_iter=lh.max_iter,
                                 early_stop=lh.early_stop)
        bisection = trace.as_dict()
        partial["bisection"] = bisection
        quality = post_bisection_quality(setup, trace, tol_v=scenario.tol_v).as_dict()
        problem, sol = trace.final.problem, trace.final.solution
        classification["final"] = trace.certificate.as_dict()
        t_offset = trace.t_s_star

    partial["stage"] = "violations"
    sol, validity, pert = _violation_branch(scenario, problem, sol)
    if bisection is None:
        branch = Branch.NORMAL if pert is None else Branch.NORMAL_PERTURBED
    else:
        branch = Branch.LONG_HORIZON if pert is None else Branch.LONG_HORIZON_PERTURBED

    partial["stage"] = "correction"
    corr = correct_controls(sol, problem, require_bound=scenario.continuous)
    per_node = [
        {
            "node": n.index,
            "t": t_offset + problem.dt * n.index,
            "g_u": n.g_value,
            "sigma": n.sigma,
            "validity": n.status,
            "dual_gate_norm": n.dual_gate,
        }
        for n in validity.per_node
    ]
    return RunReport(
        scenario=scenario.name, seed=scenario.perturbation.seed, branch=branch,
        classification=classification, objective=sol.objective, per_node=per_node,
        violation_count=validity.violation_count, bound=validity.bound,
        correction=_correction_summary(corr, problem), solver=_solver_stats(sol),
        controllability_rank=rank, bisection=bisection, quality=quality,
        perturbation=pert, wall_time=time.perf_counter() - start,
        problem=problem, solution=sol, corrected=corr, t_offset=t_offset,
    )


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(v):
    return "" if v is None else repr(float(v))


def emit_outputs(report, out_dir, timing=True):
    """Write ``report.json``, ``trajectory.csv`` and ``plotdata.csv``.

    ``trajectory.csv`` has one row per state node; the last row carries no
    control. Wall time goes to ``timing.json`` so ``report.json`` stays
    byte-identical across runs with the same seed.

    Returns:
        List of written paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prob, sol = report.problem, report.solution
    n_x, n_u = prob.n_x, prob.n_u
    t = report.times
    gv = prob.g(sol.u)
    status = [row["validity"] for row in report.to_dict()["per_node"]]

    paths = [out / "report.json", out / "trajectory.csv", out / "plotdata.csv"]
    paths[0].write_text(report.to_json(), encoding="utf-8")

    header = (["node", "t"] + [f"x{k + 1}" for k in range(n_x)]
              + [f"u{k + 1}" for k in range(n_u)] + ["sigma", "g_u", "validity"])
    rows = []
    for i in range(prob.N + 1):
        row = [i, _fmt(t[i])] + [_fmt(v) for v in sol.x[i]]
        if i < prob.N:
            row += [_fmt(v) for v in sol.u[i]] + [_fmt(sol.sigma[i]), _fmt(gv[i]), status[i]]
        else:
            row += [""] * (n_u + 3)
        rows.append(row)
    _write_csv(paths[1], header, rows)

    corr_norm = np.linalg.norm(report.corrected.u, axis=1)
    _write_csv(
        paths[2],
        ["node", "t", "control_norm", "g_u", "sigma", "rho_min", "rho_max", "corrected_norm"],
        [
            [i, _fmt(t[i]), _fmt(np.linalg.norm(sol.u[i])), _fmt(gv[i]), _fmt(sol.sigma[i]),
             _fmt(prob.rho_min), _fmt(prob.rho_max), _fmt(corr_norm[i])]
            for i in range(prob.N)
        ],
    )
    if timing:
        tpath = out / "timing.json"
        tpath.write_text(json.dumps({"wall_time_s": report.wall_time}) + "\n", encoding="utf-8")
        paths.append(tpath)
    return paths


def run_sweep(scenario, n_values=SWEEP_N, jobs=1):
    """Run the pipeline once per horizon length.

    Each run gets its own perturbation seed split from the scenario seed,
    so results do not depend on ``jobs`` or on completion order.

    Returns:
        One summary dict per entry of ``n_values``, in the same order.
    """
    seeds = derive_seeds(scenario.perturbation.seed, len(n_values))

    def one(args):
        N, seed = args
        sc = replace(scenario, N=int(N),
                     perturbation=replace(scenario.perturbation, seed=seed))
        row = {"N": int(N), "seed": seed}
        try:
            rep = run_pipeline(sc)
        except LcvxError as exc:
            row.update(error=f"{type(exc).__name__}: {exc}")
            return row
        vio = [r["node"] for r in rep.to_dict()["per_node"] if r["validity"] == "VIOLATING"]
        row.update(
            branch=rep.branch.value, classification=rep.classification["final"]["kind"],
            objective=rep.objective, violation_count=rep.violation_count,
            bound=rep.bound, violating_nodes=vio,
            solver_status=rep.solver["status"], wall_time_s=rep.wall_time,
        )
        return row

    tasks = list(zip(n_values, seeds))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, tasks))
    return [one(t) for t in tasks]


def reproduce_checks(key, report):
    """Expected outcomes of the bundled examples, as (label, passed) pairs."""
    d = report.to_dict()
    if key == "example1":
        return [
            ("normal case", d["classification"]["final"]["kind"] == "NORMAL"),
            ("no perturbation needed", d["perturbation"] is None),
            (f"violations {d['violation_count']} <= {d['bound']}", d["within_bound"]),
        ]
    if key == "example2":
        p = d["perturbation"] or {}
        return [
            ("normal case", d["classification"]["final"]["kind"] == "NORMAL"),
            (f"unperturbed violations {p.get('violations_before')} >= 3",
             (p.get("violations_before") or 0) >= 3),
            (f"perturbed violations {d['violation_count']} <= {d['bound']}", d["within_bound"]),
            ("true-dynamics boundary residual <= 1e-4",
             p.get("boundary_residual_true_dynamics", np.inf) <= 1e-4),
        ]
    if key == "example3":
        b = d["bisection"] or {}
        t_s = b.get("t_s_star", np.nan)
        return [
            ("long horizon at t_s = 0", d["classification"]["initial"]["kind"] == "LONG_HORIZON"),
            (f"t_s_star = {t_s:.4f} in [90, 110]", 90 <= t_s <= 110),
            ("certificate normal", b.get("certificate", {}).get("kind") == "NORMAL"),
            (f"violations {d['violation_count']} <= {d['bound']}", d["within_bound"]),
        ]
    raise KeyError(key)
