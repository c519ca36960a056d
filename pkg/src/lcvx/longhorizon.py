"""Two-phase construction and bisection on the switching time.

Phase one flies a constant control ``u_s`` with ``g(u_s) = rho_min`` for
``t_s`` seconds. Phase two is an ordinary relaxed instance over the
remaining ``t_f - t_s`` seconds, discretized with ``N`` steps. Its value
``v(t_s)`` (phase-two optimum plus the phase-one cost ``t_s l(rho_min)``)
is continuous in ``t_s``. The bisection keeps ``t_low`` on the long-horizon
side and ``t_high`` on the normal side.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .analysis import (
    CaseKind,
    boundary_problem,
    check_validity,
    classify_case,
    solve_relaxed,
)
from .conic import SolverSettings
from .exceptions import AssumptionError, ProblemDataError, SolverError
from .linalg import zoh_matrices
from .model import BoundaryMap, ContinuousPlant, CostSpec, DiscreteProblem, MagnitudeFn, propagate
from .perturb import perturb_problem, perturbation_report

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhaseOneSpec:
    """Constant control ``u_s`` held from ``x_s`` for ``t_s`` seconds."""

    u_s: np.ndarray
    x_s: np.ndarray
    t_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "u_s", np.asarray(self.u_s, float).ravel())
        object.__setattr__(self, "x_s", np.asarray(self.x_s, float).ravel())
        object.__setattr__(self, "t_s", float(self.t_s))

    def check_level(self, g, rho_min, tol=1e-10):
        level = float(MagnitudeFn(g)(self.u_s[None, :])[0])
        if abs(level - rho_min) > tol * max(1.0, rho_min):
            raise ProblemDataError(
                f"phase-one control has g(u_s)={level:.12g}, expected rho_min={rho_min:.12g}"
            )

    def at(self, t_s):
        return replace(self, t_s=float(t_s))


def phase1_state(plant, spec, t_f=None):
    """State reached after holding ``u_s`` for ``t_s`` seconds from ``x_s``.

    Args:
        plant: continuous dynamics (the drift is included).
        spec: phase-one data.
        t_f: optional horizon; ``t_s`` must lie in ``[0, t_f]``.
    """
    if spec.t_s < 0 or (t_f is not None and spec.t_s > t_f):
        raise ValueError(f"t_s={spec.t_s} outside [0, {t_f}]")
    if spec.t_s == 0:
        return spec.x_s.copy()
    A, B, d = zoh_matrices(plant.A_c, plant.B_c, plant.drift, spec.t_s)
    return A @ spec.x_s + B @ spec.u_s + d


@dataclass(frozen=True)
class LongHorizonSetup:
    """Everything fixed while ``t_s`` varies.

    ``cost.running`` is the coefficient of ``l(sigma) = running * sigma``;
    each phase-two node is weighted by ``(t_f - t_s) / N``.
    """

    plant: ContinuousPlant
    t_f: float
    N: int
    rho_min: float
    rho_max: float
    boundary: BoundaryMap
    u_s: np.ndarray
    x_s: np.ndarray
    g: MagnitudeFn = MagnitudeFn.NORM2
    cost: CostSpec = field(default_factory=CostSpec)
    settings: SolverSettings = field(default_factory=SolverSettings)
    tol_c: float = 1e-6

    def phase_one(self, t_s):
        return PhaseOneSpec(self.u_s, self.x_s, t_s)

    @property
    def running_at_rho_min(self):
        """``l(rho_min)``."""
        return self.cost.running * self.rho_min

    def lower_value(self):
        """``m* + t_f l(rho_min)``, or ``None`` if ``m`` is unbounded on the boundary set."""
        _, m_star = boundary_problem(self.build(0.0))
        if m_star is None:
            return None
        return m_star + self.t_f * self.running_at_rho_min


def build_phase2(setup, t_s):
    """Discrete phase-two instance for switching time ``t_s``."""
    if not 0 <= t_s < setup.t_f:
        raise ValueError(f"t_s must lie in [0, t_f={setup.t_f}), got {t_s}")
    dt = (setup.t_f - t_s) / setup.N
    A, B, d = zoh_matrices(setup.plant.A_c, setup.plant.B_c, setup.plant.drift, dt)
    x_init = phase1_state(setup.plant, setup.phase_one(t_s), setup.t_f)
    return DiscreteProblem(
        A=A, B=B, N=setup.N, x_init=x_init,
        rho_min=setup.rho_min, rho_max=setup.rho_max, boundary=setup.boundary,
        g=setup.g, cost=setup.cost.scaled(dt), drift=d, dt=dt, plant=setup.plant,
        objective_offset=t_s * setup.running_at_rho_min,
    )


LongHorizonSetup.build = build_phase2


@dataclass
class ValuePoint:
    t_s: float
    value: float
    label: object
    problem: DiscreteProblem = field(repr=False)
    solution: object = field(repr=False)


def value_function(setup, t_s):
    """Solve phase two at ``t_s``; returns a :class:`ValuePoint`.

    Raises:
        SolverError: the phase-two solve failed; ``t_s`` is attached.
    """
    problem = build_phase2(setup, t_s)
    try:
        sol = solve_relaxed(problem, setup.settings)
    except SolverError as exc:
        raise SolverError(f"phase-two solve at t_s={t_s:g} failed: {exc}",
                          solution=exc.solution, t_s=t_s) from exc
    label = classify_case(sol, problem, setup.tol_c)
    return ValuePoint(float(t_s), sol.objective, label, problem, sol)


@dataclass
class BisectionStep:
    t_mid: float
    value: float
    kind: str
    objective: float
    phase: str
    t_low: float
    t_high: float

    def as_dict(self):
        return {
            "phase": self.phase,
            "t_mid": self.t_mid,
            "value": self.value,
            "classification": self.kind,
            "objective": self.objective,
            "t_low": self.t_low,
            "t_high": self.t_high,
        }


@dataclass
class BisectionTrace:
    iterations: list
    t_s_star: float
    certificate: object
    final: ValuePoint = field(repr=False)
    initial: ValuePoint = field(repr=False)
    solves: int = 0
    probes: int = 0
    early_stopped: bool = False
    lower_value: Optional[float] = None

    def as_dict(self):
        return {
            "t_s_star": self.t_s_star,
            "certificate": self.certificate.as_dict(),
            "solves": self.solves,
            "probes": self.probes,
            "early_stopped": self.early_stopped,
            "lower_value": self.lower_value,
            "iterations": [s.as_dict() for s in self.iterations],
        }


def iteration_cap(t_f, eps_t):
    """``ceil(log2(t_f / eps_t))`` halvings."""
    return max(1, math.ceil(math.log2(t_f / eps_t)))


def bisection_search(setup, eps_t=1e-2, max_iter=None, early_stop=False, eps_v=None):
    """Locate the switching time by bisection on the normal/long-horizon label.

    Args:
        setup: the fixed data of the two-phase problem.
        eps_t: stop once ``t_high - t_low <= eps_t``.
        max_iter: cap on bisection halvings; defaults to :func:`iteration_cap`.
        early_stop: also stop at a normal ``t_mid`` whose value is within
            ``eps_v`` of ``m* + t_f l(rho_min)``.
        eps_v: early-stop tolerance; defaults to ``1e-6`` times the scale of
            that lower value.

    Returns:
        :class:`BisectionTrace` with ``t_s_star = t_high``.

    Raises:
        AssumptionError: ``t_s = 0`` is already normal, or no normal switching
            time exists before ``t_f``.
        SolverError: a phase-two solve failed.
    """
    if not eps_t > 0:
        raise ValueError("eps_t must be positive")
    setup.phase_one(0.0).check_level(setup.g, setup.rho_min)
    cap = iteration_cap(setup.t_f, eps_t) if max_iter is None else int(max_iter)
    steps = []
    initial = value_function(setup, 0.0)
    solves = 1
    if initial.label.kind is CaseKind.NORMAL:
        raise AssumptionError(
            "the full-horizon instance is already normal; no switching time is needed"
        )
    lower = setup.lower_value()
    if eps_v is None and lower is not None:
        eps_v = 1e-6 * max(1.0, abs(lower))

    # bracket: probe t_f/2 and move toward t_f until a normal label appears
    t_low, t_high = 0.0, setup.t_f
    t = setup.t_f / 2
    cert = None
    probes = 0
    while True:
        pt = value_function(setup, t)
        solves += 1
        probes += 1
        steps.append(BisectionStep(t, pt.value, pt.label.kind.value, pt.solution.objective,
                                   "probe", t_low, t_high))
        if pt.label.kind is CaseKind.NORMAL:
            t_high, cert = t, pt
            break
        t_low = t
        if setup.t_f - t <= eps_t:
            raise AssumptionError(
                f"no normal switching time found in [0, {setup.t_f}); "
                "the value function never rises above its lower bound"
            )
        t = setup.t_f - (setup.t_f - t) / 2
    steps[-1].t_low, steps[-1].t_high = t_low, t_high

    early = False
    halvings = 0
    while t_high - t_low > eps_t and halvings < cap:
        t_mid = 0.5 * (t_low + t_high)
        pt = value_function(setup, t_mid)
        solves += 1
        halvings += 1
        if pt.label.kind is CaseKind.NORMAL:
            t_high, cert = t_mid, pt
        else:
            t_low = t_mid
        steps.append(BisectionStep(t_mid, pt.value, pt.label.kind.value, pt.solution.objective,
                                   "bisect", t_low, t_high))
        log.debug("bisection t_mid=%.6g v=%.10g %s", t_mid, pt.value, pt.label.kind.value)
        if (early_stop and lower is not None and pt.label.kind is CaseKind.NORMAL
                and pt.value <= lower + eps_v):
            early = True
            break
    if t_high - t_low > eps_t and not early:
        log.warning("bisection stopped at the iteration cap with width %.3g", t_high - t_low)
    return BisectionTrace(
        iterations=steps, t_s_star=t_high, certificate=cert.label, final=cert,
        initial=initial, solves=solves, probes=probes, early_stopped=early,
        lower_value=lower,
    )


@dataclass
class QualityReport:
    t_s_star: float
    max_g_minus_rho_min: float
    violation_count: int
    bound: int
    boundary_residual: float
    terminal_cost_gap: Optional[float]
    perturbation: Optional[dict] = None
    solution: object = field(default=None, repr=False)
    problem: object = field(default=None, repr=False)

    def as_dict(self):
        return {
            "t_s_star": self.t_s_star,
            "max_g_minus_rho_min": self.max_g_minus_rho_min,
            "violation_count": self.violation_count,
            "bound": self.bound,
            "boundary_residual": self.boundary_residual,
            "terminal_cost_gap": self.terminal_cost_gap,
            "perturbation": self.perturbation,
        }


def post_bisection_quality(setup, trace, perturbation=None, tol_v=1e-6, q=None):
    """Quality of the phase-two solution at ``t_s_star``.

    When the unperturbed solution violates at more than ``n_x - 1`` nodes and
    a perturbation spec is given, the dynamics are perturbed and re-solved;
    the perturbed controls are then replayed through the true dynamics.

    Args:
        setup: two-phase data.
        trace: a finished bisection.
        perturbation: optional :class:`~lcvx.perturb.PerturbationSpec`.
        tol_v: validity tolerance.
        q: explicit perturbation vector overriding sampling.
    """
    problem = trace.final.problem
    sol = trace.final.solution
    report = check_validity(sol, problem, tol_v)
    pert = None
    if perturbation is not None and (report.violation_count > report.bound or q is not None):
        dyn = perturb_problem(problem, perturbation, q=q)
        sol_p = solve_relaxed(problem, setup.settings, A_tilde=dyn.A_tilde)
        pert = perturbation_report(problem, sol, sol_p, dyn.q, tol_v).as_dict()
        sol = sol_p
        report = check_validity(sol, problem, tol_v)
    x_true = propagate(problem.A, problem.B, problem.drift, problem.x_init, sol.u)
    _, m_star = boundary_problem(problem)
    gap = None if m_star is None else problem.cost.terminal(x_true[-1]) - m_star
    gv = problem.g(sol.u)
    return QualityReport(
        t_s_star=trace.t_s_star,
        max_g_minus_rho_min=float(np.max(gv) - problem.rho_min),
        violation_count=report.violation_count,
        bound=report.bound,
        boundary_residual=problem.boundary.residual(x_true[-1]),
        terminal_cost_gap=gap,
        perturbation=pert,
        solution=sol,
        problem=problem,
    )
