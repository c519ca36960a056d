"""Post-solve diagnostics for relaxed LCvx solutions.

Node indices are 0-based throughout: node ``i`` owns ``u_i``, ``sigma_i``
and the dynamics multiplier ``eta_i`` of the step ``x_i -> x_{i+1}``, so the
last multiplier is ``eta[N-1]``.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .conic import SolverSettings, solve_with_backend
from .exceptions import DimensionError, ProblemDataError, SolverError
from .linalg import numerical_rank
from .model import MagnitudeFn, propagate
from .transcribe import recover_duals, transcribe_perturbed, transcribe_relaxed

log = logging.getLogger(__name__)


@dataclass
class LcvxSolution:
    """Primal and dual solution of one relaxed instance.

    Attributes:
        x: states, shape (N+1, n_x).
        u: inputs, shape (N, n_u).
        sigma: slacks, shape (N,).
        eta: dynamics multipliers, shape (N, n_x).
        mu_initial: multipliers of ``x_1 = x_init``.
        mu_boundary: multipliers of ``G x_{N+1} = g``.
        objective: optimal value including constant offsets.
        solver: the underlying cone solution.
        A_used: dynamics matrix the program was built with (perturbed or not).
    """

    x: np.ndarray
    u: np.ndarray
    sigma: np.ndarray
    eta: np.ndarray
    mu_initial: np.ndarray
    mu_boundary: np.ndarray
    objective: float
    solver: object
    A_used: np.ndarray

    @property
    def solver_stats(self):
        return self.solver.summary()


def solve_relaxed(problem, settings=None, A_tilde=None, backend="bundled"):
    """Transcribe, solve and decode one relaxed instance.

    Args:
        problem: the discrete instance.
        settings: solver tolerances; defaults to :class:`SolverSettings`.
        A_tilde: optional replacement dynamics matrix (perturbed program).
        backend: registered cone-solver backend name.

    Raises:
        SolverError: when the solve does not end OPTIMAL. The decoded best
            iterate is attached when it exists.
    """
    settings = settings or SolverSettings()
    if A_tilde is None:
        program = transcribe_relaxed(problem)
        A_used = problem.A
    else:
        program = transcribe_perturbed(problem, A_tilde)
        A_used = np.asarray(A_tilde, float)
    res = solve_with_backend(program, backend, settings)
    if not res.optimal:
        partial = None
        if np.all(np.isfinite(res.z)):
            partial = _decode(program, res, A_used)
        raise SolverError(f"relaxed solve ended {res.status.value}", solution=partial)
    return _decode(program, res, A_used)


def _decode(program, res, A_used):
    x, u, sigma = program.layout.decode(res.z)
    duals = recover_duals(program, res.equality_duals)
    return LcvxSolution(
        x=x, u=u, sigma=sigma, eta=duals.eta,
        mu_initial=duals.mu_initial, mu_boundary=duals.mu_boundary,
        objective=float(res.objective), solver=res, A_used=A_used,
    )


class NodeStatus(str, Enum):
    VALID = "VALID"
    VIOLATING = "VIOLATING"
    UPPER_VIOLATING = "UPPER_VIOLATING"


@dataclass(frozen=True)
class NodeValidity:
    index: int
    g_value: float
    sigma: float
    status: NodeStatus
    dual_gate: float


@dataclass
class ValidityReport:
    per_node: list
    violation_count: int
    bound: int

    @property
    def violating_nodes(self):
        return [n.index for n in self.per_node if n.status is NodeStatus.VIOLATING]

    @property
    def within_bound(self):
        return self.violation_count <= self.bound


def check_validity(sol, problem, tol_v=1e-6):
    """Classify every node against ``rho_min <= g(u_i) <= rho_max``.

    Args:
        sol: a solved instance.
        problem: the instance it solves.
        tol_v: relative tolerance, scaled by ``max(1, rho)``.
    """
    gv = problem.g(sol.u)
    lo = problem.rho_min - tol_v * max(1.0, problem.rho_min)
    hi = problem.rho_max + tol_v * max(1.0, problem.rho_max)
    gates = np.linalg.norm(sol.eta @ problem.B, axis=1)
    nodes = []
    for i, (g_i, s_i, gate) in enumerate(zip(gv, sol.sigma, gates)):
        if g_i < lo:
            st = NodeStatus.VIOLATING
        elif g_i > hi:
            st = NodeStatus.UPPER_VIOLATING
        else:
            st = NodeStatus.VALID
        nodes.append(NodeValidity(i, float(g_i), float(s_i), st, float(gate)))
    count = sum(n.status is NodeStatus.VIOLATING for n in nodes)
    return ValidityReport(nodes, count, problem.n_x - 1)


class CaseKind(str, Enum):
    NORMAL = "NORMAL"
    LONG_HORIZON = "LONG_HORIZON"


@dataclass(frozen=True)
class CaseLabel:
    kind: CaseKind
    sigma_excess: float
    boundary_kkt_residual: float
    eta_final_norm: float

    @property
    def normal(self):
        return self.kind is CaseKind.NORMAL

    def as_dict(self):
        return {
            "kind": self.kind.value,
            "max_sigma_minus_rho_min": self.sigma_excess,
            "boundary_problem_kkt_residual": self.boundary_kkt_residual,
            "eta_N_norm": self.eta_final_norm,
        }


def boundary_problem(problem):
    """Solve ``min m(x) s.t. G x = g`` for a linear terminal cost.

    Returns:
        (kkt_residual, m_star): ``kkt_residual = min_mu ||c_T + G' mu||``; the
        optimal value ``m_star`` is finite only when that residual vanishes
        (``None`` otherwise, meaning the boundary-only problem is unbounded).
    """
    c_T = problem.cost.terminal_gradient(problem.n_x)
    G, g = problem.boundary.G, problem.boundary.g
    if G.shape[0]:
        mu, *_ = np.linalg.lstsq(G.T, -c_T, rcond=None)
        resid = float(np.linalg.norm(c_T + G.T @ mu))
        x_p, *_ = np.linalg.lstsq(G, g, rcond=None)
    else:
        resid = float(np.linalg.norm(c_T))
        x_p = np.zeros(problem.n_x)
    scale = max(1.0, float(np.linalg.norm(c_T)))
    m_star = problem.cost.terminal(x_p) if resid <= 1e-10 * scale else None
    return resid, m_star


def classify_case(sol, problem, tol_c=1e-6):
    """Normal versus long-horizon label from primal evidence.

    The long-horizon label needs every slack at ``rho_min`` and a terminal
    cost gradient in the range of ``G'`` (the terminal state then solves the
    boundary-only problem, since it already satisfies ``G x = g``).
    """
    excess = float(np.max(sol.sigma - problem.rho_min))
    resid, _ = boundary_problem(problem)
    eta_n = float(np.linalg.norm(sol.eta[-1]))
    long = excess <= tol_c * max(1.0, problem.rho_min) and resid <= tol_c
    return CaseLabel(CaseKind.LONG_HORIZON if long else CaseKind.NORMAL, excess, resid, eta_n)


@dataclass
class DualChainReport:
    chain_residual: float
    gates: np.ndarray
    closed_gates: list
    eta_final_norm: float


def dual_chain_check(sol, A, B=None, tol=1e-6):
    """Check ``eta_{i-1} = A' eta_i`` and report ``||B' eta_i||`` per node.

    Args:
        sol: solved instance (or anything with an ``eta`` array of shape (N, n_x)).
        A: dynamics matrix the multipliers belong to.
        B: input matrix; when omitted, gates are reported as ``||eta_i||``.
        tol: gate threshold, relative to ``1 + ||eta_N||``.
    """
    eta = np.asarray(sol.eta, float)
    A = np.asarray(A, float)
    scale = 1.0 + float(np.linalg.norm(eta[-1]))
    if eta.shape[0] > 1:
        diffs = eta[1:] @ A - eta[:-1]
        chain = float(np.max(np.linalg.norm(diffs, axis=1))) / scale
    else:
        chain = 0.0
    gates = np.linalg.norm(eta @ B, axis=1) if B is not None else np.linalg.norm(eta, axis=1)
    closed = [int(i) for i in np.flatnonzero(gates <= tol * scale)]
    return DualChainReport(chain, gates, closed, scale - 1.0)


def s_matrix(A, B, violating_nodes, N):
    """``S = (A^{N-1-P_1} B, ..., A^{N-1-P_k} B)`` for 0-based nodes ``P_j``.

    Node ``P`` reaches ``x_{N+1}`` through ``N-1-P`` further applications of
    ``A``, which is the power the 1-based formula ``A^{N-P} B`` counts.
    """
    nodes = list(violating_nodes)
    if not nodes:
        raise ValueError("at least one node is required")
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    if B.ndim == 1:
        B = B[:, None]
    for p in nodes:
        if not 0 <= p < N:
            raise DimensionError(f"node {p} outside [0, {N})")
    blocks = [np.linalg.matrix_power(A, N - 1 - p) @ B for p in nodes]
    return np.hstack(blocks)


def s_matrix_rank(A, B, violating_nodes, N):
    """Numerical rank of :func:`s_matrix`."""
    return numerical_rank(s_matrix(A, B, violating_nodes, N))


def correction_bound(plant, t_f, N, radius):
    """Final-state deviation bound ``(n_x - 1) C0 (exp(||A_c|| t_f / N) - 1)``.

    ``C0 = exp(||A_c|| t_f) ||B_c|| r / ||A_c||`` with spectral norms, where
    ``r`` bounds each lift ``||u_hat_i - u_i||`` (``rho_min`` for the norm,
    ``sqrt(rho_min)`` for the squared norm). For ``||A_c|| -> 0`` the
    per-node term tends to ``(t_f / N) ||B_c|| r``.
    """
    rho_min = radius
    a = float(np.linalg.norm(plant.A_c, 2))
    b = float(np.linalg.norm(plant.B_c, 2))
    n_x = plant.n_x
    h = t_f / N
    if a * h < 1e-12:
        per_node = h * b * rho_min * np.exp(a * t_f)
    else:
        per_node = np.exp(a * t_f) * b * rho_min / a * np.expm1(a * h)
    return float((n_x - 1) * per_node)


@dataclass
class Correction:
    u: np.ndarray
    x: np.ndarray
    deviation: float
    bound: Optional[float]
    corrected_nodes: list = field(default_factory=list)


def correct_controls(sol, problem, tol_v=0.0, plant=None, t_f=None, require_bound=True):
    """Lift sub-threshold controls radially onto the ``rho_min`` level set.

    Args:
        sol: solved instance.
        problem: the instance; its ``plant`` attribute supplies the bound.
        tol_v: nodes within ``tol_v`` below the level set are kept; the default
            lifts every node with ``g(u_i) < rho_min``.
        plant: continuous plant override; defaults to ``problem.plant``.
        t_f: horizon the discretization covers; defaults to ``N * dt``.
        require_bound: raise when no continuous plant is available. Turn off
            for instances given directly in discrete form.

    Returns:
        :class:`Correction` with the corrected inputs, the trajectory they
        produce under the true dynamics, the final-state deviation from the
        uncorrected inputs replayed through the same dynamics and the
        bound (``None`` without a continuous plant).

    Raises:
        ProblemDataError: no continuous plant while ``require_bound`` is set.
    """
    plant = plant if plant is not None else problem.plant
    if plant is None and require_bound:
        raise ProblemDataError(
            "the correction bound needs a continuous plant; pass require_bound=False "
            "for instances given in discrete form"
        )
    radius = problem.g.radius(problem.rho_min)
    lo = problem.rho_min - tol_v * max(1.0, problem.rho_min)
    gv = problem.g(sol.u)
    u_hat = np.array(sol.u, float, copy=True)
    fixed = []
    for i in np.flatnonzero(gv < lo):
        nrm = float(np.linalg.norm(u_hat[i]))
        if nrm == 0.0:
            log.warning("node %d has a zero control; lifting along the first axis", i)
            u_hat[i] = 0.0
            u_hat[i, 0] = radius
        else:
            u_hat[i] *= radius / nrm
        fixed.append(int(i))
    x_hat = propagate(problem.A, problem.B, problem.drift, problem.x_init, u_hat)
    # compare against the uncorrected controls replayed through the same dynamics,
    # so solver residuals in sol.x do not leak into the deviation
    x_ref = propagate(problem.A, problem.B, problem.drift, problem.x_init, sol.u)
    deviation = float(np.linalg.norm(x_hat[-1] - x_ref[-1]))
    bound = None
    if plant is not None:
        horizon = t_f if t_f is not None else problem.N * problem.dt
        bound = correction_bound(plant, horizon, problem.N, radius)
    return Correction(u_hat, x_hat, deviation, bound, fixed)


__all__ = [
    "CaseKind", "CaseLabel", "Correction", "DualChainReport", "LcvxSolution",
    "MagnitudeFn", "NodeStatus", "NodeValidity", "ValidityReport",
    "boundary_problem", "check_validity", "classify_case", "correct_controls",
    "correction_bound", "dual_chain_check", "s_matrix", "s_matrix_rank",
    "solve_relaxed",
]
