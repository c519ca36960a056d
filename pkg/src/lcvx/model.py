"""Problem data model for discrete lossless-convexification instances.

The relaxed program solved everywhere in this package is::

    min   c_T' x_{N+1} + k_T + sum_i r * sigma_i  (+ offset)
    s.t.  x_{i+1} = A x_i + B u_i + d,      i = 1..N
          rho_min <= sigma_i <= rho_max,  g(u_i) <= sigma_i
          x_1 = x_init,  G x_{N+1} = g

and the nonconvex original replaces the slack by ``g(u_i)`` itself.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .exceptions import DimensionError, ProblemDataError
from .linalg import as_matrix, controllability_rank


class MagnitudeFn(str, Enum):
    """Input-magnitude function ``g``."""

    NORM2 = "NORM2"
    NORM2_SQ = "NORM2_SQ"

    def __call__(self, u):
        """Evaluate ``g`` row-wise; a 1-D input is a single control."""
        u = np.asarray(u, dtype=float)
        n = np.linalg.norm(u, axis=-1)
        return n if self is MagnitudeFn.NORM2 else n * n

    def radius(self, level):
        """Euclidean radius of the level set ``{u : g(u) = level}``."""
        return level if self is MagnitudeFn.NORM2 else np.sqrt(level)


@dataclass(frozen=True)
class ContinuousPlant:
    """``xdot = A_c x + B_c u + drift``."""

    A_c: np.ndarray
    B_c: np.ndarray
    drift: Optional[np.ndarray] = None

    def __post_init__(self):
        A_c = as_matrix(self.A_c, "A_c")
        B_c = as_matrix(self.B_c, "B_c")
        n_x = A_c.shape[0]
        if A_c.shape != (n_x, n_x) or B_c.shape[0] != n_x:
            raise DimensionError(f"A_c {A_c.shape} and B_c {B_c.shape} are inconsistent")
        drift = np.zeros(n_x) if self.drift is None else np.asarray(self.drift, float).ravel()
        if drift.shape != (n_x,):
            raise DimensionError(f"drift must have length {n_x}")
        object.__setattr__(self, "A_c", A_c)
        object.__setattr__(self, "B_c", B_c)
        object.__setattr__(self, "drift", drift)

    @property
    def n_x(self):
        return self.A_c.shape[0]

    @property
    def n_u(self):
        return self.B_c.shape[1]


@dataclass(frozen=True)
class CostSpec:
    """Linear running cost ``running * sigma`` and affine terminal cost."""

    running: float = 1.0
    terminal_linear: Optional[np.ndarray] = None
    terminal_constant: float = 0.0

    def __post_init__(self):
        if not self.running > 0:
            raise ProblemDataError(f"running cost coefficient must be > 0, got {self.running}")
        if self.terminal_linear is not None:
            object.__setattr__(
                self, "terminal_linear", np.asarray(self.terminal_linear, float).ravel()
            )

    def terminal_gradient(self, n_x):
        if self.terminal_linear is None:
            return np.zeros(n_x)
        if self.terminal_linear.shape != (n_x,):
            raise DimensionError(f"terminal_linear must have length {n_x}")
        return self.terminal_linear

    def terminal(self, x_final):
        return float(self.terminal_gradient(len(x_final)) @ x_final + self.terminal_constant)

    def scaled(self, factor):
        return replace(self, running=self.running * factor)


@dataclass(frozen=True)
class BoundaryMap:
    """Affine terminal condition ``G x_{N+1} = g``."""

    G: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G, float)
        if G.ndim == 1:
            G = G[None, :]
        g = np.asarray(self.g, float).ravel()
        if G.ndim != 2 or G.shape[0] != g.shape[0]:
            raise DimensionError(f"boundary G {G.shape} and g {g.shape} are inconsistent")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g", g)

    @classmethod
    def fixed_final_state(cls, target):
        target = np.asarray(target, float).ravel()
        return cls(np.eye(target.size), target)

    @classmethod
    def free(cls, n_x):
        return cls(np.zeros((0, n_x)), np.zeros(0))

    @property
    def n_G(self):
        return self.G.shape[0]

    def residual(self, x_final):
        return float(np.linalg.norm(self.G @ x_final - self.g))

    def independent(self, tol=1e-10):
        """Drop linearly dependent rows.

        Returns:
            (reduced BoundaryMap, number of removed rows, consistent) where
            ``consistent`` is False if a dropped row contradicts the kept ones.
        """
        if self.n_G == 0:
            return self, 0, True
        keep = []
        basis = np.zeros((0, self.G.shape[1]))
        for j, row in enumerate(self.G):
            cand = np.vstack([basis, row])
            sv = np.linalg.svd(cand, compute_uv=False)
            if sv[-1] > tol * max(1.0, sv[0]):
                keep.append(j)
                basis = cand
        reduced = BoundaryMap(self.G[keep], self.g[keep])
        consistent = True
        if len(keep) < self.n_G:
            coef, *_ = np.linalg.lstsq(reduced.G.T, self.G.T, rcond=None)
            implied = coef.T @ reduced.g
            consistent = bool(np.allclose(implied, self.g, atol=tol * (1 + np.abs(self.g).max())))
        return reduced, self.n_G - len(keep), consistent


@dataclass(frozen=True)
class DiscreteProblem:
    """One discrete LCvx instance.

    ``plant`` is optional; it is needed only by the correction-step bound
    and by the two-phase long-horizon construction. ``objective_offset`` is
    a constant added to reported objectives (the phase-one cost).
    """

    A: np.ndarray
    B: np.ndarray
    N: int
    x_init: np.ndarray
    rho_min: float
    rho_max: float
    boundary: BoundaryMap
    g: MagnitudeFn = MagnitudeFn.NORM2
    cost: CostSpec = field(default_factory=CostSpec)
    drift: Optional[np.ndarray] = None
    dt: float = 1.0
    plant: Optional[ContinuousPlant] = None
    objective_offset: float = 0.0

    def __post_init__(self):
        if not self.rho_min > 0:
            raise ProblemDataError(f"rho_min must be positive, got {self.rho_min}")
        if not self.rho_max > self.rho_min:
            raise ProblemDataError(
                f"rho_max ({self.rho_max}) must exceed rho_min ({self.rho_min})"
            )
        if int(self.N) != self.N or self.N < 1:
            raise ProblemDataError(f"N must be a positive integer, got {self.N}")
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        n_x = A.shape[0]
        if A.shape != (n_x, n_x):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n_x:
            raise DimensionError(f"B has {B.shape[0]} rows, expected {n_x}")
        x_init = np.asarray(self.x_init, float).ravel()
        if x_init.shape != (n_x,):
            raise DimensionError(f"x_init must have length {n_x}")
        drift = np.zeros(n_x) if self.drift is None else np.asarray(self.drift, float).ravel()
        if drift.shape != (n_x,):
            raise DimensionError(f"drift must have length {n_x}")
        if self.boundary.G.shape[1] != n_x:
            raise DimensionError(f"boundary G has {self.boundary.G.shape[1]} columns, expected {n_x}")
        self.cost.terminal_gradient(n_x)
        if self.plant is not None and (self.plant.n_x, self.plant.n_u) != B.shape:
            raise DimensionError("continuous plant dimensions disagree with (A, B)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "x_init", x_init)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "g", MagnitudeFn(self.g))

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def horizon(self):
        return self.N * self.dt

    def with_dynamics(self, A):
        return replace(self, A=A)


def propagate(A, B, drift, x_init, u):
    """Roll ``x_{i+1} = A x_i + B u_i + drift`` forward; returns (N+1, n_x)."""
    u = np.atleast_2d(np.asarray(u, float))
    x = np.empty((u.shape[0] + 1, A.shape[0]))
    x[0] = x_init
    for i, ui in enumerate(u):
        x[i + 1] = A @ x[i] + B @ ui + drift
    return x


@dataclass(frozen=True)
class NonconvexEvaluation:
    cost: float
    boundary_residual: float
    g_values: np.ndarray
    x: np.ndarray


def evaluate_nonconvex_cost(problem, u):
    """Cost of the original (unslacked) problem for a control sequence.

    The running term is charged on ``g(u_i)`` directly; bound feasibility of
    ``g(u_i)`` is not checked here, only reported through ``g_values``.
    """
    u = np.asarray(u, float)
    if u.ndim == 1 and problem.n_u == 1:
        u = u[:, None]
    if u.shape != (problem.N, problem.n_u):
        raise DimensionError(f"u must be ({problem.N}, {problem.n_u}), got {u.shape}")
    x = propagate(problem.A, problem.B, problem.drift, problem.x_init, u)
    gv = problem.g(u)
    cost = (
        problem.cost.terminal(x[-1])
        + problem.cost.running * float(gv.sum())
        + problem.objective_offset
    )
    return NonconvexEvaluation(cost, problem.boundary.residual(x[-1]), gv, x)


@dataclass
class ValidationReport:
    controllability_rank: int
    controllable: bool
    boundary_rows: int
    boundary_rows_removed: int
    boundary_consistent: bool
    slater_probe_status: str
    slater_feasible: bool
    monotone_cost: bool

    @property
    def ok(self):
        return (
            self.controllable
            and self.boundary_consistent
            and self.slater_feasible
            and self.monotone_cost
        )


def validate(problem, settings=None, probe_margin=1e-6):
    """Probe the standing assumptions on a discrete instance.

    The Slater probe re-solves the relaxation with ``rho_max`` pulled in by
    ``probe_margin``; success is evidence of an interior point, not a proof.
    """
    from .conic import Status, solve
    from .transcribe import transcribe_relaxed

    rank = controllability_rank(problem.A, problem.B)
    reduced, removed, consistent = problem.boundary.independent()
    probe_rho_max = problem.rho_max - probe_margin
    if probe_rho_max > problem.rho_min:
        probe = replace(problem, boundary=reduced, rho_max=probe_rho_max)
        status = solve(transcribe_relaxed(probe), settings).status
    else:
        status = Status.PRIMAL_INFEASIBLE
    return ValidationReport(
        controllability_rank=rank,
        controllable=rank == problem.n_x,
        boundary_rows=reduced.n_G,
        boundary_rows_removed=removed,
        boundary_consistent=consistent,
        slater_probe_status=status.value,
        slater_feasible=status is Status.OPTIMAL,
        monotone_cost=problem.cost.running > 0,
    )
