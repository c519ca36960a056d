"""Structure-preserving eigenvalue perturbation of the dynamics matrix.

``A = V Lambda V^{-1}`` is perturbed to ``V (Lambda + diag(shift)) V^{-1}``
where every distinct eigenvalue receives one entry of ``q``. A conjugate
pair counts as a single eigenvalue and both members move by the same real
amount, which keeps the perturbed matrix real. For defective matrices the
caller supplies the structure ``(Q, J)`` with ``A = Q^{-1} J Q`` and the
diagonal of ``J`` is shifted instead.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .exceptions import DimensionError, NotDiagonalizableError, ProblemDataError
from .linalg import as_matrix, eigendecompose
from .model import propagate

log = logging.getLogger(__name__)

GROUP_TOL = 1e-8


class PerturbationMode(str, Enum):
    EIGEN = "EIGEN"
    USER_STRUCTURE = "USER_STRUCTURE"


@dataclass(frozen=True)
class PerturbationSpec:
    """Sampling cube half-width, seed and structure mode.

    Args:
        epsilon: half-width of the cube ``q`` is drawn from.
        seed: seed of the deterministic generator.
        mode: how ``q`` enters the dynamics matrix.
    """

    epsilon: float = 1e-7
    seed: int = 0
    mode: PerturbationMode = PerturbationMode.EIGEN

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ProblemDataError(f"epsilon must be a nonnegative number, got {self.epsilon}")
        object.__setattr__(self, "mode", PerturbationMode(self.mode))

    def check_floor(self, tol_p):
        """Require ``epsilon >= 100 tol_p`` so the shift is visible to the solver."""
        # a relative slack keeps the boundary case (1e-7 vs 100 x 1e-9) admissible
        if self.epsilon < 100.0 * tol_p * (1 - 1e-12):
            raise ProblemDataError(
                f"epsilon={self.epsilon:g} is below 100 x solver tolerance ({tol_p:g}); "
                "the perturbation would drown in solver noise"
            )


@dataclass(frozen=True)
class PerturbedDynamics:
    A_tilde: np.ndarray
    q: np.ndarray
    distinct_eigenvalues: list
    mode: PerturbationMode
    imag_residual: float = 0.0


def group_eigenvalues(values, tol=GROUP_TOL):
    """Group eigenvalues that coincide, treating ``a + bi`` and ``a - bi`` as one.

    Groups keep the order in which their first member appears.

    Returns:
        (representatives, labels): one representative per group (with
        nonnegative imaginary part) and the group index of every input.
    """
    reps, labels = [], []
    for lam in np.asarray(values, complex):
        key = complex(lam.real, abs(lam.imag))
        for k, r in enumerate(reps):
            if abs(key - r) <= tol * (1.0 + abs(r)):
                labels.append(k)
                break
        else:
            reps.append(key)
            labels.append(len(reps) - 1)
    return reps, np.array(labels, dtype=int)


def perturb_dynamics(A, q, structure=None):
    """Shift the eigenvalues of ``A`` by ``q`` while keeping its eigenvectors.

    Args:
        A: real square matrix.
        q: one real shift per distinct eigenvalue (see :func:`group_eigenvalues`).
        structure: optional ``(Q, J)`` with ``A = Q^{-1} J Q``; required for
            matrices that are not numerically diagonalizable.

    Raises:
        NotDiagonalizableError: EIGEN mode on a defective matrix.
        DimensionError: wrong length of ``q`` or malformed structure.
    """
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"A must be square, got {A.shape}")
    q = np.atleast_1d(np.asarray(q, float)).ravel()

    if structure is not None:
        Q, J = (np.asarray(M, complex) for M in structure)
        if Q.shape != A.shape or J.shape != A.shape:
            raise DimensionError("Q and J must match the shape of A")
        Qinv = np.linalg.inv(Q)
        if not np.allclose(Qinv @ J @ Q, A, atol=1e-9 * (1 + np.abs(A).max())):
            raise ProblemDataError("the supplied (Q, J) does not reproduce A")
        reps, labels = group_eigenvalues(np.diag(J))
        if q.size != len(reps):
            raise DimensionError(f"q needs {len(reps)} entries, got {q.size}")
        delta = Qinv @ np.diag(q[labels].astype(complex)) @ Q
        mode = PerturbationMode.USER_STRUCTURE
    else:
        eig = eigendecompose(A)
        if not eig.diagonalizable:
            raise NotDiagonalizableError(
                f"eigenvector matrix condition {eig.condition_estimate:.2e} is too large; "
                "supply an explicit (Q, J) structure"
            )
        reps, labels = group_eigenvalues(eig.eigenvalues)
        if q.size != len(reps):
            raise DimensionError(f"q needs {len(reps)} entries, got {q.size}")
        V = eig.eigenvector_matrix
        delta = V @ np.diag(q[labels].astype(complex)) @ np.linalg.inv(V)
        mode = PerturbationMode.EIGEN

    imag = float(np.abs(delta.imag).max(initial=0.0))
    # adding the real shift to A itself keeps A_tilde(0) == A exactly
    A_tilde = A + delta.real
    return PerturbedDynamics(A_tilde, q.copy(), reps, mode, imag)


def distinct_eigenvalue_count(A):
    """Length of ``q`` expected by :func:`perturb_dynamics` in EIGEN mode."""
    reps, _ = group_eigenvalues(eigendecompose(A).eigenvalues)
    return len(reps)


def sample_q(spec, d):
    """Draw ``q`` uniformly from ``[-epsilon, epsilon]^d``."""
    if d < 1:
        raise ValueError("d must be at least 1")
    rng = np.random.default_rng(spec.seed)
    if spec.epsilon == 0:
        return np.zeros(d)
    return rng.uniform(-spec.epsilon, spec.epsilon, size=d)


def derive_seeds(seed, count):
    """Independent per-trial seeds split from one root seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


@dataclass
class PerturbationReport:
    q: np.ndarray
    boundary_residual: float
    state_deviation: float
    cost_delta: float
    violations_before: int
    violations_after: int

    def as_dict(self):
        return {
            "q": [float(v) for v in self.q],
            "boundary_residual_true_dynamics": self.boundary_residual,
            "final_state_deviation": self.state_deviation,
            "cost_delta": self.cost_delta,
            "violations_before": self.violations_before,
            "violations_after": self.violations_after,
        }


def perturbation_report(problem, sol_unperturbed, sol_perturbed, q, tol_v=1e-6):
    """Compare a perturbed solve with the unperturbed one.

    The perturbed controls are replayed through the true dynamics ``A``;
    the boundary residual ``||G x_{N+1} - g||`` of that replay measures how
    much the perturbation costs in terminal accuracy.
    """
    from .analysis import check_validity

    x_true = propagate(problem.A, problem.B, problem.drift, problem.x_init, sol_perturbed.u)
    resid = float(np.linalg.norm(problem.boundary.residual(x_true[-1])))
    cost = (
        problem.cost.terminal(x_true[-1])
        + problem.cost.running * float(np.sum(sol_perturbed.sigma))
        + problem.objective_offset
    )
    before = check_validity(sol_unperturbed, problem, tol_v).violation_count
    after = check_validity(sol_perturbed, problem, tol_v).violation_count
    return PerturbationReport(
        q=np.asarray(q, float),
        boundary_residual=resid,
        state_deviation=float(np.linalg.norm(x_true[-1] - sol_unperturbed.x[-1])),
        cost_delta=float(cost - sol_unperturbed.objective),
        violations_before=before,
        violations_after=after,
    )


def perturb_problem(problem, spec, structure=None, q: Optional[np.ndarray] = None):
    """Sample ``q`` (unless given) and return the perturbed dynamics."""
    if q is None:
        if structure is not None:
            d = len(group_eigenvalues(np.diag(np.asarray(structure[1], complex)))[0])
        else:
            d = distinct_eigenvalue_count(problem.A)
        q = sample_q(spec, d)
    return perturb_dynamics(problem.A, q, structure)
