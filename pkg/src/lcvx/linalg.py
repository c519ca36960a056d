"""Dense linear-algebra kernels: matrix exponential, ZOH, rank and eigen tools."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import DimensionError, EigenDecompositionError

#: cond(Q) above which a matrix is treated as defective.
DIAGONALIZABLE_COND = 1e12


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D float array."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DimensionError(f"{name} has non-finite entries")
    return M


def _square(M, name):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got {M.shape}")
    return M


def expm(M):
    """Matrix exponential by scaling-and-squaring with a Pade approximant.

    Args:
        M: square real matrix with finite entries.

    Returns:
        ``exp(M)`` as an ndarray of the same shape.
    """
    return scipy.linalg.expm(_square(M, "M"))


def zoh_matrices(A_c, B_c, drift, dt):
    """Zero-order-hold discretization of ``xdot = A_c x + B_c u + drift``.

    ``B`` and the drift increment come out of one exponential of the
    augmented block matrix ``[[A_c, B_c, w], [0, 0, 0]] * dt``.

    Returns:
        (A, B, d) with ``x_next = A x + B u + d``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    A_c = _square(A_c, "A_c")
    B_c = as_matrix(B_c, "B_c")
    n_x, n_u = B_c.shape
    if A_c.shape[0] != n_x:
        raise DimensionError(f"A_c is {A_c.shape} but B_c has {n_x} rows")
    w = np.zeros(n_x) if drift is None else np.asarray(drift, dtype=float).ravel()
    if w.shape != (n_x,):
        raise DimensionError(f"drift must have length {n_x}, got {w.shape}")

    M = np.zeros((n_x + n_u + 1, n_x + n_u + 1))
    M[:n_x, :n_x] = A_c
    M[:n_x, n_x:n_x + n_u] = B_c
    M[:n_x, -1] = w
    E = expm(M * dt)
    return E[:n_x, :n_x], E[:n_x, n_x:n_x + n_u], E[:n_x, -1].copy()


def discretize_zoh(plant, dt):
    """Discretize a :class:`~lcvx.model.ContinuousPlant` with step ``dt``."""
    return zoh_matrices(plant.A_c, plant.B_c, plant.drift, dt)


def rank_tolerance(M):
    """Singular-value threshold used for every numerical rank decision."""
    M = np.atleast_2d(M)
    if M.size == 0:
        return 0.0
    smax = np.linalg.norm(M, 2)
    return max(M.shape) * smax * np.finfo(float).eps * 64


def numerical_rank(M):
    M = as_matrix(M)
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(sv > rank_tolerance(M)))


def controllability_matrix(A, B):
    """Stack ``(B, AB, ..., A^{n-1} B)`` horizontally."""
    A = _square(A, "A")
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"B has {B.shape[0]} rows, A is {A.shape}")
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def controllability_rank(A, B):
    return numerical_rank(controllability_matrix(A, B))


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenpairs of a real square matrix.

    ``eigenvector_matrix`` holds eigenvectors as columns, so that
    ``A = V diag(eigenvalues) V^{-1}`` whenever ``diagonalizable`` is true.
    """

    eigenvalues: np.ndarray
    eigenvector_matrix: np.ndarray
    condition_estimate: float

    @property
    def diagonalizable(self):
        return self.condition_estimate <= DIAGONALIZABLE_COND

    def reconstruct(self):
        V = self.eigenvector_matrix
        return V @ np.diag(self.eigenvalues) @ np.linalg.inv(V)


def eigendecompose(A):
    A = _square(A, "A")
    try:
        w, V = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise EigenDecompositionError(f"eigenvalue iteration failed: {exc}") from exc
    with np.errstate(all="ignore"):
        cond = float(np.linalg.cond(V))
    if not np.isfinite(cond):
        cond = np.inf
    return EigenDecomposition(eigenvalues=w, eigenvector_matrix=V, condition_estimate=cond)
