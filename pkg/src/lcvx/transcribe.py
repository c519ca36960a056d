"""Transcription of discrete LCvx instances into standard-form cone programs.

Variable vector ``z = (x_1..x_{N+1}, u_1..u_N, sigma_1..sigma_N)``.

Equality rows, in order:

* ``x_1 = x_init``                                  (label ``("initial", 0)``)
* ``A x_i + B u_i - x_{i+1} = -drift`` for each i   (label ``("dynamics", i)``)
* ``G x_{N+1} = g``                                 (label ``("boundary", 0)``)

Writing the dynamics as ``A x_i + B u_i - x_{i+1}`` makes the solver's
equality multipliers coincide with the ``eta_i`` of the Lagrangian term
``eta_i' (-x_{i+1} + A x_i + B u_i)``, so ``eta_{i-1} = A' eta_i`` holds
without any sign flip. Step indices in labels are 0-based.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic import ConeBlock, ConeKind, ConeProgram
from .exceptions import DimensionError
from .model import MagnitudeFn


@dataclass(frozen=True)
class VariableLayout:
    N: int
    n_x: int
    n_u: int

    @property
    def x_offset(self):
        return 0

    @property
    def u_offset(self):
        return (self.N + 1) * self.n_x

    @property
    def sigma_offset(self):
        return self.u_offset + self.N * self.n_u

    @property
    def total(self):
        return (self.N + 1) * self.n_x + self.N * self.n_u + self.N

    def x(self, i):
        """Column indices of ``x_i`` (0-based, ``i`` in ``0..N``)."""
        return np.arange(self.n_x) + i * self.n_x

    def u(self, i):
        return np.arange(self.n_u) + self.u_offset + i * self.n_u

    def sigma(self, i):
        return self.sigma_offset + i

    def decode(self, z):
        """Split ``z`` into ``(x (N+1, n_x), u (N, n_u), sigma (N,))``."""
        z = np.asarray(z, float)
        if z.shape != (self.total,):
            raise DimensionError(f"z must have length {self.total}, got {z.shape}")
        x = z[: self.u_offset].reshape(self.N + 1, self.n_x)
        u = z[self.u_offset:self.sigma_offset].reshape(self.N, self.n_u)
        return x, u, z[self.sigma_offset:].copy()

    def encode(self, x, u, sigma):
        return np.concatenate([np.ravel(x), np.ravel(u), np.ravel(sigma)])


def _dynamics_rows(problem, A_dyn, layout):
    n_x, n_u, N = problem.n_x, problem.n_u, problem.N
    rows, cols, vals = [], [], []
    f = []
    A_dyn = np.asarray(A_dyn, float)
    B = problem.B
    for i in range(N):
        r0 = n_x * i
        rr = np.arange(n_x) + r0
        xi, ui, xn = layout.x(i), layout.u(i), layout.x(i + 1)
        rows.append(np.repeat(rr, n_x)), cols.append(np.tile(xi, n_x)), vals.append(A_dyn.ravel())
        rows.append(np.repeat(rr, n_u)), cols.append(np.tile(ui, n_x)), vals.append(B.ravel())
        rows.append(rr), cols.append(xn), vals.append(-np.ones(n_x))
        f.append(-problem.drift)
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N * n_x, layout.total),
    )
    M.eliminate_zeros()
    return M, np.concatenate(f)


def _build(problem, A_dyn):
    n_x, n_u, N = problem.n_x, problem.n_u, problem.N
    layout = VariableLayout(N, n_x, n_u)
    n = layout.total

    init = sp.csr_matrix(
        (np.ones(n_x), (np.arange(n_x), layout.x(0))), shape=(n_x, n)
    )
    dyn, f_dyn = _dynamics_rows(problem, A_dyn, layout)
    Gb = problem.boundary.G
    bnd = sp.csr_matrix(
        (Gb.ravel(), (np.repeat(np.arange(Gb.shape[0]), n_x), np.tile(layout.x(N), Gb.shape[0]))),
        shape=(Gb.shape[0], n),
    )
    E = sp.vstack([init, dyn, bnd]).tocsr()
    E.eliminate_zeros()
    f = np.concatenate([problem.x_init, f_dyn, problem.boundary.g])
    labels = (
        [("initial", 0)] * n_x
        + [("dynamics", i) for i in range(N) for _ in range(n_x)]
        + [("boundary", 0)] * Gb.shape[0]
    )

    # h - G z in K
    sig = np.array([layout.sigma(i) for i in range(N)])
    g_rows, g_cols, g_vals, h = [], [], [], []
    # sigma_i - rho_min >= 0 ; rho_max - sigma_i >= 0
    g_rows += [np.arange(N), np.arange(N) + N]
    g_cols += [sig, sig]
    g_vals += [-np.ones(N), np.ones(N)]
    h += [np.full(N, -problem.rho_min), np.full(N, problem.rho_max)]
    cones = [ConeBlock(ConeKind.NONNEG, 0, 2 * N)]
    row = 2 * N
    rsoc = problem.g is MagnitudeFn.NORM2_SQ
    for i in range(N):
        if rsoc:
            # (sigma_i, 1, u_i): ||u_i||^2 <= sigma_i * 1
            dim = n_u + 2
            g_rows += [np.array([row]), np.arange(n_u) + row + 2]
            hb = np.zeros(dim)
            hb[1] = 1.0
            kind = ConeKind.RSOC
        else:
            # (sigma_i, u_i): ||u_i|| <= sigma_i
            dim = n_u + 1
            g_rows += [np.array([row]), np.arange(n_u) + row + 1]
            hb = np.zeros(dim)
            kind = ConeKind.SOC
        g_cols += [np.array([sig[i]]), layout.u(i)]
        g_vals += [np.array([-1.0]), -np.ones(n_u)]
        h.append(hb)
        cones.append(ConeBlock(kind, row, dim))
        row += dim
    G = sp.csr_matrix(
        (np.concatenate(g_vals), (np.concatenate(g_rows), np.concatenate(g_cols))),
        shape=(row, n),
    )

    c = np.zeros(n)
    c[sig] = problem.cost.running
    c[layout.x(N)] = problem.cost.terminal_gradient(n_x)
    offset = problem.cost.terminal_constant + problem.objective_offset
    return ConeProgram(
        c=c, E=E, f=f, G=G, h=np.concatenate(h), cones=tuple(cones),
        offset=offset, layout=layout, eq_labels=tuple(labels),
    )


def transcribe_relaxed(problem):
    """Cone program of the relaxed (slacked) instance."""
    return _build(problem, problem.A)


def transcribe_perturbed(problem, A_tilde):
    """Same program with ``A_tilde`` in the dynamics rows only."""
    A_tilde = np.asarray(A_tilde, float)
    if A_tilde.shape != problem.A.shape:
        raise DimensionError(f"A_tilde is {A_tilde.shape}, expected {problem.A.shape}")
    return _build(problem, A_tilde)


@dataclass(frozen=True)
class DualVariables:
    """``eta`` is (N, n_x); ``mu_initial`` and ``mu_boundary`` are vectors."""

    eta: np.ndarray
    mu_initial: np.ndarray
    mu_boundary: np.ndarray


def recover_duals(program, raw_equality_duals):
    """Slice the solver's equality multipliers by row label."""
    y = np.asarray(raw_equality_duals, float).ravel()
    if y.shape != (program.m_eq,):
        raise DimensionError(f"expected {program.m_eq} equality duals, got {y.size}")
    layout = program.layout
    kinds = np.array([k for k, _ in program.eq_labels])
    eta = y[kinds == "dynamics"].reshape(layout.N, layout.n_x)
    return DualVariables(
        eta=eta,
        mu_initial=y[kinds == "initial"],
        mu_boundary=y[kinds == "boundary"],
    )


def constraint_residuals(program, z):
    """Max equality residual and cone violation of a candidate point."""
    eq = float(np.max(np.abs(program.E @ z - program.f), initial=0.0))
    return eq, program.cone_violation(program.slack(z))
