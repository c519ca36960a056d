"""Active-set polishing of an interior-point solution.

Interior-point iterates approach the optimal face only at rate ``sqrt(mu)``
along directions where complementarity is not strict, which on degenerate
programs leaves errors far above the reported residuals. Polishing guesses
the active constraints from the iterate, solves the resulting
equality-constrained KKT system by Newton's method, and keeps the answer
only if it certifies: inactive constraints feasible, multipliers
nonnegative. The guess is repaired as in a primal active-set method: a
Newton step that would leave the feasible set is cut at the first blocking
constraint, which joins the active set, and a converged point with a
negative multiplier releases that constraint.

Lorentz blocks are handled through ``phi(s) = s0 - ||s1|| = 0`` when active;
blocks whose slack collapses to the apex are not polished.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import lorentz_form
from .solution import certify

log = logging.getLogger(__name__)

_ACTIVE_REL = 1e-2
_MAX_STEPS = 80
_REG = 1e-13


@dataclass
class PolishResult:
    z: np.ndarray
    y: np.ndarray
    zc: np.ndarray
    s: np.ndarray
    primal_residual: float
    dual_residual: float
    gap: float
    objective: float
    rounds: int


class _Lorentz:
    """The program with RSOC rows rotated into Lorentz form."""

    def __init__(self, program):
        self.T, _, self.cones = lorentz_form(program)
        m = program.m_cone
        self.G = (self.T @ program.G).tocsr() if m else program.G
        self.h = self.T @ program.h if m else program.h
        self.blocks = [idx for grp in self.cones.soc for idx in grp]

    def soc_dist(self, s):
        return np.array([s[idx[0]] - np.linalg.norm(s[idx[1:]]) for idx in self.blocks])


def _block_step(x, d):
    """Largest ``a`` in [0, inf) keeping ``x + a d`` in one Lorentz cone."""
    a = d[0] ** 2 - d[1:] @ d[1:]
    b = x[0] * d[0] - x[1:] @ d[1:]
    c = x[0] ** 2 - x[1:] @ x[1:]
    roots = []
    if abs(a) > 1e-300:
        disc = b * b - a * c
        if disc >= 0:
            r = np.sqrt(disc)
            roots = [(-b - r) / a, (-b + r) / a]
    elif abs(b) > 1e-300:
        roots = [-c / (2 * b)]
    if d[0] < 0:
        roots.append(-x[0] / d[0])
    pos = [r for r in roots if r > 0]
    best = np.inf
    for r in sorted(pos):
        # accept the first root after which the point actually leaves the cone
        probe = x + (r * (1 + 1e-9) + 1e-300) * d
        if probe[0] - np.linalg.norm(probe[1:]) < 0:
            best = r
            break
    return best


class _ActiveSet:
    def __init__(self, L, lin_act, soc_act, zt):
        self.L = L
        self.lin = {int(j): max(float(zt[L.cones.lin[j]]), 0.0) for j in lin_act}
        self.soc = {int(b): max(float(zt[L.blocks[b][0]]), 0.0) for b in soc_act}

    def assemble(self, prog, x, y):
        """Residual, KKT matrix and bookkeeping for the current active set."""
        L = self.L
        n = prog.n
        s = L.h - L.G @ x
        lin_keys, soc_keys = sorted(self.lin), sorted(self.soc)
        k1, k2 = len(lin_keys), len(soc_keys)
        lin_rows = L.cones.lin[np.array(lin_keys, dtype=np.int64)]
        zc = np.zeros(L.h.size)
        zc[lin_rows] = [self.lin[j] for j in lin_keys]
        W_rows, W_cols, W_vals = [np.arange(k1)], [lin_rows], [np.ones(k1)]
        phi = [s[lin_rows]]
        H_rows, H_cols, H_vals = [], [], []
        for j, b in enumerate(soc_keys):
            idx = L.blocks[b]
            lam = self.soc[b]
            s1 = s[idx[1:]]
            nrm = np.linalg.norm(s1)
            shat = s1 / nrm
            w = np.concatenate([[1.0], -shat])
            zc[idx] = lam * w
            W_rows.append(np.full(idx.size, k1 + j)), W_cols.append(idx), W_vals.append(w)
            phi.append([s[idx[0]] - nrm])
            P = (np.eye(idx.size - 1) - np.outer(shat, shat)) * (lam / nrm)
            sub = idx[1:]
            H_rows.append(np.repeat(sub, sub.size)), H_cols.append(np.tile(sub, sub.size))
            H_vals.append(P.ravel())
        Wt = sp.csr_matrix(
            (np.concatenate(W_vals), (np.concatenate(W_rows), np.concatenate(W_cols))),
            shape=(k1 + k2, L.h.size),
        )
        C = (Wt @ L.G).tocsr()
        r_d = prog.c + prog.E.T @ y + L.G.T @ zc
        r_e = prog.E @ x - prog.f
        r_c = -np.concatenate([np.ravel(p) for p in phi])
        res = np.concatenate([r_d, r_e, r_c])
        if H_vals:
            M = sp.csr_matrix(
                (np.concatenate(H_vals), (np.concatenate(H_rows), np.concatenate(H_cols))),
                shape=(L.h.size, L.h.size),
            )
            H = (L.G.T @ M @ L.G).tocsc()
        else:
            H = sp.csc_matrix((n, n))
        size = n + prog.m_eq + k1 + k2
        K = sp.bmat([[H, prog.E.T, C.T], [prog.E, None, None], [C, None, None]], format="csc")
        if K.shape != (size, size):
            K = sp.csc_matrix(K, shape=(size, size))
        return res, K, lin_keys, soc_keys, zc

    def multipliers(self):
        return list(self.lin.values()) + list(self.soc.values())


def _solve_step(K, res, n):
    reg = np.concatenate([np.full(n, _REG), np.full(K.shape[0] - n, -_REG)])
    try:
        lu = spla.splu((K + sp.diags(reg)).tocsc(), permc_spec="COLAMD")
    except RuntimeError:
        return None
    step = lu.solve(-res)
    for _ in range(5):
        step = step + lu.solve(-res - K @ step)
    return step if np.all(np.isfinite(step)) else None


def polish(program, x, y, zc) -> Optional[PolishResult]:
    """Try to refine ``(x, y, zc)`` onto the exact optimal face.

    Args:
        program: the :class:`ConeProgram` that was solved.
        x, y, zc: a near-optimal primal point and duals in program coordinates.

    Returns:
        A :class:`PolishResult` whose active set is consistent (feasible,
        nonnegative multipliers), or ``None``. The caller judges its residuals.
    """
    L = _Lorentz(program)
    n, m = program.n, program.m_eq
    s = L.h - L.G @ x
    zt = spla.spsolve(L.T.T.tocsc(), zc) if L.h.size else np.zeros(0)
    zt = np.atleast_1d(zt)
    scale = 1.0 + np.abs(s).max(initial=0.0)
    heads = np.array([s[idx[0]] for idx in L.blocks])
    if heads.size and np.any(heads <= _ACTIVE_REL * scale):
        return None
    lin_s, lin_z = s[L.cones.lin], zt[L.cones.lin]
    lin_act = np.flatnonzero((lin_s <= _ACTIVE_REL * scale) | (lin_s < lin_z))
    dist = L.soc_dist(s)
    zdist = np.array([zt[idx[0]] for idx in L.blocks])
    soc_act = [b for b in range(len(L.blocks))
               if dist[b] <= _ACTIVE_REL * scale or dist[b] < zdist[b]]
    act = _ActiveSet(L, lin_act, soc_act, zt)
    x, y = x.copy(), y.copy()
    res_tol = 1e-14 * (1 + np.linalg.norm(program.c, np.inf))
    best_rn, stalled, changes = np.inf, 0, 0

    for _ in range(_MAX_STEPS):
        res, K, lin_keys, soc_keys, _ = act.assemble(program, x, y)
        rn = float(np.linalg.norm(res, np.inf))
        if rn < 0.5 * best_rn:
            stalled = 0
        else:
            stalled += 1
        best_rn = min(best_rn, rn)
        if rn <= res_tol or stalled >= 3:
            mults = act.multipliers()
            lam_tol = 1e-10 * (1 + max(mults, default=0.0))
            worst = min(((v, "lin", j) for j, v in act.lin.items()), default=(0.0, "", -1))
            worst_s = min(((v, "soc", b) for b, v in act.soc.items()), default=(0.0, "", -1))
            worst = min(worst, worst_s)
            if worst[0] >= -lam_tol:
                break
            # release the most negative multiplier and keep going
            (act.lin if worst[1] == "lin" else act.soc).pop(worst[2])
            best_rn, stalled = np.inf, 0
            changes += 1
            continue
        step = _solve_step(K, res, n)
        if step is None:
            return None
        dx = step[:n]
        ds = -(L.G @ dx)
        s = L.h - L.G @ x
        alpha, block = 1.0, None
        inactive_lin = np.setdiff1d(np.arange(L.cones.lin.size), lin_keys)
        if inactive_lin.size:
            rows = L.cones.lin[inactive_lin]
            dec = ds[rows] < 0
            if np.any(dec):
                ratios = np.where(dec, s[rows] / np.where(dec, -ds[rows], 1.0), np.inf)
                j = int(np.argmin(ratios))
                if ratios[j] < alpha and s[rows][j] >= 0:
                    alpha, block = float(ratios[j]), ("lin", int(inactive_lin[j]))
        active_soc = set(soc_keys)
        for b, idx in enumerate(L.blocks):
            if b in active_soc or s[idx[0]] - np.linalg.norm(s[idx[1:]]) < 0:
                continue
            a = _block_step(s[idx], ds[idx])
            if a < alpha:
                alpha, block = a, ("soc", b)
        x = x + alpha * dx
        y = y + alpha * step[n:n + m]
        k1 = len(lin_keys)
        for j, key in enumerate(lin_keys):
            act.lin[key] += alpha * step[n + m + j]
        for j, key in enumerate(soc_keys):
            act.soc[key] += alpha * step[n + m + k1 + j]
        if block is not None:
            (act.lin if block[0] == "lin" else act.soc)[block[1]] = 0.0
            best_rn, stalled = np.inf, 0
            changes += 1
    else:
        return None

    _, _, lin_keys, soc_keys, zl = act.assemble(program, x, y)
    s_l = L.h - L.G @ x
    if np.any(s_l[L.cones.lin] < -1e-12 * scale) or np.any(L.soc_dist(s_l) < -1e-12 * scale):
        return None
    zc_out = L.T.T @ zl if L.h.size else zl
    s_out = program.slack(x)
    pres, dres, gap, pobj = certify(program, x, y, zc_out, s_out)
    log.debug("polish: %d active-set changes, residuals %.1e %.1e %.1e",
              changes, pres, dres, gap)
    return PolishResult(x, y, zc_out, s_out, pres, dres, gap, pobj, changes)
