"""Vectorized operations on a product of nonnegative orthants and Lorentz cones.

Second-order-cone blocks of equal dimension are gathered into 2-D index
arrays so each operation is a handful of numpy calls regardless of the
number of blocks. Rotated cones never reach this module; the solver maps
them to ordinary second-order cones first.
"""

import numpy as np
import scipy.sparse as sp

from .program import ConeKind


class ConeSet:
    def __init__(self, nonneg_rows, soc_blocks, size):
        self.size = size
        self.lin = np.asarray(nonneg_rows, dtype=np.int64)
        groups = {}
        for start, dim in soc_blocks:
            groups.setdefault(dim, []).append(np.arange(start, start + dim))
        self.soc = [np.array(rows, dtype=np.int64) for _, rows in sorted(groups.items())]
        self.degree = self.lin.size + sum(g.shape[0] for g in self.soc)

    def identity(self):
        e = np.zeros(self.size)
        e[self.lin] = 1.0
        for idx in self.soc:
            e[idx[:, 0]] = 1.0
        return e

    def min_eig(self, x):
        vals = [x[self.lin]]
        for idx in self.soc:
            X = x[idx]
            vals.append(X[:, 0] - np.linalg.norm(X[:, 1:], axis=1))
        vals = np.concatenate(vals)
        return float(vals.min()) if vals.size else np.inf

    def shift_interior(self, x):
        """Push ``x`` into the interior along ``e`` if it is not already."""
        alpha = -self.min_eig(x)
        if alpha >= -1e-8 and self.size:
            x = x + (1.0 + alpha) * self.identity()
        return x

    def product(self, x, y):
        """Jordan product ``x o y``."""
        out = np.empty(self.size)
        out[self.lin] = x[self.lin] * y[self.lin]
        for idx in self.soc:
            X, Y = x[idx], y[idx]
            out[idx[:, 0]] = np.einsum("ij,ij->i", X, Y)
            out[idx[:, 1:]] = X[:, :1] * Y[:, 1:] + Y[:, :1] * X[:, 1:]
        return out

    def divide(self, lam, r):
        """Solve ``lam o v = r`` for ``v``."""
        out = np.empty(self.size)
        out[self.lin] = r[self.lin] / lam[self.lin]
        for idx in self.soc:
            L, R = lam[idx], r[idx]
            l0, l1 = L[:, 0], L[:, 1:]
            r0, r1 = R[:, 0], R[:, 1:]
            det = l0 * l0 - np.einsum("ij,ij->i", l1, l1)
            v0 = (l0 * r0 - np.einsum("ij,ij->i", l1, r1)) / det
            out[idx[:, 0]] = v0
            out[idx[:, 1:]] = (r1 - v0[:, None] * l1) / l0[:, None]
        return out

    def max_step(self, x, d):
        """Largest ``alpha`` with ``x + alpha d`` in the cone (``inf`` if unbounded)."""
        alpha = np.inf
        if self.lin.size:
            dl = d[self.lin]
            neg = dl < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-x[self.lin][neg] / dl[neg])))
        for idx in self.soc:
            X, D = x[idx], d[idx]
            nrm2 = X[:, 0] ** 2 - np.einsum("ij,ij->i", X[:, 1:], X[:, 1:])
            nrm = np.sqrt(np.maximum(nrm2, 1e-300))
            Xb = X / nrm[:, None]
            xjd = Xb[:, 0] * D[:, 0] - np.einsum("ij,ij->i", Xb[:, 1:], D[:, 1:])
            rho0 = xjd / nrm
            factor = (xjd + D[:, 0]) / (Xb[:, 0] + 1.0)
            rho1 = (D[:, 1:] - factor[:, None] * Xb[:, 1:]) / nrm[:, None]
            rate = np.linalg.norm(rho1, axis=1) - rho0
            pos = rate > 0
            if np.any(pos):
                alpha = min(alpha, float(np.min(1.0 / rate[pos])))
        return alpha

    def nt_scaling(self, s, z):
        return NTScaling(self, s, z)


class NTScaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^{-1} s = lambda``.

    Lorentz blocks use ``W = beta (2 v v' - J)`` with ``J = diag(1, -I)``.
    """

    def __init__(self, cones, s, z):
        self.cones = cones
        self.d = np.sqrt(s[cones.lin] / z[cones.lin])
        self.beta, self.v = [], []
        for idx in cones.soc:
            S, Z = s[idx], z[idx]
            sn = np.sqrt(np.maximum(S[:, 0] ** 2 - np.einsum("ij,ij->i", S[:, 1:], S[:, 1:]), 1e-300))
            zn = np.sqrt(np.maximum(Z[:, 0] ** 2 - np.einsum("ij,ij->i", Z[:, 1:], Z[:, 1:]), 1e-300))
            Sb, Zb = S / sn[:, None], Z / zn[:, None]
            gamma = np.sqrt((1.0 + np.einsum("ij,ij->i", Sb, Zb)) / 2.0)
            Wb = Sb.copy()
            Wb[:, 0] += Zb[:, 0]
            Wb[:, 1:] -= Zb[:, 1:]
            Wb /= 2.0 * gamma[:, None]
            V = Wb.copy()
            V[:, 0] += 1.0
            V /= np.sqrt(2.0 * (Wb[:, 0] + 1.0))[:, None]
            self.beta.append(np.sqrt(sn / zn))
            self.v.append(V)
        self.lam = self.apply(z)

    def apply(self, x):
        out = np.empty_like(x)
        c = self.cones
        out[c.lin] = self.d * x[c.lin]
        for idx, beta, V in zip(c.soc, self.beta, self.v):
            X = x[idx]
            vx = np.einsum("ij,ij->i", V, X)
            JX = X.copy()
            JX[:, 1:] *= -1
            out[idx] = beta[:, None] * (2.0 * vx[:, None] * V - JX)
        return out

    def apply_inv(self, x):
        out = np.empty_like(x)
        c = self.cones
        out[c.lin] = x[c.lin] / self.d
        for idx, beta, V in zip(c.soc, self.beta, self.v):
            X = x[idx]
            JV = V.copy()
            JV[:, 1:] *= -1
            JX = X.copy()
            JX[:, 1:] *= -1
            vjx = np.einsum("ij,ij->i", V, JX)
            out[idx] = (2.0 * vjx[:, None] * JV - JX) / beta[:, None]
        return out

    def squared_matrix(self):
        """``W^2`` as a sparse block-diagonal matrix."""
        c = self.cones
        rows = [c.lin]
        cols = [c.lin]
        vals = [self.d ** 2]
        for idx, beta, V in zip(c.soc, self.beta, self.v):
            k, dim = idx.shape
            M = 2.0 * V[:, :, None] * V[:, None, :]
            M[:, 0, 0] -= 1.0
            diag = np.arange(1, dim)
            M[:, diag, diag] += 1.0
            M2 = np.einsum("kij,kjl->kil", M, M) * (beta ** 2)[:, None, None]
            rows.append(np.repeat(idx, dim, axis=1).ravel())
            cols.append(np.tile(idx, (1, dim)).ravel())
            vals.append(M2.ravel())
        return sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(c.size, c.size),
        )


def lorentz_form(program):
    """Sparse ``T`` mapping program cone rows to pure Lorentz rows.

    Returns ``(T, T^{-1}, ConeSet)`` for the transformed rows.

    ``(p, q, w)`` with ``||w||^2 <= p q`` becomes ``(p + q, p - q, 2 w)``.
    """
    m = program.m_cone
    rows, cols, vals, ivals = [], [], [], []
    lin, soc = [], []
    for blk in program.cones:
        r0 = blk.start
        if blk.kind is ConeKind.NONNEG:
            idx = np.arange(r0, r0 + blk.dim)
            rows.append(idx), cols.append(idx), vals.append(np.ones(blk.dim))
            ivals.append(np.ones(blk.dim))
            lin.extend(idx.tolist())
        elif blk.kind is ConeKind.SOC:
            idx = np.arange(r0, r0 + blk.dim)
            rows.append(idx), cols.append(idx), vals.append(np.ones(blk.dim))
            ivals.append(np.ones(blk.dim))
            soc.append((r0, blk.dim))
        else:
            rows.append(np.array([r0, r0, r0 + 1, r0 + 1]))
            cols.append(np.array([r0, r0 + 1, r0, r0 + 1]))
            vals.append(np.array([1.0, 1.0, 1.0, -1.0]))
            ivals.append(np.array([0.5, 0.5, 0.5, -0.5]))
            tail = np.arange(r0 + 2, r0 + blk.dim)
            rows.append(tail), cols.append(tail), vals.append(np.full(tail.size, 2.0))
            ivals.append(np.full(tail.size, 0.5))
            soc.append((r0, blk.dim))
    if not m:
        T = sp.csr_matrix((0, 0))
        return T, T, ConeSet(lin, soc, m)
    rc = (np.concatenate(rows), np.concatenate(cols))
    T = sp.csr_matrix((np.concatenate(vals), rc), shape=(m, m))
    Tinv = sp.csr_matrix((np.concatenate(ivals), rc), shape=(m, m))
    return T, Tinv, ConeSet(lin, soc, m)
