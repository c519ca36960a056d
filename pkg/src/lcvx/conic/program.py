"""Standard-form cone programs.

A program is::

    min  c' z + offset
    s.t. E z = f
         h - G z in K

where ``K`` is a product of the blocks listed in ``cones``, in row order.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..exceptions import DimensionError


class ConeKind(str, Enum):
    NONNEG = "NONNEG"
    #: ``{(t, x) : ||x|| <= t}``
    SOC = "SOC"
    #: ``{(p, q, x) : ||x||^2 <= p q, p >= 0, q >= 0}``
    RSOC = "RSOC"


@dataclass(frozen=True)
class ConeBlock:
    kind: ConeKind
    start: int
    dim: int

    @property
    def rows(self):
        return slice(self.start, self.start + self.dim)


@dataclass(frozen=True, eq=False)
class ConeProgram:
    c: np.ndarray
    E: sp.csr_matrix
    f: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    cones: tuple
    offset: float = 0.0
    layout: Optional[object] = None
    eq_labels: Optional[tuple] = None

    def __post_init__(self):
        c = np.asarray(self.c, float).ravel()
        n = c.size
        E = sp.csr_matrix(self.E, shape=self.E.shape) if self.E is not None else sp.csr_matrix((0, n))
        G = sp.csr_matrix(self.G, shape=self.G.shape) if self.G is not None else sp.csr_matrix((0, n))
        f = np.asarray(self.f, float).ravel()
        h = np.asarray(self.h, float).ravel()
        if E.shape != (f.size, n):
            raise DimensionError(f"E is {E.shape}, expected ({f.size}, {n})")
        if G.shape != (h.size, n):
            raise DimensionError(f"G is {G.shape}, expected ({h.size}, {n})")
        pos = 0
        for blk in self.cones:
            if blk.start != pos or blk.dim < 1:
                raise DimensionError("cone blocks must partition the inequality rows in order")
            if blk.kind is ConeKind.SOC and blk.dim < 2:
                raise DimensionError("SOC blocks need dimension >= 2")
            if blk.kind is ConeKind.RSOC and blk.dim < 3:
                raise DimensionError("RSOC blocks need dimension >= 3")
            pos += blk.dim
        if pos != h.size:
            raise DimensionError(f"cone blocks cover {pos} rows, G has {h.size}")
        if self.eq_labels is not None and len(self.eq_labels) != f.size:
            raise DimensionError("one equality label per equality row is required")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "cones", tuple(self.cones))

    @property
    def n(self):
        return self.c.size

    @property
    def m_eq(self):
        return self.f.size

    @property
    def m_cone(self):
        return self.h.size

    def slack(self, z):
        return self.h - self.G @ z

    def cone_violation(self, s):
        """Largest distance-like violation of ``s in K`` over all blocks."""
        worst = 0.0
        for blk in self.cones:
            v = s[blk.rows]
            if blk.kind is ConeKind.NONNEG:
                worst = max(worst, float(np.max(-v, initial=0.0)))
            elif blk.kind is ConeKind.SOC:
                worst = max(worst, float(np.linalg.norm(v[1:]) - v[0]))
            else:
                p, q, w = v[0], v[1], v[2:]
                worst = max(worst, -p, -q, float(w @ w - p * q))
        return worst


def simple_program(c, E=None, f=None, G=None, h=None, cones=()):
    """Build a :class:`ConeProgram` from dense pieces (handy in tests)."""
    c = np.asarray(c, float).ravel()
    n = c.size
    E = np.zeros((0, n)) if E is None else np.atleast_2d(np.asarray(E, float))
    f = np.zeros(0) if f is None else np.asarray(f, float).ravel()
    G = np.zeros((0, n)) if G is None else np.atleast_2d(np.asarray(G, float))
    h = np.zeros(0) if h is None else np.asarray(h, float).ravel()
    blocks, pos = [], 0
    for kind, dim in cones:
        blocks.append(ConeBlock(ConeKind(kind), pos, dim))
        pos += dim
    return ConeProgram(c, sp.csr_matrix(E), f, sp.csr_matrix(G), h, tuple(blocks))
