"""Backend registry so the bundled solver can be cross-checked."""

import numpy as np
import scipy.sparse as sp

from . import ipm
from .program import ConeKind
from .solution import ConeSolution, SolverSettings, Status, certify

_BACKENDS = {}
_CVXOPT_FLOOR = 1e-8


def register_backend(name, fn):
    """Register ``fn(program, settings) -> ConeSolution`` under ``name``."""
    _BACKENDS[name] = fn


def available_backends():
    return sorted(_BACKENDS)


def solve_with_backend(program, backend_name="bundled", settings=None):
    try:
        fn = _BACKENDS[backend_name]
    except KeyError:
        raise KeyError(
            f"unknown backend {backend_name!r}; available: {available_backends()}"
        ) from None
    return fn(program, settings or SolverSettings())


def _cvxopt_backend(program, settings):
    try:
        import cvxopt
        from cvxopt import solvers
    except ImportError:
        raise ImportError(
            "the 'cvxopt' backend needs the optional cvxopt package (pip install cvxopt)"
        ) from None

    # cvxopt wants the orthant rows first, then each Lorentz block
    lin_rows, q_rows, q_dims = [], [], []
    n_rsoc_rows = []
    for blk in program.cones:
        rows = np.arange(blk.start, blk.start + blk.dim)
        if blk.kind is ConeKind.NONNEG:
            lin_rows.extend(rows)
        else:
            q_rows.append(rows)
            q_dims.append(blk.dim)
            n_rsoc_rows.append(blk.kind is ConeKind.RSOC)
    G = program.G.tocsr()
    h = program.h
    blocks_G, blocks_h, blocks_T = [G[lin_rows]], [h[lin_rows]], []
    for rows, rot in zip(q_rows, n_rsoc_rows):
        Gb, hb = G[rows], h[rows]
        if rot:
            T = np.eye(len(rows))
            T[:2, :2] = [[1.0, 1.0], [1.0, -1.0]]
            T[2:, 2:] *= 2.0
        else:
            T = np.eye(len(rows))
        blocks_G.append(sp.csr_matrix(T) @ Gb)
        blocks_h.append(T @ hb)
        blocks_T.append(T)
    Gc = sp.vstack(blocks_G).tocoo()
    hc = np.concatenate(blocks_h)

    def spmat(M):
        M = M.tocoo()
        return cvxopt.spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), size=M.shape)

    # cvxopt hits singular KKT systems or domain errors below ~1e-8
    opts = {
        "show_progress": False,
        "abstol": max(settings.tol_g * 1e-2, _CVXOPT_FLOOR),
        "reltol": max(settings.tol_g * 1e-2, _CVXOPT_FLOOR),
        "feastol": max(min(settings.tol_p, settings.tol_d) * 1e-2, _CVXOPT_FLOOR),
        "maxiters": settings.max_iter,
    }
    kw = {}
    if program.m_eq:
        kw = {"A": spmat(program.E), "b": cvxopt.matrix(program.f)}
    try:
        res = solvers.conelp(
            cvxopt.matrix(program.c), spmat(Gc), cvxopt.matrix(hc),
            dims={"l": len(lin_rows), "q": q_dims, "s": []}, options=opts, **kw,
        )
    except (ValueError, ArithmeticError) as exc:
        nan = np.full(program.n, np.nan)
        return ConeSolution(
            z=nan, equality_duals=np.full(program.m_eq, np.nan),
            cone_duals=np.full(program.m_cone, np.nan),
            slacks=np.full(program.m_cone, np.nan), status=Status.NUMERICAL,
            primal_residual=np.nan, dual_residual=np.nan, gap=np.nan, objective=np.nan,
            backend="cvxopt", info={"error": str(exc)},
        )
    status = {
        "optimal": Status.OPTIMAL,
        "primal infeasible": Status.PRIMAL_INFEASIBLE,
        "dual infeasible": Status.DUAL_INFEASIBLE,
    }.get(res["status"], Status.NUMERICAL)

    def back(v, transform):
        # map a cvxopt-ordered cone vector back to program row order
        out = np.empty(program.m_cone)
        v = np.asarray(v).ravel()
        out[lin_rows] = v[: len(lin_rows)]
        pos = len(lin_rows)
        for rows, T in zip(q_rows, blocks_T):
            out[rows] = transform(T, v[pos:pos + len(rows)])
            pos += len(rows)
        return out

    def vec(key, size):
        v = res.get(key)
        return np.asarray(v).ravel() if v is not None else np.full(size, np.nan)

    x = vec("x", program.n)
    y = vec("y", program.m_eq)
    z = back(vec("z", program.m_cone), lambda T, v: T.T @ v)
    s = back(vec("s", program.m_cone), lambda T, v: np.linalg.solve(T, v))
    if status is Status.OPTIMAL:
        pres, dres, gap, pobj = certify(program, x, y, z, s)
        obj = pobj + program.offset
    else:
        pres = dres = gap = obj = np.nan
    return ConeSolution(
        z=x, equality_duals=y, cone_duals=z, slacks=s, status=status,
        primal_residual=pres, dual_residual=dres, gap=gap, objective=obj,
        iterations=int(res.get("iterations", 0)), backend="cvxopt",
    )


register_backend("bundled", ipm.solve)
register_backend("cvxopt", _cvxopt_backend)
