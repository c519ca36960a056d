"""Bundled primal-dual interior-point solver.

Homogeneous self-dual embedding of the program and its dual::

    E' y + G' z + c tau = 0
    E x - f tau         = 0
    s + G x - h tau     = 0
    kappa + c' x + f' y + h' z = 0,     s, z in K,  tau, kappa >= 0

solved with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
The scaled KKT system is factored with a sparse LU plus a tiny static
regularization, and every solve is polished by iterative refinement
against the unregularized matrix.
"""

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import lorentz_form
from .polish import polish
from .solution import ConeSolution, SolverSettings, Status, certify

log = logging.getLogger(__name__)

_STEP_FRACTION = 0.99
_REG = 1e-13
_REFINE_STEPS = 20
#: residual level below which the final iterate is handed to the polisher
_POLISH_FROM = 1e-5


def _equilibrate(E, G, cones, iters=15):
    """Ruiz scaling; Lorentz blocks share one row factor so the cone is preserved."""
    n = E.shape[1]
    D = np.ones(n)
    RE = np.ones(E.shape[0])
    RG = np.ones(G.shape[0])
    Es, Gs = E.copy(), G.copy()
    for _ in range(iters):
        stack = sp.vstack([Es, Gs]).tocsc()
        cnorm = np.sqrt(abs(stack).max(axis=0).toarray().ravel())
        cnorm[cnorm < 1e-8] = 1.0
        rE = np.sqrt(abs(Es).max(axis=1).toarray().ravel()) if Es.shape[0] else np.zeros(0)
        rG = np.sqrt(abs(Gs).max(axis=1).toarray().ravel()) if Gs.shape[0] else np.zeros(0)
        for idx in cones.soc:
            rG[idx] = rG[idx].max(axis=1, keepdims=True)
        rE[rE < 1e-8] = 1.0
        rG[rG < 1e-8] = 1.0
        D /= cnorm
        RE /= rE
        RG /= rG
        Es = sp.diags(1 / rE) @ Es @ sp.diags(1 / cnorm)
        Gs = sp.diags(1 / rG) @ Gs @ sp.diags(1 / cnorm)
    return Es.tocsr(), Gs.tocsr(), D, RE, RG


class _KKT:
    """Factorization of ``[[0, E', G'], [E, 0, 0], [G, 0, -W^2]]``."""

    def __init__(self, E, G, W2):
        n, m, p = E.shape[1], E.shape[0], G.shape[0]
        self.sizes = (n, m, p)
        K = sp.bmat(
            [[None, E.T, G.T], [E, None, None], [G, None, -W2]],
            format="csc",
        )
        if K.shape != (n + m + p, n + m + p):
            K = sp.csc_matrix(K, shape=(n + m + p, n + m + p))
        self.K = K
        reg = np.concatenate([np.full(n, _REG), np.full(m + p, -_REG)])
        self.lu = spla.splu((K + sp.diags(reg)).tocsc(), permc_spec="COLAMD")

    def solve(self, rhs):
        sol = self.lu.solve(rhs)
        best, best_norm = sol, np.inf
        for _ in range(_REFINE_STEPS):
            res = rhs - self.K @ sol
            rn = np.linalg.norm(res, np.inf)
            if rn >= 0.5 * best_norm:
                break
            if rn < best_norm:
                best, best_norm = sol, rn
            if rn <= 1e-15 * (1 + np.linalg.norm(rhs, np.inf)):
                break
            sol = sol + self.lu.solve(res)
        return best

    def split(self, v):
        n, m, _ = self.sizes
        return v[:n], v[n:n + m], v[n + m:]


def solve(program, settings=None):
    """Solve a :class:`~lcvx.conic.program.ConeProgram` with the bundled IPM."""
    settings = settings or SolverSettings()
    T, Tinv, cones = lorentz_form(program)
    E0, f0, c0 = program.E, program.f, program.c
    G0 = (T @ program.G).tocsr() if program.m_cone else program.G
    h0 = T @ program.h if program.m_cone else program.h

    E, G, D, RE, RG = _equilibrate(E0, G0, cones)
    c = D * c0
    f = RE * f0
    h = RG * h0
    n, m, p = c.size, f.size, h.size

    def unscale(x, y, z, s):
        """Back to the caller's variables and (rotated) cone coordinates."""
        if p:
            return D * x, RE * y, T.T @ (RG * z), Tinv @ (s / RG)
        return D * x, RE * y, z, s

    # initial point from two least-squares solves with W = I
    kkt = _KKT(E, G, sp.identity(p, format="csc"))
    x, _, r = kkt.split(kkt.solve(np.concatenate([np.zeros(n), f, h])))
    s = cones.shift_interior(-r)
    _, y, z = kkt.split(kkt.solve(np.concatenate([-c, np.zeros(m), np.zeros(p)])))
    z = cones.shift_interior(z)
    tau, kappa = 1.0, 1.0
    e = cones.identity()

    status = Status.MAX_ITER
    it = 0
    stall = 0
    best = None
    for it in range(settings.max_iter + 1):
        # convergence tests in original coordinates
        xo, yo, zo, so = unscale(x, y, z, s)
        pres, dres, gap, pobj = certify(program, xo / tau, yo / tau, zo / tau, so / tau)
        score = max(pres / settings.tol_p, dres / settings.tol_d, gap / settings.tol_g)
        if best is None or score < best[0]:
            best = (score, x.copy(), y.copy(), z.copy(), s.copy(), tau, pres, dres, gap)
        if pres <= settings.tol_p and dres <= settings.tol_d and gap <= settings.tol_g:
            status = Status.OPTIMAL
            break
        by_hz = float(f0 @ yo + program.h @ zo)
        if by_hz < 0:
            cert = np.linalg.norm(E0.T @ yo + program.G.T @ zo) / -by_hz
            if cert <= settings.tol_inf:
                status = Status.PRIMAL_INFEASIBLE
                break
        cx = float(c0 @ xo)
        if cx < 0:
            r1 = np.linalg.norm(E0 @ xo) if m else 0.0
            r2 = np.linalg.norm(program.G @ xo + so) if p else 0.0
            if max(r1, r2) / -cx <= settings.tol_inf:
                status = Status.DUAL_INFEASIBLE
                break
        if it == settings.max_iter:
            break

        mu = (s @ z + kappa * tau) / (cones.degree + 1)
        r_x = E.T @ y + G.T @ z + c * tau
        r_y = E @ x - f * tau
        r_z = s + G @ x - h * tau
        r_tau = kappa + c @ x + f @ y + h @ z

        try:
            W = cones.nt_scaling(s, z)
            kkt = _KKT(E, G, W.squared_matrix())
        except (RuntimeError, FloatingPointError, ValueError) as exc:
            log.debug("factorization failed at iteration %d: %s", it, exc)
            status = Status.NUMERICAL
            break
        lam = W.lam
        x1, y1, z1 = kkt.split(kkt.solve(np.concatenate([-c, f, h])))
        denom = kappa + tau * np.dot(W.apply(z1), W.apply(z1))

        def direction(sig, r_c, r_kappa):
            v = cones.divide(lam, r_c)
            Wv = W.apply(v)
            k = 1.0 - sig
            rhs = np.concatenate([-k * r_x, -k * r_y, -k * r_z - Wv])
            x2, y2, z2 = kkt.split(kkt.solve(rhs))
            dtau = (r_kappa + tau * k * r_tau + tau * (c @ x2 + f @ y2 + h @ z2)) / denom
            dx, dy, dz = x2 + dtau * x1, y2 + dtau * y1, z2 + dtau * z1
            # scaled directions: W^{-1} ds and W dz
            dz_s = W.apply(dz)
            ds_s = v - dz_s
            dkappa = -k * r_tau - (c @ dx + f @ dy + h @ dz)
            return dx, dy, dz, ds_s, dz_s, dtau, dkappa

        def step_length(ds_s, dz_s, dtau, dkappa):
            a = min(cones.max_step(lam, ds_s), cones.max_step(lam, dz_s))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        _, _, _, ds_a, dz_a, dtau_a, dkappa_a = direction(
            0.0, -cones.product(lam, lam), -kappa * tau
        )
        a_aff = min(1.0, step_length(ds_a, dz_a, dtau_a, dkappa_a))
        sig = min(1.0, max(0.0, (1.0 - a_aff) ** 3))
        # corrector
        r_c = -cones.product(lam, lam) - cones.product(ds_a, dz_a) + sig * mu * e
        r_k = -kappa * tau - dtau_a * dkappa_a + sig * mu
        dx, dy, dz, ds_s, dz_s, dtau, dkappa = direction(sig, r_c, r_k)
        alpha = min(1.0, _STEP_FRACTION * step_length(ds_s, dz_s, dtau, dkappa))
        log.debug("it %d mu %.3e a_aff %.3e sig %.3e alpha %.3e tau %.3e kappa %.3e",
                  it, mu, a_aff, sig, alpha, tau, kappa)
        if not np.isfinite(alpha) or alpha < 1e-12:
            status = Status.NUMERICAL
            break

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * W.apply(ds_s)
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            status = Status.NUMERICAL
            break
        if alpha < 1e-6:
            stall += 1
            if stall >= 5:
                status = Status.NUMERICAL
                break
        else:
            stall = 0

    if status in (Status.PRIMAL_INFEASIBLE, Status.DUAL_INFEASIBLE):
        xo, yo, zo, so = unscale(x, y, z, s)
        if status is Status.PRIMAL_INFEASIBLE:
            scale = -float(f0 @ yo + program.h @ zo)
            yo, zo = yo / scale, zo / scale
            xo, so = np.full(n, np.nan), np.full(p, np.nan)
        else:
            scale = -float(c0 @ xo)
            xo, so = xo / scale, so / scale
            yo, zo = np.full(m, np.nan), np.full(p, np.nan)
        return ConeSolution(
            z=xo, equality_duals=yo, cone_duals=zo, slacks=so, status=status,
            primal_residual=np.nan, dual_residual=np.nan, gap=np.nan,
            objective=np.nan, iterations=it, backend="bundled",
        )

    if status is not Status.OPTIMAL:
        _, x, y, z, s, tau, pres, dres, gap = best
    xo, yo, zo, so = unscale(x, y, z, s)
    xo, yo, zo, so = xo / tau, yo / tau, zo / tau, so / tau
    pres, dres, gap, pobj = certify(program, xo, yo, zo, so)
    polished = False
    if settings.polish and max(pres, dres, gap) <= _POLISH_FROM:
        pol = polish(program, xo, yo, zo)
        if pol is not None and (
            pol.primal_residual <= settings.tol_p
            and pol.dual_residual <= settings.tol_d
            and pol.gap <= settings.tol_g
        ):
            xo, yo, zo, so = pol.z, pol.y, pol.zc, pol.s
            pres, dres, gap, pobj = pol.primal_residual, pol.dual_residual, pol.gap, pol.objective
            status = Status.OPTIMAL
            polished = True
    return ConeSolution(
        z=xo,
        equality_duals=yo,
        cone_duals=zo,
        slacks=so,
        status=status,
        primal_residual=pres,
        dual_residual=dres,
        gap=gap,
        objective=pobj + program.offset,
        iterations=it,
        backend="bundled",
        info={"polished": polished},
    )

