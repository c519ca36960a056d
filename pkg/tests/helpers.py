"""Instance generators and independent oracles shared by the tests."""

import math

import numpy as np
from scipy.integrate import quad_vec

from lcvx.linalg import controllability_rank
from lcvx.model import BoundaryMap, CostSpec, DiscreteProblem, MagnitudeFn, propagate


def taylor_expm(M, terms=200):
    """Truncated power series of ``exp(M)`` with scaling and squaring by hand.

    Scaling keeps every partial sum well inside the radius where 200 terms
    are exact to machine precision.
    """
    M = np.asarray(M, float)
    nrm = np.linalg.norm(M, 1)
    k = max(0, math.ceil(math.log2(nrm))) if nrm > 1 else 0
    X = M / 2.0 ** k
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for j in range(1, terms):
        term = term @ X / j
        out = out + term
    for _ in range(k):
        out = out @ out
    return out


def quad_zoh(A_c, B_c, drift, dt):
    """``int_0^dt exp(A_c tau) dtau [B_c, w]`` by adaptive quadrature."""
    A_c = np.asarray(A_c, float)
    rhs = np.column_stack([np.asarray(B_c, float), np.asarray(drift, float)])
    integral, _ = quad_vec(lambda tau: taylor_expm(A_c * tau) @ rhs, 0.0, dt,
                           epsabs=1e-14, epsrel=1e-13)
    return integral[:, :-1], integral[:, -1]


def random_stable_plant(rng, n=None):
    n = n or int(rng.integers(2, 6))
    M = rng.normal(size=(n, n))
    A_c = M - (np.max(np.linalg.eigvals(M).real) + rng.uniform(0.1, 1.0)) * np.eye(n)
    B_c = rng.normal(size=(n, int(rng.integers(1, 3))))
    return A_c, B_c, rng.normal(size=n)


def random_instance(rng):
    """A random controllable LCvx instance that is feasible by construction.

    The eigenvalues of ``A`` have moduli in [0.7, 1.2] and its eigenvector
    matrix is well conditioned, so the dual chain neither blows up nor
    decays below solver precision over 15 steps.

    Returns:
        (problem, u_ref) where ``u_ref`` is a control sequence feasible for
        the nonconvex problem.
    """
    while True:
        n_x = int(rng.integers(2, 5))
        n_u = int(rng.integers(1, 3))
        N = int(rng.integers(n_x + 1, 16))
        lam = rng.choice([-1.0, 1.0], size=n_x) * rng.uniform(0.7, 1.2, size=n_x)
        V = np.eye(n_x) + 0.3 * rng.normal(size=(n_x, n_x))
        if np.linalg.cond(V) > 20:
            continue
        A = V @ np.diag(lam) @ np.linalg.inv(V)
        B = rng.normal(size=(n_x, n_u))
        if controllability_rank(A, B) == n_x:
            break
    g = MagnitudeFn(str(rng.choice(["NORM2", "NORM2_SQ"])))
    rho_min, rho_max = 1.0, float(rng.uniform(2.0, 4.0))
    dirs = rng.normal(size=(N, n_u))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    u_ref = dirs * g.radius(rng.uniform(rho_min, rho_max, size=N))[:, None]
    x0 = rng.normal(size=n_x)
    x_ref = propagate(A, B, np.zeros(n_x), x0, u_ref)
    n_G = int(rng.integers(1, n_x + 1))
    G = rng.normal(size=(n_G, n_x))
    terminal = rng.normal(size=n_x) if n_G < n_x else None
    problem = DiscreteProblem(
        A=A, B=B, N=N, x_init=x0, rho_min=rho_min, rho_max=rho_max,
        boundary=BoundaryMap(G, G @ x_ref[-1]), g=g,
        cost=CostSpec(float(rng.uniform(0.5, 2.0)), terminal),
    )
    return problem, u_ref


def random_instances(count, seed=2024):
    rng = np.random.default_rng(seed)
    return [random_instance(rng) for _ in range(count)]
