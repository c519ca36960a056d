"""Thirty small cone programs with independently known answers.

Each case is ``(name, program, status, objective)``; the objective is
``None`` for infeasible and unbounded programs. LP optima come from
HiGHS through :func:`scipy.optimize.linprog`, everything else is closed
form.
"""

import numpy as np
from scipy.optimize import linprog

from lcvx.conic import simple_program


def _box_lp(c, E, f, lb, ub):
    n = len(c)
    G = np.vstack([-np.eye(n), np.eye(n)])
    h = np.concatenate([-np.asarray(lb, float), np.asarray(ub, float)])
    return simple_program(c, E, f, G, h, [("NONNEG", 2 * n)])


def _lp_cases():
    cases = [
        ("lp: x >= 1", simple_program([1.0], G=[[-1.0]], h=[-1.0], cones=[("NONNEG", 1)]), 1.0),
        ("lp: x1 + 2 x2 = 4", _box_lp([1.0, 1.0], [[1.0, 2.0]], [4.0], [0, 0], [10, 10]), 2.0),
        ("lp: degenerate simplex face",
         simple_program([-1.0, -1.0], G=[[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]], h=[1.0, 0.0, 0.0],
                        cones=[("NONNEG", 3)]), -1.0),
    ]
    c = np.array([0.5, -2.0, 1.5, -0.25])
    cases.append(("lp: unit box", _box_lp(c, None, None, -np.ones(4), np.ones(4)),
                  -float(np.abs(c).sum())))
    rng = np.random.default_rng(808)
    for k in range(6):
        n, m = int(rng.integers(3, 8)), int(rng.integers(1, 3))
        E = rng.normal(size=(m, n))
        x_feas = rng.uniform(-0.5, 0.5, size=n)
        f = E @ x_feas
        c = rng.normal(size=n)
        ref = linprog(c, A_eq=E, b_eq=f, bounds=[(-1, 1)] * n, method="highs")
        cases.append((f"lp: random box {k}", _box_lp(c, E, f, -np.ones(n), np.ones(n)), ref.fun))
    return cases


def _soc_cases():
    cases = [(
        "soc: ||(3,4)|| <= t",
        simple_program([1, 0, 0], E=[[0, 1, 0], [0, 0, 1]], f=[3, 4], G=-np.eye(3), h=np.zeros(3),
                       cones=[("SOC", 3)]),
        5.0,
    )]
    rng = np.random.default_rng(909)
    for k in range(3):
        # min c'x s.t. ||x - x0|| <= r  ->  c'x0 - r ||c||
        n = int(rng.integers(2, 6))
        c, x0, r = rng.normal(size=n), rng.normal(size=n), float(rng.uniform(0.5, 2.0))
        G = np.vstack([np.zeros((1, n)), -np.eye(n)])
        h = np.concatenate([[r], -x0])
        cases.append((f"soc: linear over ball {k}", simple_program(c, G=G, h=h, cones=[("SOC", n + 1)]),
                      float(c @ x0 - r * np.linalg.norm(c))))
    for k in range(4):
        # distance from p to {x : M x = b}
        n, m = int(rng.integers(3, 6)), int(rng.integers(1, 3))
        M, p = rng.normal(size=(m, n)), rng.normal(size=n)
        b = rng.normal(size=m)
        dist = float(np.linalg.norm(np.linalg.lstsq(M, M @ p - b, rcond=None)[0]))
        E = np.hstack([np.zeros((m, 1)), M])
        G = -np.eye(n + 1)
        h = np.concatenate([[0.0], -p])
        cases.append((f"soc: distance to affine set {k}",
                      simple_program(np.eye(n + 1)[0], E=E, f=b, G=G, h=h, cones=[("SOC", n + 1)]),
                      dist))
    for k in range(2):
        # min ||x - a|| + ||x - b||  ->  ||a - b||   (variables t1, t2, x)
        n = 3
        a, b = rng.normal(size=n), rng.normal(size=n)
        c = np.concatenate([[1.0, 1.0], np.zeros(n)])
        G1 = np.hstack([-np.eye(n + 1)[:, :1], np.zeros((n + 1, 1)), np.vstack([np.zeros(n), -np.eye(n)])])
        G2 = np.hstack([np.zeros((n + 1, 1)), -np.eye(n + 1)[:, :1], np.vstack([np.zeros(n), -np.eye(n)])])
        h = np.concatenate([[0.0], -a, [0.0], -b])
        cases.append((f"soc: two-point Fermat {k}",
                      simple_program(c, G=np.vstack([G1, G2]), h=h, cones=[("SOC", n + 1), ("SOC", n + 1)]),
                      float(np.linalg.norm(a - b))))
    return cases


def _rsoc(n_w):
    """Rows of ``(p, 1, w)`` in RSOC for variables ``(p, w)``."""
    G = np.zeros((n_w + 2, n_w + 1))
    G[0, 0] = -1.0
    G[2:, 1:] = -np.eye(n_w)
    h = np.zeros(n_w + 2)
    h[1] = 1.0
    return G, h


def _rsoc_cases():
    cases = []
    G, h = _rsoc(2)
    cases.append(("rsoc: ||(1,2)||^2 <= p",
                  simple_program([1, 0, 0], E=[[0, 1, 0], [0, 0, 1]], f=[1, 2], G=G, h=h,
                                 cones=[("RSOC", 4)]), 5.0))
    cases.append(("rsoc: 9 <= p q, min p + q",
                  simple_program([1, 1, 0], E=[[0, 0, 1]], f=[3], G=-np.eye(3), h=np.zeros(3),
                                 cones=[("RSOC", 3)]), 6.0))
    cases.append(("rsoc: 1 <= x s, min x + s",
                  simple_program([1, 1], G=np.vstack([-np.eye(2), np.zeros((1, 2))]), h=[0, 0, 1],
                                 cones=[("RSOC", 3)]), 2.0))
    rng = np.random.default_rng(1010)
    a, b = rng.normal(size=3), 1.7
    G, h = _rsoc(3)
    cases.append(("rsoc: min ||x||^2 on a hyperplane",
                  simple_program([1, 0, 0, 0], E=[np.concatenate([[0], a])], f=[b], G=G, h=h,
                                 cones=[("RSOC", 5)]), float(b * b / (a @ a))))
    cvec = rng.normal(size=3)
    cases.append(("rsoc: min x'x - 2 c'x",
                  simple_program(np.concatenate([[1], -2 * cvec]), G=G, h=h, cones=[("RSOC", 5)]),
                  -float(cvec @ cvec)))
    for k in range(2):
        # least squares min ||M x - y||^2 with variables (p, x, r), r = M x - y
        m, n = 5, 2
        M, y = rng.normal(size=(m, n)), rng.normal(size=m)
        res = np.linalg.lstsq(M, y, rcond=None)[0]
        best = float(np.sum((M @ res - y) ** 2))
        nv = 1 + n + m
        E = np.hstack([np.zeros((m, 1)), M, -np.eye(m)])
        G = np.zeros((m + 2, nv))
        G[0, 0] = -1.0
        G[2:, 1 + n:] = -np.eye(m)
        h = np.zeros(m + 2)
        h[1] = 1.0
        cases.append((f"rsoc: least squares {k}",
                      simple_program(np.eye(nv)[0], E=E, f=y, G=G, h=h, cones=[("RSOC", m + 2)]),
                      best))
    # min (x - 3)^2 s.t. x <= 1: variables (p, x, w = x - 3)
    G = np.array([[-1, 0, 0], [0, 0, 0], [0, 0, -1], [0, 1, 0]], float)
    cases.append(("rsoc: clipped quadratic",
                  simple_program([1, 0, 0], E=[[0, 1, -1]], f=[3], G=G, h=[0, 1, 0, 1],
                                 cones=[("RSOC", 3), ("NONNEG", 1)]), 4.0))
    return cases


def conic_cases():
    cases = [(n, p, "OPTIMAL", v) for n, p, v in _lp_cases() + _soc_cases() + _rsoc_cases()]
    cases.append(("infeasible: x >= 1 and x <= 0",
                  simple_program([1.0], G=[[-1.0], [1.0]], h=[-1.0, 0.0], cones=[("NONNEG", 2)]),
                  "PRIMAL_INFEASIBLE", None))
    cases.append(("unbounded: min -x, x >= 0",
                  simple_program([-1.0], G=[[-1.0]], h=[0.0], cones=[("NONNEG", 1)]),
                  "DUAL_INFEASIBLE", None))
    return cases
