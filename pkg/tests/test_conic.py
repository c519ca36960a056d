import numpy as np
import pytest

from conic_cases import conic_cases
from lcvx.analysis import solve_relaxed
from lcvx.conic import (
    ConeKind,
    SolverSettings,
    Status,
    simple_program,
    solve,
    solve_with_backend,
)
from lcvx.exceptions import DimensionError
from lcvx.model import BoundaryMap, DiscreteProblem
from lcvx.transcribe import transcribe_relaxed

CASES = conic_cases()


def test_thirty_cases_are_present():
    kinds = [name.split(":")[0] for name, *_ in CASES]
    assert len(CASES) == 30
    assert {"lp", "soc", "rsoc", "infeasible", "unbounded"} <= set(kinds)


@pytest.mark.parametrize("name,program,status,objective", CASES, ids=[c[0] for c in CASES])
def test_regression_case(name, program, status, objective):
    sol = solve(program)
    assert sol.status.value == status
    if objective is not None:
        assert sol.primal_residual <= 1e-9
        assert sol.dual_residual <= 1e-9
        assert sol.gap <= 1e-9
        assert sol.objective == pytest.approx(objective, rel=1e-8, abs=1e-8)


def test_min_x_subject_to_x_ge_one():
    sol = solve(simple_program([1.0], G=[[-1.0]], h=[-1.0], cones=[("NONNEG", 1)]))
    assert sol.optimal
    assert sol.z[0] == pytest.approx(1.0, abs=1e-10)


def test_soc_projection():
    prog = simple_program([1, 0, 0], E=[[0, 1, 0], [0, 0, 1]], f=[3, 4], G=-np.eye(3),
                          h=np.zeros(3), cones=[("SOC", 3)])
    assert solve(prog).z[0] == pytest.approx(5.0, abs=1e-10)


def test_repeated_solves_are_bitwise_identical(moon60_problem):
    prog = transcribe_relaxed(moon60_problem)
    a, b = solve(prog), solve(prog)
    assert a.iterations == b.iterations
    for attr in ("z", "equality_duals", "cone_duals", "slacks"):
        np.testing.assert_array_equal(getattr(a, attr), getattr(b, attr))


def test_infeasible_certificates_are_repeatable():
    prog = CASES[-2][1]
    a, b = solve(prog), solve(prog)
    np.testing.assert_array_equal(a.z, b.z)
    assert a.status is b.status is Status.PRIMAL_INFEASIBLE


def _complementarity(program, sol):
    worst = 0.0
    for blk in program.cones:
        s, z = sol.slacks[blk.rows], sol.cone_duals[blk.rows]
        if blk.kind is ConeKind.NONNEG:
            worst = max(worst, float(np.max(np.abs(s * z))))
        else:
            worst = max(worst, abs(float(s @ z)))
    return worst


def test_kkt_certificate_on_lander(moon60_problem):
    prog = transcribe_relaxed(moon60_problem)
    sol = solve(prog)
    assert sol.optimal
    # stationarity, duality gap and per-block complementarity
    stat = prog.c + prog.E.T @ sol.equality_duals + prog.G.T @ sol.cone_duals
    assert np.linalg.norm(stat, np.inf) <= 1e-9 * (1 + np.linalg.norm(prog.c, np.inf))
    dual_obj = -(prog.f @ sol.equality_duals + prog.h @ sol.cone_duals)
    primal_obj = prog.c @ sol.z
    assert abs(primal_obj - dual_obj) <= 1e-9 * (1 + abs(primal_obj))
    assert _complementarity(prog, sol) <= 1e-9 * (1 + abs(primal_obj))


def test_brute_force_two_step_instance():
    a, b, x0, target = 1.1, 0.5, -1.0, 0.5
    problem = DiscreteProblem(
        A=[[a]], B=[[b]], N=2, x_init=[x0], rho_min=1.0, rho_max=2.0,
        boundary=BoundaryMap.fixed_final_state([target]),
    )
    sol = solve_relaxed(problem)
    # nonconvex problem: |u_i| in [1, 2]; the boundary fixes u_2 given u_1
    u1 = np.concatenate([np.arange(-2.0, -1.0 + 1e-12, 1e-4), np.arange(1.0, 2.0 + 1e-12, 1e-4)])
    u2 = (target - a * (a * x0 + b * u1)) / b
    ok = (np.abs(u2) >= 1.0) & (np.abs(u2) <= 2.0)
    best = float(np.min(np.abs(u1[ok]) + np.abs(u2[ok])))
    assert sol.objective <= best + 1e-9
    assert best - sol.objective <= 2e-4


def test_settings_defaults():
    s = SolverSettings()
    assert (s.tol_p, s.tol_d, s.tol_g) == (1e-9, 1e-9, 1e-9)
    assert SolverSettings.uniform(1e-7).tol_g == 1e-7


def test_max_iter_status():
    prog = CASES[20][1]
    sol = solve(prog, SolverSettings(max_iter=2, polish=False))
    assert sol.status is Status.MAX_ITER
    assert np.isfinite(sol.primal_residual)


def test_malformed_program_rejected():
    with pytest.raises(DimensionError):
        simple_program([1.0, 0.0], G=[[1.0, 0.0]], h=[1.0, 2.0], cones=[("NONNEG", 2)])
    with pytest.raises(DimensionError):
        simple_program([1.0], G=[[1.0]], h=[1.0], cones=[("NONNEG", 2)])


def test_unknown_backend():
    with pytest.raises(KeyError):
        solve_with_backend(CASES[0][1], "no-such-backend")


def test_bundled_backend_matches_direct_call():
    prog = CASES[12][1]
    a = solve_with_backend(prog, "bundled")
    b = solve(prog)
    np.testing.assert_array_equal(a.z, b.z)
