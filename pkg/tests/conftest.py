import numpy as np
import pytest

from lcvx.model import BoundaryMap, ContinuousPlant, CostSpec, DiscreteProblem, MagnitudeFn
from lcvx.pipeline import build_problem
from lcvx.scenario import load_bundled


@pytest.fixture(scope="session")
def moon60():
    return load_bundled("example1")


@pytest.fixture(scope="session")
def artificial():
    return load_bundled("example2")


@pytest.fixture(scope="session")
def moon200():
    return load_bundled("example3")


@pytest.fixture(scope="session")
def moon60_problem(moon60):
    return build_problem(moon60)


@pytest.fixture(scope="session")
def artificial_problem(artificial):
    return build_problem(artificial)


@pytest.fixture
def lander_plant():
    Z, I = np.zeros((3, 3)), np.eye(3)
    return ContinuousPlant(np.block([[Z, I], [Z, Z]]), np.vstack([Z, I]),
                           np.array([0, 0, 0, 0, 0, -1.62]))


@pytest.fixture
def scalar_problem():
    """``x_{i+1} = x_i + u_i`` over two steps, |u| in [1, 2], x_3 = 3."""
    return DiscreteProblem(
        A=[[1.0]], B=[[1.0]], N=2, x_init=[0.0], rho_min=1.0, rho_max=2.0,
        boundary=BoundaryMap.fixed_final_state([3.0]), g=MagnitudeFn.NORM2,
        cost=CostSpec(1.0),
    )


_ACCEPTANCE = pytest.StashKey()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line and fail the test when it does not pass."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
