import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from droopsat.model import CostWeights, MicrogridParams, Scenario, table1_params

settings.register_profile(
    "repo", derandomize=True, deadline=None, max_examples=200,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def storage_only(ts=0.25, x=(0.0, 6.0)):
    """One storage unit with chi=1, p in [-1, 1], u in [-5, 5]."""
    return MicrogridParams(
        n_conv=0, n_storage=1, n_renewable=0, n_load=1,
        u_min=[-5.0], u_max=[5.0], p_min=[-1.0], p_max=[1.0],
        x_min=[x[0]], x_max=[x[1]], chi=[1.0], ts=ts,
        weights=CostWeights(c_t=[], c_on=[], c_sw=[], c_s=[0.9]),
        renewable_cap=[],
    )


def three_unit(ts=0.25):
    """Conventional [0.2, 1], storage [-1, 1], renewable [0, 1]; all chi=1."""
    return MicrogridParams(
        n_conv=1, n_storage=1, n_renewable=1, n_load=1,
        u_min=[-5.0] * 3, u_max=[5.0] * 3, p_min=[0.2, -1.0, 0.0], p_max=[1.0, 1.0, 1.0],
        x_min=[0.0], x_max=[6.0], chi=[1.0, 1.0, 1.0], ts=ts,
        weights=CostWeights(c_t=[1.0], c_on=[0.2], c_sw=[0.3], c_s=[0.9]),
        renewable_cap=[1.0],
    )


@pytest.fixture
def table1():
    return table1_params()


@pytest.fixture
def storage_params():
    return storage_only()


@pytest.fixture
def toy_params():
    return three_unit()


def flat_scenario(params, w_row, horizon, x0, delta0=None):
    w = np.tile(np.asarray(w_row, float), (horizon, 1))
    return Scenario(w_min=w, w_max=w, x0=x0,
                    delta0=np.zeros(params.n_conv, int) if delta0 is None else delta0)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
