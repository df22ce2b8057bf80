import math

import numpy as np
import pytest

from stpulse.design import SolverConfig, solve_xz_rotation
from stpulse.noise import ExchangeModel

PI = math.pi


@pytest.fixture(scope="session")
def model():
    return ExchangeModel()


@pytest.fixture(scope="session")
def solver():
    return SolverConfig()


@pytest.fixture(scope="session")
def xz_half_pi(model):
    return solve_xz_rotation(1.0, PI / 2, model)


@pytest.fixture(scope="session")
def gate_builder(model):
    from stpulse.twoqubit import GateBuilder

    return GateBuilder(model)


@pytest.fixture(scope="session")
def naive_builder(model):
    from stpulse.twoqubit import GateBuilder

    return GateBuilder(model, corrected=False)


@pytest.fixture(scope="session")
def corrected_cnot(gate_builder):
    return gate_builder.cnot()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
