import numpy as np
import pytest

from aoi_lq import GameSpec, solve_game_riccati

# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []

SCALAR = dict(A=0.5, B1=1.0, B2=0.5, Q=4.0, R1=1.0, R2=0.5)


@pytest.fixture(scope="session")
def scalar_spec():
    return GameSpec(**SCALAR)


@pytest.fixture(scope="session")
def scalar_sol(scalar_spec):
    return solve_game_riccati(scalar_spec)


def scalar_u(delta, h=0.1):
    """Closed-form age cost of the scalar system: 16 (e^{5 d h} - 1) / 5 with A_tilde = 2.5."""
    return 16.0 * np.expm1(5.0 * np.asarray(delta, dtype=float) * h) / 5.0


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
