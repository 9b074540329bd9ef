from __future__ import annotations

import numpy as np
import pytest

from gaussunravel.correlations import ModeSet, TimeGrid


@pytest.fixture
def three_modes() -> ModeSet:
    return ModeSet(
        np.array([0.6, 0.4, 0.5]),
        np.array([0.8, 1.5, 2.3]),
        np.array([0.5 * np.exp(1j * np.pi / 3), -0.7, 0.3j]),
    )


@pytest.fixture
def small_grid() -> TimeGrid:
    return TimeGrid(0.1, 20)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
