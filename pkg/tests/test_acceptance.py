"""All ten acceptance criteria at their stated tolerances; one PASS/FAIL line each."""

from __future__ import annotations

import pytest

from gaussunravel.acceptance import CRITERIA, run_criterion

ACCEPTANCE_LINES: list[str] = []


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_acceptance_criterion(number):
    res = run_criterion(number)
    line = res.line()
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert res.passed, line
