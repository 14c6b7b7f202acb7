"""The eleven acceptance criteria, one PASS/FAIL line each."""

import pytest

from virasoro_ext.suites import CRITERIA, run_criterion

from conftest import CRITERION_LINES

BUDGET_SECONDS = {1: 30, 2: 5, 3: 120, 4: 60, 5: 30, 6: 120, 7: 180, 8: 30, 9: 120, 10: 60, 11: 120}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    result = run_criterion(number)
    print(result.line())
    CRITERION_LINES.append(result.line())
    assert result.passed, result.details
    assert result.seconds < BUDGET_SECONDS[number], f"took {result.seconds:.1f}s"
