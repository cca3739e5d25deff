"""Acceptance criteria, one test each.

Run with ``pytest tests/test_acceptance.py -s`` to see one pass/fail line
per criterion.
"""

import pytest

from metricflows.acceptance import CRITERIA, CRITERION_NAMES, run_criterion


@pytest.mark.parametrize("criterion", CRITERIA, ids=[CRITERION_NAMES[c] for c in CRITERIA])
def test_criterion(criterion):
    result = run_criterion(criterion)
    print()
    print(result.line())
    assert result.passed, result.line()


def test_all_ten_criteria_present():
    assert len(CRITERIA) == 10
    assert len(set(CRITERION_NAMES.values())) == 10
