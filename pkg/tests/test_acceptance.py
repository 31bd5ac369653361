"""Acceptance battery: every criterion at its stated tolerance.

Each criterion is one test; the PASS/FAIL lines are also collected and
printed in the terminal summary.
"""

import pytest

from jkosplit.acceptance import CRITERION_KEYS, AcceptanceContext, run_criterion

RESULTS = {}


@pytest.fixture(scope="module")
def ctx():
    return AcceptanceContext()


@pytest.mark.slow
@pytest.mark.parametrize("key", CRITERION_KEYS)
def test_criterion(ctx, key):
    res = run_criterion(key, ctx)
    RESULTS[key] = res
    print(res.line())
    assert res.passed, res.line()


def test_battery_is_complete():
    assert len(CRITERION_KEYS) == 11
