"""Runs every acceptance criterion at full size.

Each test prints one PASS/FAIL line; the lines are also repeated in the
terminal summary so they appear without ``-s``.
"""

import pytest

from poissoncluster.acceptance import CRITERIA, run_criteria

SUMMARY: list[str] = []


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    (result,) = run_criteria([number])
    SUMMARY.append(result.line())
    print(result.line())
    for c in result.checks:
        print(f"    {'ok  ' if c.passed else 'FAIL'} {c.name}: {c.value:.6g} vs {c.reference:.6g} (tol {c.tolerance:.3g})")
    assert result.error is None, result.error
    assert result.passed
