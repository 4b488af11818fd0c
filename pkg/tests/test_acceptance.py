"""Acceptance criteria 1 to 11: one pass/fail line per criterion.

The lines are printed as each test runs (visible with ``-s``) and again in
the terminal summary by ``conftest.py``.
"""
import pytest

from heatflow import acceptance

RESULTS: dict[int, acceptance.CriterionResult] = {}


def _fmt(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


@pytest.mark.acceptance
@pytest.mark.parametrize("n", sorted(acceptance.CRITERIA))
def test_criterion(n):
    res = acceptance.run_criterion(n)
    RESULTS[n] = res
    metrics = ", ".join(f"{k}={_fmt(v)}" for k, v in res.metrics.items())
    print(f"\n{res.line()}  {metrics}")
    failed = [k for k, ok in res.checks.items() if not ok]
    assert res.passed, f"criterion {n} failed checks: {failed}; metrics: {res.metrics}"
