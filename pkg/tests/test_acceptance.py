"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -s`` or
``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import time

import pytest

from bifconj.suites import run_suite

# criterion -> (title, suites, runtime budget in seconds)
CRITERIA = {
    1: ("rational recursion: closed form vs iteration", ["recursion"], 1.0),
    2: ("conjugacy residual <= 1e-10, all regions", ["conjugacy-residual"], 30.0),
    3: ("envelope sandwiches, 500 samples each", ["tc-envelopes", "pf-envelopes"], 60.0),
    4: ("explicit-constant bounds", ["tc-bounds", "pf-bounds"], 120.0),
    5: ("fixed-point gap optimality", ["optimality"], 5.0),
    6: ("order fit slope within p +- 0.15", ["order-fit"], 60.0),
    7: ("RK preservation of pitchfork conditions", ["rk-preservation"], 5.0),
    8: ("counterexample classification", ["classification"], 10.0),
    9: ("model-problem alignment and orbit plateau", ["section5"], 60.0),
    10: ("z_n(0) decay and alpha monotonicity", ["zn-decay"], 30.0),
}


def evaluate(criterion: int, seed: int = 0):
    title, suites, budget = CRITERIA[criterion]
    t0 = time.perf_counter()
    reports = [r for name in suites for r in run_suite(name, seed)]
    elapsed = time.perf_counter() - t0
    failed = [r for r in reports if not r.passed]
    ok = bool(reports) and not failed and elapsed < budget
    line = (f"criterion {criterion:2d} {'PASS' if ok else 'FAIL'}: {title} "
            f"[{len(reports) - len(failed)}/{len(reports)} checks, {elapsed:.1f}s / {budget:.0f}s]")
    return ok, line, failed, elapsed, budget


@pytest.mark.parametrize("criterion", sorted(CRITERIA))
def test_criterion(criterion, capsys):
    ok, line, failed, elapsed, budget = evaluate(criterion)
    with capsys.disabled():
        print("\n" + line)
    assert not failed, [r.to_dict() for r in failed[:3]]
    assert elapsed < budget, f"runtime {elapsed:.1f}s exceeds {budget:.0f}s"
    assert ok


if __name__ == "__main__":
    results = [evaluate(c) for c in sorted(CRITERIA)]
    for ok, line, *_ in results:
        print(line)
    raise SystemExit(0 if all(r[0] for r in results) else 1)
