"""Acceptance suite: one test per criterion, one PASS/FAIL line per criterion on the terminal.

Thresholds live in dispersive_lab.acceptance and are not relaxed here.  A
criterion passes when its verdict is "pass" and it finished inside its
runtime limit.
"""

import pytest

from dispersive_lab.acceptance import CRITERIA, run_criterion

SEED = 0


@pytest.mark.slow
@pytest.mark.parametrize("number", [k for k, _, _ in CRITERIA], ids=lambda k: f"criterion_{k:02d}")
def test_criterion(number, capsys):
    row = run_criterion(number, SEED)
    ok = row.verdict == "pass" and row.within_limit
    metrics = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.metrics.items())
    limit = "" if row.limit == float("inf") else f" / {row.limit:.0f}s"
    with capsys.disabled():
        print(f"\n[acceptance] criterion {number:2d} {'PASS' if ok else 'FAIL'}  {row.name}  "
              f"({row.runtime:.1f}s{limit})  {metrics}")
    assert row.verdict == "pass", f"criterion {number} verdict {row.verdict}: {row.metrics}"
    assert row.within_limit, f"criterion {number} took {row.runtime:.1f}s, limit {row.limit:.0f}s"
