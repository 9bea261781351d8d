"""Acceptance criteria AC-1 .. AC-9.

Each criterion runs once and prints one ``AC-n: PASS|FAIL`` line; the lines
are also collected into the pytest terminal summary.  Run this file directly
to get just the lines.
"""
import sys

import pytest

from bpchain.acceptance import ALL

RESULTS: dict[str, str] = {}


@pytest.mark.parametrize("name", list(ALL))
def test_acceptance(name):
    res = ALL[name]()
    line = res.line()
    RESULTS[name] = line
    print(line)
    assert res.passed, line


if __name__ == "__main__":
    failed = 0
    for name, fn in ALL.items():
        res = fn()
        print(res.line(), flush=True)
        failed += not res.passed
    sys.exit(1 if failed else 0)
