import json
from pathlib import Path

import pytest

ORACLES = json.loads((Path(__file__).parent / "oracles" / "values.json").read_text())


@pytest.fixture(scope="session")
def oracle():
    return ORACLES


_CRITERIA = {}


@pytest.fixture(scope="session")
def report():
    """Record one acceptance line: report(k, passed, detail)."""

    def rec(k, passed, detail):
        _CRITERIA[k] = (bool(passed), detail)
        return passed

    return rec


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        ok, detail = _CRITERIA[k]
        tr.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
