import datetime as dt

import numpy as np
import pytest

from augddpg.synthetic import geometric_market


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_market():
    """Three assets, 160 days; enough history for a 64-day QPL lookback."""
    return geometric_market(160, [0.001, 0.0, -0.0005], [0.01, 0.008, 0.012], seed=3)


def write_rows(path, rows, header="Date,Open,High,Low,Close"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return path


def day(i):
    return dt.date(2020, 1, 1) + dt.timedelta(days=i)


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record a PASS/FAIL line for the summary, then assert the verdict."""
    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
