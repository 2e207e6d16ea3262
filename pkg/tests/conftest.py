import numpy as np
import pytest

from meterbench.datagen import Generator, household_ids
from meterbench.domain import MonthSpec

ACCEPTANCE = {}


def record_acceptance(number: int, title: str, outcome: str, detail: str = ""):
    ACCEPTANCE[number] = (title, outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, outcome, detail = ACCEPTANCE[number]
        line = f"criterion {number:2d} {outcome.upper():5s} {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def toy_month():
    return MonthSpec(days=2)


@pytest.fixture(scope="session")
def month_1k():
    ids = household_ids(1000)
    return ids, Generator(seed=42).month(ids, MonthSpec())


def constant_month(month, wh=1000, households=1):
    return np.full((households, month.slots), wh, dtype=np.int64)
