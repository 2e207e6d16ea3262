"""Messages exchanged by the coordinator and concentrator services."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..mcb import BillLine
from ..tariff import BucketSet

_ids = itertools.count(1)


@dataclass(frozen=True, kw_only=True)
class Message:
    correlation_id: int = field(default_factory=lambda: next(_ids), compare=False)


@dataclass(frozen=True)
class Shutdown(Message):
    pass


@dataclass(frozen=True)
class Failure(Message):
    error: Exception


# concentrator protocol


@dataclass(frozen=True)
class Collect(Message):
    day: int


@dataclass(frozen=True, eq=False)
class DailyData(Message):
    cn: int
    day: int
    readings: np.ndarray  # (households, 96) Wh

    def __post_init__(self):
        arr = np.array(self.readings, dtype=np.int64)  # private copy, read-only
        arr.setflags(write=False)
        object.__setattr__(self, "readings", arr)


@dataclass(frozen=True)
class InsertDone(Message):
    cn: int
    day: int


@dataclass(frozen=True)
class BillRequest(Message):
    bucket_set: BucketSet


@dataclass(frozen=True)
class BillResponse(Message):
    cn: int
    lines: tuple[BillLine, ...]


# coordinator control


@dataclass(frozen=True)
class RunDay(Message):
    day: int


@dataclass(frozen=True)
class NextDay(Message):
    day: int


@dataclass(frozen=True)
class DayTimeout(Message):
    day: int


@dataclass(frozen=True)
class DayDone(Message):
    day: int
    seconds: float


@dataclass(frozen=True)
class RunMonth(Message):
    pass


@dataclass(frozen=True)
class MonthDone(Message):
    day_seconds: tuple[float, ...]


@dataclass(frozen=True)
class BillMonth(Message):
    bucket_set: BucketSet
    worker_count: int = 1


@dataclass(frozen=True)
class BillDone(Message):
    lines: tuple[BillLine, ...]
    seconds: float
    errors: tuple = ()
