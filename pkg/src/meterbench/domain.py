"""Core value types: households, meter readings and month/slot arithmetic.

Energy is carried as integer watt-hours (milli-kWh) everywhere inside the
package so that bills aggregated in any order are exactly equal. The
``Decimal`` views on the public types are for display and for the oracle.
"""

from __future__ import annotations

import calendar
import enum
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Sequence

import numpy as np

SLOTS_PER_DAY = 96
MINUTES_PER_SLOT = 15
KWH_QUANTUM = Decimal("0.001")
WH_PER_KWH = 1000


class MeterError(Exception):
    """Base class for every error raised by the package."""


class InvalidTime(MeterError, ValueError):
    pass


class ValidationError(MeterError, ValueError):
    pass


class MissingSlot(ValidationError):
    def __init__(self, slot: int):
        super().__init__(f"missing reading for slot {slot}")
        self.slot = slot


class DuplicateSlot(ValidationError):
    def __init__(self, slot: int):
        super().__init__(f"duplicate reading for slot {slot}")
        self.slot = slot


class MixedHouseholds(ValidationError):
    def __init__(self, households: Iterable["HouseholdId"]):
        self.households = sorted(set(households))
        super().__init__(f"readings span several households: {self.households}")


class NegativeReading(ValidationError):
    def __init__(self, slot: int, wh: int):
        super().__init__(f"negative consumption {wh} Wh at slot {slot}")
        self.slot = slot
        self.wh = wh


class LengthMismatch(ValidationError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"expected {expected} values, got {got}")
        self.expected = expected
        self.got = got


class DayType(enum.Enum):
    WORKDAY = "workday"
    WEEKEND = "weekend"


@dataclass(frozen=True, order=True)
class HouseholdId:
    cn: int
    local_index: int

    def __post_init__(self):
        if self.cn < 0 or self.local_index < 0:
            raise ValueError(f"negative household id component: {self.cn}, {self.local_index}")

    def __str__(self) -> str:
        return f"{self.cn}-{self.local_index}"

    @classmethod
    def parse(cls, text: str) -> "HouseholdId":
        cn, _, local = text.partition("-")
        return cls(int(cn), int(local))


def to_wh(kwh) -> int:
    """Convert a kWh quantity (str, int, float or Decimal) to integer watt-hours.

    Values with more than three fractional digits are rejected rather than
    rounded silently.
    """
    value = Decimal(str(kwh)) if not isinstance(kwh, Decimal) else kwh
    wh = value * WH_PER_KWH
    if wh != wh.to_integral_value():
        raise ValueError(f"{kwh} kWh is finer than watt-hour resolution")
    return int(wh)


def to_kwh(wh: int) -> Decimal:
    return (Decimal(int(wh)) / WH_PER_KWH).quantize(KWH_QUANTUM)


def format_kwh(wh: int) -> str:
    """Render watt-hours as a kWh string with exactly three decimals."""
    wh = int(wh)
    sign = "-" if wh < 0 else ""
    whole, frac = divmod(abs(wh), WH_PER_KWH)
    return f"{sign}{whole}.{frac:03d}"


def parse_kwh(text: str) -> int:
    """Inverse of :func:`format_kwh`; accepts only the three-decimal form."""
    text = text.strip()
    whole, dot, frac = text.partition(".")
    if not dot or len(frac) != 3 or not frac.isdigit():
        raise ValueError(f"malformed kWh value {text!r}")
    sign = -1 if whole.startswith("-") else 1
    whole = whole.lstrip("-")
    if not whole.isdigit():
        raise ValueError(f"malformed kWh value {text!r}")
    return sign * (int(whole) * WH_PER_KWH + int(frac))


@dataclass(frozen=True)
class MonthSpec:
    """A billing month: calendar anchor, length and weekend convention.

    ``weekend_days`` uses Python weekday numbers (Monday is 0). The month may
    be shorter than a calendar month; day ``d`` falls on the weekday of the
    1st plus ``d``.
    """

    year: int = 2009
    month: int = 1
    days: int = 31
    weekend_days: frozenset = field(default_factory=lambda: frozenset({5, 6}))

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be 1..12, got {self.month}")
        if not 1 <= self.days <= 31:
            raise ValueError(f"days must be 1..31, got {self.days}")
        object.__setattr__(self, "weekend_days", frozenset(self.weekend_days))
        if not self.weekend_days <= set(range(7)):
            raise ValueError(f"weekend days must be weekday numbers 0..6: {sorted(self.weekend_days)}")

    @property
    def slots(self) -> int:
        return SLOTS_PER_DAY * self.days

    @property
    def label(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    @property
    def first_weekday(self) -> int:
        return calendar.weekday(self.year, self.month, 1)

    def weekday(self, day: int) -> int:
        self._check_day(day)
        return (self.first_weekday + day) % 7

    def day_type(self, day: int) -> DayType:
        return DayType.WEEKEND if self.weekday(day) in self.weekend_days else DayType.WORKDAY

    def day_types(self) -> list[DayType]:
        return [self.day_type(d) for d in range(self.days)]

    def timestamp(self, slot: int) -> str:
        """Local wall-clock label for a slot, e.g. ``2009-01-01T00:15``.

        Days past the calendar month's end keep counting (``2009-02-31``) so a
        short or long synthetic month still gets unique labels.
        """
        s = SlotIndex(slot, self)
        hour, minute = divmod(s.slot_of_day * MINUTES_PER_SLOT, 60)
        return f"{self.label}-{s.day + 1:02d}T{hour:02d}:{minute:02d}"

    def parse_timestamp(self, text: str) -> int:
        prefix = self.label + "-"
        try:
            if not text.startswith(prefix) or len(text) != len(prefix) + 8 or text[len(prefix) + 2] != "T":
                raise ValueError
            day = int(text[len(prefix):len(prefix) + 2]) - 1
            hour, minute = int(text[-5:-3]), int(text[-2:])
        except ValueError:
            raise InvalidTime(f"malformed timestamp {text!r} for month {self.label}") from None
        return slot_index(day, hour, minute, self)

    def _check_day(self, day: int):
        if not 0 <= day < self.days:
            raise InvalidTime(f"day {day} outside 0..{self.days - 1}")


DEFAULT_MONTH = MonthSpec()


@dataclass(frozen=True, order=True)
class SlotIndex:
    value: int
    month: MonthSpec = field(default=DEFAULT_MONTH, compare=False)

    def __post_init__(self):
        if not 0 <= self.value < self.month.slots:
            raise InvalidTime(f"slot {self.value} outside 0..{self.month.slots - 1}")

    @property
    def day(self) -> int:
        return self.value // SLOTS_PER_DAY

    @property
    def slot_of_day(self) -> int:
        return self.value % SLOTS_PER_DAY

    @property
    def hour(self) -> int:
        return self.slot_of_day // 4

    @property
    def minute(self) -> int:
        return (self.slot_of_day % 4) * MINUTES_PER_SLOT

    def __int__(self) -> int:
        return self.value

    def __index__(self) -> int:
        return self.value


def slot_index(day: int, hour: int, minute: int, month: MonthSpec = DEFAULT_MONTH) -> int:
    if not 0 <= day < month.days:
        raise InvalidTime(f"day {day} outside 0..{month.days - 1}")
    if not 0 <= hour < 24:
        raise InvalidTime(f"hour {hour} outside 0..23")
    if minute not in (0, 15, 30, 45):
        raise InvalidTime(f"minute {minute} is not on the 15-minute grid")
    return day * SLOTS_PER_DAY + hour * 4 + minute // MINUTES_PER_SLOT


@dataclass(frozen=True)
class MeterReading:
    household: HouseholdId
    slot: int
    wh: int

    def __post_init__(self):
        if self.wh < 0:
            raise NegativeReading(self.slot, self.wh)

    @classmethod
    def from_kwh(cls, household: HouseholdId, slot: int, kwh) -> "MeterReading":
        return cls(household, int(slot), to_wh(kwh))

    @property
    def kwh(self) -> Decimal:
        return to_kwh(self.wh)


def validate_household_month(readings: Sequence[MeterReading], month: MonthSpec = DEFAULT_MONTH) -> None:
    """Check that ``readings`` form exactly one complete household-month.

    Slots are scanned in ascending order and the first violation is raised; at
    a given position a duplicate is reported before a gap.
    """
    households = {r.household for r in readings}
    if len(households) > 1:
        raise MixedHouseholds(households)
    counts = [0] * month.slots
    for r in readings:
        if not 0 <= r.slot < month.slots:
            raise InvalidTime(f"slot {r.slot} outside 0..{month.slots - 1}")
        counts[r.slot] += 1
    for slot, n in enumerate(counts):
        if n > 1:
            raise DuplicateSlot(slot)
        if n == 0:
            raise MissingSlot(slot)


def readings_from_array(household: HouseholdId, wh: Sequence[int]) -> list[MeterReading]:
    return [MeterReading(household, slot, int(v)) for slot, v in enumerate(wh)]


def readings_to_array(readings: Sequence[MeterReading], month: MonthSpec = DEFAULT_MONTH) -> np.ndarray:
    validate_household_month(readings, month)
    out = np.empty(month.slots, dtype=np.int64)
    for r in readings:
        out[r.slot] = r.wh
    return out


def validate_month_array(wh: np.ndarray, month: MonthSpec = DEFAULT_MONTH) -> None:
    """Array form of :func:`validate_household_month` for one household row."""
    if wh.ndim != 1 or wh.shape[0] != month.slots:
        raise LengthMismatch(month.slots, wh.size)
    negative = np.flatnonzero(wh < 0)
    if negative.size:
        raise NegativeReading(int(negative[0]), int(wh[negative[0]]))
