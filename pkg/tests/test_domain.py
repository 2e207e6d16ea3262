from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meterbench.domain import (
    DEFAULT_MONTH,
    DayType,
    DuplicateSlot,
    HouseholdId,
    InvalidTime,
    LengthMismatch,
    MeterReading,
    MissingSlot,
    MixedHouseholds,
    MonthSpec,
    NegativeReading,
    SlotIndex,
    format_kwh,
    parse_kwh,
    readings_from_array,
    readings_to_array,
    slot_index,
    to_wh,
    validate_household_month,
    validate_month_array,
)

HH = HouseholdId(0, 0)


@pytest.mark.parametrize("day,hour,minute,expected", [(0, 0, 0, 0), (30, 23, 45, 2975), (1, 0, 15, 97)])
def test_slot_index_examples(day, hour, minute, expected):
    assert slot_index(day, hour, minute) == expected


def test_last_slot_of_default_month():
    assert DEFAULT_MONTH.slots == 2976
    assert slot_index(30, 23, 45) == DEFAULT_MONTH.slots - 1


@pytest.mark.parametrize("args", [(31, 0, 0), (0, 24, 0), (0, 0, 10), (0, 0, 60), (-1, 0, 0)])
def test_slot_index_rejects_bad_times(args):
    with pytest.raises(InvalidTime):
        slot_index(*args)


@given(st.integers(0, 30), st.integers(0, 23), st.sampled_from([0, 15, 30, 45]))
def test_slot_index_round_trips(day, hour, minute):
    s = SlotIndex(slot_index(day, hour, minute))
    assert (s.day, s.hour, s.minute) == (day, hour, minute)


def test_default_calendar():
    # January 2009 starts on a Thursday; the 3rd is a Saturday
    assert DEFAULT_MONTH.day_type(0) is DayType.WORKDAY
    assert DEFAULT_MONTH.day_type(2) is DayType.WEEKEND
    assert DEFAULT_MONTH.day_type(3) is DayType.WEEKEND
    assert DEFAULT_MONTH.day_types().count(DayType.WEEKEND) == 9


def test_timestamps_round_trip():
    assert DEFAULT_MONTH.timestamp(1) == "2009-01-01T00:15"
    for slot in (0, 97, 2975):
        assert DEFAULT_MONTH.parse_timestamp(DEFAULT_MONTH.timestamp(slot)) == slot
    with pytest.raises(InvalidTime):
        DEFAULT_MONTH.parse_timestamp("2009-02-01T00:00")


def test_month_length_bounds():
    assert MonthSpec(days=2).slots == 192
    with pytest.raises(ValueError):
        MonthSpec(days=0)


def test_kwh_conversions():
    assert to_wh("0.123") == 123
    assert to_wh(Decimal("1")) == 1000
    assert format_kwh(5) == "0.005"
    assert parse_kwh("12.345") == 12345
    with pytest.raises(ValueError):
        to_wh("0.0001")
    with pytest.raises(ValueError):
        parse_kwh("1.2345")


def test_household_id_text():
    hh = HouseholdId(2, 17)
    assert str(hh) == "2-17"
    assert HouseholdId.parse("2-17") == hh
    assert HouseholdId(0, 5) < HouseholdId(1, 0)


def test_negative_reading_rejected():
    with pytest.raises(NegativeReading):
        MeterReading(HH, 0, -1)


def _month_readings(slots=DEFAULT_MONTH.slots):
    return readings_from_array(HH, np.arange(slots) % 7)


def test_complete_month_is_valid():
    validate_household_month(_month_readings())


def test_missing_slot_reported():
    readings = [r for r in _month_readings() if r.slot != 100]
    assert len(readings) == 2975
    with pytest.raises(MissingSlot) as e:
        validate_household_month(readings)
    assert e.value.slot == 100


def test_duplicate_reported_before_missing():
    readings = [r for r in _month_readings() if r.slot != 6]
    readings.append(MeterReading(HH, 5, 1))
    assert len(readings) == 2976
    with pytest.raises(DuplicateSlot) as e:
        validate_household_month(readings)
    assert e.value.slot == 5


def test_mixed_households_rejected():
    readings = _month_readings()
    readings[10] = MeterReading(HouseholdId(0, 1), 10, 1)
    with pytest.raises(MixedHouseholds):
        validate_household_month(readings)


def test_readings_array_round_trip():
    wh = np.arange(DEFAULT_MONTH.slots, dtype=np.int64)
    assert np.array_equal(readings_to_array(readings_from_array(HH, wh)), wh)


def test_validate_month_array():
    validate_month_array(np.zeros(2976, dtype=np.int64))
    with pytest.raises(LengthMismatch):
        validate_month_array(np.zeros(2975, dtype=np.int64))
    bad = np.zeros(2976, dtype=np.int64)
    bad[9] = -3
    with pytest.raises(NegativeReading):
        validate_month_array(bad)
