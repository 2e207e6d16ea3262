import dataclasses
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meterbench.datagen import Generator, household_ids
from meterbench.domain import DEFAULT_MONTH, DayType, HouseholdId, MonthSpec, NegativeReading, readings_from_array
from meterbench.mcb import (
    BillingJob,
    BoundaryMismatch,
    aggregate_phase,
    bill_all,
    bill_arrays,
    bill_checksum,
    bill_household,
    brute_force_bill,
    canonical_bills,
    partition,
    sort_phase,
)
from meterbench.tariff import BucketSet, Clause, TimeBucket, build_mask, default_bucket_set

from .strategies import billing_cases
from .test_tariff import noon_split, whole_day


def test_sort_phase_identity():
    mask = build_mask(BucketSet([whole_day()]))
    wh = np.arange(DEFAULT_MONTH.slots)
    assert np.array_equal(sort_phase(wh, mask), wh)


def test_sort_phase_noon_split(toy_month):
    mask = build_mask(noon_split(toy_month))
    wh = np.arange(192)
    out = sort_phase(wh, mask)
    assert out[:96].tolist() == list(range(48)) + list(range(96, 144))


def test_sort_phase_zero():
    mask = build_mask(default_bucket_set())
    assert not sort_phase(np.zeros(2976, dtype=np.int64), mask).any()


def test_aggregate_examples():
    assert aggregate_phase(np.array([1, 2, 3, 4]), [(0, 2), (2, 2)]).tolist() == [3, 7]
    assert aggregate_phase(np.array([1, 2, 3, 4]), [(0, 4)]).tolist() == [10]
    assert aggregate_phase(np.array([1, 2, 3, 4]), [(0, 2), (2, 0), (2, 2)]).tolist() == [3, 0, 7]


def test_aggregate_rejects_bad_boundaries():
    with pytest.raises(BoundaryMismatch):
        aggregate_phase(np.arange(4), [(0, 3)])
    with pytest.raises(BoundaryMismatch):
        aggregate_phase(np.arange(4), [(1, 3)])


def test_zero_month_bills_zero():
    bs = default_bucket_set()
    line = bill_household(np.zeros(2976, dtype=np.int64), build_mask(bs), bs.price_units())
    assert line.per_bucket_wh == (0,) * 8
    assert line.amount == 0
    assert line.total_kwh == 0


@pytest.mark.parametrize("price", ["0.10", "0.123456", "1"])
def test_constant_kwh_closed_form(price):
    bs = BucketSet([whole_day(price=price)])
    line = bill_household(np.full(2976, 1000, dtype=np.int64), build_mask(bs), bs.price_units())
    assert line.total_kwh == 2976
    assert line.total_amount == 2976 * Decimal(price)


def test_ten_slot_toy_matches_oracle():
    # ten 15-minute slots cannot form a month; use the smallest month and bill 10 nonzero slots
    month = MonthSpec(days=1)
    buckets = [
        TimeBucket("a", Decimal("0.11"), (Clause(DayType.WORKDAY, 0, 3), Clause(DayType.WEEKEND, 0, 3))),
        TimeBucket("b", Decimal("0.07"), (Clause(DayType.WORKDAY, 3, 7), Clause(DayType.WEEKEND, 3, 7))),
        TimeBucket("c", Decimal("0.31"), (Clause(DayType.WORKDAY, 7, 96), Clause(DayType.WEEKEND, 7, 96))),
    ]
    bs = BucketSet(buckets, month)
    wh = np.zeros(96, dtype=np.int64)
    wh[:10] = np.random.default_rng(3).integers(0, 3000, 10)
    readings = readings_from_array(HouseholdId(0, 0), wh)
    got = bill_household(readings, build_mask(bs), bs.price_units())
    assert got == brute_force_bill(readings, bs)
    assert got.per_bucket_wh == (int(wh[:3].sum()), int(wh[3:7].sum()), int(wh[7:10].sum()))


@settings(max_examples=100, deadline=None)
@given(billing_cases())
def test_mcb_matches_oracle(case):
    bs, readings = case
    assert bill_household(readings, build_mask(bs), bs.price_units()) == brute_force_bill(readings, bs)


def test_negative_reading_rejected():
    bs = default_bucket_set()
    wh = np.zeros(2976, dtype=np.int64)
    wh[40] = -1
    with pytest.raises(NegativeReading):
        bill_household(wh, build_mask(bs), bs.price_units())


@pytest.mark.parametrize("n,w", [(10, 3), (3, 8), (0, 4), (100, 1)])
def test_partition_is_contiguous_and_balanced(n, w):
    chunks = partition(n, w)
    assert chunks[0][0] == 0 and chunks[-1][1] == n
    assert all(a[1] == b[0] for a, b in zip(chunks, chunks[1:]))
    sizes = [hi - lo for lo, hi in chunks]
    assert max(sizes) - min(sizes) <= 1


def _job(n=100, workers=1, seed=5):
    ids = household_ids(n)
    data = Generator(seed).month(ids, DEFAULT_MONTH)
    return BillingJob.from_bucket_set(ids, data, default_bucket_set(), workers)


def test_worker_count_invariance():
    one = bill_all(_job(workers=1))
    eight = bill_all(_job(workers=8))
    assert one.lines == eight.lines
    assert bill_checksum(one.lines) == bill_checksum(eight.lines)


def test_bill_all_matches_per_household():
    job = _job(n=5)
    for i, line in enumerate(bill_all(job).lines):
        single = bill_household(job.readings[i], job.mask, job.prices)
        assert line == dataclasses.replace(single, household=job.households[i])


def test_empty_job():
    bs = default_bucket_set()
    job = BillingJob([], np.zeros((0, 2976), dtype=np.int64), build_mask(bs), bs.price_units())
    assert bill_all(job).lines == []


def test_buffer_reuse_does_not_leak():
    bs = default_bucket_set()
    data = np.zeros((2, 2976), dtype=np.int64)
    data[0] = 777
    wh, amount = bill_arrays(data, build_mask(bs), bs.price_units())
    assert not wh[1].any() and amount[1] == 0
    assert wh[0].sum() == 777 * 2976


def test_bad_household_reported_not_fatal():
    job = _job(n=4)
    job.readings[2, 10] = -5
    run = bill_all(job)
    assert [str(l.household) for l in run.lines] == ["0-0", "0-1", "0-3"]
    assert len(run.errors) == 1 and run.errors[0][0] == HouseholdId(0, 2)
    assert isinstance(run.errors[0][1], NegativeReading)


def test_canonical_encoding():
    lines = bill_all(_job(n=2)).lines
    text = canonical_bills(lines)
    first = text.splitlines()[0].split(",")
    assert first[0] == "0-0"
    assert len(first[1].split(";")) == 8
    assert int(first[2]) == lines[0].amount


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 40), st.integers(1, 9), st.integers(0, 1000))
def test_worker_invariance_property(n, workers, seed):
    ids = household_ids(n)
    month = MonthSpec(days=3)
    data = Generator(seed).month(ids, month)
    bs = default_bucket_set(month)
    a = bill_arrays(data, build_mask(bs), bs.price_units(), 1)
    b = bill_arrays(data, build_mask(bs), bs.price_units(), workers)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
