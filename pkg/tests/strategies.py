"""Hypothesis strategies for random valid bucket sets over toy months."""

from decimal import Decimal

import numpy as np
from hypothesis import strategies as st

from meterbench.domain import SLOTS_PER_DAY, DayType, HouseholdId, MonthSpec, readings_from_array
from meterbench.tariff import BucketSet, Clause, TimeBucket


@st.composite
def months(draw, min_days=2, max_days=4):
    return MonthSpec(
        year=2009,
        month=draw(st.integers(1, 12)),
        days=draw(st.integers(min_days, max_days)),
        weekend_days=draw(st.frozensets(st.integers(0, 6), max_size=3)),
    )


@st.composite
def bucket_sets(draw, month=None):
    """Each day type is cut into segments; segments go to random (possibly shared) buckets."""
    month = month or draw(months())
    n = draw(st.integers(1, 6))
    clauses = [[] for _ in range(n)]
    for day_type in DayType:
        cuts = sorted(draw(st.sets(st.integers(1, SLOTS_PER_DAY - 1), max_size=6)))
        edges = [0, *cuts, SLOTS_PER_DAY]
        for lo, hi in zip(edges, edges[1:]):
            clauses[draw(st.integers(0, n - 1))].append(Clause(day_type, lo, hi))
    prices = draw(st.lists(st.integers(0, 2_000_000), min_size=n, max_size=n))
    buckets = [TimeBucket(f"b{i}", Decimal(p).scaleb(-6), tuple(c)) for i, (p, c) in enumerate(zip(prices, clauses))]
    return BucketSet(buckets, month)


@st.composite
def billing_cases(draw):
    bucket_set = draw(bucket_sets())
    slots = bucket_set.month.slots
    seed = draw(st.integers(0, 2**32 - 1))
    wh = np.random.default_rng(seed).integers(0, 5000, slots)
    hh = HouseholdId(draw(st.integers(0, 3)), draw(st.integers(0, 99)))
    return bucket_set, readings_from_array(hh, wh)
