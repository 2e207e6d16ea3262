"""In-memory multi-core billing.

Each household's month is scattered through the precomputed mask into a
bucket-contiguous buffer (sort phase), then every bucket's contiguous range is
summed (aggregate phase). Households are split into ``worker_count``
contiguous chunks, one per worker thread; the compiled kernel releases the GIL
so the chunks run truly in parallel.

All arithmetic is integer (watt-hours, micro-currency per kWh), so the result
does not depend on how households are partitioned.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Sequence

import numba
import numpy as np

from .domain import (
    HouseholdId,
    LengthMismatch,
    MeterError,
    MeterReading,
    MonthSpec,
    NegativeReading,
    readings_to_array,
    to_kwh,
    validate_household_month,
)
from .tariff import PRICE_SCALE, BucketMask, BucketSet, build_mask, classify

log = logging.getLogger(__name__)

AMOUNT_SCALE = PRICE_SCALE * 1000  # Wh x micro-currency/kWh = 1e-9 currency


class BoundaryMismatch(MeterError, ValueError):
    pass


@dataclass(frozen=True)
class BillLine:
    household: HouseholdId
    per_bucket_wh: tuple[int, ...]
    amount: int  # units of 1e-9 currency

    @property
    def per_bucket_kwh(self) -> list[Decimal]:
        return [to_kwh(v) for v in self.per_bucket_wh]

    @property
    def total_kwh(self) -> Decimal:
        return to_kwh(sum(self.per_bucket_wh))

    @property
    def total_amount(self) -> Decimal:
        return Decimal(self.amount).scaleb(-9)

    def canonical(self) -> str:
        wh = ";".join(str(v) for v in self.per_bucket_wh)
        return f"{self.household},{wh},{self.amount}"


@dataclass
class BillingJob:
    households: Sequence[HouseholdId]
    readings: np.ndarray  # (households, slots) int64 Wh, slot order
    mask: BucketMask
    prices: np.ndarray  # per-bucket micro-currency per kWh
    worker_count: int = 1

    def __post_init__(self):
        self.readings = np.ascontiguousarray(self.readings, dtype=np.int64)
        self.prices = np.ascontiguousarray(self.prices, dtype=np.int64)
        if self.readings.ndim != 2:
            raise ValueError("readings must be a (households, slots) array")
        if len(self.households) != self.readings.shape[0]:
            raise ValueError(f"{len(self.households)} ids for {self.readings.shape[0]} household rows")
        if self.readings.shape[1] != len(self.mask):
            raise LengthMismatch(len(self.mask), self.readings.shape[1])
        if self.prices.shape[0] != self.mask.n_buckets:
            raise ValueError(f"{self.prices.shape[0]} prices for {self.mask.n_buckets} buckets")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")

    @classmethod
    def from_bucket_set(cls, households, readings, bucket_set: BucketSet, worker_count: int = 1) -> "BillingJob":
        return cls(households, readings, build_mask(bucket_set), bucket_set.price_units(), worker_count)


@dataclass
class BillRun:
    lines: list[BillLine]
    errors: list[tuple[HouseholdId, Exception]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.lines)

    def __len__(self):
        return len(self.lines)


def canonical_bills(lines) -> str:
    """Stable text encoding of bill lines, one per line, in the given order."""
    return "".join(line.canonical() + "\n" for line in lines)


def bill_checksum(lines) -> str:
    return hashlib.sha256(canonical_bills(lines).encode()).hexdigest()


# --- phases -----------------------------------------------------------------------


def sort_phase(readings: np.ndarray, mask: BucketMask) -> np.ndarray:
    readings = np.asarray(readings)
    if readings.shape[-1] != len(mask):
        raise LengthMismatch(len(mask), readings.shape[-1])
    out = np.empty_like(readings)
    out[..., mask.mask] = readings
    return out


def aggregate_phase(sorted_wh: np.ndarray, boundaries: Sequence[tuple[int, int]]) -> np.ndarray:
    """Per-bucket sums of a bucket-contiguous array; ``boundaries`` must tile it."""
    sorted_wh = np.asarray(sorted_wh)
    pos = 0
    for offset, length in boundaries:
        if offset != pos or length < 0:
            raise BoundaryMismatch(f"bucket range ({offset}, {length}) does not start at {pos}")
        pos += length
    if pos != sorted_wh.shape[-1]:
        raise BoundaryMismatch(f"boundaries cover {pos} of {sorted_wh.shape[-1]} values")
    edges = np.zeros(sorted_wh.shape[:-1] + (sorted_wh.shape[-1] + 1,), dtype=np.int64)
    np.cumsum(sorted_wh, axis=-1, out=edges[..., 1:])
    starts = np.array([o for o, _ in boundaries], dtype=np.int64)
    ends = starts + np.array([n for _, n in boundaries], dtype=np.int64)
    return edges[..., ends] - edges[..., starts]


@numba.njit(nogil=True, cache=True)
def _mcb_chunk(readings, mask, offsets, prices, out_wh, out_amount):
    n_slots = mask.shape[0]
    n_buckets = offsets.shape[0] - 1
    buf = np.empty(n_slots, dtype=np.int64)  # reused for every household of the chunk
    for h in range(readings.shape[0]):
        row = readings[h]
        for i in range(n_slots):
            buf[mask[i]] = row[i]
        amount = 0
        for b in range(n_buckets):
            acc = 0
            for j in range(offsets[b], offsets[b + 1]):
                acc += buf[j]
            out_wh[h, b] = acc
            amount += acc * prices[b]
        out_amount[h] = amount


def partition(n: int, worker_count: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into ``worker_count`` contiguous chunks differing by at most one."""
    base, extra = divmod(n, worker_count)
    bounds, start = [], 0
    for w in range(worker_count):
        stop = start + base + (1 if w < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


def bill_arrays(readings: np.ndarray, mask: BucketMask, prices: np.ndarray, worker_count: int = 1,
                executor: ThreadPoolExecutor | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Array-level MCB: per-household per-bucket Wh and amounts (1e-9 currency).

    This is the timed path of the speedup sweep; :func:`bill_all` wraps it.
    """
    readings = np.ascontiguousarray(readings, dtype=np.int64)
    prices = np.ascontiguousarray(prices, dtype=np.int64)
    n = readings.shape[0]
    out_wh = np.zeros((n, mask.n_buckets), dtype=np.int64)
    out_amount = np.zeros(n, dtype=np.int64)
    chunks = [c for c in partition(n, worker_count) if c[1] > c[0]]
    if worker_count == 1 or len(chunks) <= 1:
        for lo, hi in chunks:
            _mcb_chunk(readings[lo:hi], mask.mask, mask.offsets, prices, out_wh[lo:hi], out_amount[lo:hi])
        return out_wh, out_amount

    def run(chunk):
        lo, hi = chunk
        _mcb_chunk(readings[lo:hi], mask.mask, mask.offsets, prices, out_wh[lo:hi], out_amount[lo:hi])

    if executor is None:
        with ThreadPoolExecutor(max_workers=worker_count, thread_name_prefix="mcb") as pool:
            list(pool.map(run, chunks))
    else:
        list(executor.map(run, chunks))
    return out_wh, out_amount


def bill_household(readings, mask: BucketMask, prices) -> BillLine:
    """Bill one household-month given as an array (Wh, slot order) or as readings."""
    household = HouseholdId(0, 0)
    if len(readings) and isinstance(readings[0], MeterReading):
        household = readings[0].household
        if len(mask) % 96:
            raise LengthMismatch(len(mask), len(readings))
        readings = readings_to_array(readings, MonthSpec(days=len(mask) // 96))
    wh = np.asarray(readings, dtype=np.int64)
    if wh.ndim != 1 or wh.shape[0] != len(mask):
        raise LengthMismatch(len(mask), wh.size)
    negative = np.flatnonzero(wh < 0)
    if negative.size:
        raise NegativeReading(int(negative[0]), int(wh[negative[0]]))
    prices = np.asarray(prices, dtype=np.int64)
    sums = aggregate_phase(sort_phase(wh, mask), mask.boundaries)
    return BillLine(household, tuple(int(v) for v in sums), int(np.dot(sums, prices)))


def bill_all(job: BillingJob) -> BillRun:
    """Bill every household of the job; invalid households are reported, not fatal."""
    if not len(job.households):
        return BillRun([])
    bad = np.flatnonzero((job.readings < 0).any(axis=1))
    errors: list[tuple[HouseholdId, Exception]] = []
    keep = np.ones(len(job.households), dtype=bool)
    for h in bad:
        slot = int(np.flatnonzero(job.readings[h] < 0)[0])
        err = NegativeReading(slot, int(job.readings[h, slot]))
        errors.append((job.households[h], err))
        keep[h] = False
        log.warning("household %s not billed: %s", job.households[h], err)
    readings = job.readings if keep.all() else job.readings[keep]
    ids = [hh for hh, k in zip(job.households, keep) if k]
    wh, amount = bill_arrays(readings, job.mask, job.prices, job.worker_count)
    lines = [BillLine(hh, tuple(row), int(a)) for hh, row, a in zip(ids, wh.tolist(), amount.tolist())]
    return BillRun(lines, errors)


def brute_force_bill(readings: Sequence[MeterReading], bucket_set: BucketSet,
                     prices: Sequence[Decimal] | None = None) -> BillLine:
    """Reference bill: classify every reading with an explicit clause scan.

    Uses Decimal arithmetic throughout, independent of the integer path.
    """
    validate_household_month(readings, bucket_set.month)
    prices = list(prices) if prices is not None else bucket_set.prices
    kwh = [Decimal(0)] * len(bucket_set)
    for r in readings:
        b = classify(r.slot, bucket_set)
        kwh[b] += r.kwh
    total = sum((k * Decimal(str(p)) for k, p in zip(kwh, prices)), Decimal(0))
    amount = total.scaleb(9)
    if amount != amount.to_integral_value():
        raise ArithmeticError(f"amount {total} is finer than 1e-9")
    household = readings[0].household if readings else HouseholdId(0, 0)
    per_bucket = tuple(int(k.scaleb(3)) for k in kwh)
    return BillLine(household, per_bucket, int(amount))

