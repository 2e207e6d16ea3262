"""Time buckets, slot classification and the precomputed billing mask.

A bucket set partitions every 15-minute slot of a month into priced buckets.
Bucket ids are positions in the set, and that declaration order is also the
order of the bucket-contiguous layout produced by :func:`build_mask`.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import DEFAULT_MONTH, SLOTS_PER_DAY, DayType, MeterError, MonthSpec, SlotIndex

PRICE_SCALE = 10**6  # prices are stored as integer micro-currency per kWh


class PartitionViolation(MeterError, ValueError):
    def __init__(self, slot: int, matching: Sequence[int]):
        self.slot = slot
        self.matching = list(matching)
        what = "no bucket" if not self.matching else f"buckets {self.matching}"
        super().__init__(f"slot {slot} matches {what}")


def price_units(price) -> int:
    """Integer micro-currency per kWh for a price; rejects finer precision."""
    value = price if isinstance(price, Decimal) else Decimal(str(price))
    if value < 0:
        raise ValueError(f"negative price {price}")
    scaled = value * PRICE_SCALE
    if scaled != scaled.to_integral_value():
        raise ValueError(f"price {price} has more than 6 decimal places")
    return int(scaled)


def parse_hhmm(text: str) -> int:
    """``"HH:MM"`` to a slot-of-day boundary; ``"24:00"`` is the end of day."""
    hh, _, mm = str(text).partition(":")
    hour, minute = int(hh), int(mm or 0)
    if minute % 15 or not 0 <= minute < 60 or not 0 <= hour <= 24 or (hour == 24 and minute):
        raise ValueError(f"time {text!r} is not a 15-minute boundary")
    return hour * 4 + minute // 15


def format_hhmm(boundary: int) -> str:
    return f"{boundary // 4:02d}:{(boundary % 4) * 15:02d}"


@dataclass(frozen=True)
class Clause:
    """One day type and a half-open slot-of-day range ``[start, end)``."""

    day_type: DayType
    start: int
    end: int

    def __post_init__(self):
        object.__setattr__(self, "day_type", DayType(self.day_type))
        if not 0 <= self.start <= self.end <= SLOTS_PER_DAY:
            raise ValueError(f"clause range [{self.start}, {self.end}) outside a day")

    def matches(self, day_type: DayType, slot_of_day: int) -> bool:
        return day_type is self.day_type and self.start <= slot_of_day < self.end

    @classmethod
    def from_dict(cls, d: Mapping) -> "Clause":
        return cls(DayType(d["day_type"]), parse_hhmm(d["start"]), parse_hhmm(d["end"]))

    def to_dict(self) -> dict:
        return {"day_type": self.day_type.value, "start": format_hhmm(self.start), "end": format_hhmm(self.end)}


@dataclass(frozen=True)
class TimeBucket:
    label: str
    price: Decimal
    clauses: tuple[Clause, ...] = ()

    def __post_init__(self):
        price = self.price if isinstance(self.price, Decimal) else Decimal(str(self.price))
        object.__setattr__(self, "price", price)
        object.__setattr__(self, "clauses", tuple(self.clauses))
        price_units(price)

    def contains(self, day_type: DayType, slot_of_day: int) -> bool:
        return any(c.matches(day_type, slot_of_day) for c in self.clauses)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TimeBucket":
        return cls(str(d["label"]), Decimal(str(d["price"])), tuple(Clause.from_dict(c) for c in d.get("clauses", ())))

    def to_dict(self) -> dict:
        return {"label": self.label, "price": str(self.price), "clauses": [c.to_dict() for c in self.clauses]}


class BucketSet:
    """An ordered, immutable list of buckets bound to a month.

    The partition property is checked on construction unless ``validate`` is
    False, in which case :func:`build_mask` re-checks it.
    """

    def __init__(self, buckets: Iterable[TimeBucket], month: MonthSpec = DEFAULT_MONTH, validate: bool = True):
        self._buckets = tuple(buckets)
        self._month = month
        if validate:
            validate_partition(self)

    @property
    def buckets(self) -> tuple[TimeBucket, ...]:
        return self._buckets

    @property
    def month(self) -> MonthSpec:
        return self._month

    @property
    def labels(self) -> list[str]:
        return [b.label for b in self._buckets]

    @property
    def prices(self) -> list[Decimal]:
        return [b.price for b in self._buckets]

    def price_units(self) -> np.ndarray:
        return np.array([price_units(b.price) for b in self._buckets], dtype=np.int64)

    def __len__(self) -> int:
        return len(self._buckets)

    def __iter__(self):
        return iter(self._buckets)

    def __getitem__(self, i: int) -> TimeBucket:
        return self._buckets[i]

    def __eq__(self, other):
        return isinstance(other, BucketSet) and self._buckets == other._buckets and self._month == other._month

    def __hash__(self):
        return hash((self._buckets, self._month))

    def __repr__(self):
        return f"BucketSet({list(self.labels)}, month={self._month.label}x{self._month.days})"

    def matching(self, slot: int) -> list[int]:
        s = SlotIndex(int(slot), self._month)
        day_type = self._month.day_type(s.day)
        return [i for i, b in enumerate(self._buckets) if b.contains(day_type, s.slot_of_day)]

    def to_list(self) -> list[dict]:
        return [b.to_dict() for b in self._buckets]

    @classmethod
    def from_list(cls, items: Sequence[Mapping], month: MonthSpec = DEFAULT_MONTH) -> "BucketSet":
        return cls([TimeBucket.from_dict(d) for d in items], month)


def validate_partition(bucket_set: BucketSet) -> None:
    for slot in range(bucket_set.month.slots):
        hits = bucket_set.matching(slot)
        if len(hits) != 1:
            raise PartitionViolation(slot, hits)


def classify(slot: int, bucket_set: BucketSet) -> int:
    """Bucket id of ``slot``: a direct clause-by-clause scan of the set."""
    s = SlotIndex(int(slot), bucket_set.month)
    day_type = bucket_set.month.day_type(s.day)
    for i, bucket in enumerate(bucket_set.buckets):
        if bucket.contains(day_type, s.slot_of_day):
            return i
    raise PartitionViolation(int(slot), [])


def bucket_ids(bucket_set: BucketSet) -> np.ndarray:
    """Vectorised classification of every slot of the month.

    Raises :class:`PartitionViolation` at the first slot covered by zero or by
    several buckets.
    """
    month = bucket_set.month
    day_is_weekend = np.array([t is DayType.WEEKEND for t in month.day_types()])
    slot_of_day = np.tile(np.arange(SLOTS_PER_DAY), month.days)
    weekend = np.repeat(day_is_weekend, SLOTS_PER_DAY)
    hits = np.zeros(month.slots, dtype=np.int64)
    ids = np.full(month.slots, -1, dtype=np.int64)
    for i, bucket in enumerate(bucket_set.buckets):
        covered = np.zeros(month.slots, dtype=bool)
        for c in bucket.clauses:
            want_weekend = c.day_type is DayType.WEEKEND
            covered |= (weekend == want_weekend) & (slot_of_day >= c.start) & (slot_of_day < c.end)
        hits += covered
        ids[covered] = i
    bad = np.flatnonzero(hits != 1)
    if bad.size:
        slot = int(bad[0])
        raise PartitionViolation(slot, bucket_set.matching(slot))
    return ids


@dataclass(frozen=True, eq=False)
class BucketMask:
    """Indirection array from slot order to bucket-contiguous order.

    ``mask[slot]`` is the destination index of that slot's reading;
    ``offsets[b]:offsets[b+1]`` is bucket ``b``'s range in the sorted layout.
    """

    mask: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        mask = np.ascontiguousarray(self.mask, dtype=np.int64)
        offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        mask.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "offsets", offsets)

    def __len__(self) -> int:
        return self.mask.shape[0]

    @property
    def n_buckets(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def boundaries(self) -> list[tuple[int, int]]:
        return [(int(self.offsets[b]), int(self.offsets[b + 1] - self.offsets[b])) for b in range(self.n_buckets)]

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def __eq__(self, other):
        return (isinstance(other, BucketMask) and np.array_equal(self.mask, other.mask)
                and np.array_equal(self.offsets, other.offsets))

    @classmethod
    def from_labels(cls, labels: Sequence[int], n_buckets: int | None = None) -> "BucketMask":
        """Mask for an arbitrary per-slot bucket labelling (ids ``0..n-1``)."""
        labels = np.asarray(labels, dtype=np.int64)
        if n_buckets is None:
            n_buckets = int(labels.max()) + 1 if labels.size else 0
        if labels.size and (labels.min() < 0 or labels.max() >= n_buckets):
            raise ValueError("labels outside 0..n_buckets-1")
        order = np.argsort(labels, kind="stable")
        mask = np.empty_like(order)
        mask[order] = np.arange(labels.size)
        offsets = np.zeros(n_buckets + 1, dtype=np.int64)
        np.cumsum(np.bincount(labels, minlength=n_buckets), out=offsets[1:])
        return cls(mask, offsets)


def build_mask(bucket_set: BucketSet) -> BucketMask:
    return BucketMask.from_labels(bucket_ids(bucket_set), len(bucket_set))


# --- default bucket sets --------------------------------------------------------

PERIODS = (("night", 0, 24), ("morning", 24, 48), ("afternoon", 48, 72), ("evening", 72, 96))
DEFAULT_PRICES = {
    DayType.WORKDAY: ("0.05", "0.10", "0.12", "0.20"),
    DayType.WEEKEND: ("0.04", "0.07", "0.08", "0.12"),
}
DEFAULT_CRITICAL_PRICE = Decimal("0.50")


@dataclass(frozen=True)
class PricingScheme:
    """TOU, or CPP: critical-peak clauses carved out of the TOU base buckets."""

    kind: str = "TOU"
    critical: tuple[Clause, ...] = ()
    critical_price: Decimal = DEFAULT_CRITICAL_PRICE
    critical_label: str = "critical-peak"

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in ("TOU", "CPP"):
            raise ValueError(f"unknown pricing scheme {self.kind!r}; PTR is not supported")
        if kind == "TOU" and self.critical:
            raise ValueError("TOU scheme takes no critical clauses")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "critical", tuple(self.critical))
        object.__setattr__(self, "critical_price", Decimal(str(self.critical_price)))

    @classmethod
    def cpp(cls, *clauses: Clause, price=DEFAULT_CRITICAL_PRICE) -> "PricingScheme":
        return cls("CPP", tuple(clauses), Decimal(str(price)))

    @classmethod
    def from_dict(cls, d: Mapping) -> "PricingScheme":
        return cls(
            d.get("kind", "TOU"),
            tuple(Clause.from_dict(c) for c in d.get("critical", ())),
            Decimal(str(d.get("critical_price", DEFAULT_CRITICAL_PRICE))),
        )

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "CPP":
            d["critical"] = [c.to_dict() for c in self.critical]
            d["critical_price"] = str(self.critical_price)
        return d


TOU = PricingScheme()
EVENING_CPP = PricingScheme.cpp(Clause(DayType.WORKDAY, 72, 80))


def tou_buckets(prices: Mapping[DayType, Sequence] | None = None) -> list[TimeBucket]:
    prices = prices or DEFAULT_PRICES
    out = []
    for day_type in (DayType.WORKDAY, DayType.WEEKEND):
        for (name, start, end), price in zip(PERIODS, prices[day_type]):
            out.append(TimeBucket(f"{day_type.value}-{name}", Decimal(str(price)), (Clause(day_type, start, end),)))
    return out


def _subtract(clause: Clause, cuts: Sequence[Clause]) -> list[Clause]:
    pieces = [(clause.start, clause.end)]
    for cut in cuts:
        if cut.day_type is not clause.day_type:
            continue
        nxt = []
        for lo, hi in pieces:
            if cut.end <= lo or cut.start >= hi:
                nxt.append((lo, hi))
                continue
            if lo < cut.start:
                nxt.append((lo, cut.start))
            if cut.end < hi:
                nxt.append((cut.end, hi))
        pieces = nxt
    return [Clause(clause.day_type, lo, hi) for lo, hi in pieces]


def apply_scheme(buckets: Sequence[TimeBucket], scheme: PricingScheme) -> list[TimeBucket]:
    """Re-partition ``buckets`` so the scheme's critical clauses form their own bucket.

    Base buckets keep their ids (a fully overridden one stays, empty); the
    critical-peak bucket is appended last.
    """
    if scheme.kind == "TOU" or not scheme.critical:
        return list(buckets)
    carved = [
        TimeBucket(b.label, b.price, tuple(p for c in b.clauses for p in _subtract(c, scheme.critical)))
        for b in buckets
    ]
    return carved + [TimeBucket(scheme.critical_label, scheme.critical_price, scheme.critical)]


def default_bucket_set(month: MonthSpec = DEFAULT_MONTH, scheme: PricingScheme = TOU,
                       prices: Mapping[DayType, Sequence] | None = None) -> BucketSet:
    """Eight buckets: {workday, weekend} x {night, morning, afternoon, evening}."""
    return BucketSet(apply_scheme(tou_buckets(prices), scheme), month)
