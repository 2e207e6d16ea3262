"""Row-per-reading stores over embedded SQLite.

Architecture I keeps every reading in one table behind a single writer queue,
and bills with one generated SQL query that classifies each row into its
bucket. Architecture II gives every concentrator its own database and runs the
same query per store, concatenating the forwarded results in CN order.
"""

from __future__ import annotations

import sqlite3
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Mapping

import numpy as np

from ..domain import SLOTS_PER_DAY, DayType, HouseholdId, MonthSpec
from ..mcb import BillLine, BillRun
from ..tariff import BucketSet, price_units
from .base import ConcurrencyGauge, IncompleteMonth, SerialWorker, StorageBackend, StoreError

SCHEMA = """
CREATE TABLE IF NOT EXISTS readings (
    cn INTEGER NOT NULL,
    household INTEGER NOT NULL,
    slot INTEGER NOT NULL,
    wh INTEGER NOT NULL,
    PRIMARY KEY (cn, household, slot)
) WITHOUT ROWID
"""


def _weekend_expr(month: MonthSpec) -> str:
    if not month.weekend_days:
        return "0"
    days = ", ".join(str(d) for d in sorted(month.weekend_days))
    return f"(({month.first_weekday} + slot / {SLOTS_PER_DAY}) % 7 IN ({days}))"


def billing_query(bucket_set: BucketSet, table: str = "readings") -> str:
    """The bill as one SQL statement: classify every row, group, price.

    Returns rows ``(cn, household, bucket, wh, n, amount)`` ordered by
    household then bucket; ``amount`` is in 1e-9 currency units.
    """
    weekend = _weekend_expr(bucket_set.month)
    arms = []
    for i, bucket in enumerate(bucket_set.buckets):
        for c in bucket.clauses:
            if c.start == c.end:
                continue
            flag = 1 if c.day_type is DayType.WEEKEND else 0
            arms.append(
                f"    WHEN {weekend} = {flag} AND slot % {SLOTS_PER_DAY} >= {c.start} "
                f"AND slot % {SLOTS_PER_DAY} < {c.end} THEN {i}"
            )
    classify = "CASE\n" + "\n".join(arms) + "\n    END" if arms else "NULL"
    prices = " ".join(f"WHEN {i} THEN {price_units(b.price)}" for i, b in enumerate(bucket_set.buckets))
    price_case = f"CASE bucket {prices} ELSE 0 END" if prices else "0"
    return (
        "SELECT cn, household, bucket, SUM(wh) AS wh, COUNT(*) AS n,\n"
        f"       SUM(wh) * {price_case} AS amount\n"
        "FROM (\n"
        f"  SELECT cn, household, wh, {classify} AS bucket\n"
        f"  FROM {table}\n"
        ")\n"
        "GROUP BY cn, household, bucket\n"
        "ORDER BY cn, household, bucket"
    )


class TableStore:
    """One SQLite database whose every operation runs on a single writer thread."""

    def __init__(self, path: Path, gauge: ConcurrencyGauge, name: str = "store"):
        self.path = Path(path)
        self._worker = SerialWorker(name, gauge)
        self._conn: sqlite3.Connection | None = None
        self._worker.call(self._open)

    def _open(self):
        self._conn = sqlite3.connect(self.path, check_same_thread=False, isolation_level=None)
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA synchronous=OFF")
        self._conn.execute(SCHEMA)

    def insert(self, cn: int, day: int, batch: np.ndarray, on_apply=None) -> int:
        """Append one day's batch in a single transaction; returns rows written."""
        n, width = batch.shape
        rows = np.empty((n * width, 4), dtype=np.int64)
        rows[:, 0] = cn
        rows[:, 1] = np.repeat(np.arange(n), width)
        rows[:, 2] = np.tile(np.arange(day * SLOTS_PER_DAY, day * SLOTS_PER_DAY + width), n)
        rows[:, 3] = batch.reshape(-1)
        payload = rows.tolist()

        def apply():
            if on_apply is not None:
                with on_apply():
                    return self._insert_rows(payload)
            return self._insert_rows(payload)

        return self._worker.call(apply)

    def _insert_rows(self, payload) -> int:
        conn = self._conn
        conn.execute("BEGIN")
        try:
            conn.executemany("INSERT INTO readings (cn, household, slot, wh) VALUES (?, ?, ?, ?)", payload)
        except BaseException:
            conn.execute("ROLLBACK")
            raise
        conn.execute("COMMIT")
        return len(payload)

    def query(self, sql: str, params=()) -> list[tuple]:
        return self._worker.call(lambda: self._conn.execute(sql, params).fetchall())

    def row_count(self) -> int:
        return self.query("SELECT COUNT(*) FROM readings")[0][0]

    def bill(self, bucket_set: BucketSet, households: list[HouseholdId]) -> list[BillLine]:
        rows = self.query(billing_query(bucket_set))
        month = bucket_set.month
        per = {hh: [0] * len(bucket_set) for hh in households}
        amounts = dict.fromkeys(households, 0)
        counts = dict.fromkeys(households, 0)
        for cn, household, bucket, wh, n, amount in rows:
            hh = HouseholdId(cn, household)
            if hh not in per:
                raise IncompleteMonth(hh, "rows for a household outside the topology")
            if bucket is None:
                raise IncompleteMonth(hh, "reading matches no bucket")
            per[hh][bucket] = wh
            amounts[hh] += amount
            counts[hh] += n
        for hh in households:
            if counts[hh] != month.slots:
                raise IncompleteMonth(hh, f"{counts[hh]} of {month.slots} readings stored")
        return [BillLine(hh, tuple(per[hh]), amounts[hh]) for hh in households]

    def load(self, households: list[HouseholdId], month: MonthSpec) -> np.ndarray:
        out = np.full((len(households), month.slots), -1, dtype=np.int64)
        index = {hh: i for i, hh in enumerate(households)}
        rows = self.query("SELECT cn, household, slot, wh FROM readings ORDER BY cn, household, slot")
        if rows:
            arr = np.array(rows, dtype=np.int64)
            pos = np.array([index[HouseholdId(int(c), int(h))] for c, h in arr[:, :2]])
            out[pos, arr[:, 2]] = arr[:, 3]
        missing = np.argwhere(out < 0)
        if missing.size:
            raise IncompleteMonth(households[missing[0][0]], f"slot {missing[0][1]} not stored")
        return out

    def close(self):
        if self._conn is not None:
            self._worker.call(self._conn.close)
            self._conn = None
        self._worker.close()


class SingleStore(StorageBackend):
    """Architecture I: one table for all concentrators, inserts serialized."""

    name = "A1"

    def __init__(self, root, topology: Mapping[int, int], month: MonthSpec):
        super().__init__(root, topology, month)
        self._writer_gauge = self._metrics.gauge("writer")
        self.store = TableStore(self.root / "a1.sqlite", self._writer_gauge, "a1-writer")

    def _write(self, cn: int, day: int, batch: np.ndarray) -> None:
        with self._metrics.gauge("ingest_callers").section(), self._metrics.timed("insert_daily"):
            self.store.insert(cn, day, batch)

    def compute_bill(self, bucket_set: BucketSet, worker_count: int = 1) -> BillRun:
        self._require_finalized()
        with self._metrics.timed("compute_bill"):
            return BillRun(self.store.bill(bucket_set, self.households))

    def load_month(self):
        self._require_finalized()
        return self.households, self.store.load(self.households, self.month)

    def metrics(self) -> dict:
        snap = super().metrics()
        snap["rows"] = self.store.row_count()
        return snap

    def close(self):
        self.store.close()


class DistributedStore(StorageBackend):
    """Architecture II: one independent database per concentrator."""

    name = "A2"

    def __init__(self, root, topology: Mapping[int, int], month: MonthSpec):
        super().__init__(root, topology, month)
        self._active = self._metrics.gauge("active_stores")
        self.stores = {
            cn: TableStore(self.root / f"a2-cn{cn:03d}.sqlite", self._metrics.gauge(f"writer_cn{cn}"), f"a2-cn{cn}")
            for cn in self.topology
        }

    def _write(self, cn: int, day: int, batch: np.ndarray) -> None:
        with self._metrics.timed("insert_daily"):
            self.stores[cn].insert(cn, day, batch, on_apply=self._active.section)

    def cn_households(self, cn: int) -> list[HouseholdId]:
        return [HouseholdId(cn, i) for i in range(self.topology[cn])]

    def bill_cn(self, cn: int, bucket_set: BucketSet) -> list[BillLine]:
        """Bill computed inside one CN's store; the result is what that CN forwards."""
        try:
            return self.stores[cn].bill(bucket_set, self.cn_households(cn))
        except Exception as exc:
            raise StoreError(cn, exc) from exc

    def compute_bill(self, bucket_set: BucketSet, worker_count: int = 1) -> BillRun:
        self._require_finalized()
        with self._metrics.timed("compute_bill"):
            with ThreadPoolExecutor(max_workers=max(1, len(self.stores)), thread_name_prefix="a2-bill") as pool:
                futures = {cn: pool.submit(self.bill_cn, cn, bucket_set) for cn in self.stores}
                lines: list[BillLine] = []
                for cn in self.stores:
                    lines.extend(futures[cn].result())
        return BillRun(lines)

    def load_month(self):
        self._require_finalized()
        parts = [self.stores[cn].load(self.cn_households(cn), self.month) for cn in self.stores]
        data = np.concatenate(parts) if parts else np.zeros((0, self.month.slots), dtype=np.int64)
        return self.households, data

    def metrics(self) -> dict:
        snap = super().metrics()
        snap["rows"] = {cn: s.row_count() for cn, s in self.stores.items()}
        return snap

    def close(self):
        for s in self.stores.values():
            s.close()
