"""Architecture III: one growing XML string per household-month.

Every day each household's value is extended in place with that day's
readings. The coordinator keeps its own copy of the readings in memory and
bills from it with MCB; the blobs are only parsed back on a cold start.
"""

from __future__ import annotations

import sqlite3
from typing import Mapping

import numpy as np

from ..domain import HouseholdId, MonthSpec
from ..mcb import BillingJob, BillRun, bill_all
from ..tariff import BucketSet, build_mask
from .base import IncompleteMonth, MemoryBuffer, SerialWorker, StorageBackend
from .formats import blob_entries, blob_to_month

SCHEMA = """
CREATE TABLE IF NOT EXISTS kv (
    cn INTEGER NOT NULL,
    household INTEGER NOT NULL,
    blob TEXT NOT NULL DEFAULT '',
    PRIMARY KEY (cn, household)
)
"""


class KeyValueStore(StorageBackend):
    name = "A3"

    def __init__(self, root, topology: Mapping[int, int], month: MonthSpec):
        super().__init__(root, topology, month)
        self.path = self.root / "a3.sqlite"
        self.buffer = MemoryBuffer(self.topology, month)
        self._worker = SerialWorker("a3-writer", self._metrics.gauge("writer"))
        self._conn: sqlite3.Connection | None = None
        self._worker.call(self._open)

    def _open(self):
        self._conn = sqlite3.connect(self.path, check_same_thread=False, isolation_level=None)
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA synchronous=OFF")
        self._conn.execute(SCHEMA)
        self._conn.executemany(
            "INSERT OR IGNORE INTO kv (cn, household) VALUES (?, ?)",
            [(hh.cn, hh.local_index) for hh in self.households],
        )

    def _write(self, cn: int, day: int, batch: np.ndarray) -> None:
        self.append_daily(cn, day, batch)

    def append_daily(self, cn: int, day: int, batch: np.ndarray) -> None:
        """Extend each household's blob of ``cn`` with one day of entries."""
        payload = [(blob_entries(self.month, day, row), cn, i) for i, row in enumerate(batch)]

        def apply():
            conn = self._conn
            conn.execute("BEGIN")
            conn.executemany("UPDATE kv SET blob = blob || ? WHERE cn = ? AND household = ?", payload)
            conn.execute("COMMIT")
            return conn.execute("SELECT COALESCE(SUM(LENGTH(blob)), 0) FROM kv").fetchone()[0]

        with self._metrics.timed("append_daily"):
            size = self._worker.call(apply)
        self._metrics.record("blob_bytes", size)

    def blob(self, household: HouseholdId) -> str:
        rows = self._worker.call(lambda: self._conn.execute(
            "SELECT blob FROM kv WHERE cn = ? AND household = ?", (household.cn, household.local_index)).fetchall())
        if not rows:
            raise KeyError(household)
        return rows[0][0]

    def blob_sizes(self) -> dict[HouseholdId, int]:
        rows = self._worker.call(lambda: self._conn.execute(
            "SELECT cn, household, LENGTH(blob) FROM kv ORDER BY cn, household").fetchall())
        return {HouseholdId(c, h): n for c, h, n in rows}

    def load_month(self):
        """Cold start: parse every blob back into slot-ordered arrays."""
        rows = self._worker.call(lambda: self._conn.execute(
            "SELECT cn, household, blob FROM kv ORDER BY cn, household").fetchall())
        out = np.empty((len(rows), self.month.slots), dtype=np.int64)
        ids = []
        for i, (cn, household, blob) in enumerate(rows):
            hh = HouseholdId(cn, household)
            try:
                out[i] = blob_to_month(blob, self.month)
            except ValueError as exc:
                raise IncompleteMonth(hh, str(exc)) from exc
            ids.append(hh)
        return ids, out

    def compute_bill(self, bucket_set: BucketSet, worker_count: int = 1, source: str = "buffer") -> BillRun:
        self._require_finalized()
        with self._metrics.timed("compute_bill"):
            ids, data = self.buffer.arrays() if source == "buffer" else self.load_month()
            return bill_all(BillingJob(ids, data, build_mask(bucket_set), bucket_set.price_units(), worker_count))

    def close(self):
        if self._conn is not None:
            self._worker.call(self._conn.close)
            self._conn = None
        self._worker.close()

