"""Architecture IV: readings in per-household text files, pointers in a database.

Each concentrator owns a file tree::

    <root>/cn-<NNN>/<YYYY-MM>/timestamps.dat
    <root>/cn-<NNN>/<YYYY-MM>/data/<hex2>/<hex2>/<household>.dat

The first shard level is ``household % 256`` and the second
``(household // 256) % 256``, both as two lowercase hex digits, so no
directory holds more than 256 entries below 16.7M households per CN. The coordinator's metadata table holds one
row per household pointing at its consumption file and at the shared
timestamp file; rows are written once, when the month is built.
"""

from __future__ import annotations

import sqlite3
import threading
from pathlib import Path
from typing import Mapping

import numpy as np

from ..domain import HouseholdId, MonthSpec
from ..mcb import BillingJob, BillRun, bill_all
from ..tariff import BucketSet, build_mask
from .base import MemoryBuffer, MonthAlreadyInitialized, MonthNotInitialized, StorageBackend
from .formats import consumption_lines, read_consumption_file, read_timestamp_file, timestamp_lines

TIMESTAMP_FILE = "timestamps.dat"
DATA_DIR = "data"
FANOUT = 256

METADATA_SCHEMA = """
CREATE TABLE IF NOT EXISTS files (
    month TEXT NOT NULL,
    cn INTEGER NOT NULL,
    household INTEGER NOT NULL,
    timestamp_path TEXT NOT NULL,
    consumption_path TEXT NOT NULL,
    PRIMARY KEY (month, cn, household)
)
"""


def shard_dirs(household: int) -> tuple[str, str]:
    return f"{household % FANOUT:02x}", f"{(household // FANOUT) % FANOUT:02x}"


def cn_root(root: Path, cn: int) -> Path:
    return root / f"cn-{cn:03d}"


def consumption_relpath(month: MonthSpec, household: int) -> Path:
    a, b = shard_dirs(household)
    return Path(month.label) / DATA_DIR / a / b / f"{household}.dat"


class HybridStore(StorageBackend):
    name = "A4"

    def __init__(self, root, topology: Mapping[int, int], month: MonthSpec):
        super().__init__(root, topology, month)
        self.buffer = MemoryBuffer(self.topology, month)
        self.metadata_path = self.root / "metadata.sqlite"
        self._db = sqlite3.connect(self.metadata_path, check_same_thread=False, isolation_level=None)
        self._db.execute(METADATA_SCHEMA)
        self._db_lock = threading.Lock()
        self._paths: dict[int, list[Path]] = {}
        self._init_lock = threading.Lock()

    # month layout --------------------------------------------------------------------

    def month_root(self, cn: int) -> Path:
        return cn_root(self.root, cn) / self.month.label

    def timestamp_path(self, cn: int) -> Path:
        return self.month_root(cn) / TIMESTAMP_FILE

    def build_month(self, cn: int) -> list[Path]:
        """Create one CN's tree and empty files, and register the pointers."""
        with self._init_lock:
            if cn in self._paths:
                raise MonthAlreadyInitialized(f"cn {cn} already built {self.month.label}")
            base = cn_root(self.root, cn)
            if (base / self.month.label).exists():
                raise MonthAlreadyInitialized(f"{base / self.month.label} already exists")
            rel = [consumption_relpath(self.month, h) for h in range(self.topology[cn])]
            for d in sorted({p.parent for p in rel}):
                (base / d).mkdir(parents=True, exist_ok=True)
            (base / self.month.label).mkdir(parents=True, exist_ok=True)
            for p in rel:
                (base / p).touch()
            ts = self.timestamp_path(cn)
            ts.touch()
            rows = [
                (self.month.label, cn, h, str(ts.relative_to(self.root)), str((base / p).relative_to(self.root)))
                for h, p in enumerate(rel)
            ]
            with self._db_lock, self._metrics.timed("metadata_insert"):
                self._db.execute("BEGIN")
                self._db.executemany("INSERT INTO files VALUES (?, ?, ?, ?, ?)", rows)
                self._db.execute("COMMIT")
            self._paths[cn] = [base / p for p in rel]
            return self._paths[cn]

    def files(self) -> list[Path]:
        return sorted(p for p in self.root.rglob("*.dat"))

    # ingest --------------------------------------------------------------------------

    def insert_daily(self, cn: int, day: int, batch: np.ndarray, *, to_buffer: bool = True) -> None:
        if day == 0 and cn in self.topology and cn not in self._paths:
            self.build_month(cn)
        super().insert_daily(cn, day, batch, to_buffer=to_buffer)

    def _write(self, cn: int, day: int, batch: np.ndarray) -> None:
        self.append_daily(cn, day, batch)

    def append_daily(self, cn: int, day: int, batch: np.ndarray) -> None:
        paths = self._paths.get(cn)
        if paths is None:
            raise MonthNotInitialized(f"cn {cn} has no tree for {self.month.label}")
        with self._metrics.gauge("active_cns").section(), self._metrics.timed("append_daily"):
            for path, row in zip(paths, batch):
                with open(path, "a") as f:
                    f.write(consumption_lines(row))
            with open(self.timestamp_path(cn), "a") as f:
                f.write(timestamp_lines(self.month, day))

    # retrieval -----------------------------------------------------------------------

    def metadata_rows(self) -> list[tuple[int, int, str, str]]:
        with self._db_lock:
            return self._db.execute(
                "SELECT cn, household, timestamp_path, consumption_path FROM files "
                "WHERE month = ? ORDER BY cn, household", (self.month.label,)
            ).fetchall()

    def cold_start_load(self) -> tuple[list[HouseholdId], np.ndarray]:
        """Rebuild the month from disk using only the metadata pointers."""
        with self._metrics.timed("cold_start_load"):
            rows = self.metadata_rows()
            out = np.empty((len(rows), self.month.slots), dtype=np.int64)
            checked = set()
            ids = []
            for i, (cn, household, ts_rel, data_rel) in enumerate(rows):
                ts = self.root / ts_rel
                if ts not in checked:
                    read_timestamp_file(ts, self.month)
                    checked.add(ts)
                out[i] = read_consumption_file(self.root / data_rel, self.month.slots)
                ids.append(HouseholdId(cn, household))
        return ids, out

    def load_month(self):
        return self.cold_start_load()

    def compute_bill(self, bucket_set: BucketSet, worker_count: int = 1, source: str = "buffer") -> BillRun:
        self._require_finalized()
        with self._metrics.timed("compute_bill"):
            ids, data = self.buffer.arrays() if source == "buffer" else self.cold_start_load()
            return bill_all(BillingJob(ids, data, build_mask(bucket_set), bucket_set.price_units(), worker_count))

    def close(self):
        with self._db_lock:
            self._db.close()
