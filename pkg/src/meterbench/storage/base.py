"""Backend contract shared by the four storage architectures."""

from __future__ import annotations

import abc
import contextlib
import queue
import threading
import time
from collections import defaultdict
from concurrent.futures import Future
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from ..domain import SLOTS_PER_DAY, HouseholdId, LengthMismatch, MeterError, MonthSpec, NegativeReading
from ..mcb import BillRun
from ..tariff import BucketSet


class StorageError(MeterError):
    pass


class DuplicateBatch(StorageError):
    def __init__(self, cn: int, day: int):
        super().__init__(f"batch for cn {cn}, day {day} already ingested")
        self.cn = cn
        self.day = day


class UnknownConcentrator(StorageError):
    pass


class IncompleteMonth(StorageError):
    def __init__(self, household: HouseholdId | None, detail: str = ""):
        self.household = household
        who = f"household {household}" if household is not None else "month"
        super().__init__(f"{who} incomplete{': ' + detail if detail else ''}")


class MonthAlreadyInitialized(StorageError):
    pass


class MonthNotInitialized(StorageError):
    pass


class MissingFile(StorageError):
    def __init__(self, path: Path):
        super().__init__(f"missing file {path}")
        self.path = Path(path)


class CorruptFile(StorageError):
    def __init__(self, path: Path, detail: str):
        super().__init__(f"corrupt file {path}: {detail}")
        self.path = Path(path)


class StoreError(StorageError):
    """A per-CN store failed; ``cn`` attributes the failure."""

    def __init__(self, cn: int, cause: Exception):
        super().__init__(f"cn {cn}: {cause}")
        self.cn = cn
        self.cause = cause


class ConcurrencyGauge:
    """Counts overlapping sections and remembers the highest overlap seen."""

    def __init__(self):
        self._lock = threading.Lock()
        self.active = 0
        self.max_active = 0
        self.entries = 0

    @contextlib.contextmanager
    def section(self):
        with self._lock:
            self.active += 1
            self.entries += 1
            self.max_active = max(self.max_active, self.active)
        try:
            yield
        finally:
            with self._lock:
                self.active -= 1


class Metrics:
    """Thread-safe timing samples and concurrency gauges."""

    def __init__(self):
        self._lock = threading.Lock()
        self.timings: dict[str, list[float]] = defaultdict(list)
        self.gauges: dict[str, ConcurrencyGauge] = defaultdict(ConcurrencyGauge)
        self.series: dict[str, list[float]] = defaultdict(list)

    @contextlib.contextmanager
    def timed(self, op: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            dt = time.perf_counter() - t0
            with self._lock:
                self.timings[op].append(dt)

    def gauge(self, name: str) -> ConcurrencyGauge:
        with self._lock:
            return self.gauges[name]

    def record(self, name: str, value: float):
        with self._lock:
            self.series[name].append(value)

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "timings": {k: list(v) for k, v in self.timings.items()},
                "max_concurrency": {k: g.max_active for k, g in self.gauges.items()},
                "series": {k: list(v) for k, v in self.series.items()},
            }


class SerialWorker:
    """One thread applying submitted jobs strictly in arrival order."""

    def __init__(self, name: str, gauge: ConcurrencyGauge):
        self._queue: queue.Queue = queue.Queue()
        self._gauge = gauge
        self._thread = threading.Thread(target=self._run, name=name, daemon=True)
        self._thread.start()

    def _run(self):
        while True:
            item = self._queue.get()
            if item is None:
                return
            fn, fut = item
            if not fut.set_running_or_notify_cancel():
                continue
            try:
                with self._gauge.section():
                    result = fn()
            except BaseException as exc:
                fut.set_exception(exc)
            else:
                fut.set_result(result)

    def submit(self, fn: Callable) -> Future:
        fut: Future = Future()
        self._queue.put((fn, fut))
        return fut

    def call(self, fn: Callable):
        return self.submit(fn).result()

    def close(self):
        self._queue.put(None)
        self._thread.join()


class MemoryBuffer:
    """The coordinator's in-memory copy of the month, one array per CN."""

    def __init__(self, topology: Mapping[int, int], month: MonthSpec):
        self.month = month
        self.topology = dict(sorted(topology.items()))
        self._data = {cn: np.full((n, month.slots), -1, dtype=np.int64) for cn, n in self.topology.items()}
        self._days = {cn: set() for cn in self.topology}
        self._lock = threading.Lock()

    def put(self, cn: int, day: int, batch: np.ndarray):
        lo = day * SLOTS_PER_DAY
        with self._lock:
            self._data[cn][:, lo:lo + SLOTS_PER_DAY] = batch
            self._days[cn].add(day)

    def complete(self) -> bool:
        return all(len(days) == self.month.days for days in self._days.values())

    def households(self) -> list[HouseholdId]:
        return [HouseholdId(cn, i) for cn, n in self.topology.items() for i in range(n)]

    def arrays(self) -> tuple[list[HouseholdId], np.ndarray]:
        if not self.complete():
            missing = {cn: sorted(set(range(self.month.days)) - d) for cn, d in self._days.items()}
            cn = next(c for c, m in missing.items() if m)
            raise IncompleteMonth(HouseholdId(cn, 0), f"buffer lacks days {missing[cn]}")
        parts = [self._data[cn] for cn in self.topology]
        data = np.concatenate(parts) if parts else np.zeros((0, self.month.slots), dtype=np.int64)
        return self.households(), data

    def cn_array(self, cn: int) -> np.ndarray:
        return self._data[cn]


class StorageBackend(abc.ABC):
    """One storage architecture.

    ``topology`` maps CN number to how many households that CN serves. Lines
    returned by :meth:`compute_bill` are ordered by (cn, household).
    """

    name = "?"
    buffer: MemoryBuffer | None = None

    def __init__(self, root: str | Path, topology: Mapping[int, int], month: MonthSpec):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.topology = dict(sorted(topology.items()))
        self.month = month
        self._metrics = Metrics()
        self._ingested: dict[int, set[int]] = {cn: set() for cn in self.topology}
        self._ingest_lock = threading.Lock()
        self._finalized = False

    # contract ---------------------------------------------------------------------

    def insert_daily(self, cn: int, day: int, batch: np.ndarray, *, to_buffer: bool = True) -> None:
        """Ingest one CN's readings for one day.

        ``to_buffer=False`` writes only to the store; the actor layer uses it
        because there the coordinator fills its own buffer from messages.
        """
        batch = self._check_batch(cn, day, batch)
        self._claim(cn, day)
        try:
            self._write(cn, day, batch)
        except BaseException:
            self._release(cn, day)
            raise
        if to_buffer and self.buffer is not None:
            self.buffer.put(cn, day, batch)

    @abc.abstractmethod
    def _write(self, cn: int, day: int, batch: np.ndarray) -> None:
        ...

    @abc.abstractmethod
    def compute_bill(self, bucket_set: BucketSet, worker_count: int = 1) -> BillRun:
        ...

    @abc.abstractmethod
    def load_month(self) -> tuple[list[HouseholdId], np.ndarray]:
        """Read the whole month back from the store itself (not a memory copy)."""

    def finalize_month(self) -> None:
        for cn, days in self._ingested.items():
            if len(days) != self.month.days:
                missing = sorted(set(range(self.month.days)) - days)
                raise IncompleteMonth(HouseholdId(cn, 0), f"cn {cn} lacks days {missing}")
        self._finalized = True

    def metrics(self) -> dict:
        return self._metrics.snapshot()

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # helpers ------------------------------------------------------------------------

    @property
    def households(self) -> list[HouseholdId]:
        return [HouseholdId(cn, i) for cn, n in self.topology.items() for i in range(n)]

    def _check_batch(self, cn: int, day: int, batch: np.ndarray) -> np.ndarray:
        if cn not in self.topology:
            raise UnknownConcentrator(f"unknown cn {cn}")
        if not 0 <= day < self.month.days:
            raise ValueError(f"day {day} outside 0..{self.month.days - 1}")
        batch = np.asarray(batch, dtype=np.int64)
        expected = (self.topology[cn], SLOTS_PER_DAY)
        if batch.shape != expected:
            raise LengthMismatch(expected[0] * expected[1], batch.size)
        if batch.size and batch.min() < 0:
            h, s = np.argwhere(batch < 0)[0]
            raise NegativeReading(day * SLOTS_PER_DAY + int(s), int(batch[h, s]))
        return batch

    def _claim(self, cn: int, day: int) -> None:
        with self._ingest_lock:
            if day in self._ingested[cn]:
                raise DuplicateBatch(cn, day)
            self._ingested[cn].add(day)

    def _release(self, cn: int, day: int) -> None:
        with self._ingest_lock:
            self._ingested[cn].discard(day)

    def _require_finalized(self) -> None:
        if not self._finalized:
            self.finalize_month()
