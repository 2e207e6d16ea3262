"""Coordinator (CDPN) and concentrator (CN) services.

The coordinator is the only active party: it orders every CN to collect a
day, joins their ``InsertDone`` replies, advances its month state, and at the
end of the month bills with the architecture's method. CNs only react.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from ..datagen import Generator, household_ids
from ..domain import MeterError, MonthSpec
from ..mcb import BillingJob, BillLine, bill_all
from ..storage import StorageBackend, StoreError, open_backend
from ..storage.base import IncompleteMonth
from ..tariff import BucketSet, PricingScheme, build_mask, default_bucket_set
from .messages import (
    BillDone,
    BillMonth,
    BillRequest,
    BillResponse,
    Collect,
    DailyData,
    DayDone,
    DayTimeout,
    Failure,
    InsertDone,
    MonthDone,
    NextDay,
    RunDay,
    RunMonth,
)
from .runtime import Actor, Address, Runtime, RuntimeStopped, concurrent, exclusive

log = logging.getLogger(__name__)

DEFAULT_COLLECT_DEADLINE = 60.0


class CnTimeout(MeterError, TimeoutError):
    def __init__(self, day: int, cns):
        self.day = day
        self.cns = sorted(cns)
        super().__init__(f"day {day}: no InsertDone from cn {', '.join(map(str, self.cns))}")


class DayRejected(MeterError, ValueError):
    pass


class CnService(Actor):
    """Collects its households' readings on order and stores them per architecture."""

    def __init__(self, cn: int, households: int, generator: Generator, month: MonthSpec,
                 backend: StorageBackend, architecture: str, stall_days=()):
        self.cn = cn
        self.households = household_ids(households, cn)
        self.generator = generator
        self.month = month
        self.backend = backend
        self.architecture = architecture
        self.stall_days = set(stall_days)

    @exclusive(Collect)
    def on_collect(self, msg: Collect, sender: Address):
        if msg.day in self.stall_days:
            log.info("cn %d stalling on day %d", self.cn, msg.day)
            return None
        batch = self.generator.day_batch(self.households, self.month, msg.day)
        self.backend.insert_daily(self.cn, msg.day, batch, to_buffer=False)
        if self.architecture in ("A3", "A4"):
            self.send(sender, DailyData(self.cn, msg.day, batch))
        return InsertDone(self.cn, msg.day, correlation_id=msg.correlation_id)

    @exclusive(BillRequest)
    def on_bill_request(self, msg: BillRequest, sender: Address):
        lines = self.backend.bill_cn(self.cn, msg.bucket_set)
        return BillResponse(self.cn, tuple(lines), correlation_id=msg.correlation_id)


@dataclass
class _Join:
    waiting: set
    requester: Address | None
    correlation_id: int
    started: float
    payload: dict = field(default_factory=dict)
    timer: threading.Timer | None = None


class CdpnService(Actor):
    """Drives the month and computes the bill."""

    def __init__(self, month: MonthSpec, backend: StorageBackend, architecture: str,
                 collect_deadline: float = DEFAULT_COLLECT_DEADLINE):
        self.month = month
        self.backend = backend
        self.architecture = architecture
        self.collect_deadline = collect_deadline
        self.cns: dict[int, Address] = {}
        self.next_day = 0
        self.day_seconds: list[float] = []
        self.failed = False
        self._day_join: _Join | None = None
        self._bill_join: _Join | None = None
        self._month_requester: tuple[Address, int] | None = None

    # daily workflow ----------------------------------------------------------------

    def _start_day(self, day: int, requester: Address | None, correlation_id: int):
        if self.failed:
            raise DayRejected("month aborted after an earlier failure")
        if self._day_join is not None:
            raise DayRejected(f"day {self._day_join.payload['day']} still running")
        if day != self.next_day:
            what = "already run" if day < self.next_day else f"out of order (next is {self.next_day})"
            raise DayRejected(f"day {day} {what}")
        if day >= self.month.days:
            raise DayRejected(f"day {day} past the end of the month")
        join = _Join(set(self.cns), requester, correlation_id, time.perf_counter(), {"day": day})
        self._day_join = join
        for cn, address in self.cns.items():
            self.send(address, Collect(day, correlation_id=correlation_id))
        join.timer = threading.Timer(self.collect_deadline, self._post_timeout, (day,))
        join.timer.daemon = True
        join.timer.start()

    def _post_timeout(self, day: int):
        try:
            self.runtime.send(self.address, DayTimeout(day))
        except RuntimeStopped:
            pass

    @exclusive(RunDay)
    def on_run_day(self, msg: RunDay, sender: Address):
        self._start_day(msg.day, sender, msg.correlation_id)

    @exclusive(RunMonth)
    def on_run_month(self, msg: RunMonth, sender: Address):
        if self.next_day >= self.month.days:
            raise DayRejected("month already complete")
        self._month_requester = (sender, msg.correlation_id)
        self.send(self.address, NextDay(self.next_day))

    @exclusive(NextDay)
    def on_next_day(self, msg: NextDay, sender: Address):
        try:
            self._start_day(msg.day, None, msg.correlation_id)
        except MeterError as exc:
            self._fail_month(exc)

    @concurrent(DailyData)
    def on_daily_data(self, msg: DailyData, sender: Address):
        self.backend.buffer.put(msg.cn, msg.day, msg.readings)

    @exclusive(InsertDone)
    def on_insert_done(self, msg: InsertDone, sender: Address):
        join = self._day_join
        if join is None or msg.day != join.payload["day"]:
            log.warning("late InsertDone from cn %d for day %d", msg.cn, msg.day)
            return
        join.waiting.discard(msg.cn)
        if join.waiting:
            return
        join.timer.cancel()
        self._day_join = None
        seconds = time.perf_counter() - join.started
        self.day_seconds.append(seconds)
        self.next_day += 1
        if join.requester is not None:
            self.send(join.requester, DayDone(msg.day, seconds, correlation_id=join.correlation_id))
        elif self._month_requester is not None:
            if self.next_day < self.month.days:
                self.send(self.address, NextDay(self.next_day))
            else:
                requester, cid = self._month_requester
                self._month_requester = None
                self.send(requester, MonthDone(tuple(self.day_seconds), correlation_id=cid))

    @exclusive(DayTimeout)
    def on_day_timeout(self, msg: DayTimeout, sender: Address):
        join = self._day_join
        if join is None or join.payload["day"] != msg.day:
            return
        self._abort_day(CnTimeout(msg.day, join.waiting))

    def _abort_day(self, error: Exception):
        join = self._day_join
        self._day_join = None
        if join.timer is not None:
            join.timer.cancel()
        self.failed = True
        if join.requester is not None:
            self.send(join.requester, Failure(error, correlation_id=join.correlation_id))
        else:
            self._fail_month(error)

    def _fail_month(self, error: Exception):
        self.failed = True
        if self._month_requester is not None:
            requester, cid = self._month_requester
            self._month_requester = None
            self.send(requester, Failure(error, correlation_id=cid))

    # billing ------------------------------------------------------------------------

    @exclusive(BillMonth)
    def on_bill_month(self, msg: BillMonth, sender: Address):
        if self.next_day < self.month.days:
            raise IncompleteMonth(None, f"only {self.next_day} of {self.month.days} days collected")
        if self._bill_join is not None:
            raise DayRejected("a bill is already being computed")
        self.backend.finalize_month()
        t0 = time.perf_counter()
        if self.architecture == "A1":
            run = self.backend.compute_bill(msg.bucket_set)
            return BillDone(tuple(run.lines), time.perf_counter() - t0, correlation_id=msg.correlation_id)
        if self.architecture == "A2":
            self._bill_join = _Join(set(self.cns), sender, msg.correlation_id, t0)
            for address in self.cns.values():
                self.send(address, BillRequest(msg.bucket_set, correlation_id=msg.correlation_id))
            return None
        ids, data = self.backend.buffer.arrays()
        run = bill_all(BillingJob(ids, data, build_mask(msg.bucket_set), msg.bucket_set.price_units(),
                                  msg.worker_count))
        return BillDone(tuple(run.lines), time.perf_counter() - t0, tuple(run.errors),
                        correlation_id=msg.correlation_id)

    @exclusive(BillResponse)
    def on_bill_response(self, msg: BillResponse, sender: Address):
        join = self._bill_join
        if join is None:
            return
        join.payload[msg.cn] = msg.lines
        join.waiting.discard(msg.cn)
        if not join.waiting:
            self._bill_join = None
            lines: list[BillLine] = []
            for cn in sorted(self.cns):
                lines.extend(join.payload[cn])
            self.send(join.requester, BillDone(tuple(lines), time.perf_counter() - join.started,
                                               correlation_id=join.correlation_id))

    @exclusive(Failure)
    def on_failure(self, msg: Failure, sender: Address):
        cn = next((c for c, a in self.cns.items() if a == sender), None)
        error = StoreError(cn, msg.error) if cn is not None else msg.error
        if self._bill_join is not None and cn in self._bill_join.waiting:
            join, self._bill_join = self._bill_join, None
            self.send(join.requester, Failure(error, correlation_id=join.correlation_id))
        elif self._day_join is not None and cn in self._day_join.waiting:
            self._abort_day(error)
        else:
            log.warning("unsolicited failure from %s: %s", sender, msg.error)

    def on_shutdown(self):
        if self._day_join is not None and self._day_join.timer is not None:
            self._day_join.timer.cancel()


class Simulation:
    """A coordinator, its concentrators and one storage architecture, wired up."""

    def __init__(self, architecture: str, topology: Mapping[int, int], root: str | Path,
                 month: MonthSpec | None = None, generator: Generator | None = None,
                 max_workers: int = 4, remote_cns: bool = False,
                 collect_deadline: float = DEFAULT_COLLECT_DEADLINE, stall: Mapping[int, set] | None = None):
        self.architecture = architecture.upper()
        self.month = month or MonthSpec()
        self.topology = dict(sorted(topology.items()))
        self.generator = generator or Generator()
        self.backend = open_backend(self.architecture, root, self.topology, self.month)
        self.runtime = Runtime(max_workers=max_workers)
        self.cdpn = CdpnService(self.month, self.backend, self.architecture, collect_deadline)
        self.cdpn_address = self.runtime.spawn(self.cdpn, "cdpn")
        stall = stall or {}
        for cn, n in self.topology.items():
            service = CnService(cn, n, self.generator, self.month, self.backend, self.architecture,
                                stall.get(cn, ()))
            self.cdpn.cns[cn] = self.runtime.spawn(service, f"cn-{cn}", remote=remote_cns)

    def _ask(self, message, timeout: float | None):
        return self.runtime.ask(self.cdpn_address, message).result(timeout)

    def run_day(self, day: int, timeout: float | None = None) -> DayDone:
        return self._ask(RunDay(day), timeout)

    def run_month(self, timeout: float | None = None) -> list[float]:
        """Let the coordinator drive the remaining days itself; returns per-day seconds."""
        return list(self._ask(RunMonth(), timeout).day_seconds)

    def run_month_billing(self, scheme: BucketSet | PricingScheme | None = None, worker_count: int = 1,
                          timeout: float | None = None) -> BillDone:
        if scheme is None or isinstance(scheme, PricingScheme):
            scheme = default_bucket_set(self.month, scheme or PricingScheme())
        return self._ask(BillMonth(scheme, worker_count), timeout)

    def shutdown(self) -> bool:
        quiet = self.runtime.shutdown()
        self.backend.close()
        return quiet

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()
