"""Experiment drivers: full simulated months, MCB sweeps, cross-backend checks."""

from __future__ import annotations

import logging
import os
import statistics
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from ..actors import Simulation
from ..datagen import Generator, NoiseModel, household_ids
from ..domain import DEFAULT_MONTH, MeterError, MonthSpec
from ..mcb import BillingJob, bill_all, bill_arrays, bill_checksum
from ..storage import ARCHITECTURES
from ..tariff import build_mask, default_bucket_set
from .config import RunConfig
from .report import ExperimentReport, emit_csv, emit_table

log = logging.getLogger(__name__)


class ExperimentError(MeterError, RuntimeError):
    """A run failed; ``report`` holds whatever was measured before the failure."""

    def __init__(self, message: str, report: ExperimentReport | None = None):
        super().__init__(message)
        self.report = report


def host_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def methodology(repetitions: int, warmup: int) -> str:
    return (f"time.perf_counter wall clock; median of {repetitions} timed runs; "
            f"{warmup} warm-up run(s) discarded")


@dataclass
class MonthRun:
    day_seconds: list[float]
    bill_seconds: float
    checksum: str
    cold_start_seconds: float | None = None
    households: list = field(default_factory=list)
    data: np.ndarray | None = None


def simulate_month(config: RunConfig, root: str | Path, keep_data: bool = False) -> MonthRun:
    """One full month through the actor layer, then one bill."""
    bucket_set = config.bucket_set()
    with Simulation(config.architecture, config.topology, root, month=config.month,
                    generator=config.generator(), remote_cns=config.remote_cns,
                    collect_deadline=config.collect_deadline) as sim:
        days = sim.run_month()
        t0 = time.perf_counter()
        done = sim.run_month_billing(bucket_set)
        bill = time.perf_counter() - t0
        if done.errors:
            raise ExperimentError(f"{len(done.errors)} household(s) failed billing: {done.errors[0]}")
        run = MonthRun(days, bill, bill_checksum(done.lines))
        if config.architecture == "A4":
            t0 = time.perf_counter()
            ids, cold = sim.backend.cold_start_load()
            run.cold_start_seconds = time.perf_counter() - t0
            _, warm = sim.backend.buffer.arrays()
            if not np.array_equal(cold, warm):
                raise ExperimentError("A4 cold-start load differs from the memory buffer")
        if keep_data:
            if sim.backend.buffer is not None:
                run.households, run.data = sim.backend.buffer.arrays()
            else:
                run.households, run.data = sim.backend.load_month()
    return run


def time_mcb(data: np.ndarray, mask, prices, workers: int, repetitions: int, warmup: int) -> tuple[float, tuple]:
    """Median wall time of the array-level MCB at one worker count, and its result."""
    samples = []
    result = None
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="mcb") as pool:
        for i in range(warmup + repetitions):
            t0 = time.perf_counter()
            result = bill_arrays(data, mask, prices, workers, executor=pool)
            dt = time.perf_counter() - t0
            if i >= warmup:
                samples.append(dt)
    return statistics.median(samples), result


def _mcb_row(report: ExperimentReport, data, bucket_set, workers: Iterable[int], repetitions: int, warmup: int):
    mask, prices = build_mask(bucket_set), bucket_set.price_units()
    first = None
    for w in workers:
        seconds, (wh, amount) = time_mcb(data, mask, prices, w, repetitions, warmup)
        if first is None:
            first = (wh, amount)
        elif not (np.array_equal(first[0], wh) and np.array_equal(first[1], amount)):
            raise ExperimentError(f"MCB result with {w} workers differs from the first worker count")
        report.mcb_seconds[(w, data.shape[0])] = seconds


def run_experiment(config: RunConfig, write: bool = True, workdir: str | Path | None = None) -> ExperimentReport:
    """Simulate ``warmup + repetitions`` months and report the medians.

    With ``write`` the config, CSV and table land in ``<output_dir>/<run id>/``,
    also when the run fails part-way (the partial report is then attached to
    the raised :class:`ExperimentError`).
    """
    report = ExperimentReport(
        config.name, config.architecture, config.households, config.cn_count, config.seed,
        config.repetitions, config.warmup, host_cores(), methodology(config.repetitions, config.warmup),
    )
    try:
        runs = []
        for i in range(config.warmup + config.repetitions):
            with tempfile.TemporaryDirectory(prefix=f"{config.name}-", dir=workdir) as root:
                last = i == config.warmup + config.repetitions - 1
                run = simulate_month(config, root, keep_data=last)
            log.info("%s run %d: bill %.4f s", config.name, i, run.bill_seconds)
            if runs and run.checksum != runs[0].checksum:
                raise ExperimentError(f"run {i} produced checksum {run.checksum}, earlier {runs[0].checksum}")
            runs.append(run)
            report.checksum = run.checksum
        timed = runs[config.warmup:]
        report.ingest_seconds = [statistics.median(r.day_seconds[d] for r in timed)
                                 for d in range(config.month.days)]
        report.bill_seconds = statistics.median(r.bill_seconds for r in timed)
        if config.architecture == "A4":
            report.cold_start_seconds = statistics.median(r.cold_start_seconds for r in timed)
        bucket_set = config.bucket_set()
        final = runs[-1]
        reference = bill_all(BillingJob(final.households, final.data, build_mask(bucket_set),
                                        bucket_set.price_units()))
        if bill_checksum(reference.lines) != report.checksum:
            raise ExperimentError(f"{config.architecture} bill differs from in-memory MCB over the same data")
        _mcb_row(report, final.data, bucket_set, config.mcb_workers, config.repetitions, config.warmup)
    except Exception as exc:
        report.errors.append(f"{type(exc).__name__}: {exc}")
        if write:
            persist(config, report)
        if isinstance(exc, ExperimentError):
            exc.report = report
            raise
        raise ExperimentError(str(exc), report) from exc
    if write:
        persist(config, report)
    return report


def persist(config: RunConfig, report: ExperimentReport) -> Path:
    out = config.output_dir / report.run_id
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(config.to_yaml())
    if config.source is not None and config.overrides:
        overrides = {k: str(v) if isinstance(v, Path) else v for k, v in config.overrides.items()}
        (out / "overrides.yaml").write_text(yaml.safe_dump(overrides, sort_keys=False))
    emit_csv(report, out / "results.csv")
    (out / "table.txt").write_text(emit_table(report))
    return out


def sweep_mcb(households: Sequence[int], workers: Sequence[int], seed: int = 42, repetitions: int = 5,
              warmup: int = 1, month: MonthSpec = DEFAULT_MONTH, noise: NoiseModel | None = None,
              bucket_set=None, run_id: str = "mcb-sweep") -> ExperimentReport:
    """Wall time of MCB for every (size, worker count); shaped like a threads x sizes table."""
    report = ExperimentReport(run_id, "MCB", max(households, default=0), 1, seed, repetitions, warmup,
                              host_cores(), methodology(repetitions, warmup))
    bucket_set = bucket_set or default_bucket_set(month)
    gen = Generator(seed, noise or NoiseModel())
    for n in households:
        data = gen.month(household_ids(n), month)
        _mcb_row(report, data, bucket_set, workers, repetitions, warmup)
    return report


@dataclass
class VerifyResult:
    checksums: dict[tuple[int, str], str]  # (seed, architecture) -> checksum
    reference: dict[int, str]  # seed -> checksum of in-memory MCB over generated data

    @property
    def mismatches(self) -> list[tuple[int, str]]:
        return [(seed, arch) for (seed, arch), c in self.checksums.items() if c != self.reference[seed]]

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def lines(self) -> list[str]:
        out = []
        for (seed, arch), c in sorted(self.checksums.items()):
            mark = "ok" if c == self.reference[seed] else "MISMATCH"
            out.append(f"seed {seed}  {arch}  {c}  {mark}")
        return out


def reference_checksum(config: RunConfig) -> str:
    gen = config.generator()
    ids = [hh for cn in range(config.cn_count) for hh in household_ids(config.households_per_cn, cn)]
    data = gen.month(ids, config.month)
    return bill_checksum(bill_all(BillingJob.from_bucket_set(ids, data, config.bucket_set())).lines)


def verify(config: RunConfig, architectures: Sequence[str] = ARCHITECTURES, seeds: Sequence[int] | None = None,
           workdir: str | Path | None = None) -> VerifyResult:
    """Bill one month per (seed, architecture) and compare against the in-memory reference."""
    checksums, reference = {}, {}
    for seed in seeds or (config.seed,):
        cfg = config.replace(seed=seed)
        reference[seed] = reference_checksum(cfg)
        for arch in architectures:
            with tempfile.TemporaryDirectory(prefix=f"verify-{arch}-", dir=workdir) as root:
                checksums[(seed, arch)] = simulate_month(cfg.replace(architecture=arch), root).checksum
    return VerifyResult(checksums, reference)
