"""Acceptance gate: one test per criterion, each recorded for the summary table."""

import contextlib
import io
import statistics
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings

from meterbench.actors import Runtime, Simulation
from meterbench.bench import RunConfig
from meterbench.bench.experiment import host_cores, reference_checksum, time_mcb
from meterbench.bench.report import write_readings_csv
from meterbench.datagen import Generator, generate_month, household_ids
from meterbench.domain import DEFAULT_MONTH, MonthSpec
from meterbench.mcb import BillingJob, bill_all, bill_checksum, bill_household, brute_force_bill
from meterbench.storage import ARCHITECTURES, DistributedStore, HybridStore, MissingFile, SingleStore
from meterbench.storage.hybrid import consumption_relpath
from meterbench.tariff import EVENING_CPP, TOU, build_mask, classify, default_bucket_set

from .conftest import record_acceptance
from .strategies import billing_cases, bucket_sets
from .test_actors import Recorder, Sender, Start
from .test_storage import concurrent_ingest, fill

pytestmark = pytest.mark.acceptance


@contextlib.contextmanager
def criterion(number, title):
    """Record PASS when the block finishes, FAIL (and re-raise) when it does not."""
    detail = {}
    t0 = time.perf_counter()
    try:
        yield detail
    except Exception as exc:
        record_acceptance(number, title, "fail", f"{type(exc).__name__}: {exc}"[:160])
        raise
    text = ", ".join(f"{k} {v}" for k, v in detail.items())
    record_acceptance(number, title, "pass", f"{text}; {time.perf_counter() - t0:.1f} s".lstrip("; "))


def test_01_cross_backend_equivalence(tmp_path):
    with criterion(1, "cross-backend bill equivalence") as detail:
        schemes = {"TOU": TOU, "CPP": EVENING_CPP}
        compared = 0
        for seed in (1, 42, 7):
            for cn_count in (1, 3):
                base = RunConfig(cn_count=cn_count, households_per_cn=100, seed=seed)
                want = {name: reference_checksum(base.replace(scheme=s)) for name, s in schemes.items()}
                for arch in ARCHITECTURES:
                    root = tmp_path / f"{arch}-{seed}-{cn_count}"
                    with Simulation(arch, base.topology, root, generator=base.generator()) as sim:
                        sim.run_month()
                        for name, scheme in schemes.items():
                            done = sim.run_month_billing(scheme)
                            assert not done.errors
                            got = bill_checksum(done.lines)
                            assert got == want[name], f"{arch} seed {seed} {cn_count}x100 {name}"
                            compared += 1
        assert compared == 3 * 2 * 2 * 4
        detail["checksums"] = compared


def test_02_oracle_equivalence():
    cases = []

    @settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(billing_cases())
    def check(case):
        bs, readings = case
        assert bill_household(readings, build_mask(bs), bs.price_units()) == brute_force_bill(readings, bs)
        cases.append(1)

    with criterion(2, "MCB equals the brute-force oracle") as detail:
        check()
        assert len(cases) >= 1000
        detail["cases"] = len(cases)


def test_03_mask_correctness():
    sets = []

    @settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(bucket_sets())
    def check(bs):
        mask = build_mask(bs)
        n = bs.month.slots
        assert sorted(mask.mask.tolist()) == list(range(n))
        labels = [classify(slot, bs) for slot in range(n)]
        for b, (start, length) in enumerate(mask.boundaries):
            mine = [slot for slot in range(n) if labels[slot] == b]
            assert len(mine) == length
            # stable: the bucket's slots occupy its range in ascending slot order
            assert [int(mask.mask[s]) for s in mine] == list(range(start, start + length))
        sets.append(1)

    with criterion(3, "mask is a stable, classify-consistent permutation") as detail:
        check()
        assert len(sets) >= 200
        detail["bucket sets"] = len(sets)


def test_04_worker_count_invariance(month_1k):
    ids, data = month_1k
    bs = default_bucket_set()
    with criterion(4, "bill_all identical across worker counts") as detail:
        runs = {w: bill_all(BillingJob(ids, data, build_mask(bs), bs.price_units(), w)).lines for w in (1, 2, 4, 8)}
        assert len(runs[1]) == 1000
        for w, lines in runs.items():
            assert lines == runs[1], f"{w} workers"
        detail["checksum"] = bill_checksum(runs[1])[:12]


@pytest.mark.slow
def test_05_mcb_speedup():
    title = "MCB speedup T2 <= 0.70 T1, T4 <= 0.45 T1 at 10K households"
    cores = host_cores()
    if cores < 4:
        record_acceptance(5, title, "skip", f"needs >= 4 cores, host has {cores}")
        pytest.skip(f"speedup criterion needs >= 4 cores; host has {cores}")
    with criterion(5, title) as detail:
        ids = household_ids(10_000)
        data = Generator(42).month(ids, DEFAULT_MONTH)
        bs = default_bucket_set()
        mask, prices = build_mask(bs), bs.price_units()
        t = {w: time_mcb(data, mask, prices, w, repetitions=5, warmup=1)[0] for w in (1, 2, 4)}
        detail["T1/T2/T4"] = "/".join(f"{t[w]:.3f}" for w in (1, 2, 4))
        assert t[2] <= 0.70 * t[1]
        assert t[4] <= 0.45 * t[1]


def test_06_volume_accounting(tmp_path):
    with criterion(6, "2976 readings per household-month, n + 1 A4 files") as detail:
        ids, data = generate_month(42, 1, DEFAULT_MONTH)
        assert data.shape == (1, 2976)
        with HybridStore(tmp_path, {0: 100}, DEFAULT_MONTH) as backend:
            backend.build_month(0)
            files = [p for p in tmp_path.rglob("*.dat")]
            assert len(backend.files()) == len(files) == 101
        detail["readings"] = data.size
        detail["files"] = len(files)


def test_07_a4_round_trip(tmp_path):
    with criterion(7, "A4 cold start equals the buffer; missing file names its path") as detail:
        gen = Generator(42)
        with HybridStore(tmp_path, {0: 1000}, DEFAULT_MONTH) as backend:
            fill(backend, gen, DEFAULT_MONTH)
            warm_ids, warm = backend.buffer.arrays()
            cold_ids, cold = backend.cold_start_load()
            assert cold_ids == warm_ids and cold.dtype == warm.dtype
            assert cold.tobytes() == warm.tobytes()
            victim = (tmp_path / "cn-000" / consumption_relpath(DEFAULT_MONTH, 513)).resolve()
            victim.unlink()
            with pytest.raises(MissingFile) as e:
                backend.cold_start_load()
            assert e.value.path == victim and str(victim) in str(e.value)
        detail["bytes"] = warm.nbytes


def test_08_a1_serial_a2_parallel(tmp_path):
    with criterion(8, "A1 writer concurrency 1, A2 store concurrency >= 2") as detail:
        topo = {0: 2000, 1: 2000, 2: 2000}
        with SingleStore(tmp_path / "a1", topo, DEFAULT_MONTH) as a1:
            concurrent_ingest(a1, Generator(3), DEFAULT_MONTH)
            a1_max = a1.metrics()["max_concurrency"]
        with DistributedStore(tmp_path / "a2", topo, DEFAULT_MONTH) as a2:
            concurrent_ingest(a2, Generator(3), DEFAULT_MONTH)
            a2_max = a2.metrics()["max_concurrency"]
        assert a1_max["writer"] == 1 and a1_max["ingest_callers"] >= 2
        assert a2_max["active_stores"] >= 2
        detail["A1 writer"] = a1_max["writer"]
        detail["A2 stores"] = a2_max["active_stores"]


def test_09_actor_runtime_stress():
    with criterion(9, "actor stress 4 x 10K: exactly once, FIFO, no overlap, quiescent") as detail:
        senders, count = 4, 10_000
        rt = Runtime(max_workers=8)
        rec = Recorder()
        target = rt.spawn(rec, "recorder")
        for i in range(senders):
            rt.send(rt.spawn(Sender(i, target, probe_every=10)), Start(count))
        assert rt.shutdown(timeout=60)
        assert rt.pending() == 0 and rt.queued() == 0
        assert all(rec.seen[i] == list(range(count)) for i in range(senders))
        assert rec.exclusive_overlaps == 0
        detail["delivered"] = sum(len(v) for v in rec.seen.values())


def a3_dump(root):
    cfg = RunConfig(architecture="A3", cn_count=3, households_per_cn=100, seed=42)
    with Simulation("A3", cfg.topology, root, generator=cfg.generator()) as sim:
        sim.run_month()
        done = sim.run_month_billing(cfg.bucket_set())
        ids, data = sim.backend.load_month()
    out = io.StringIO()
    write_readings_csv(ids, data, out)
    return out.getvalue(), bill_checksum(done.lines)


def test_10_a3_determinism(tmp_path):
    with criterion(10, "two A3 runs give identical dumps and checksums") as detail:
        dump1, sum1 = a3_dump(tmp_path / "one")
        dump2, sum2 = a3_dump(tmp_path / "two")
        assert dump1 == dump2
        assert sum1 == sum2
        assert dump1.count("\n") == 1 + 300 * 2976
        detail["checksum"] = sum1[:12]
