import threading
import time
from collections import Counter
from decimal import Decimal

import numpy as np
import pytest

from meterbench.datagen import Generator, household_ids
from meterbench.domain import DEFAULT_MONTH, HouseholdId, MonthSpec
from meterbench.mcb import BillingJob, bill_all
from meterbench.storage import (
    ARCHITECTURES,
    CorruptFile,
    DistributedStore,
    DuplicateBatch,
    HybridStore,
    IncompleteMonth,
    KeyValueStore,
    MissingFile,
    MonthAlreadyInitialized,
    MonthNotInitialized,
    SingleStore,
    UnknownConcentrator,
    open_backend,
)
from meterbench.storage.formats import blob_entries, blob_to_month, parse_blob
from meterbench.storage.hybrid import consumption_relpath
from meterbench.tariff import BucketSet, default_bucket_set

from .test_tariff import whole_day

SHORT = MonthSpec(days=3)


def fill(backend, gen, month, days=None):
    for day in range(month.days if days is None else days):
        for cn, n in backend.topology.items():
            backend.insert_daily(cn, day, gen.day_batch(household_ids(n, cn), month, day))


def expected(gen, topology, month):
    ids = [hh for cn, n in sorted(topology.items()) for hh in household_ids(n, cn)]
    return ids, gen.month(ids, month) if ids else np.zeros((0, month.slots), dtype=np.int64)


@pytest.fixture(params=ARCHITECTURES)
def arch(request):
    return request.param


def test_every_backend_bills_like_memory(arch, tmp_path):
    gen, topo = Generator(9), {0: 4, 1: 6}
    bs = default_bucket_set(SHORT)
    with open_backend(arch, tmp_path, topo, SHORT) as backend:
        fill(backend, gen, SHORT)
        ids, data = expected(gen, topo, SHORT)
        want = bill_all(BillingJob.from_bucket_set(ids, data, bs)).lines
        assert backend.compute_bill(bs).lines == want
        got_ids, got = backend.load_month()
        assert got_ids == ids and np.array_equal(got, data)


def test_constant_month_closed_form(arch, tmp_path):
    bs = BucketSet([whole_day(price="0.25")])
    batch = np.full((1, 96), 1000, dtype=np.int64)
    with open_backend(arch, tmp_path, {0: 1}, DEFAULT_MONTH) as backend:
        for day in range(31):
            backend.insert_daily(0, day, batch)
        (line,) = backend.compute_bill(bs).lines
        assert line.total_amount == 2976 * Decimal("0.25")


def test_zero_households(arch, tmp_path):
    with open_backend(arch, tmp_path, {0: 0}, SHORT) as backend:
        for day in range(SHORT.days):
            backend.insert_daily(0, day, np.zeros((0, 96), dtype=np.int64))
        assert backend.compute_bill(default_bucket_set(SHORT)).lines == []


def test_duplicate_batch(arch, tmp_path):
    with open_backend(arch, tmp_path, {0: 2}, SHORT) as backend:
        batch = np.ones((2, 96), dtype=np.int64)
        backend.insert_daily(0, 0, batch)
        with pytest.raises(DuplicateBatch):
            backend.insert_daily(0, 0, batch)


def test_bill_before_month_complete(arch, tmp_path):
    with open_backend(arch, tmp_path, {0: 2}, SHORT) as backend:
        fill(backend, Generator(1), SHORT, days=2)
        with pytest.raises(IncompleteMonth):
            backend.compute_bill(default_bucket_set(SHORT))


def test_unknown_cn_and_bad_shape(tmp_path):
    with SingleStore(tmp_path, {0: 2}, SHORT) as backend:
        with pytest.raises(UnknownConcentrator):
            backend.insert_daily(5, 0, np.zeros((2, 96), dtype=np.int64))
        with pytest.raises(ValueError):
            backend.insert_daily(0, 0, np.zeros((3, 96), dtype=np.int64))


def test_unknown_architecture(tmp_path):
    with pytest.raises(ValueError):
        open_backend("A5", tmp_path, {0: 1}, SHORT)


# --- A1 ------------------------------------------------------------------------------


def test_a1_row_count(tmp_path):
    with SingleStore(tmp_path, {0: 100}, DEFAULT_MONTH) as backend:
        backend.insert_daily(0, 0, Generator(2).day_batch(household_ids(100), DEFAULT_MONTH, 0))
        assert backend.metrics()["rows"] == 9600


def concurrent_ingest(backend, gen, month, day=0):
    barrier = threading.Barrier(len(backend.topology))
    batches = {cn: gen.day_batch(household_ids(n, cn), month, day) for cn, n in backend.topology.items()}
    errors = []

    def ingest(cn):
        barrier.wait()
        try:
            backend.insert_daily(cn, day, batches[cn])
        except Exception as exc:  # pragma: no cover - surfaced below
            errors.append(exc)

    threads = [threading.Thread(target=ingest, args=(cn,)) for cn in backend.topology]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors


def test_a1_single_writer(tmp_path):
    with SingleStore(tmp_path, {0: 300, 1: 300, 2: 300}, DEFAULT_MONTH) as backend:
        concurrent_ingest(backend, Generator(3), DEFAULT_MONTH)
        m = backend.metrics()
        assert m["rows"] == 3 * 300 * 96
        assert m["max_concurrency"]["writer"] == 1
        assert m["max_concurrency"]["ingest_callers"] >= 2


# --- A2 ------------------------------------------------------------------------------


def test_a2_routes_rows_per_cn(tmp_path):
    with DistributedStore(tmp_path, {0: 10, 1: 10, 2: 10}, SHORT) as backend:
        fill(backend, Generator(4), SHORT, days=1)
        assert backend.metrics()["rows"] == {0: 960, 1: 960, 2: 960}
        for cn, store in backend.stores.items():
            assert {r[0] for r in store.query("SELECT DISTINCT cn FROM readings")} == {cn}


def test_a2_stores_ingest_in_parallel(tmp_path):
    with DistributedStore(tmp_path, {0: 2000, 1: 2000, 2: 2000}, DEFAULT_MONTH) as backend:
        concurrent_ingest(backend, Generator(5), DEFAULT_MONTH)
        m = backend.metrics()
        assert m["max_concurrency"]["active_stores"] >= 2
        assert all(m["max_concurrency"][f"writer_cn{cn}"] == 1 for cn in range(3))


def test_a2_bill_equals_a1(tmp_path):
    gen, topo = Generator(6), {0: 5, 1: 5, 2: 5}
    bs = default_bucket_set(SHORT)
    with SingleStore(tmp_path / "a1", topo, SHORT) as a1, DistributedStore(tmp_path / "a2", topo, SHORT) as a2:
        fill(a1, gen, SHORT)
        fill(a2, gen, SHORT)
        assert a1.compute_bill(bs).lines == a2.compute_bill(bs).lines


# --- A3 ------------------------------------------------------------------------------


def test_blob_round_trip():
    wh = np.arange(96, dtype=np.int64) * 7
    blob = blob_entries(SHORT, 1, wh)
    slots, values = parse_blob(blob, SHORT)
    assert slots.tolist() == list(range(96, 192))
    assert np.array_equal(values, wh)
    assert blob.startswith('<r t="2009-01-02T00:00" kwh="0.000"/>')


def test_a3_blob_holds_month_and_grows_linearly(tmp_path):
    gen = Generator(7)
    with KeyValueStore(tmp_path, {0: 5}, DEFAULT_MONTH) as backend:
        fill(backend, gen, DEFAULT_MONTH)
        blob = backend.blob(HouseholdId(0, 3))
        assert parse_blob(blob, DEFAULT_MONTH)[0].size == 2976
        assert np.array_equal(blob_to_month(blob, DEFAULT_MONTH), gen.household_month(HouseholdId(0, 3), DEFAULT_MONTH))
        sizes = backend.metrics()["series"]["blob_bytes"]
        assert len(sizes) == 31
        steps = np.diff([0, *sizes])
        assert steps.min() > 0
        assert steps.max() <= 1.01 * steps.min()
        assert sizes[-1] == pytest.approx(31 * sizes[0], rel=0.01)


def test_a3_cold_bill_matches_buffer(tmp_path):
    bs = default_bucket_set(SHORT)
    with KeyValueStore(tmp_path, {0: 4, 1: 2}, SHORT) as backend:
        fill(backend, Generator(8), SHORT)
        assert backend.compute_bill(bs, source="store").lines == backend.compute_bill(bs).lines


# --- A4 ------------------------------------------------------------------------------


def test_a4_file_count_and_metadata(tmp_path):
    with HybridStore(tmp_path, {0: 100}, DEFAULT_MONTH) as backend:
        backend.build_month(0)
        assert len(backend.files()) == 101
        rows = backend.metadata_rows()
        assert len(rows) == 100
        for cn, household, ts, data in rows:
            with open(tmp_path / ts), open(tmp_path / data):
                pass


def test_a4_fanout_bound(tmp_path):
    with HybridStore(tmp_path, {0: 700}, SHORT) as backend:
        backend.build_month(0)
    for d in [tmp_path, *(p for p in tmp_path.rglob("*") if p.is_dir())]:
        assert len(list(d.iterdir())) <= 256, d
    # the path scheme itself, at a size too large to materialize
    parents = Counter(consumption_relpath(DEFAULT_MONTH, h).parent for h in range(200_000))
    assert max(parents.values()) <= 256
    assert len({p.parent for p in parents}) <= 256


def test_a4_files_hold_the_month(tmp_path):
    gen = Generator(10)
    with HybridStore(tmp_path, {0: 3}, DEFAULT_MONTH) as backend:
        fill(backend, gen, DEFAULT_MONTH)
        lines = backend.timestamp_path(0).read_text().splitlines()
        assert len(lines) == 2976 and lines[1] == "2009-01-01T00:15"
        for h in range(3):
            path = backend.month_root(0).parent / consumption_relpath(DEFAULT_MONTH, h)
            values = path.read_text().splitlines()
            assert len(values) == 2976
        ids, data = backend.cold_start_load()
        assert np.array_equal(data, gen.month(ids, DEFAULT_MONTH))


def test_a4_concurrent_cns_match_serial(tmp_path):
    gen, topo = Generator(11), {0: 50, 1: 50, 2: 50}
    with HybridStore(tmp_path / "par", topo, SHORT) as par, HybridStore(tmp_path / "ser", topo, SHORT) as ser:
        for day in range(SHORT.days):
            concurrent_ingest(par, gen, SHORT, day)
        fill(ser, gen, SHORT)
        assert np.array_equal(par.cold_start_load()[1], ser.cold_start_load()[1])


def test_a4_missing_file_reports_resolved_path(tmp_path):
    with HybridStore(tmp_path, {0: 10}, SHORT) as backend:
        fill(backend, Generator(12), SHORT)
        victim = backend.month_root(0).parent / consumption_relpath(SHORT, 7)
        victim.unlink()
        with pytest.raises(MissingFile) as e:
            backend.cold_start_load()
        assert e.value.path == victim
        assert str(victim) in str(e.value)


def test_a4_corrupt_file(tmp_path):
    with HybridStore(tmp_path, {0: 2}, SHORT) as backend:
        fill(backend, Generator(13), SHORT)
        victim = backend.month_root(0).parent / consumption_relpath(SHORT, 1)
        victim.write_text("0.001\nbanana\n")
        with pytest.raises(CorruptFile) as e:
            backend.cold_start_load()
        assert e.value.path == victim


def test_a4_month_state(tmp_path):
    with HybridStore(tmp_path, {0: 2}, SHORT) as backend:
        with pytest.raises(MonthNotInitialized):
            backend.append_daily(0, 0, np.zeros((2, 96), dtype=np.int64))
        backend.build_month(0)
        with pytest.raises(MonthAlreadyInitialized):
            backend.build_month(0)


def _cold_start_seconds(root, households, repeats=5):
    with HybridStore(root, {0: households}, DEFAULT_MONTH) as backend:
        fill(backend, Generator(14), DEFAULT_MONTH)
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            backend.cold_start_load()
            samples.append(time.perf_counter() - t0)
    return sorted(samples)[repeats // 2]


@pytest.mark.slow
def test_a4_cold_start_scales_linearly(tmp_path):
    small = _cold_start_seconds(tmp_path / "small", 100)
    large = _cold_start_seconds(tmp_path / "large", 1000)
    # 10x households, 8-12x time
    assert 8 <= large / small <= 12, large / small
