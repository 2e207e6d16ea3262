"""Experiment reports, their CSV form and their text tables.

CSV schema, one row per measurement, columns in this order::

    run_id,architecture,metric,value,unit

Metrics: ``households``, ``cn_count``, ``seed``, ``repetitions``, ``warmup``,
``host_cores`` (unit ``count``); ``methodology`` (``text``); ``checksum``
(``sha256``); ``ingest_day_DD`` (``s``, DD from 00); ``bill`` and
``cold_start`` (``s``); ``mcb_w<W>_h<N>`` (``s``) and ``speedup_w<W>_h<N>``
(``ratio``); ``error`` (``text``, one row per failure). Seconds are written
with ``repr`` so the CSV re-parses to the same floats. A report without
measurements writes no rows.
"""

from __future__ import annotations

import csv
import io
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COLUMNS = ("run_id", "architecture", "metric", "value", "unit")

_COUNTS = ("households", "cn_count", "seed", "repetitions", "warmup", "host_cores")
_MCB = re.compile(r"(mcb|speedup)_w(\d+)_h(\d+)$")
_DAY = re.compile(r"ingest_day_(\d+)$")


@dataclass
class ExperimentReport:
    run_id: str
    architecture: str
    households: int = 0
    cn_count: int = 0
    seed: int = 0
    repetitions: int = 0
    warmup: int = 0
    host_cores: int = 0
    methodology: str = ""
    checksum: str | None = None
    ingest_seconds: list[float] = field(default_factory=list)
    bill_seconds: float | None = None
    cold_start_seconds: float | None = None
    mcb_seconds: dict[tuple[int, int], float] = field(default_factory=dict)  # (workers, households) -> s
    errors: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.checksum or self.ingest_seconds or self.bill_seconds is not None
                    or self.cold_start_seconds is not None or self.mcb_seconds or self.errors)

    @property
    def sweep_sizes(self) -> list[int]:
        return sorted({n for _, n in self.mcb_seconds})

    @property
    def sweep_workers(self) -> list[int]:
        return sorted({w for w, _ in self.mcb_seconds})

    def speedup(self, workers: int, households: int) -> float | None:
        base = self.mcb_seconds.get((1, households))
        t = self.mcb_seconds.get((workers, households))
        if base is None or not t:
            return None
        return base / t

    def rows(self) -> list[tuple[str, str, str]]:
        """``(metric, value, unit)`` triples in the stable CSV order."""
        if self.empty:
            return []
        out = [(name, str(getattr(self, name)), "count") for name in _COUNTS]
        out.append(("methodology", self.methodology, "text"))
        if self.checksum is not None:
            out.append(("checksum", self.checksum, "sha256"))
        out += [(f"ingest_day_{d:02d}", repr(t), "s") for d, t in enumerate(self.ingest_seconds)]
        if self.bill_seconds is not None:
            out.append(("bill", repr(self.bill_seconds), "s"))
        if self.cold_start_seconds is not None:
            out.append(("cold_start", repr(self.cold_start_seconds), "s"))
        for n in self.sweep_sizes:
            for w in self.sweep_workers:
                if (w, n) in self.mcb_seconds:
                    out.append((f"mcb_w{w}_h{n}", repr(self.mcb_seconds[(w, n)]), "s"))
        for n in self.sweep_sizes:
            for w in self.sweep_workers:
                s = self.speedup(w, n)
                if s is not None:
                    out.append((f"speedup_w{w}_h{n}", repr(s), "ratio"))
        out += [("error", e, "text") for e in self.errors]
        return out

    @classmethod
    def from_rows(cls, run_id: str, architecture: str, rows) -> "ExperimentReport":
        report = cls(run_id, architecture)
        days: dict[int, float] = {}
        for metric, value, unit in rows:
            if metric in _COUNTS:
                setattr(report, metric, int(value))
            elif metric == "methodology":
                report.methodology = value
            elif metric == "error":
                report.errors.append(value)
            elif metric == "checksum":
                report.checksum = value
            elif metric == "bill":
                report.bill_seconds = float(value)
            elif metric == "cold_start":
                report.cold_start_seconds = float(value)
            elif m := _DAY.match(metric):
                days[int(m.group(1))] = float(value)
            elif m := _MCB.match(metric):
                if m.group(1) == "mcb":
                    report.mcb_seconds[(int(m.group(2)), int(m.group(3)))] = float(value)
            else:
                raise ValueError(f"unknown metric {metric!r} in run {run_id}")
        if sorted(days) != list(range(len(days))):
            raise ValueError(f"run {run_id}: ingest days are not contiguous")
        report.ingest_seconds = [days[d] for d in range(len(days))]
        return report


def emit_csv(reports, path: str | Path, append: bool = False) -> Path:
    """Write reports to ``path``; with ``append`` add them after existing runs."""
    if isinstance(reports, ExperimentReport):
        reports = [reports]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not (append and path.exists() and path.stat().st_size)
    with open(path, "a" if not fresh else "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        if fresh:
            w.writerow(COLUMNS)
        for r in reports:
            for metric, value, unit in r.rows():
                w.writerow((r.run_id, r.architecture, metric, value, unit))
    return path


def read_csv(path: str | Path) -> list[ExperimentReport]:
    with open(path, newline="") as f:
        return parse_csv(f.read())


def parse_csv(text: str) -> list[ExperimentReport]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    if tuple(header) != COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    groups: dict[tuple[str, str], list] = {}
    for row in reader:
        if not row:
            continue
        run_id, arch, metric, value, unit = row
        groups.setdefault((run_id, arch), []).append((metric, value, unit))
    return [ExperimentReport.from_rows(run_id, arch, rows) for (run_id, arch), rows in groups.items()]


def size_label(n: int) -> str:
    if n >= 1000 and n % 1000 == 0:
        return f"{n // 1000}K"
    return str(n)


def _grid(title: str, report: ExperimentReport, cell) -> list[str]:
    sizes = report.sweep_sizes
    lines = [title, "#Threads" + "".join(f"{size_label(n):>10}" for n in sizes)]
    for w in report.sweep_workers:
        lines.append(f"{w:<8}" + "".join(f"{cell(w, n):>10}" for n in sizes))
    return lines


def emit_table(report: ExperimentReport) -> str:
    """Human-readable rendering; the layout is documented in ``docs/formats.md``."""
    lines = [f"run {report.run_id}  architecture {report.architecture}  households {report.households}"
             f"  cn {report.cn_count}  seed {report.seed}  host cores {report.host_cores}"]
    if report.methodology:
        lines.append(f"methodology: {report.methodology}")
    if report.checksum:
        lines.append(f"checksum    {report.checksum}")
    if report.ingest_seconds:
        t = report.ingest_seconds
        lines.append(f"ingest      {len(t)} days  median {statistics.median(t):.4f} s  "
                     f"max {max(t):.4f} s  total {sum(t):.4f} s")
    if report.bill_seconds is not None:
        lines.append(f"bill        {report.bill_seconds:.4f} s")
    if report.cold_start_seconds is not None:
        lines.append(f"cold start  {report.cold_start_seconds:.4f} s")
    if report.mcb_seconds:
        def seconds(w, n):
            t = report.mcb_seconds.get((w, n))
            return "-" if t is None else f"{t:.4f}"

        def speedup(w, n):
            s = report.speedup(w, n)
            return "-" if s is None else f"{s:.2f}"

        lines.append("")
        lines += _grid("MCB wall time (s)", report, seconds)
        lines.append("")
        lines += _grid("MCB speedup T(1)/T(w)", report, speedup)
    for e in report.errors:
        lines.append(f"error: {e}")
    return "\n".join(lines) + "\n"


def write_readings_csv(households, data: np.ndarray, f, header: bool = True) -> None:
    """Dump readings as ``household,slot,kwh`` rows, households in the given order."""
    if header:
        f.write("household,slot,kwh\n")
    for hh, row in zip(households, data):
        whole, frac = np.divmod(row, 1000)
        prefix = f"{hh},"
        f.write("".join(f"{prefix}{s},{w}.{r:03d}\n" for s, (w, r) in enumerate(zip(whole.tolist(), frac.tolist()))))
