"""Run configuration: a YAML file covering every experiment knob.

Example (every key is optional; shown values are the defaults)::

    run_id: null              # default: <arch>-s<seed>-<cn_count>x<households_per_cn>
    architecture: A1          # A1 | A2 | A3 | A4
    cn_count: 1
    households_per_cn: 100
    month:
      year: 2009
      month: 1
      days: 31                # 1..31
      weekend_days: [5, 6]    # Monday is 0
    scheme:
      kind: TOU               # TOU | CPP
      # CPP only:
      # critical: [{day_type: workday, start: "18:00", end: "20:00"}]
      # critical_price: "0.50"
    prices:                   # four per day type: night, morning, afternoon, evening
      workday: ["0.05", "0.10", "0.12", "0.20"]
      weekend: ["0.04", "0.07", "0.08", "0.12"]
    buckets: null             # explicit bucket list; replaces prices and scheme
    # buckets:
    #   - label: flat
    #     price: "0.10"
    #     clauses:
    #       - {day_type: workday, start: "00:00", end: "24:00"}
    #       - {day_type: weekend, start: "00:00", end: "24:00"}
    seed: 42
    noise: {kind: uniform, amplitude: 0.1}   # kWh; gaussian uses amplitude as std-dev
    profiles: []              # overrides: [{month: 1, day_type: workday, coefficients: [11 numbers]}]
    mcb:
      workers: [1, 2, 4]      # worker counts timed on the experiment's dataset and in sweeps
      households: [1000, 10000]   # sweep sizes
    repetitions: 5            # timed runs; the median is reported
    warmup: 1                 # runs discarded before timing
    remote_cns: false         # serialize every CN message
    collect_deadline: 60      # seconds before a missing InsertDone fails the day
    output_dir: results
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..datagen import Generator, NoiseModel, RegressionProfile, default_profiles
from ..domain import DayType, MeterError, MonthSpec
from ..storage import ARCHITECTURES
from ..tariff import DEFAULT_PRICES, BucketSet, PricingScheme, default_bucket_set


class ConfigError(MeterError, ValueError):
    pass


KEYS = {
    "run_id", "architecture", "cn_count", "households_per_cn", "month", "scheme", "prices", "buckets", "seed",
    "noise", "profiles", "mcb", "repetitions", "warmup", "remote_cns", "collect_deadline", "output_dir",
}


@dataclass(frozen=True)
class RunConfig:
    architecture: str = "A1"
    cn_count: int = 1
    households_per_cn: int = 100
    month: MonthSpec = field(default_factory=MonthSpec)
    scheme: PricingScheme = field(default_factory=PricingScheme)
    prices: Mapping | None = None
    buckets: tuple | None = None
    seed: int = 42
    noise: NoiseModel = field(default_factory=NoiseModel)
    profiles: tuple = ()
    mcb_workers: tuple[int, ...] = (1, 2, 4)
    sweep_households: tuple[int, ...] = (1000, 10000)
    repetitions: int = 5
    warmup: int = 1
    remote_cns: bool = False
    collect_deadline: float = 60.0
    output_dir: Path = Path("results")
    run_id: str | None = None
    source: str | None = field(default=None, compare=False, repr=False)
    overrides: Mapping = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        arch = str(self.architecture).upper()
        if arch not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {', '.join(ARCHITECTURES)}, got {self.architecture!r}")
        object.__setattr__(self, "architecture", arch)
        for name in ("cn_count", "households_per_cn", "repetitions"):
            _positive_int(name, getattr(self, name))
        _non_negative_int("warmup", self.warmup)
        _non_negative_int("seed", self.seed)
        for name in ("mcb_workers", "sweep_households"):
            values = tuple(getattr(self, name))
            for v in values:
                _positive_int(name, v)
            object.__setattr__(self, name, values)
        if not self.mcb_workers:
            raise ConfigError("mcb.workers must not be empty")
        if self.collect_deadline <= 0:
            raise ConfigError("collect_deadline must be positive")
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        try:
            self.bucket_set()
            self.generator()
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid tariff or profile settings: {exc}") from exc

    @property
    def name(self) -> str:
        return self.run_id or f"{self.architecture.lower()}-s{self.seed}-{self.cn_count}x{self.households_per_cn}"

    @property
    def topology(self) -> dict[int, int]:
        return {cn: self.households_per_cn for cn in range(self.cn_count)}

    @property
    def households(self) -> int:
        return self.cn_count * self.households_per_cn

    def bucket_set(self) -> BucketSet:
        if self.buckets is not None:
            return BucketSet.from_list(self.buckets, self.month)
        prices = None
        if self.prices is not None:
            prices = {DayType(k): tuple(v) for k, v in self.prices.items()}
            if set(prices) != set(DEFAULT_PRICES) or any(len(v) != 4 for v in prices.values()):
                raise ConfigError("prices needs four values for each of workday and weekend")
        return default_bucket_set(self.month, self.scheme, prices)

    def generator(self) -> Generator:
        profiles = dict(default_profiles())
        for p in self.profiles:
            profile = RegressionProfile(int(p["month"]), DayType(p["day_type"]), tuple(p["coefficients"]))
            profiles[(profile.month, profile.day_type)] = profile
        return Generator(self.seed, self.noise, profiles)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, source=None, overrides={}, **changes)

    def override(self, **changes) -> "RunConfig":
        """Like :meth:`replace`, but keep the source text and remember the changes next to it."""
        merged = {**self.overrides, **changes}
        return dataclasses.replace(self, overrides=merged, **changes)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "architecture": self.architecture,
            "cn_count": self.cn_count,
            "households_per_cn": self.households_per_cn,
            "month": {
                "year": self.month.year,
                "month": self.month.month,
                "days": self.month.days,
                "weekend_days": sorted(self.month.weekend_days),
            },
            "scheme": self.scheme.to_dict(),
            "prices": None if self.prices is None else {k: [str(x) for x in v] for k, v in self.prices.items()},
            "buckets": None if self.buckets is None else list(self.buckets),
            "seed": self.seed,
            "noise": {"kind": self.noise.kind, "amplitude": self.noise.amplitude},
            "profiles": list(self.profiles),
            "mcb": {"workers": list(self.mcb_workers), "households": list(self.sweep_households)},
            "repetitions": self.repetitions,
            "warmup": self.warmup,
            "remote_cns": self.remote_cns,
            "collect_deadline": self.collect_deadline,
            "output_dir": str(self.output_dir),
        }

    def to_yaml(self) -> str:
        """The text persisted next to results: the original file when there is one."""
        if self.source is not None:
            return self.source
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], source: str | None = None) -> "RunConfig":
        unknown = set(d) - KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kw: dict[str, Any] = {}
        try:
            for key in ("run_id", "architecture", "cn_count", "households_per_cn", "seed", "repetitions",
                        "warmup", "remote_cns", "collect_deadline", "output_dir", "prices"):
                if d.get(key) is not None:
                    kw[key] = d[key]
            if d.get("month") is not None:
                m = dict(d["month"])
                if "weekend_days" in m:
                    m["weekend_days"] = frozenset(m["weekend_days"])
                kw["month"] = MonthSpec(**m)
            if d.get("scheme") is not None:
                kw["scheme"] = PricingScheme.from_dict(d["scheme"])
            if d.get("buckets") is not None:
                kw["buckets"] = tuple(d["buckets"])
            if d.get("noise") is not None:
                kw["noise"] = NoiseModel(**d["noise"])
            if d.get("profiles"):
                kw["profiles"] = tuple(d["profiles"])
            mcb = d.get("mcb") or {}
            if "workers" in mcb:
                kw["mcb_workers"] = tuple(mcb["workers"])
            if "households" in mcb:
                kw["sweep_households"] = tuple(mcb["households"])
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        return cls(**kw, source=source)


def parse_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of keys to values")
    return RunConfig.from_dict(data, source=text)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _positive_int(name: str, value) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")


def _non_negative_int(name: str, value) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigError(f"{name} must be a non-negative integer, got {value!r}")
