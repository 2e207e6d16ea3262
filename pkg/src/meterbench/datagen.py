"""Synthetic smart-meter readings from degree-10 daily load curves plus noise.

A profile is a degree-10 polynomial in normalised time of day ``t = slot/96``
giving the expected kWh of each 15-minute slot. There is one profile per
(month, day type). Household variety comes from additive noise drawn from a
counter-based generator keyed by ``(seed, cn, household)``: day ``d`` uses the
stream segment starting at counter block ``24 * d``. Any day of any household
can therefore be produced alone, in any order, and matches the slice of the
full-month draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import SLOTS_PER_DAY, WH_PER_KWH, DayType, HouseholdId, MonthSpec

DEGREE = 10
_DRAWS_PER_BLOCK = 4  # Philox emits four 64-bit words per counter increment

# Least-squares degree-10 fits (t in [0, 1)) to a two-peak residential shape:
# a morning shoulder and a larger evening peak, kWh per 15 minutes.
WORKDAY_BASE = (
    0.0863268295, 4.810331615, -125.8702429, 1262.843477, -6312.659347, 18268.48985,
    -32720.05611, 36658.18345, -24664.91838, 8884.679475, -1255.318019,
)
WEEKEND_BASE = (
    0.1514092234, -1.819632661, 51.5245579, -536.5797354, 2488.645153, -5039.431276,
    1985.979928, 9041.181267, -16058.60043, 10676.30256, -2607.158352,
)
# heating/cooling seasonality, Jan..Dec
MONTH_SCALE = (1.30, 1.25, 1.10, 0.95, 0.90, 1.00, 1.15, 1.15, 0.95, 0.95, 1.10, 1.25)


@dataclass(frozen=True)
class RegressionProfile:
    month: int
    day_type: DayType
    coefficients: tuple[float, ...]

    def __post_init__(self):
        if len(self.coefficients) != DEGREE + 1:
            raise ValueError(f"need {DEGREE + 1} coefficients, got {len(self.coefficients)}")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "day_type", DayType(self.day_type))

    def curve_wh(self) -> np.ndarray:
        """Baseline of all 96 slots in Wh, clamped at zero."""
        t = np.arange(SLOTS_PER_DAY) / SLOTS_PER_DAY
        acc = np.zeros(SLOTS_PER_DAY)
        for c in reversed(self.coefficients):  # Horner
            acc = acc * t + c
        return np.maximum(np.rint(acc * WH_PER_KWH), 0).astype(np.int64)


def baseline(profile: RegressionProfile, slot_of_day: int) -> int:
    """Expected consumption of one slot in Wh."""
    if not 0 <= slot_of_day < SLOTS_PER_DAY:
        raise ValueError(f"slot of day {slot_of_day} outside 0..95")
    return int(profile.curve_wh()[slot_of_day])


def default_profiles() -> dict[tuple[int, DayType], RegressionProfile]:
    out = {}
    for m, scale in enumerate(MONTH_SCALE, start=1):
        for day_type, base in ((DayType.WORKDAY, WORKDAY_BASE), (DayType.WEEKEND, WEEKEND_BASE)):
            out[(m, day_type)] = RegressionProfile(m, day_type, tuple(scale * c for c in base))
    return out


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "uniform"
    amplitude: float = 0.1  # kWh; half-width for uniform, std-dev for gaussian

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.amplitude < 0:
            raise ValueError("noise amplitude must be >= 0")

    def draw_wh(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            kwh = rng.uniform(-self.amplitude, self.amplitude, n)
        else:
            kwh = rng.normal(0.0, self.amplitude, n) if self.amplitude else np.zeros(n)
        return np.rint(kwh * WH_PER_KWH).astype(np.int64)


@dataclass
class Generator:
    """Deterministic reading source for one configuration."""

    seed: int = 0
    noise: NoiseModel = field(default_factory=NoiseModel)
    profiles: Mapping[tuple[int, DayType], RegressionProfile] = field(default_factory=default_profiles)

    def __post_init__(self):
        self._curves: dict[tuple[int, DayType], np.ndarray] = {}

    def profile(self, month: MonthSpec, day_type: DayType) -> RegressionProfile:
        return self.profiles[(month.month, day_type)]

    def curve(self, month: MonthSpec, day_type: DayType) -> np.ndarray:
        key = (month.month, day_type)
        if key not in self._curves:
            self._curves[key] = self.profiles[key].curve_wh()
        return self._curves[key]

    def _bit_generator(self, household: HouseholdId, first_day: int) -> np.random.Philox:
        key = np.random.SeedSequence([self.seed, household.cn, household.local_index]).generate_state(2, np.uint64)
        bg = np.random.Philox(key=key)
        if first_day:
            # valid for uniform noise only: exactly one 64-bit word per draw
            bg.advance(first_day * SLOTS_PER_DAY // _DRAWS_PER_BLOCK)
        return bg

    def _month_baseline(self, month: MonthSpec) -> np.ndarray:
        return np.concatenate([self.curve(month, t) for t in month.day_types()])

    def household_day(self, household: HouseholdId, month: MonthSpec, day: int) -> np.ndarray:
        if not 0 <= day < month.days:
            raise ValueError(f"day {day} outside 0..{month.days - 1}")
        base = self.curve(month, month.day_type(day))
        if self.noise.kind == "gaussian":
            return self.household_month(household, month)[day * SLOTS_PER_DAY:(day + 1) * SLOTS_PER_DAY]
        rng = np.random.Generator(self._bit_generator(household, day))
        return np.maximum(base + self.noise.draw_wh(rng, SLOTS_PER_DAY), 0)

    def household_month(self, household: HouseholdId, month: MonthSpec) -> np.ndarray:
        rng = np.random.Generator(self._bit_generator(household, 0))
        return np.maximum(self._month_baseline(month) + self.noise.draw_wh(rng, month.slots), 0)

    def day_batch(self, households: Sequence[HouseholdId], month: MonthSpec, day: int) -> np.ndarray:
        """Readings of several households for one day, shape ``(len(households), 96)``."""
        out = np.empty((len(households), SLOTS_PER_DAY), dtype=np.int64)
        for i, hh in enumerate(households):
            out[i] = self.household_day(hh, month, day)
        return out

    def month(self, households: Sequence[HouseholdId], month: MonthSpec) -> np.ndarray:
        out = np.empty((len(households), month.slots), dtype=np.int64)
        for i, hh in enumerate(households):
            out[i] = self.household_month(hh, month)
        return out


def household_ids(count: int, cn: int = 0) -> list[HouseholdId]:
    return [HouseholdId(cn, i) for i in range(count)]


def generate_household_day(global_seed: int, household: HouseholdId, month: MonthSpec, day: int,
                           noise: NoiseModel | None = None) -> np.ndarray:
    return Generator(global_seed, noise or NoiseModel()).household_day(household, month, day)


def generate_month(global_seed: int, households: int, month: MonthSpec, cn: int = 0,
                   noise: NoiseModel | None = None) -> tuple[list[HouseholdId], np.ndarray]:
    ids = household_ids(households, cn)
    return ids, Generator(global_seed, noise or NoiseModel()).month(ids, month)
