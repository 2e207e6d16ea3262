"""Smart-meter storage and billing benchmark.

Readings are integer watt-hours, prices integer micro-units per kWh and bill
amounts integer 1e-9 currency units, so every path that computes a bill
produces byte-identical results.
"""

from .datagen import Generator, NoiseModel, generate_month, household_ids
from .domain import DEFAULT_MONTH, SLOTS_PER_DAY, DayType, HouseholdId, MeterError, MeterReading, MonthSpec, slot_index
from .mcb import BillingJob, BillLine, BillRun, bill_all, bill_arrays, bill_checksum, bill_household, brute_force_bill
from .tariff import (
    EVENING_CPP,
    TOU,
    BucketMask,
    BucketSet,
    Clause,
    PricingScheme,
    TimeBucket,
    build_mask,
    classify,
    default_bucket_set,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_MONTH", "EVENING_CPP", "SLOTS_PER_DAY", "TOU", "BillLine", "BillRun", "BillingJob", "BucketMask",
    "BucketSet", "Clause", "DayType", "Generator", "HouseholdId", "MeterError", "MeterReading", "MonthSpec",
    "NoiseModel", "PricingScheme", "TimeBucket", "bill_all", "bill_arrays", "bill_checksum", "bill_household",
    "brute_force_bill", "build_mask", "classify", "default_bucket_set", "generate_month", "household_ids",
    "slot_index",
]
