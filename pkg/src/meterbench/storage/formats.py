"""Byte-level encodings for the key-value blobs and the hybrid store files.

See docs/formats.md for the normative description and examples.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from ..domain import SLOTS_PER_DAY, MonthSpec, format_kwh, parse_kwh
from .base import CorruptFile, MissingFile

BLOB_ELEMENT = "r"
BLOB_ROOT = "month"


# --- key-value blobs --------------------------------------------------------------


def blob_entries(month: MonthSpec, day: int, wh: np.ndarray) -> str:
    """XML fragment for one household-day: one ``<r t=".." kwh=".."/>`` per slot."""
    first = day * SLOTS_PER_DAY
    return "".join(
        f'<{BLOB_ELEMENT} t="{month.timestamp(first + i)}" kwh="{format_kwh(v)}"/>'
        for i, v in enumerate(wh.tolist())
    )


def parse_blob(blob: str, month: MonthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Slots and Wh values of a blob, in append order."""
    try:
        root = ET.fromstring(f"<{BLOB_ROOT}>{blob}</{BLOB_ROOT}>")
        slots = [month.parse_timestamp(e.attrib["t"]) for e in root]
        wh = [parse_kwh(e.attrib["kwh"]) for e in root]
    except (ET.ParseError, KeyError, ValueError) as exc:
        raise ValueError(f"malformed blob: {exc}") from exc
    return np.array(slots, dtype=np.int64), np.array(wh, dtype=np.int64)


def blob_to_month(blob: str, month: MonthSpec) -> np.ndarray:
    slots, wh = parse_blob(blob, month)
    if slots.size != month.slots or not np.array_equal(np.sort(slots), np.arange(month.slots)):
        raise ValueError(f"blob holds {slots.size} entries, not one per slot of {month.slots}")
    out = np.empty(month.slots, dtype=np.int64)
    out[slots] = wh
    return out


# --- hybrid store files ---------------------------------------------------------------

_KWH_LINE = re.compile(rb"^\d+\.\d{3}$")


def consumption_lines(wh: np.ndarray) -> str:
    return "".join(format_kwh(v) + "\n" for v in wh.tolist())


def timestamp_lines(month: MonthSpec, day: int) -> str:
    first = day * SLOTS_PER_DAY
    return "".join(month.timestamp(first + i) + "\n" for i in range(SLOTS_PER_DAY))


def decode_consumption(data: bytes) -> np.ndarray:
    """Parse a consumption payload (one ``kWh`` value per line, three decimals)."""
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    for i, line in enumerate(lines):
        if not _KWH_LINE.match(line):
            raise ValueError(f"line {i + 1}: malformed value {line[:20]!r}")
    if not lines:
        return np.zeros(0, dtype=np.int64)
    return np.array([int(line.replace(b".", b"")) for line in lines], dtype=np.int64)


def read_consumption_file(path: Path, expected: int) -> np.ndarray:
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise MissingFile(path) from None
    try:
        wh = decode_consumption(data)
    except ValueError as exc:
        raise CorruptFile(path, str(exc)) from None
    if wh.size != expected:
        raise CorruptFile(path, f"{wh.size} values, expected {expected}")
    return wh


def read_timestamp_file(path: Path, month: MonthSpec) -> np.ndarray:
    try:
        lines = path.read_text().splitlines()
    except FileNotFoundError:
        raise MissingFile(path) from None
    try:
        slots = np.array([month.parse_timestamp(t) for t in lines], dtype=np.int64)
    except ValueError as exc:
        raise CorruptFile(path, str(exc)) from None
    if not np.array_equal(slots, np.arange(month.slots)):
        raise CorruptFile(path, f"{slots.size} timestamps, expected {month.slots} in slot order")
    return slots

