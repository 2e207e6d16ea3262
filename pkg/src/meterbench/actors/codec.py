"""Byte encoding of messages for the serialized ("remote") delivery mode.

A message is a UTF-8 JSON header line followed by an optional text body.
Reading batches use the consumption-file format (one kWh value per line,
row-major), bill lines use their canonical text form, and bucket sets the
run-config bucket schema.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from ..domain import HouseholdId, MeterError, MonthSpec
from ..mcb import BillLine
from ..storage.formats import consumption_lines, decode_consumption
from ..tariff import BucketSet
from . import messages as m


class RemoteFailure(MeterError):
    """A failure that crossed the wire; the original type survives by name."""

    def __init__(self, type_name: str, message: str):
        super().__init__(f"{type_name}: {message}")
        self.type_name = type_name


_TYPES = {cls.__name__: cls for cls in vars(m).values()
          if isinstance(cls, type) and issubclass(cls, m.Message)}


def _encode_month(month: MonthSpec) -> dict:
    return {"year": month.year, "month": month.month, "days": month.days, "weekend_days": sorted(month.weekend_days)}


def _encode_lines(lines) -> str:
    return "".join(line.canonical() + "\n" for line in lines)


def _decode_lines(body: str) -> tuple[BillLine, ...]:
    out = []
    for row in body.splitlines():
        hh, wh, amount = row.split(",")
        out.append(BillLine(HouseholdId.parse(hh), tuple(int(v) for v in wh.split(";") if v), int(amount)))
    return tuple(out)


def encode(msg: m.Message) -> bytes:
    header: dict = {"type": type(msg).__name__, "correlation_id": msg.correlation_id}
    body = ""
    for f in dataclasses.fields(msg):
        if f.name == "correlation_id":
            continue
        value = getattr(msg, f.name)
        if isinstance(value, np.ndarray):
            header[f.name] = {"shape": list(value.shape)}
            body = consumption_lines(value.reshape(-1))
        elif isinstance(value, BucketSet):
            header[f.name] = {"buckets": value.to_list(), "month": _encode_month(value.month)}
        elif f.name == "lines":
            body = _encode_lines(value)
        elif isinstance(value, Exception):
            header[f.name] = {"type": getattr(value, "type_name", type(value).__name__), "message": str(value)}
        elif f.name == "errors":
            header[f.name] = [[str(hh), type(e).__name__, str(e)] for hh, e in value]
        else:
            header[f.name] = list(value) if isinstance(value, tuple) else value
    return (json.dumps(header, sort_keys=True) + "\n" + body).encode()


def decode(data: bytes) -> m.Message:
    head, _, body = data.decode().partition("\n")
    header = json.loads(head)
    cls = _TYPES[header.pop("type")]
    kwargs = {"correlation_id": header.pop("correlation_id")}
    for f in dataclasses.fields(cls):
        if f.name == "correlation_id":
            continue
        if f.name == "lines":
            kwargs["lines"] = _decode_lines(body)
            continue
        value = header[f.name]
        if f.name == "readings":
            kwargs[f.name] = decode_consumption(body.encode()).reshape(value["shape"])
        elif f.name == "bucket_set":
            month = value["month"]
            kwargs[f.name] = BucketSet.from_list(value["buckets"], MonthSpec(
                month["year"], month["month"], month["days"], frozenset(month["weekend_days"])))
        elif f.name == "error":
            kwargs[f.name] = RemoteFailure(value["type"], value["message"])
        elif f.name == "errors":
            kwargs[f.name] = tuple((HouseholdId.parse(hh), RemoteFailure(t, msg)) for hh, t, msg in value)
        elif isinstance(value, list):
            kwargs[f.name] = tuple(value)
        else:
            kwargs[f.name] = value
    return cls(**kwargs)
