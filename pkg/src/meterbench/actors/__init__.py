"""Message-passing layer: a small actor runtime and the CDPN/CN services."""

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
    Message,
    MonthDone,
    NextDay,
    RunDay,
    RunMonth,
    Shutdown,
)
from .runtime import Actor, Address, Runtime, RuntimeStopped, UnhandledMessage, UnknownAddress, concurrent, exclusive
from .services import CdpnService, CnService, CnTimeout, DayRejected, Simulation

__all__ = [
    "Actor", "Address", "BillDone", "BillMonth", "BillRequest", "BillResponse", "CdpnService", "CnService",
    "CnTimeout", "Collect", "DailyData", "DayDone", "DayRejected", "DayTimeout", "Failure", "InsertDone",
    "Message", "MonthDone", "NextDay", "RunDay", "RunMonth", "Runtime", "RuntimeStopped", "Shutdown",
    "Simulation", "UnhandledMessage", "UnknownAddress", "concurrent", "exclusive",
]
