"""The four storage architectures behind one backend contract."""

from .base import (
    ConcurrencyGauge,
    CorruptFile,
    DuplicateBatch,
    IncompleteMonth,
    MemoryBuffer,
    MissingFile,
    MonthAlreadyInitialized,
    MonthNotInitialized,
    StorageBackend,
    StorageError,
    StoreError,
    UnknownConcentrator,
)
from .hybrid import HybridStore
from .keyvalue import KeyValueStore
from .relational import DistributedStore, SingleStore, billing_query

BACKENDS = {
    "A1": SingleStore,
    "A2": DistributedStore,
    "A3": KeyValueStore,
    "A4": HybridStore,
}
ARCHITECTURES = tuple(BACKENDS)


def open_backend(architecture: str, root, topology, month) -> StorageBackend:
    try:
        cls = BACKENDS[architecture.upper()]
    except KeyError:
        raise ValueError(f"unknown architecture {architecture!r}; choose from {', '.join(BACKENDS)}") from None
    return cls(root, topology, month)


__all__ = [
    "ARCHITECTURES",
    "BACKENDS",
    "ConcurrencyGauge",
    "CorruptFile",
    "DistributedStore",
    "DuplicateBatch",
    "HybridStore",
    "IncompleteMonth",
    "KeyValueStore",
    "MemoryBuffer",
    "MissingFile",
    "MonthAlreadyInitialized",
    "MonthNotInitialized",
    "SingleStore",
    "StorageBackend",
    "StorageError",
    "StoreError",
    "UnknownConcentrator",
    "billing_query",
    "open_backend",
]
