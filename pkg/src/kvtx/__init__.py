"""Executable semantics of transactions over multi-version key-value stores."""

from .store import (
    T0,
    Configuration,
    KVStore,
    Op,
    StoreError,
    TxId,
    Version,
    View,
    check_wellformed,
    initial_config,
    next_txid,
    snapshot,
    update_kv,
    view_leq,
)

__all__ = [
    "T0",
    "Configuration",
    "KVStore",
    "Op",
    "StoreError",
    "TxId",
    "Version",
    "View",
    "check_wellformed",
    "initial_config",
    "next_txid",
    "snapshot",
    "update_kv",
    "view_leq",
]

__version__ = "0.1.0"
