"""JSON encoding of stores and views."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .store import KVStore, StoreError, TxId, Version, View


def store_to_obj(K: KVStore) -> dict[str, Any]:
    return {
        k: [
            {
                "value": v.value,
                "writer": str(v.writer),
                "readers": sorted(str(r) for r in v.readers),
            }
            for v in vs
        ]
        for k, vs in K.items()
    }


def store_from_obj(obj: Any) -> KVStore:
    if not isinstance(obj, dict):
        raise StoreError("store document must be an object mapping keys to arrays")
    data = {}
    for k, vs in obj.items():
        if not isinstance(vs, list) or not vs:
            raise StoreError(f"key {k!r}: expected a non-empty array of versions")
        versions = []
        for entry in vs:
            try:
                versions.append(
                    Version(
                        entry["value"],
                        TxId.parse(entry["writer"]),
                        frozenset(TxId.parse(r) for r in entry.get("readers", [])),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise StoreError(f"key {k!r}: malformed version {entry!r}") from exc
        data[str(k)] = versions
    return KVStore(data)


def dumps_store(K: KVStore) -> str:
    return json.dumps(store_to_obj(K), indent=2, sort_keys=True)


def loads_store(text: str) -> KVStore:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StoreError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return store_from_obj(obj)


def load_store(path: str | Path) -> KVStore:
    return loads_store(Path(path).read_text())


def view_to_obj(u: View) -> dict[str, list[int]]:
    return {k: sorted(idx) for k, idx in u.items()}


def view_from_obj(obj: dict) -> View:
    return View({k: set(v) for k, v in obj.items()})
