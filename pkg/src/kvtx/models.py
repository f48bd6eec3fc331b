"""Execution tests: the commit-time predicates that define consistency models."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

from . import deps
from .store import KVStore, Op, StoreError, TxId, View, is_valid_view, tx_of, update_kv, view_leq

MODELS = ("TOP", "MR", "MW", "RYW", "WFR", "CC", "UA", "PSI", "CP", "SI", "WSI", "SER")

# models whose view shift demands monotonic reads / read-your-writes
_NEEDS_MR = {"MR", "CC", "PSI", "CP", "SI", "WSI"}
_NEEDS_RYW = {"RYW", "CC", "PSI", "CP", "SI", "WSI"}

# admission-level implications checked by the test-suite
STRONGER_THAN = (
    ("SER", "SI"),
    ("SI", "WSI"),
    ("WSI", "CP"),
    ("WSI", "UA"),
    ("SI", "PSI"),
    ("PSI", "CC"),
    ("CC", "MR"),
    ("CC", "MW"),
    ("CC", "RYW"),
    ("CC", "WFR"),
)


def normalize_model(name: str) -> str:
    m = name.strip().upper()
    if m not in MODELS:
        raise ValueError(f"unknown model {name!r}; expected one of {', '.join(MODELS)}")
    return m


def needs_mr(m: str) -> bool:
    return normalize_model(m) in _NEEDS_MR


def needs_ryw(m: str) -> bool:
    return normalize_model(m) in _NEEDS_RYW


def closed(K: KVStore, u: View, r: Iterable) -> bool:
    visible = tx_of(K, u)
    writers = K.writers()
    reach = deps.closure_txids(K, visible, r)
    return {t for t in reach if t in writers} == visible


def _ids(K: KVStore) -> set[TxId]:
    return K.txids()


@lru_cache(maxsize=8192)
def relation(K: KVStore, name: str):
    """Named closure relations used by the execution tests."""
    so = deps.so(K)
    wr = deps.wr(K, False)
    ww = deps.ww(K, False)
    rw = deps.rw(K, False)
    rw_opt = deps.reflexive(rw, _ids(K))
    if name == "MW":
        return so & ww
    if name == "WFR":
        return deps.compose(wr, deps.reflexive(so, _ids(K)))
    if name == "CC":
        return so | wr
    if name == "PSI":
        return so | wr | ww
    if name == "CP":
        return deps.compose(wr, rw_opt) | deps.compose(so, rw_opt) | ww
    if name == "SI":
        cp = deps.compose(wr, rw_opt) | deps.compose(so, rw_opt) | ww
        return cp | ww | deps.compose(ww, rw)
    raise ValueError(f"no closure relation for {name}")


def complete_on(K: KVStore, u: View, keys: Iterable[str]) -> bool:
    return all(u[k] == frozenset(range(len(K[k]))) for k in keys)


def ua_ok(K: KVStore, u: View, F: Iterable[Op]) -> bool:
    return complete_on(K, u, {op.key for op in F if op.kind == "W"})


def can_commit(m: str, K: KVStore, u: View, F: Iterable[Op]) -> bool:
    m = normalize_model(m)
    F = frozenset(F)
    if m in ("TOP", "MR", "RYW"):
        return True
    if m in ("MW", "WFR", "CC", "CP"):
        return closed(K, u, relation(K, m))
    if m == "UA":
        return ua_ok(K, u, F)
    if m in ("PSI", "SI"):
        return ua_ok(K, u, F) and closed(K, u, relation(K, m))
    if m == "WSI":
        return can_commit("CP", K, u, F) and can_commit("UA", K, u, F)
    if m == "SER":
        return complete_on(K, u, K.keys())
    raise AssertionError(m)


def own_versions(K: KVStore, client: str) -> dict[str, set[int]]:
    out: dict[str, set[int]] = {k: set() for k in K}
    for k, i, v in K.versions():
        if not v.writer.is_initial and v.writer.client == client:
            out[k].add(i)
    return out


def mr_shift(u: View, u2: View) -> bool:
    return view_leq(u, u2)


def ryw_shift(K2: KVStore, u2: View, t: TxId) -> bool:
    own = own_versions(K2, t.client)
    return all(own[k] <= u2[k] for k in K2)


def view_shift(m: str, K: KVStore, u: View, K2: KVStore, u2: View, t: TxId) -> bool:
    m = normalize_model(m)
    if m in _NEEDS_MR and not mr_shift(u, u2):
        return False
    if m in _NEEDS_RYW and not ryw_shift(K2, u2, t):
        return False
    return True


def reads_ok(K: KVStore, u: View, F: Iterable[Op]) -> bool:
    return all(
        K[op.key][max(u[op.key])].value == op.value for op in F if op.kind == "R"
    )


def et_allows(
    m: str,
    K: KVStore,
    u: View,
    F: Iterable[Op],
    K2: KVStore,
    u2: View,
    t: TxId,
    check_update: bool = True,
) -> bool:
    F = frozenset(F)
    if check_update and update_kv(K, u, F, t) != K2:
        raise StoreError("store/update mismatch")
    if not is_valid_view(K2, u2):
        return False
    return reads_ok(K, u, F) and can_commit(m, K, u, F) and view_shift(m, K, u, K2, u2, t)


@dataclass(frozen=True)
class ExecutionTest:
    name: str
    can_commit: Callable[[KVStore, View, frozenset], bool]
    view_shift: Callable[[KVStore, View, KVStore, View, TxId], bool]


def execution_test(m: str) -> ExecutionTest:
    m = normalize_model(m)
    return ExecutionTest(
        m,
        lambda K, u, F: can_commit(m, K, u, F),
        lambda K, u, K2, u2, t: view_shift(m, K, u, K2, u2, t),
    )
