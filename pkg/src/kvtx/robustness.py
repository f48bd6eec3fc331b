"""Serialisability checks, WSI-safety and robustness of transaction libraries."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

from . import deps
from .engine import Commit, commit_successors, extend_view
from .lang import (
    Assign,
    BinOp,
    Cmd,
    Lit,
    Lookup,
    Mutate,
    Var,
    if_then_else,
    seq,
    txn_keys,
)
from .models import normalize_model
from .store import T0, KVStore, TxId, Version, initial_config, tx


def ser_member(K: KVStore) -> bool:
    return deps.acyclic(K)


def wsi_safe(K: KVStore) -> bool:
    return not wsi_safe_problems(K)


def wsi_safe_problems(K: KVStore) -> list[str]:
    """Violations of the three structural WSI-safety conditions.

    1. a transaction reading a key it does not write is read-only;
    2. a transaction writing a key also reads it (no blind writes);
    3. a writing transaction writes every key it reads.
    """
    out = []
    reads: dict = {}
    writes: dict = {}
    for k, _, v in K.versions():
        writes.setdefault(v.writer, set()).add(k)
        for r in v.readers:
            reads.setdefault(r, set()).add(k)
    for t in sorted(K.txids()):
        if t.is_initial:
            continue
        rs, ws = reads.get(t, set()), writes.get(t, set())
        if ws and rs - ws:
            out.append(f"{t} reads {sorted(rs - ws)} without writing them")
        if ws - rs:
            out.append(f"{t} writes {sorted(ws - rs)} blindly")
    return out


# -- libraries ---------------------------------------------------------------------


@dataclass(frozen=True)
class Library:
    name: str
    operations: dict  # label -> transaction body

    def keys(self) -> list[str]:
        return sorted(set().union(*(txn_keys(b) for b in self.operations.values())))


def _inc(k: str) -> Cmd:
    return seq(Lookup("a", Lit(k)), Mutate(Lit(k), BinOp("+", Var("a"), Lit(1))))


def _read(k: str) -> Cmd:
    return Lookup("a", Lit(k))


def library_counter(k: str = "k") -> Library:
    return Library("counter", {f"inc({k})": _inc(k), f"read({k})": _read(k)})


def library_counters(keys: Iterable[str] = ("k1", "k2")) -> Library:
    ops = {}
    for k in keys:
        ops[f"inc({k})"] = _inc(k)
    for k in keys:
        ops[f"read({k})"] = _read(k)
    return Library("counters", ops)


def checking(n: int) -> str:
    return str(2 * n)


def saving(n: int) -> str:
    return str(2 * n + 1)


def bank_balance(n: int) -> Cmd:
    return seq(
        Lookup("x", Lit(checking(n))),
        Lookup("y", Lit(saving(n))),
        Assign("r", BinOp("+", Var("x"), Var("y"))),
    )


def bank_deposit_checking(n: int, v: int) -> Cmd:
    c = checking(n)
    body = seq(Lookup("x", Lit(c)), Mutate(Lit(c), BinOp("+", Var("x"), Lit(v))))
    return if_then_else(BinOp(">=", Lit(v), Lit(0)), body)


def bank_transact_saving(n: int, v: int) -> Cmd:
    s = saving(n)
    return seq(
        Lookup("x", Lit(s)),
        if_then_else(
            BinOp(">=", BinOp("+", Var("x"), Lit(v)), Lit(0)),
            Mutate(Lit(s), BinOp("+", Var("x"), Lit(v))),
        ),
    )


def bank_amalgamate(n: int, n2: int) -> Cmd:
    return seq(
        Lookup("x", Lit(saving(n))),
        Lookup("y", Lit(checking(n))),
        Lookup("z", Lit(checking(n2))),
        Mutate(Lit(saving(n)), Lit(0)),
        Mutate(Lit(checking(n)), Lit(0)),
        Mutate(Lit(checking(n2)), BinOp("+", BinOp("+", Var("x"), Var("y")), Var("z"))),
    )


def bank_write_check(n: int, v: int) -> Cmd:
    s, c = saving(n), checking(n)
    total = BinOp("+", Var("x"), Var("y"))
    return seq(
        Lookup("x", Lit(s)),
        Lookup("y", Lit(c)),
        if_then_else(
            BinOp("<", total, Lit(v)),
            # overdraft costs one extra unit
            Mutate(Lit(c), BinOp("-", BinOp("-", Var("y"), Lit(v)), Lit(1))),
            Mutate(Lit(c), BinOp("-", Var("y"), Lit(v))),
        ),
        Mutate(Lit(s), Var("x")),
    )


BANK_AMOUNTS = (-1, 0, 1, 100)


def library_bank(customers: int = 2, amounts: Iterable[int] = BANK_AMOUNTS) -> Library:
    amounts = tuple(amounts)
    ops = {}
    for n in range(customers):
        ops[f"balance({n})"] = bank_balance(n)
    for n in range(customers):
        for v in amounts:
            ops[f"depositChecking({n},{v})"] = bank_deposit_checking(n, v)
            ops[f"transactSaving({n},{v})"] = bank_transact_saving(n, v)
            ops[f"writeCheck({n},{v})"] = bank_write_check(n, v)
    for n, n2 in itertools.permutations(range(customers), 2):
        ops[f"amalgamate({n},{n2})"] = bank_amalgamate(n, n2)
    return Library("bank", ops)


LIBRARIES: dict[str, Callable[[], Library]] = {
    "counter": library_counter,
    "counters": library_counters,
    "bank": library_bank,
}


# -- robustness driver ---------------------------------------------------------------


@dataclass
class RobustnessReport:
    model: str
    library: str
    bound: int
    clients: int
    robust: bool
    stores_checked: int
    witness: list = field(default_factory=list)  # [(client, op label, Commit)]
    store: KVStore | None = None
    cycle: list | None = None
    all_wsi_safe: bool | None = None

    @property
    def verdict(self) -> str:
        return "robust-within-bound" if self.robust else "counterexample"

    def summary(self) -> str:
        lines = [
            f"model={self.model} library={self.library} clients={self.clients} "
            f"ops<={self.bound}: {self.verdict} ({self.stores_checked} stores)"
        ]
        if self.all_wsi_safe is not None:
            lines.append(f"every reachable store WSI-safe: {self.all_wsi_safe}")
        if not self.robust:
            for cl, label, c in self.witness:
                lines.append(f"  {cl} runs {label}: {c}")
            lines.append(
                "  cycle: "
                + " ".join(f"{a} -{lab}->" for a, lab, _ in self.cycle)
                + f" {self.cycle[0][0]}"
            )
        return "\n".join(lines)


def reachable_library_states(m: str, lib: Library, op_budget: int, clients: int = 2):
    """BFS over (store, views) where each step is one library call by a client."""
    m = normalize_model(m)
    names = [f"cl{i + 1}" for i in range(clients)]
    conf = initial_config(names, lib.keys())
    start = (conf.store, tuple(sorted(conf.views.items())))
    parents = {start: None}
    frontier = deque([(start, 0)])
    while frontier:
        state, depth = frontier.popleft()
        yield state, parents
        if depth >= op_budget:
            continue
        K, views = state
        for cl, u in views:
            for label, body in lib.operations.items():
                for c, K2, _ in commit_successors(m, K, u, cl, body, {}):
                    nviews = tuple(
                        (x, c.post if x == cl else extend_view(K2, v)) for x, v in views
                    )
                    nxt = (K2, nviews)
                    if nxt not in parents:
                        parents[nxt] = (state, (cl, label, c))
                        frontier.append((nxt, depth + 1))


def check_robust(
    m: str,
    lib: Library,
    op_budget: int,
    clients: int = 2,
    check_wsi_safe: bool = False,
) -> RobustnessReport:
    m = normalize_model(m)
    if op_budget < 1:
        raise ValueError("budget too small to commit any operation")
    seen_stores: set = set()
    all_safe = True
    for state, parents in reachable_library_states(m, lib, op_budget, clients):
        K = state[0]
        if K in seen_stores:
            continue
        seen_stores.add(K)
        if check_wsi_safe and not wsi_safe(K):
            all_safe = False
        cycle = deps.find_cycle(K)
        if cycle is not None:
            witness = []
            cur = state
            while parents[cur] is not None:
                prev, step = parents[cur]
                witness.append(step)
                cur = prev
            witness.reverse()
            return RobustnessReport(
                m, lib.name, op_budget, clients, False, len(seen_stores), witness, K, cycle,
                all_safe if check_wsi_safe else None,
            )
    return RobustnessReport(
        m, lib.name, op_budget, clients, True, len(seen_stores),
        all_wsi_safe=all_safe if check_wsi_safe else None,
    )


def non_serialisable_stores(m: str, lib: Library, op_budget: int, clients: int = 2) -> set[KVStore]:
    out = set()
    for (K, _), _ in reachable_library_states(m, lib, op_budget, clients):
        if not ser_member(K):
            out.add(K)
    return out


# -- canonical forms -----------------------------------------------------------------


def rename(K: KVStore, clients: dict[str, str], keys: dict[str, str]) -> KVStore:
    def r(t):
        return t if t.is_initial else TxId(clients.get(t.client, t.client), t.seq)

    return KVStore(
        {
            keys.get(k, k): [Version(v.value, r(v.writer), frozenset(map(r, v.readers))) for v in vs]
            for k, vs in K.items()
        }
    )


def canonical_up_to_clients(K: KVStore) -> KVStore:
    """The least client renaming of K, comparing canonical forms."""
    names = sorted({t.client for t in K.txids() if not t.is_initial})
    best = None
    for perm in itertools.permutations(names):
        cand = rename(K, dict(zip(names, perm)), {})
        if best is None or cand.canonical() < best.canonical():
            best = cand
    return best if best is not None else K


def isomorphic(K1: KVStore, K2: KVStore) -> bool:
    """Equality up to renaming clients and keys."""
    if len(K1) != len(K2):
        return False
    c1 = sorted({t.client for t in K1.txids() if not t.is_initial})
    c2 = sorted({t.client for t in K2.txids() if not t.is_initial})
    if len(c1) != len(c2):
        return False
    k1, k2 = sorted(K1), sorted(K2)
    for cp in itertools.permutations(c2):
        for kp in itertools.permutations(k2):
            if rename(K1, dict(zip(c1, cp)), dict(zip(k1, kp))) == K2:
                return True
    return False


def multi_counter_anomaly() -> KVStore:
    """Two clients each increment one counter and then read the other stale."""
    a1, a2, b1, b2 = tx("cl1", 1), tx("cl1", 2), tx("cl2", 1), tx("cl2", 2)
    return KVStore(
        {
            "k1": [Version(0, T0, {a1, b2}), Version(1, a1)],
            "k2": [Version(0, T0, {b1, a2}), Version(1, b1)],
        }
    )
