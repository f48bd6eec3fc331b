"""Dependency relations over kv-stores and the equivalent dependency graphs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .store import (
    INITIAL_VALUE,
    T0,
    KVStore,
    Op,
    StoreError,
    TxId,
    Version,
    check_wellformed,
    session_before,
)

Pair = tuple[TxId, TxId]
Relation = frozenset  # of Pair


def _require_wf(K: KVStore) -> None:
    problems = check_wellformed(K)
    if problems:
        raise StoreError(f"ill-formed store: {problems[0]}")


def so(K: KVStore) -> Relation:
    ids = [t for t in K.txids() if not t.is_initial]
    return frozenset((a, b) for a in ids for b in ids if session_before(a, b))


def wr_key(K: KVStore, k: str) -> Relation:
    return frozenset((v.writer, r) for v in K[k] for r in v.readers)


def ww_key(K: KVStore, k: str) -> Relation:
    vs = K[k]
    return frozenset(
        (vs[i].writer, vs[j].writer)
        for i in range(len(vs))
        for j in range(i + 1, len(vs))
    )


def rw_key(K: KVStore, k: str) -> Relation:
    vs = K[k]
    return frozenset(
        (r, vs[j].writer)
        for i in range(len(vs))
        for r in vs[i].readers
        for j in range(i + 1, len(vs))
        if r != vs[j].writer
    )


def wr(K: KVStore, check: bool = True) -> Relation:
    if check:
        _require_wf(K)
    return frozenset().union(*(wr_key(K, k) for k in K))


def ww(K: KVStore, check: bool = True) -> Relation:
    if check:
        _require_wf(K)
    return frozenset().union(*(ww_key(K, k) for k in K))


def rw(K: KVStore, check: bool = True) -> Relation:
    if check:
        _require_wf(K)
    return frozenset().union(*(rw_key(K, k) for k in K))


def compose(r1: Iterable[Pair], r2: Iterable[Pair]) -> Relation:
    succ: dict[TxId, set[TxId]] = {}
    for a, b in r2:
        succ.setdefault(a, set()).add(b)
    return frozenset((a, c) for a, b in r1 for c in succ.get(b, ()))


def reflexive(r: Iterable[Pair], domain: Iterable[TxId]) -> Relation:
    return frozenset(r) | frozenset((t, t) for t in domain)


def transitive_closure(r: Iterable[Pair]) -> Relation:
    succ: dict[TxId, set[TxId]] = {}
    for a, b in r:
        succ.setdefault(a, set()).add(b)
    out = set()
    for a in list(succ):
        seen: set[TxId] = set()
        todo = list(succ[a])
        while todo:
            b = todo.pop()
            if b in seen:
                continue
            seen.add(b)
            todo.extend(succ.get(b, ()))
        out.update((a, b) for b in seen)
    return frozenset(out)


def closure_txids(K: KVStore, T: Iterable[TxId], r: Iterable[Pair]) -> set[TxId]:
    """Least superset of T closed under taking r-predecessors."""
    pred: dict[TxId, set[TxId]] = {}
    for a, b in r:
        pred.setdefault(b, set()).add(a)
    out = set(T)
    todo = list(out)
    while todo:
        t = todo.pop()
        for p in pred.get(t, ()):
            if p not in out:
                out.add(p)
                todo.append(p)
    return out


# -- cycles ----------------------------------------------------------------------


def labelled_edges(K: KVStore) -> dict[Pair, set[str]]:
    _require_wf(K)
    edges: dict[Pair, set[str]] = {}
    for name, rel in (("SO", so(K)), ("WR", wr(K, False)), ("WW", ww(K, False)), ("RW", rw(K, False))):
        for p in rel:
            edges.setdefault(p, set()).add(name)
    return edges


def find_cycle(K: KVStore) -> list[tuple[TxId, str, TxId]] | None:
    """A shortest cycle of SO/WR/WW/RW edges, or None.

    Ties between equally short cycles go to the one whose sequence of ids is
    lexicographically smallest. Each step is (source, label, target).
    """
    edges = labelled_edges(K)
    succ: dict[TxId, list[TxId]] = {}
    for a, b in edges:
        succ.setdefault(a, []).append(b)
    for a in succ:
        succ[a].sort()
    best: list[TxId] | None = None
    for start in sorted(succ):
        # BFS for the shortest path start -> ... -> start, lexicographic by construction
        parent: dict[TxId, TxId] = {}
        q = deque([start])
        found = False
        while q and not found:
            a = q.popleft()
            for b in succ.get(a, ()):
                if b == start:
                    parent[start] = a
                    found = True
                    break
                if b not in parent:
                    parent[b] = a
                    q.append(b)
        if not found:
            continue
        path = [start]
        cur = parent[start]
        while cur != start:
            path.append(cur)
            cur = parent[cur]
        path.reverse()
        path = [start] + path[:-1] if path[0] != start else path
        cand = _rotate_min(path)
        if best is None or (len(cand), cand) < (len(best), best):
            best = cand
    if best is None:
        return None
    out = []
    for i, a in enumerate(best):
        b = best[(i + 1) % len(best)]
        out.append((a, _label(edges[(a, b)]), b))
    return out


def _label(names: set[str]) -> str:
    for n in ("SO", "WR", "WW", "RW"):
        if n in names:
            return n
    raise AssertionError(names)


def _rotate_min(path: list[TxId]) -> list[TxId]:
    i = path.index(min(path))
    return path[i:] + path[:i]


def acyclic(K: KVStore) -> bool:
    return find_cycle(K) is None


# -- dependency graphs -----------------------------------------------------------


@dataclass(frozen=True)
class DependencyGraph:
    """Transactions with their fingerprints and per-key WR/WW/RW edges."""

    txns: Mapping[TxId, frozenset]
    wr: Mapping[str, Relation]
    ww: Mapping[str, Relation]
    rw: Mapping[str, Relation] = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DependencyGraph):
            return NotImplemented
        return (
            dict(self.txns) == dict(other.txns)
            and _nonempty(self.wr) == _nonempty(other.wr)
            and _nonempty(self.ww) == _nonempty(other.ww)
            and _nonempty(self.rw) == _nonempty(other.rw)
        )

    def __hash__(self) -> int:
        return hash(frozenset(self.txns.items()))

    @property
    def keys(self) -> set[str]:
        return {op.key for fp in self.txns.values() for op in fp}


def _nonempty(m: Mapping[str, Relation]) -> dict:
    return {k: frozenset(v) for k, v in m.items() if v}


def graph_of(K: KVStore) -> DependencyGraph:
    _require_wf(K)
    txns = {t: K.fingerprint_of(t) for t in K.txids()}
    return DependencyGraph(
        txns,
        {k: wr_key(K, k) for k in K},
        {k: ww_key(K, k) for k in K},
        {k: rw_key(K, k) for k in K},
    )


def graph_problems(G: DependencyGraph) -> list[str]:
    out = []
    if T0 not in G.txns:
        out.append("missing initial transaction")
        return out
    keys = G.keys
    for k in keys:
        if Op("W", k, INITIAL_VALUE) not in G.txns[T0]:
            out.append(f"{k}: initial transaction does not write the initial value")
    for t, fp in G.txns.items():
        for op in fp:
            if op.kind != "R":
                continue
            srcs = [a for a, b in G.wr.get(op.key, ()) if b == t]
            if len(srcs) != 1:
                out.append(f"{t} reads {op.key} from {len(srcs)} sources")
                continue
            if Op("W", op.key, op.value) not in G.txns.get(srcs[0], ()):
                out.append(f"{t} reads {op.key}={op.value} but source wrote otherwise")
    for k in keys:
        writers = [t for t, fp in G.txns.items() if any(o.kind == "W" and o.key == k for o in fp)]
        order = G.ww.get(k, frozenset())
        for a in writers:
            if (a, a) in order:
                out.append(f"{k}: WW not irreflexive at {a}")
            for b in writers:
                if a != b and ((a, b) in order) == ((b, a) in order):
                    out.append(f"{k}: WW not total between {a} and {b}")
        if any((a, T0) in order for a in writers):
            out.append(f"{k}: initial transaction not WW-minimal")
        for a, b, c in ((a, b, c) for a, b in order for b2, c in order if b2 == b):
            if (a, c) not in order:
                out.append(f"{k}: WW not transitive")
                break
        expected = {
            (t, w)
            for s, t in G.wr.get(k, ())
            for s2, w in order
            if s2 == s and t != w
        }
        if G.rw and frozenset(G.rw.get(k, frozenset())) != frozenset(expected):
            out.append(f"{k}: RW is not WR^-1;WW")
    return out


def kv_of(G: DependencyGraph) -> KVStore:
    problems = graph_problems(G)
    if problems:
        raise StoreError(f"not a dependency graph: {problems[0]}")
    data = {}
    for k in sorted(G.keys):
        order = G.ww.get(k, frozenset())
        writers = [
            t for t, fp in G.txns.items() if any(o.kind == "W" and o.key == k for o in fp)
        ]
        # rank = number of WW predecessors
        writers.sort(key=lambda t: sum(1 for a, b in order if b == t))
        versions = []
        for w in writers:
            value = next(o.value for o in G.txns[w] if o.kind == "W" and o.key == k)
            readers = frozenset(b for a, b in G.wr.get(k, ()) if a == w)
            versions.append(Version(value, w, readers))
        data[k] = versions
    return KVStore(data)


def edge_list(K: KVStore) -> list[tuple[TxId, str, TxId]]:
    out = []
    for (a, b), names in labelled_edges(K).items():
        for n in names:
            out.append((a, n, b))
    return sorted(out)
