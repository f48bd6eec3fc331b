"""Multi-version key-value stores, client views and the atomic commit function."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, NamedTuple

INITIAL_VALUE = 0


class StoreError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class TxId:
    """A transaction identifier: the initial transaction or (client, seq)."""

    client: str = ""
    seq: int = 0

    def __post_init__(self) -> None:
        if self.client == "":
            if self.seq != 0:
                raise StoreError("the initial transaction has no sequence number")
        elif self.seq < 1:
            raise StoreError(f"sequence numbers start at 1, got {self.seq}")

    @property
    def is_initial(self) -> bool:
        return self.client == ""

    def __str__(self) -> str:
        return "t0" if self.is_initial else f"{self.client}:{self.seq}"

    def __repr__(self) -> str:
        return f"TxId({self})"

    @classmethod
    def parse(cls, text: str) -> "TxId":
        text = text.strip()
        if text == "t0":
            return T0
        client, sep, seq = text.rpartition(":")
        if not sep or not client:
            raise StoreError(f"bad transaction id {text!r}")
        try:
            return cls(client, int(seq))
        except ValueError:
            raise StoreError(f"bad transaction id {text!r}") from None


T0 = TxId()


def tx(client: str, seq: int) -> TxId:
    return TxId(client, seq)


def session_before(a: TxId, b: TxId) -> bool:
    """True when a precedes b in session order."""
    return (
        not a.is_initial
        and not b.is_initial
        and a.client == b.client
        and a.seq < b.seq
    )


class Op(NamedTuple):
    kind: str  # "R" or "W"
    key: str
    value: object

    def __str__(self) -> str:
        return f"{self.kind}({self.key},{self.value})"


Fingerprint = frozenset  # of Op


def fingerprint(*ops: Op | tuple) -> frozenset:
    fp = frozenset(Op(*o) for o in ops)
    check_fingerprint(fp)
    return fp


def check_fingerprint(fp: Iterable[Op]) -> None:
    seen: set[tuple[str, str]] = set()
    for op in fp:
        if op.kind not in ("R", "W"):
            raise StoreError(f"bad operation kind {op.kind!r}")
        if (op.kind, op.key) in seen:
            raise StoreError(f"two {op.kind} entries for key {op.key!r}")
        seen.add((op.kind, op.key))


def format_fingerprint(fp: Iterable[Op]) -> str:
    ops = sorted(fp, key=lambda o: (o.key, o.kind))
    return "{" + ", ".join(str(o) for o in ops) + "}"


@dataclass(frozen=True)
class Version:
    value: object
    writer: TxId
    readers: frozenset = frozenset()

    def __post_init__(self) -> None:
        if not isinstance(self.readers, frozenset):
            object.__setattr__(self, "readers", frozenset(self.readers))
        if T0 in self.readers:
            raise StoreError("the initial transaction cannot be a reader")

    def with_reader(self, t: TxId) -> "Version":
        return Version(self.value, self.writer, self.readers | {t})


class _FrozenMap(Mapping):
    __slots__ = ("_data", "_hash")

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self) -> Iterator:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self._data == other._data

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(tuple(self._data.items()))
        return self._hash


class KVStore(_FrozenMap):
    """Immutable map from key to a non-empty tuple of versions."""

    __slots__ = ()

    def __init__(self, data: Mapping[str, Iterable[Version]]):
        self._data = {k: tuple(data[k]) for k in sorted(data)}
        self._hash = None

    def __repr__(self) -> str:
        parts = []
        for k, vs in self._data.items():
            items = ", ".join(
                f"({v.value},{v.writer},{{{','.join(sorted(map(str, v.readers)))}}})"
                for v in vs
            )
            parts.append(f"{k}: [{items}]")
        return "KVStore(" + "; ".join(parts) + ")"

    def versions(self):
        for k, vs in self._data.items():
            for i, v in enumerate(vs):
                yield k, i, v

    def txids(self) -> set[TxId]:
        ids = set()
        for _, _, v in self.versions():
            ids.add(v.writer)
            ids.update(v.readers)
        return ids

    def writers(self) -> set[TxId]:
        return {v.writer for _, _, v in self.versions()}

    def written_by(self, t: TxId) -> list[tuple[str, int]]:
        return [(k, i) for k, i, v in self.versions() if v.writer == t]

    def fingerprint_of(self, t: TxId) -> frozenset:
        """The fingerprint of t as recorded in the store."""
        ops = []
        for k, _, v in self.versions():
            if t in v.readers:
                ops.append(Op("R", k, v.value))
            if v.writer == t:
                ops.append(Op("W", k, v.value))
        return frozenset(ops)

    def canonical(self) -> str:
        rows = []
        for k, vs in self._data.items():
            row = [
                (repr(v.value), str(v.writer), sorted(str(r) for r in v.readers))
                for v in vs
            ]
            rows.append((k, row))
        return repr(rows)


class View(_FrozenMap):
    """Immutable map from key to the set of visible version indices."""

    __slots__ = ()

    def __init__(self, data: Mapping[str, Iterable[int]]):
        self._data = {k: frozenset(data[k]) for k in sorted(data)}
        self._hash = None

    def __repr__(self) -> str:
        body = ", ".join(f"{k}: {sorted(v)}" for k, v in self._data.items())
        return "View(" + body + ")"


@dataclass(frozen=True)
class Violation:
    rule: str
    key: str
    indices: tuple
    ids: tuple
    message: str

    def __str__(self) -> str:
        return f"{self.rule} on {self.key}{list(self.indices)}: {self.message}"


@dataclass(frozen=True)
class Configuration:
    store: KVStore
    views: Mapping[str, View]

    def __post_init__(self) -> None:
        if not isinstance(self.views, _FrozenMap):
            object.__setattr__(self, "views", _ViewMap(self.views))
        for cl, u in self.views.items():
            problems = view_problems(self.store, u)
            if problems:
                raise StoreError(f"view of {cl} not in Views(K): {problems[0]}")

    def with_view(self, cl: str, u: View) -> "Configuration":
        views = dict(self.views)
        views[cl] = u
        return Configuration(self.store, views)


class _ViewMap(_FrozenMap):
    __slots__ = ()

    def __init__(self, data: Mapping[str, View]):
        self._data = {k: data[k] for k in sorted(data)}
        self._hash = None


def initial_store(keys: Iterable[str]) -> KVStore:
    keys = list(keys)
    if not keys:
        raise StoreError("no keys")
    return KVStore({k: [Version(INITIAL_VALUE, T0)] for k in keys})


def initial_view(K: Mapping) -> View:
    return View({k: {0} for k in K})


def full_view(K: KVStore) -> View:
    return View({k: range(len(vs)) for k, vs in K.items()})


def initial_config(clients: Iterable[str], keys: Iterable[str]) -> Configuration:
    K = initial_store(keys)
    u0 = initial_view(K)
    return Configuration(K, {cl: u0 for cl in clients})


def check_wellformed(K: KVStore) -> list[Violation]:
    out: list[Violation] = []
    for k, vs in K.items():
        if not vs:
            out.append(Violation("WF2", k, (), (), "no versions"))
            continue
        if vs[0].writer != T0 or vs[0].value != INITIAL_VALUE:
            out.append(
                Violation("WF2", k, (0,), (vs[0].writer,), "missing initial version")
            )
        for i in range(len(vs)):
            for j in range(i + 1, len(vs)):
                if vs[i].writer == vs[j].writer:
                    out.append(
                        Violation(
                            "WF1", k, (i, j), (vs[i].writer,), "duplicate writer"
                        )
                    )
                shared = vs[i].readers & vs[j].readers
                if shared:
                    out.append(
                        Violation(
                            "WF1",
                            k,
                            (i, j),
                            tuple(sorted(shared)),
                            "reader in two versions",
                        )
                    )
        for i, v in enumerate(vs):
            w = v.writer
            if w.is_initial:
                continue
            # a client's own later transactions read or overwrite its version
            for r in v.readers:
                if r.client == w.client and r.seq <= w.seq:
                    out.append(
                        Violation(
                            "WF3", k, (i,), (w, r), "reader precedes own-client writer"
                        )
                    )
            for j in range(i + 1, len(vs)):
                w2 = vs[j].writer
                if w2.client == w.client and w2.seq <= w.seq:
                    out.append(
                        Violation(
                            "WF3",
                            k,
                            (i, j),
                            (w, w2),
                            "later version by earlier own-client transaction",
                        )
                    )
    return out


def is_wellformed(K: KVStore) -> bool:
    return not check_wellformed(K)


def view_problems(K: KVStore, u: Mapping[str, Iterable[int]]) -> list[str]:
    problems = []
    if set(u) != set(K):
        problems.append(f"keys {sorted(u)} differ from store keys {sorted(K)}")
        return problems
    visible_writers = set()
    for k, idx in u.items():
        n = len(K[k])
        if 0 not in idx:
            problems.append(f"{k}: index 0 missing")
        for i in idx:
            if not 0 <= i < n:
                problems.append(f"{k}: index {i} out of range")
            else:
                visible_writers.add(K[k][i].writer)
    for k, i, v in K.versions():
        if v.writer in visible_writers and i not in u[k]:
            problems.append(f"{k}: not atomic, {v.writer} partly visible")
    return problems


def is_valid_view(K: KVStore, u: Mapping) -> bool:
    return not view_problems(K, u)


def _require_view(K: KVStore, u: Mapping) -> None:
    problems = view_problems(K, u)
    if problems:
        raise StoreError(f"view not in Views(K): {problems[0]}")


def snapshot(K: KVStore, u: View) -> dict:
    _require_view(K, u)
    return {k: K[k][max(u[k])].value for k in K}


def update_kv(K: KVStore, u: View, F: Iterable[Op], t: TxId) -> KVStore:
    F = frozenset(F)
    check_fingerprint(F)
    if t.is_initial or t in K.txids():
        raise StoreError("stale transaction id")
    if not is_valid_view(K, u):
        raise StoreError("bad view")
    data = {k: list(vs) for k, vs in K.items()}
    for op in F:
        if op.key not in data:
            raise StoreError(f"unknown key {op.key!r}")
    for op in F:
        if op.kind == "R":
            i = max(u[op.key])
            data[op.key][i] = data[op.key][i].with_reader(t)
    for op in F:
        if op.kind == "W":
            data[op.key].append(Version(op.value, t))
    return KVStore(data)


def view_leq(u: View, v: View) -> bool:
    return all(u[k] <= v.get(k, frozenset()) for k in u)


def view_join(u: View, v: View) -> View:
    return View({k: u[k] | v[k] for k in u})


def next_txid(cl: str, K: KVStore) -> TxId:
    seqs = [t.seq for t in K.txids() if t.client == cl]
    return TxId(cl, max(seqs, default=0) + 1)


def is_next_txid(t: TxId, K: KVStore) -> bool:
    """Membership in the set of fresh identifiers for t's client."""
    if t.is_initial:
        return False
    return all(s.seq < t.seq for s in K.txids() if s.client == t.client)


def tx_of(K: KVStore, u: View) -> set[TxId]:
    """Writers of the versions included in u."""
    return {K[k][i].writer for k in u for i in u[k]}


def view_of_writers(K: KVStore, T: Iterable[TxId]) -> View:
    T = set(T)
    return View(
        {
            k: {0} | {i for i, v in enumerate(vs) if v.writer in T}
            for k, vs in K.items()
        }
    )


def extend_view(K: KVStore, u: View) -> View:
    """Re-key a view of a prefix store against an extended store K."""
    return View({k: u.get(k, {0}) for k in K})
