"""COPS: fully replicated causal storage with dependency-tracked versions.

Each client talks to a home replica. A put stamps the value with
(time, replica), records the client's whole context as its dependencies and
ships it to every other replica, which installs it once the dependencies are
present. A read-only transaction fetches each key optimistically and then
re-fetches whatever is older than the dependencies it gathered.

The checker replays the commit log in stamp order: puts sit at their stamp and
a read-only transaction sits just after the newest write it saw.
"""

from __future__ import annotations

import random
from bisect import insort
from dataclasses import dataclass, field
from typing import NamedTuple

from ..store import INITIAL_VALUE, Configuration, KVStore, TxId, View, initial_store
from .common import ConformanceReport, ProtocolError, check_commit, fp_of

Stamp = tuple[int, int]  # (time, replica)
INITIAL_STAMP: Stamp = (0, -1)


class CopsVersion(NamedTuple):
    stamp: Stamp
    value: int
    deps: frozenset  # of (key, stamp)


class SyncMessage(NamedTuple):
    target: int
    key: str
    version: CopsVersion


@dataclass
class Replica:
    rid: int
    kv: dict  # key -> list of CopsVersion in stamp order
    local_time: int = 0

    def has(self, k: str, s: Stamp) -> bool:
        return any(v.stamp == s for v in self.kv[k])

    def latest(self, k: str) -> CopsVersion:
        return self.kv[k][-1]

    def get(self, k: str, s: Stamp) -> CopsVersion | None:
        for v in self.kv[k]:
            if v.stamp == s:
                return v
        return None


@dataclass
class CopsClient:
    home: int
    context: set = field(default_factory=set)  # (key, stamp)
    txns: int = 0
    pending: dict | None = None  # key -> CopsVersion, for a get in progress
    pending_keys: tuple = ()


@dataclass
class CommitRecord:
    client: str
    txid: TxId
    context: frozenset  # before the transaction
    reads: dict  # key -> stamp
    write: tuple | None  # (key, stamp)


@dataclass
class CopsState:
    keys: tuple
    replicas: list
    clients: dict
    inflight: list = field(default_factory=list)
    log: list = field(default_factory=list)
    registry: dict = field(default_factory=dict)  # stamp -> (key, CopsVersion)
    check_deps: bool = True

    @classmethod
    def initial(cls, clients: int, replicas: int, keys, check_deps: bool = True) -> "CopsState":
        keys = tuple(sorted(keys))
        init = CopsVersion(INITIAL_STAMP, INITIAL_VALUE, frozenset())
        reps = [Replica(r, {k: [init] for k in keys}) for r in range(replicas)]
        cls_ = {f"cl{i + 1}": CopsClient(i % replicas) for i in range(clients)}
        return cls(keys, reps, cls_, check_deps=check_deps)

    def _txid(self, cl: str) -> TxId:
        c = self.clients[cl]
        c.txns += 1
        return TxId(cl, c.txns)


def cops_put(state: CopsState, cl: str, k: str, v: int) -> tuple[CopsState, Stamp]:
    c = state.clients[cl]
    r = state.replicas[c.home]
    r.local_time += 1
    stamp = (r.local_time, r.rid)
    ver = CopsVersion(stamp, v, frozenset(c.context))
    insort(r.kv[k], ver)
    state.registry[stamp] = (k, ver)
    for other in state.replicas:
        if other.rid != r.rid:
            state.inflight.append(SyncMessage(other.rid, k, ver))
    before = frozenset(c.context)
    c.context.add((k, stamp))
    state.log.append(CommitRecord(cl, state._txid(cl), before, {}, (k, stamp)))
    return state, stamp


def _deps_present(r: Replica, ver: CopsVersion) -> bool:
    return all(r.has(k, s) for k, s in ver.deps)


def cops_deliver(state: CopsState, msg: SyncMessage) -> bool:
    """Apply a sync message, or requeue it when a dependency is missing."""
    state.inflight.remove(msg)
    r = state.replicas[msg.target]
    if state.check_deps and not _deps_present(r, msg.version):
        state.inflight.append(msg)
        return False
    insort(r.kv[msg.key], msg.version)
    r.local_time = max(r.local_time, msg.version.stamp[0])
    return True


def get_begin(state: CopsState, cl: str, keys) -> None:
    c = state.clients[cl]
    if c.pending is not None:
        raise ProtocolError(f"{cl} already has a read in progress")
    c.pending, c.pending_keys = {}, tuple(keys)


def get_fetch(state: CopsState, cl: str, k: str) -> CopsVersion:
    """First round: take whatever is newest at the home replica right now."""
    c = state.clients[cl]
    ver = state.replicas[c.home].latest(k)
    c.pending[k] = ver
    return ver


def get_finish(state: CopsState, cl: str) -> dict | None:
    """Second round. Returns key -> value, or None while a re-fetch must wait."""
    c = state.clients[cl]
    fetched = c.pending
    ccv = {k: v.stamp for k, v in fetched.items()}
    for v in fetched.values():
        for dk, ds in v.deps:
            if dk in ccv:
                ccv[dk] = max(ccv[dk], ds)
    home = state.replicas[c.home]
    result = {}
    for k in c.pending_keys:
        if ccv[k] == fetched[k].stamp:
            result[k] = fetched[k]
            continue
        ver = home.get(k, ccv[k])
        if ver is None:
            return None
        result[k] = ver
    before = frozenset(c.context)
    for k, v in result.items():
        c.context.add((k, v.stamp))
        c.context |= v.deps
    c.pending, c.pending_keys = None, ()
    reads = {k: v.stamp for k, v in result.items()}
    state.log.append(CommitRecord(cl, state._txid(cl), before, reads, None))
    return {k: v.value for k, v in result.items()}


def cops_get_trans(state: CopsState, cl: str, keys) -> tuple[CopsState, dict]:
    """An uninterleaved read-only transaction."""
    get_begin(state, cl, keys)
    for k in keys:
        get_fetch(state, cl, k)
    out = get_finish(state, cl)
    if out is None:
        raise ProtocolError("home replica lacks a version its own data depends on")
    return state, out


# -- encoding and conformance ----------------------------------------------------


def _closure(state: CopsState, S) -> frozenset:
    out = set(S)
    todo = list(out)
    while todo:
        _, s = todo.pop()
        if s == INITIAL_STAMP:
            continue
        for d in state.registry[s][1].deps:
            if d not in out:
                out.add(d)
                todo.append(d)
    return frozenset(out)


def _view(K: KVStore, index: dict, S) -> View:
    u = {k: {0} for k in K}
    for k, s in S:
        if s == INITIAL_STAMP:
            continue
        if (k, s) not in index:
            raise KeyError((k, s))
        u[k].add(index[(k, s)])
    return View(u)


def _normal_order(state: CopsState) -> list[tuple[int, CommitRecord, frozenset]]:
    """Log entries in replay order, each with its closed visible set."""
    items = []
    for i, rec in enumerate(state.log):
        if rec.write is not None:
            S = _closure(state, rec.context)
            items.append(((rec.write[1], 0, i), i, rec, S))
        else:
            S = _closure(state, rec.context | set(rec.reads.items()))
            anchor = max((s for _, s in S), default=INITIAL_STAMP)
            items.append(((anchor, 1, i), i, rec, S))
    items.sort(key=lambda x: x[0])
    return [(i, rec, S) for _, i, rec, S in items]


def _check_replicas(state: CopsState) -> None:
    for r in state.replicas:
        for k, vs in r.kv.items():
            for v in vs:
                if v.stamp == INITIAL_STAMP:
                    continue
                key, known = state.registry.get(v.stamp, (None, None))
                if key != k or known != v:
                    raise ProtocolError(f"replica {r.rid} holds conflicting data for stamp {v.stamp}")


def _visible(state: CopsState, rec: CommitRecord) -> frozenset:
    if rec.write is not None:
        return _closure(state, rec.context)
    return _closure(state, rec.context | set(rec.reads.items()))


def _replay(state: CopsState, model: str = "CC"):
    """Yield (log index, txid, K, views, reason) for each commit in normal order.

    Stops after the first commit that fails its check.
    """
    K = initial_store(state.keys)
    views = {cl: View({k: {0} for k in state.keys}) for cl in sorted(state.clients)}
    index: dict = {}
    value = {s: v.value for s, (_, v) in state.registry.items()}
    value[INITIAL_STAMP] = INITIAL_VALUE
    for i, rec, S in _normal_order(state):
        reads = {k: value[s] for k, s in rec.reads.items()}
        writes = {rec.write[0]: value[rec.write[1]]} if rec.write is not None else {}
        try:
            pre = _view(K, index, S)
        except KeyError as e:
            yield i, rec.txid, K, views, f"view mentions {e.args[0]}, which is not yet in the store"
            return

        def post_of(K2, rec=rec, S=S):
            if rec.write is None:
                return _view(K2, index, S)
            idx = dict(index)
            idx[rec.write] = len(K2[rec.write[0]]) - 1
            return _view(K2, idx, S | {rec.write})

        K2, u2, why = check_commit(model, K, views[rec.client], pre, fp_of(reads, writes), rec.txid, post_of)
        if why is not None:
            yield i, rec.txid, K, views, why
            return
        if rec.write is not None:
            index[rec.write] = len(K2[rec.write[0]]) - 1
        K = K2
        views = {cl: u2 if cl == rec.client else View({k: u[k] for k in K}) for cl, u in views.items()}
        yield i, rec.txid, K, views, None


@dataclass
class EncodedRun:
    config: Configuration | None
    audit: list  # [(log index, txid, None | reason)]


def cops_encode(state: CopsState, model: str = "CC") -> EncodedRun:
    """Project the replicas and client contexts onto a store and views."""
    _check_replicas(state)
    audit = []
    K, views = initial_store(state.keys), None
    ok = True
    for i, t, K, views, why in _replay(state, model):
        audit.append((i, t, why))
        ok = why is None
    if views is None:
        views = {cl: View({k: {0} for k in state.keys}) for cl in state.clients}
    if not ok:
        return EncodedRun(None, audit)
    return EncodedRun(Configuration(K, views), audit)


# -- seeded runs ---------------------------------------------------------------------


def _workload(rng: random.Random, clients: int, ops: int, keys: tuple) -> dict:
    """Per-client queues of ("put", k, v) and ("get", keys)."""
    work = {f"cl{i + 1}": [] for i in range(clients)}
    for n in range(ops):
        cl = rng.choice(sorted(work))
        if rng.random() < 0.5:
            work[cl].append(("put", rng.choice(keys), n + 1))
        else:
            # single-key reads dominate, as they do in practice
            size = 1 if rng.random() < 0.75 else rng.randint(1, len(keys))
            ks = rng.sample(keys, size)
            work[cl].append(("get", tuple(ks)))
    return work


def _fmt_stamp(s: Stamp) -> str:
    return f"{s[0]}.{s[1]}"


class _Runner:
    def __init__(self, seed, clients, replicas, ops, keys, check_deps, fuel):
        self.seed = seed
        self.rng = random.Random(seed)
        self.keys = tuple(f"k{i + 1}" for i in range(keys))
        self.work = _workload(self.rng, clients, ops, self.keys)
        self.state = CopsState.initial(clients, replicas, self.keys, check_deps)
        self.fuel = fuel if fuel is not None else 200 * (ops + 1) * max(replicas, 1)
        self.events: list[str] = [
            f"# cops seed={seed} clients={clients} replicas={replicas} ops={ops} "
            f"keys={keys} check_deps={int(check_deps)}"
        ]
        self.livelock = False

    def choices(self) -> list[str]:
        out = [f"client {cl}" for cl, q in sorted(self.work.items()) if q]
        out += [f"deliver {m.target} {m.key} {_fmt_stamp(m.version.stamp)}" for m in self.state.inflight]
        return out

    def step(self, choice: str) -> None:
        parts = choice.split()
        note = ""
        if parts[0] == "client":
            note = self._client(parts[1])
        else:
            target, key, stamp = int(parts[1]), parts[2], tuple(map(int, parts[3].split(".")))
            msg = next(
                m for m in self.state.inflight
                if m.target == target and m.key == key and m.version.stamp == stamp
            )
            note = "applied" if cops_deliver(self.state, msg) else "requeued"
        self.events.append(f"{choice}  # {note}")

    def _client(self, cl: str) -> str:
        st, op = self.state, self.work[cl][0]
        c = st.clients[cl]
        if op[0] == "put":
            _, stamp = cops_put(st, cl, op[1], op[2])
            self.work[cl].pop(0)
            return f"put {op[1]}={op[2]} at {_fmt_stamp(stamp)}"
        if c.pending is None:
            get_begin(st, cl, op[1])
        todo = [k for k in c.pending_keys if k not in c.pending]
        if todo:
            v = get_fetch(st, cl, todo[0])
            return f"fetch {todo[0]} -> {_fmt_stamp(v.stamp)}"
        out = get_finish(st, cl)
        if out is None:
            return "wait for a re-fetch"
        self.work[cl].pop(0)
        return "get " + " ".join(f"{k}={v}" for k, v in sorted(out.items()))

    def run(self) -> None:
        while True:
            options = self.choices()
            if not options:
                return
            if self.fuel <= 0:
                self.livelock = True
                return
            self.fuel -= 1
            self.step(self.rng.choice(options))


def cops_run(
    seed: int,
    clients: int = 2,
    replicas: int = 2,
    ops: int = 6,
    keys: int = 2,
    check_deps: bool = True,
    fuel: int | None = None,
) -> tuple[CopsState, list[str], bool]:
    """Run a random workload to quiescence. Returns (state, trace, livelocked)."""
    r = _Runner(seed, clients, replicas, ops, keys, check_deps, fuel)
    r.run()
    return r.state, r.events, r.livelock


def cops_replay(lines) -> CopsState:
    """Re-execute a dumped trace, following its recorded choices."""
    lines = [ln.rstrip("\n") for ln in lines if ln.strip()]
    head = dict(kv.split("=") for kv in lines[0].lstrip("# ").split()[1:])
    r = _Runner(
        int(head["seed"]), int(head["clients"]), int(head["replicas"]), int(head["ops"]),
        int(head["keys"]), bool(int(head["check_deps"])), None,
    )
    for ln in lines[1:]:
        choice = ln.split("#")[0].strip()
        if choice not in r.choices():
            raise ProtocolError(f"trace step {choice!r} is not enabled")
        r.step(choice)
    return r.state


def converged(state: CopsState) -> bool:
    first = state.replicas[0].kv
    return all(r.kv == first for r in state.replicas[1:])


def cops_check_run(
    seed: int,
    clients: int = 2,
    replicas: int = 2,
    ops: int = 6,
    keys: int = 2,
    check_deps: bool = True,
    fuel: int | None = None,
) -> ConformanceReport:
    state, trace, livelock = cops_run(seed, clients, replicas, ops, keys, check_deps, fuel)
    report = ConformanceReport("cops", "CC", seed, livelock=livelock, trace=trace)
    for i, t, _, _, why in _replay(state, "CC"):
        if why is not None:
            report.violations.append((i, t, why))
        else:
            report.commits += 1
    if not livelock:
        report.converged = converged(state)
    return report
