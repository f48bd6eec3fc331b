"""Clock-SI: partitioned snapshot isolation driven by per-shard clocks.

A transaction takes its snapshot from the clock of a coordinator shard, reads
the newest versions committed strictly before that snapshot, buffers its
writes, and commits at the largest clock among the shards it touched. Two-phase
commit is one atomic scheduler event.

The checker replays commits in commit-time order. A transaction's view is
every writer committed before its snapshot; afterwards the client sees every
writer up to its own commit time.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..lang import combine
from ..store import INITIAL_VALUE, T0, KVStore, Op, TxId, View, initial_store, view_of_writers
from .common import ConformanceReport, ProtocolError, check_commit


class AbortError(RuntimeError):
    pass


@dataclass
class ClockTxn:
    client: str
    coordinator: int
    snapshot: int
    state: str = "active"
    ws: dict = field(default_factory=dict)
    fp: frozenset = frozenset()
    commit_time: int | None = None


@dataclass
class CommitRecord:
    client: str
    txid: TxId
    snapshot: int
    commit_time: int
    fp: frozenset


@dataclass
class ClockSiState:
    keys: tuple
    clocks: list  # shard -> clock
    store: dict  # key -> list of (commit time, value, writer) in time order
    client_time: dict  # client -> time after its last commit
    active: dict = field(default_factory=dict)  # client -> ClockTxn
    log: list = field(default_factory=list)
    aborts: int = 0
    commit_rule: str = "max"

    @classmethod
    def initial(cls, clients: int, clocks, keys, commit_rule: str = "max") -> "ClockSiState":
        keys = tuple(keys)
        return cls(
            keys,
            list(clocks),
            {k: [(0, INITIAL_VALUE, T0)] for k in keys},
            {f"cl{i + 1}": 0 for i in range(clients)},
            commit_rule=commit_rule,
        )

    def shard_of(self, k: str) -> int:
        return self.keys.index(k) % len(self.clocks)

    def tick(self, shard: int) -> None:
        self.clocks[shard] += 1


def clocksi_start(state: ClockSiState, cl: str, shard: int) -> int | None:
    """Begin a transaction at a coordinator shard; None while the clock lags."""
    if cl in state.active:
        raise ProtocolError(f"{cl} already runs a transaction")
    if not state.client_time[cl] < state.clocks[shard]:
        return None
    snap = state.clocks[shard]
    state.tick(shard)
    state.active[cl] = ClockTxn(cl, shard, snap)
    return snap


def clocksi_read(state: ClockSiState, cl: str, k: str):
    """Value of k in the transaction's snapshot; None while the shard lags."""
    txn = state.active[cl]
    if k in txn.ws:
        return txn.ws[k]
    if not txn.snapshot < state.clocks[state.shard_of(k)]:
        return None
    visible = [v for v in state.store[k] if v[0] < txn.snapshot]
    value = visible[-1][1]
    txn.fp = combine(txn.fp, Op("R", k, value))
    return value


def clocksi_write(state: ClockSiState, cl: str, k: str, v: int) -> None:
    txn = state.active[cl]
    txn.ws[k] = v
    txn.fp = combine(txn.fp, Op("W", k, v))


def clocksi_commit(state: ClockSiState, cl: str) -> int:
    txn = state.active.pop(cl)
    for k in txn.ws:
        if any(t >= txn.snapshot for t, _, _ in state.store[k]):
            txn.state = "aborted"
            state.aborts += 1
            raise AbortError("abort: concurrent write")
    touched = sorted({state.shard_of(op.key) for op in txn.fp})
    times = [state.clocks[s] for s in touched] + [txn.snapshot]
    n = max(times) if state.commit_rule == "max" else min(times)
    t = TxId(cl, n)
    for k, v in txn.ws.items():
        vs = state.store[k]
        vs.append((n, v, t))
        vs.sort(key=lambda x: x[0])
    for s in touched:
        state.tick(s)
    txn.state, txn.commit_time = "committed", n
    state.client_time[cl] = n + 1
    state.log.append(CommitRecord(cl, t, txn.snapshot, n, txn.fp))
    return n


# -- conformance -------------------------------------------------------------------


def _writers_before(K: KVStore, time: int) -> View:
    """viewOf: every version whose writer committed strictly before time."""
    ws = {v.writer for _, _, v in K.versions() if not v.writer.is_initial and v.writer.seq < time}
    return view_of_writers(K, ws)


def _replay(state: ClockSiState, model: str = "SI"):
    K = initial_store(state.keys)
    views = {cl: View({k: {0} for k in state.keys}) for cl in sorted(state.client_time)}
    order = sorted(range(len(state.log)), key=lambda i: (state.log[i].commit_time, state.log[i].client))
    done: set[int] = set()
    for i in order:
        rec = state.log[i]
        pre = _writers_before(K, rec.snapshot)
        # the snapshot must not cover a writer that the commit order puts later
        later = [
            r.txid for j, r in enumerate(state.log)
            if j not in done and j != i and r.commit_time < rec.snapshot
            and any(op.kind == "W" for op in r.fp)
        ]
        if later:
            yield i, rec.txid, K, views, f"snapshot {rec.snapshot} covers {later[0]}, which commits later"
            return
        K2, u2, why = check_commit(
            model, K, views[rec.client], pre, rec.fp, rec.txid,
            lambda K2, n=rec.commit_time: _writers_before(K2, n + 1),
        )
        if why is not None:
            yield i, rec.txid, K, views, why
            return
        K = K2
        done.add(i)
        views = {cl: u2 if cl == rec.client else View({k: u[k] for k in K}) for cl, u in views.items()}
        yield i, rec.txid, K, views, None


# -- seeded runs -------------------------------------------------------------------


def _workload(rng: random.Random, clients: int, shards: int, ops: int, keys: tuple) -> dict:
    """Per-client queues of (coordinator, [("r", k) | ("w", k, v)])."""
    work = {f"cl{i + 1}": [] for i in range(clients)}
    left, n = ops, 0
    while left > 0:
        size = min(left, rng.randint(1, 3))
        body = []
        for _ in range(size):
            n += 1
            k = rng.choice(keys)
            body.append(("r", k) if rng.random() < 0.5 else ("w", k, n))
        work[rng.choice(sorted(work))].append((rng.randrange(shards), body))
        left -= size
    return work


class _Runner:
    def __init__(self, seed, clients, shards, ops, skew, keys, commit_rule, fuel):
        self.rng = random.Random(seed)
        self.keys = tuple(f"k{i + 1}" for i in range(keys if keys else 2 * shards))
        clocks = [1 + self.rng.randint(0, skew) for _ in range(shards)]
        self.work = _workload(self.rng, clients, shards, ops, self.keys)
        self.pc = {cl: 0 for cl in self.work}
        self.state = ClockSiState.initial(clients, clocks, self.keys, commit_rule)
        self.fuel = fuel if fuel is not None else 400 * (ops + 1) * (skew + 1)
        self.events: list[str] = [
            f"# clocksi seed={seed} clients={clients} shards={shards} ops={ops} skew={skew} "
            f"keys={len(self.keys)} rule={commit_rule} clocks={','.join(map(str, clocks))}"
        ]
        self.livelock = False

    def choices(self) -> list[str]:
        out = [f"client {cl}" for cl, q in sorted(self.work.items()) if q]
        if out:
            out += [f"tick {s}" for s in range(len(self.state.clocks))]
        return out

    def step(self, choice: str) -> None:
        kind, arg = choice.split()
        if kind == "tick":
            self.state.tick(int(arg))
            note = f"clock {self.state.clocks[int(arg)]}"
        else:
            note = self._client(arg)
        self.events.append(f"{choice}  # {note}")

    def _client(self, cl: str) -> str:
        st = self.state
        coord, body = self.work[cl][0]
        if cl not in st.active:
            snap = clocksi_start(st, cl, coord)
            return "wait to start" if snap is None else f"start at shard {coord}, snapshot {snap}"
        pc = self.pc[cl]
        if pc < len(body):
            op = body[pc]
            if op[0] == "r":
                v = clocksi_read(st, cl, op[1])
                if v is None:
                    return f"wait to read {op[1]}"
                self.pc[cl] += 1
                return f"read {op[1]}={v}"
            clocksi_write(st, cl, op[1], op[2])
            self.pc[cl] += 1
            return f"write {op[1]}={op[2]}"
        self.work[cl].pop(0)
        self.pc[cl] = 0
        try:
            n = clocksi_commit(st, cl)
        except AbortError as e:
            return str(e)
        return f"commit at {n}"

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


def clocksi_run(
    seed: int,
    clients: int = 2,
    shards: int = 2,
    ops: int = 6,
    skew: int = 5,
    keys: int | None = None,
    commit_rule: str = "max",
    fuel: int | None = None,
) -> tuple[ClockSiState, list[str], bool]:
    if commit_rule not in ("max", "min"):
        raise ValueError(f"unknown commit rule {commit_rule!r}")
    r = _Runner(seed, clients, shards, ops, skew, keys, commit_rule, fuel)
    r.run()
    return r.state, r.events, r.livelock


def clocksi_replay(lines) -> ClockSiState:
    lines = [ln.rstrip("\n") for ln in lines if ln.strip()]
    head = dict(kv.split("=") for kv in lines[0].lstrip("# ").split()[1:])
    r = _Runner(
        int(head["seed"]), int(head["clients"]), int(head["shards"]), int(head["ops"]),
        int(head["skew"]), int(head["keys"]), head["rule"], None,
    )
    for ln in lines[1:]:
        choice = ln.split("#")[0].strip()
        if choice not in r.choices():
            raise ProtocolError(f"trace step {choice!r} is not enabled")
        r.step(choice)
    return r.state


def clocksi_check_run(
    seed: int,
    clients: int = 2,
    shards: int = 2,
    ops: int = 6,
    skew: int = 5,
    keys: int | None = None,
    commit_rule: str = "max",
    fuel: int | None = None,
) -> ConformanceReport:
    state, trace, livelock = clocksi_run(seed, clients, shards, ops, skew, keys, commit_rule, fuel)
    report = ConformanceReport("clocksi", "SI", seed, livelock=livelock, trace=trace)
    for i, t, _, _, why in _replay(state, "SI"):
        if why is None:
            report.commits += 1
        else:
            report.violations.append((i, t, why))
    return report
