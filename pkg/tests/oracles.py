"""Independent reference implementations used to cross-check the library.

Nothing here calls into the code under test except for plain data types.
"""

from __future__ import annotations

import itertools
import random

from kvtx.store import INITIAL_VALUE, T0, KVStore, TxId, Version


def _plain(K: KVStore) -> dict:
    return {k: [(v.value, v.writer, set(v.readers)) for v in vs] for k, vs in K.items()}


def _fingerprints(K: KVStore) -> dict:
    """txid -> (reads: set of keys, writes: {key: value}), read straight off K."""
    out: dict = {}
    for k, vs in K.items():
        for v in vs:
            if not v.writer.is_initial:
                out.setdefault(v.writer, (set(), {}))[1][k] = v.value
            for r in v.readers:
                out.setdefault(r, (set(), {}))[0].add(k)
    return out


def serial_replay(keys, order, fps) -> dict:
    """Run transactions one after another, each seeing everything before it."""
    store = {k: [(INITIAL_VALUE, T0, set())] for k in keys}
    for t in order:
        reads, writes = fps[t]
        for k in reads:
            store[k][-1][2].add(t)
        for k, v in writes.items():
            store[k].append((v, t, set()))
    return store


def serialisable_by_permutation(K: KVStore) -> bool:
    """Some session-respecting serial order reproduces K exactly."""
    fps = _fingerprints(K)
    txns = sorted(fps)
    target = _plain(K)
    for perm in itertools.permutations(txns):
        pos = {t: i for i, t in enumerate(perm)}
        if any(a.client == b.client and a.seq < b.seq and pos[a] > pos[b] for a in txns for b in txns):
            continue
        if serial_replay(K.keys(), perm, fps) == target:
            return True
    return False


def naive_closure(T, r) -> set:
    """Repeat whole passes over r until nothing changes."""
    out = set(T)
    changed = True
    while changed:
        changed = False
        for a, b in r:
            if b in out and a not in out:
                out.add(a)
                changed = True
    return out


def random_store(rng: random.Random, keys=("k1", "k2", "k3"), clients=("a", "b", "c"),
                 max_versions: int = 5, steps: int = 8) -> KVStore:
    """A well-formed store built by committing random transactions.

    Each transaction sees a random set of earlier writers, reads some keys
    at the newest version it sees and appends writes to others.
    """
    data = {k: [[INITIAL_VALUE, T0, set()]] for k in keys}
    seq = {c: 0 for c in clients}
    writers = []
    for _ in range(steps):
        c = rng.choice(clients)
        seq[c] += 1
        t = TxId(c, seq[c])
        seen = {T0} | {w for w in writers if rng.random() < 0.5}
        wrote = False
        for k in keys:
            if rng.random() < 0.5:
                top = max(i for i, v in enumerate(data[k]) if v[1] in seen)
                data[k][top][2].add(t)
        for k in keys:
            if rng.random() < 0.4 and len(data[k]) < max_versions:
                data[k].append([rng.randint(-2, 5), t, set()])
                wrote = True
        if wrote:
            writers.append(t)
    return KVStore({k: [Version(v, w, frozenset(r)) for v, w, r in vs] for k, vs in data.items()})
