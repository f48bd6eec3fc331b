"""Abstract executions: transactions with visibility and arbitration orders."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from . import deps, lang
from .store import (
    INITIAL_VALUE,
    T0,
    KVStore,
    Op,
    StoreError,
    TxId,
    Version,
    View,
    initial_store,
    session_before,
    tx_of,
    update_kv,
)


@dataclass(frozen=True)
class AbstractExecution:
    """Transactions in arbitration order plus a visibility relation.

    The initial transaction is implicit: it writes the initial value of every
    key, comes first in arbitration and is visible to everyone.
    """

    keys: tuple
    txns: Mapping[TxId, frozenset]
    vis: frozenset  # pairs among non-initial transactions
    ar: tuple  # non-initial transactions, arbitration order

    def __post_init__(self) -> None:
        if set(self.ar) != set(self.txns) or len(self.ar) != len(self.txns):
            raise ValueError("arbitration must order exactly the transactions")
        pos = self.position
        for a, b in self.vis:
            if pos[a] >= pos[b]:
                raise ValueError(f"visibility {a} -> {b} goes against arbitration")
        for a, b in itertools.combinations(self.ar, 2):
            if session_before(b, a):
                raise ValueError(f"arbitration puts {a} before its session predecessor")

    @property
    def position(self) -> dict[TxId, int]:
        out = {t: i + 1 for i, t in enumerate(self.ar)}
        out[T0] = 0
        return out

    def fp(self, t: TxId) -> frozenset:
        if t == T0:
            return frozenset(Op("W", k, INITIAL_VALUE) for k in self.keys)
        return self.txns[t]

    def all_txns(self) -> list[TxId]:
        return [T0, *self.ar]

    def vis_rel(self) -> frozenset:
        return frozenset(self.vis) | {(T0, t) for t in self.ar}

    def ar_rel(self) -> frozenset:
        order = self.all_txns()
        return frozenset(
            (order[i], order[j]) for i in range(len(order)) for j in range(i + 1, len(order))
        )

    def writers(self, k: str) -> list[TxId]:
        return [t for t in self.all_txns() if any(o.kind == "W" and o.key == k for o in self.fp(t))]

    def visible_writer(self, t: TxId, k: str) -> TxId:
        """The arbitration-last writer of k visible to t."""
        vis = self.vis_rel()
        cands = [w for w in self.writers(k) if (w, t) in vis]
        return cands[-1]

    def so_rel(self) -> frozenset:
        ids = list(self.ar)
        return frozenset((a, b) for a in ids for b in ids if session_before(a, b))

    def wr_rel(self) -> frozenset:
        out = set()
        for t in self.ar:
            for o in self.fp(t):
                if o.kind == "R":
                    out.add((self.visible_writer(t, o.key), t))
        return frozenset(out)

    def wr_key(self, k: str) -> frozenset:
        return frozenset(
            (self.visible_writer(t, k), t)
            for t in self.ar
            if any(o.kind == "R" and o.key == k for o in self.fp(t))
        )

    def ww_key(self, k: str) -> frozenset:
        ws = self.writers(k)
        return frozenset((ws[i], ws[j]) for i in range(len(ws)) for j in range(i + 1, len(ws)))

    def ww_rel(self) -> frozenset:
        return frozenset().union(*(self.ww_key(k) for k in self.keys))

    def rw_rel(self) -> frozenset:
        out = set()
        for k in self.keys:
            wr_k, ww_k = self.wr_key(k), self.ww_key(k)
            for w, r in wr_k:
                for w1, w2 in ww_k:
                    if w1 == w and w2 != r:
                        out.add((r, w2))
        return frozenset(out)

    def lww_problems(self) -> list[str]:
        out = []
        for t in self.ar:
            for o in self.fp(t):
                if o.kind != "R":
                    continue
                w = self.visible_writer(t, o.key)
                val = next(p.value for p in self.fp(w) if p.kind == "W" and p.key == o.key)
                if val != o.value:
                    out.append(f"{t} reads {o.key}={o.value} but {w} wrote {val}")
        return out


def empty_execution(keys: Iterable[str]) -> AbstractExecution:
    return AbstractExecution(tuple(sorted(keys)), {}, frozenset(), ())


def extend(A: AbstractExecution, t: TxId, Tvis: Iterable[TxId], F: Iterable[Op]) -> AbstractExecution:
    if t.is_initial or t in A.txns:
        raise StoreError("stale transaction id")
    Tvis = set(Tvis)
    if not Tvis <= set(A.all_txns()):
        raise ValueError("visible set mentions unknown transactions")
    txns = dict(A.txns)
    txns[t] = frozenset(F)
    vis = set(A.vis) | {(w, t) for w in Tvis if not w.is_initial}
    return AbstractExecution(A.keys, txns, frozenset(vis), A.ar + (t,))


def cut(A: AbstractExecution, i: int) -> AbstractExecution:
    if not 0 <= i <= len(A.ar):
        raise ValueError(f"cut index {i} out of range")
    keep = A.ar[:i]
    ks = set(keep)
    return AbstractExecution(
        A.keys,
        {t: A.txns[t] for t in keep},
        frozenset((a, b) for a, b in A.vis if a in ks and b in ks),
        keep,
    )


def mkvs_of(A: AbstractExecution) -> KVStore:
    problems = A.lww_problems()
    if problems:
        raise StoreError(f"last-writer-wins violated: {problems[0]}")
    data = {}
    for k in A.keys:
        versions = []
        readers_of: dict[TxId, set[TxId]] = {}
        for w, r in A.wr_key(k):
            readers_of.setdefault(w, set()).add(r)
        for w in A.writers(k):
            val = next(o.value for o in A.fp(w) if o.kind == "W" and o.key == k)
            versions.append(Version(val, w, frozenset(readers_of.get(w, ()))))
        data[k] = versions
    return KVStore(data)


def get_view(A: AbstractExecution, T: Iterable[TxId]) -> View:
    T = set(T)
    K = mkvs_of(A)
    return View(
        {k: {0} | {i for i, v in enumerate(vs) if v.writer in T} for k, vs in K.items()}
    )


def lww_snapshot(A: AbstractExecution, T: Iterable[TxId]) -> dict:
    """Values seen by a transaction that sees exactly T."""
    T = set(T) | {T0}
    out = {}
    for k in A.keys:
        ws = [w for w in A.writers(k) if w in T]
        w = ws[-1]
        out[k] = next(o.value for o in A.fp(w) if o.kind == "W" and o.key == k)
    return out


# -- axioms ------------------------------------------------------------------------


Axiom = Callable[[AbstractExecution], frozenset]


def _opt(r: frozenset, A: AbstractExecution) -> frozenset:
    return deps.reflexive(r, A.all_txns())


def ax_mr(A):
    return deps.compose(A.vis_rel(), A.so_rel())


def ax_ryw(A):
    return A.so_rel()


def ax_mw(A):
    return deps.compose(A.so_rel() & A.ww_rel(), A.vis_rel())


def ax_wfr(A):
    return deps.compose(deps.compose(A.wr_rel(), _opt(A.so_rel() & A.rw_rel(), A)), A.vis_rel())


def ax_cc_causal(A):
    return deps.compose(A.so_rel() | A.wr_rel(), A.vis_rel())


def ax_ua(A):
    return A.ww_rel()


def ax_psi_causal(A):
    return deps.compose(A.so_rel() | A.wr_rel() | A.ww_rel(), A.vis_rel())


def ax_cp_prefix(A):
    r = deps.compose(A.so_rel() | A.wr_rel(), _opt(A.rw_rel(), A)) | A.ww_rel()
    return deps.compose(r, A.vis_rel())


def ax_si_prefix(A):
    r = deps.compose(A.so_rel() | A.ww_rel() | A.wr_rel(), _opt(A.rw_rel(), A))
    return deps.compose(r, A.vis_rel())


def ax_ser(A):
    return A.ar_rel()


AXIOMS: dict[str, list[Axiom]] = {
    "TOP": [],
    "MR": [ax_mr],
    "RYW": [ax_ryw],
    "MW": [ax_mw],
    "WFR": [ax_wfr],
    "CC": [ax_cc_causal, ax_ryw],
    "UA": [ax_ua],
    "PSI": [ax_psi_causal, ax_ryw, ax_ua],
    "CP": [ax_cp_prefix, ax_ryw],
    "SI": [ax_si_prefix, ax_ryw, ax_ua],
    "WSI": [ax_cp_prefix, ax_ryw, ax_ua],
    "SER": [ax_ser],
}


def check_axioms(A: AbstractExecution, axioms: Iterable[Axiom]) -> bool:
    vis = A.vis_rel()
    return all(ax(A) <= vis for ax in axioms)


# -- enumeration for cross-validation -------------------------------------------------


def enumerate_executions(
    workload: Mapping[str, Sequence[lang.Cmd]], keys: Iterable[str]
) -> Iterator[AbstractExecution]:
    """Every abstract execution of a workload of straight-line client sessions.

    workload maps a client to the bodies of its transactions, in order.
    Fingerprints are produced by running each body on the last-writer-wins
    snapshot of what it sees.
    """
    keys = tuple(sorted(keys))
    ids = [TxId(cl, i + 1) for cl, bodies in sorted(workload.items()) for i in range(len(bodies))]
    body_of = {TxId(cl, i + 1): b for cl, bodies in workload.items() for i, b in enumerate(bodies)}
    stacks = {cl: {} for cl in workload}

    def orders():
        for perm in itertools.permutations(ids):
            pos = {t: i for i, t in enumerate(perm)}
            if all(pos[a] < pos[b] for a in ids for b in ids if session_before(a, b)):
                yield perm

    def go(A: AbstractExecution, rest: tuple, stacks: dict):
        if not rest:
            yield A
            return
        t, tail = rest[0], rest[1:]
        earlier = list(A.ar)
        for r in range(len(earlier) + 1):
            for S in itertools.combinations(earlier, r):
                snap = lww_snapshot(A, S)
                for stack2, F in lang.final_fingerprints(body_of[t], stacks[t.client], snap):
                    A2 = extend(A, t, set(S), F)
                    st2 = dict(stacks)
                    st2[t.client] = dict(stack2)
                    yield from go(A2, tail, st2)

    for perm in orders():
        yield from go(empty_execution(keys), perm, stacks)


def axiom_stores(
    model: str, workload: Mapping[str, Sequence[lang.Cmd]], keys: Iterable[str]
) -> set[KVStore]:
    axioms = AXIOMS[model.upper()]
    out = set()
    for A in enumerate_executions(workload, keys):
        if check_axioms(A, axioms):
            out.add(mkvs_of(A))
    return out


def execution_of_commits(keys: Iterable[str], commits) -> AbstractExecution:
    """Fold extend over engine commits, each seeing the writers in its pre-view."""
    K = initial_store(keys)
    A = empty_execution(keys)
    for c in commits:
        A = extend(A, c.t, tx_of(K, c.pre), c.fp)
        K = update_kv(K, c.pre, c.fp, c.t)
    return A
