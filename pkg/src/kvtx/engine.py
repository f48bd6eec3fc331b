"""Interleaving semantics of programs over the kv-store, parameterised by a model.

Clients run their commands concurrently. Local steps only touch the client's
stack; a transaction executes against the snapshot of some view and commits
its fingerprint atomically if the model's execution test allows it.
"""

from __future__ import annotations

import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Mapping

from . import lang
from .lang import Cmd, Skip
from .models import et_allows, needs_mr, needs_ryw, normalize_model
from .store import (
    Configuration,
    KVStore,
    Op,
    StoreError,
    TxId,
    View,
    extend_view,
    format_fingerprint,
    initial_config,
    initial_view,
    is_valid_view,
    next_txid,
    snapshot,
    tx_of,
    update_kv,
    view_leq,
    view_of_writers,
)

DEFAULT_MAX_STEPS = 32


# -- views -------------------------------------------------------------------------


def views_above(K: KVStore, u: View) -> Iterator[View]:
    """Every valid view of K that contains u, smallest first."""
    base = tx_of(K, u)
    extra = sorted(K.writers() - base)
    for r in range(len(extra) + 1):
        for S in itertools.combinations(extra, r):
            yield view_of_writers(K, base | set(S))


def all_views(K: KVStore) -> Iterator[View]:
    return views_above(K, initial_view(K))


def minimal_post_view(m: str, K2: KVStore, u: View, t: TxId) -> View:
    """Smallest view after a commit that the model's view shift accepts.

    View-shift predicates are upward closed in the post-view and a larger
    post-view only restricts later commits, so the minimal one loses no
    reachable store.
    """
    if needs_mr(m):
        out = {k: set(idx) for k, idx in extend_view(K2, u).items()}
    else:
        out = {k: {0} for k in K2}
    if needs_ryw(m):
        writers = {
            v.writer
            for _, _, v in K2.versions()
            if not v.writer.is_initial and v.writer.client == t.client
        }
        for k, vs in K2.items():
            out[k] |= {i for i, v in enumerate(vs) if v.writer in writers}
    return View(out)


def post_views(m: str, K2: KVStore, u: View, t: TxId, every: bool = False) -> Iterable[View]:
    if every:
        return list(all_views(K2))
    return [minimal_post_view(m, K2, u, t)]


@lru_cache(maxsize=65536)
def _fingerprints(body: Cmd, stack: tuple, snap: tuple, iter_bound: int):
    return frozenset(lang.final_fingerprints(body, dict(stack), dict(snap), iter_bound))


@dataclass(frozen=True)
class Commit:
    """A transaction commit: id, fingerprint, pre-view and post-view."""

    client: str
    t: TxId
    fp: frozenset
    pre: View
    post: View

    def __str__(self) -> str:
        return f"{self.t} commits {format_fingerprint(self.fp)}"


def commit_successors(
    m: str,
    K: KVStore,
    u: View,
    cl: str,
    body: Cmd,
    stack: Mapping,
    every_post_view: bool = False,
    iter_bound: int = lang.DEFAULT_ITER_BOUND,
) -> Iterator[tuple[Commit, KVStore, dict]]:
    """All admissible commits of one transaction body by client cl.

    Yields (commit, new store, final stack).
    """
    m = normalize_model(m)
    t = next_txid(cl, K)
    frozen_stack = lang.freeze(stack)
    for pre in views_above(K, u):
        snap = lang.freeze(snapshot(K, pre))
        for stack2, F in _fingerprints(body, frozen_stack, snap, iter_bound):
            K2 = update_kv(K, pre, F, t)
            for post in post_views(m, K2, pre, t, every_post_view):
                if et_allows(m, K, pre, F, K2, post, t, check_update=False):
                    yield Commit(cl, t, F, pre, post), K2, dict(stack2)


# -- machine states ----------------------------------------------------------------


@dataclass(frozen=True)
class MachineState:
    store: KVStore
    views: tuple  # sorted (client, View)
    stacks: tuple  # sorted (client, frozen stack)
    cmds: tuple  # sorted (client, Cmd)

    @classmethod
    def initial(cls, program: Mapping[str, Cmd], keys: Iterable[str]) -> "MachineState":
        for c in program.values():
            lang.check_program_cmd(c)
        conf = initial_config(program.keys(), keys)
        return cls(
            conf.store,
            tuple(sorted(conf.views.items())),
            tuple((cl, ()) for cl in sorted(program)),
            tuple(sorted(program.items())),
        )

    def view(self, cl: str) -> View:
        return dict(self.views)[cl]

    def stack(self, cl: str) -> dict:
        return dict(dict(self.stacks)[cl])

    def cmd(self, cl: str) -> Cmd:
        return dict(self.cmds)[cl]

    def config(self) -> Configuration:
        return Configuration(self.store, dict(self.views))

    def replace(self, cl: str, store=None, view=None, stack=None, cmd=None) -> "MachineState":
        def upd(pairs, value):
            if value is None:
                return pairs
            return tuple((c, value if c == cl else v) for c, v in pairs)

        return MachineState(
            store if store is not None else self.store,
            upd(self.views, view),
            upd(self.stacks, lang.freeze(stack) if stack is not None else None),
            upd(self.cmds, cmd),
        )

    @property
    def terminal(self) -> bool:
        return all(isinstance(c, Skip) for _, c in self.cmds)


def step_program(
    m: str, st: MachineState, every_post_view: bool = False
) -> set[tuple[object, MachineState]]:
    """Small-step successors: local steps are labelled (client, None)."""
    out = set()
    for cl, cmd in st.cmds:
        for step in lang.cmd_steps(cmd, st.stack(cl)):
            if step[0] == "local":
                out.add(((cl, None), st.replace(cl, stack=step[1], cmd=step[2])))
                continue
            _, body, cont = step
            for c, K2, stack2 in commit_successors(
                m, st.store, st.view(cl), cl, body, st.stack(cl), every_post_view
            ):
                out.add(((cl, c), st.replace(cl, store=K2, view=c.post, stack=stack2, cmd=cont)))
    # views change when the store grows
    return {(lab, _rekey(s)) for lab, s in out}


def _rekey(st: MachineState) -> MachineState:
    views = tuple((cl, extend_view(st.store, u)) for cl, u in st.views)
    return MachineState(st.store, views, st.stacks, st.cmds)


def macro_steps(
    m: str, st: MachineState, every_post_view: bool = False, iter_bound: int = lang.DEFAULT_ITER_BOUND
) -> Iterator[tuple[Commit, MachineState]]:
    """Commit steps with the committing client's local steps fused in front.

    Local steps touch only the client's own stack, so they commute with every
    step of other clients and can always be scheduled right before the next
    commit of the same client.
    """
    for cl, cmd in st.cmds:
        for stack, head in lang.atomic_heads(cmd, st.stack(cl), iter_bound):
            if head is None:
                continue
            body, cont = head
            for c, K2, stack2 in commit_successors(
                m, st.store, st.view(cl), cl, body, dict(stack), every_post_view, iter_bound
            ):
                nxt = st.replace(cl, store=K2, view=c.post, stack=stack2, cmd=cont)
                yield c, _rekey(nxt)


def can_finish(st: MachineState, iter_bound: int = lang.DEFAULT_ITER_BOUND) -> bool:
    for cl, cmd in st.cmds:
        heads = lang.atomic_heads(cmd, st.stack(cl), iter_bound)
        if not any(h is None for _, h in heads):
            return False
    return True


@dataclass
class Exploration:
    finals: set
    partial: bool
    parents: dict = field(repr=False, default_factory=dict)
    final_states: list = field(repr=False, default_factory=list)

    def trace_to(self, st: MachineState) -> list[Commit]:
        out = []
        while self.parents.get(st) is not None:
            prev, c = self.parents[st]
            out.append(c)
            st = prev
        out.reverse()
        return out


def explore(
    m: str,
    program: Mapping[str, Cmd],
    keys: Iterable[str] | None = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    every_post_view: bool = False,
    iter_bound: int = lang.DEFAULT_ITER_BOUND,
) -> Exploration:
    """Breadth-first enumeration of the reachable machine states."""
    m = normalize_model(m)
    if keys is None:
        keys = sorted(set().union(*(lang.txn_keys(c) for c in program.values())) or {"k"})
    start = MachineState.initial(program, keys)
    parents: dict = {start: None}
    finals: set = set()
    final_states = []
    partial = False
    frontier = deque([(start, 0)])
    while frontier:
        st, depth = frontier.popleft()
        if can_finish(st, iter_bound):
            if st.store not in finals:
                final_states.append(st)
            finals.add(st.store)
        succ = list(macro_steps(m, st, every_post_view, iter_bound))
        if depth >= max_steps:
            if succ:
                partial = True
            continue
        for c, nxt in succ:
            if nxt not in parents:
                parents[nxt] = (st, c)
                frontier.append((nxt, depth + 1))
    return Exploration(finals, partial, parents, final_states)


def reachable_stores(
    m: str,
    program: Mapping[str, Cmd],
    max_steps: int = DEFAULT_MAX_STEPS,
    keys: Iterable[str] | None = None,
    **kw,
) -> set[KVStore]:
    return explore(m, program, keys, max_steps, **kw).finals


# -- admission of a given store ------------------------------------------------------


def _prefix_of(K: KVStore, target: KVStore) -> bool:
    for k, vs in K.items():
        tv = target[k]
        if len(vs) > len(tv):
            return False
        for a, b in zip(vs, tv):
            if a.value != b.value or a.writer != b.writer or not a.readers <= b.readers:
                return False
    return True


def store_trace(m: str, target: KVStore) -> list[Commit] | None:
    """Find a sequence of admissible commits from the initial store to target."""
    m = normalize_model(m)
    txns = sorted(t for t in target.txids() if not t.is_initial)
    clients = sorted({t.client for t in txns})
    per_client = {cl: [t for t in txns if t.client == cl] for cl in clients}
    position = {}
    for k, i, v in target.versions():
        position[(v.writer, k, "W")] = i
        for r in v.readers:
            position[(r, k, "R")] = i
    K0 = initial_config(clients, target.keys()).store
    u0 = initial_view(K0)
    seen: set = set()

    def search(K: KVStore, views: tuple, done: frozenset) -> list[Commit] | None:
        if K == target:
            return []
        key = (K, views)
        if key in seen:
            return None
        seen.add(key)
        vmap = dict(views)
        for cl in clients:
            pending = [t for t in per_client[cl] if t not in done]
            if not pending:
                continue
            t = pending[0]
            F = target.fingerprint_of(t)
            if any(op.kind == "W" and position[(t, op.key, "W")] != len(K[op.key]) for op in F):
                continue
            reads = {op.key: position[(t, op.key, "R")] for op in F if op.kind == "R"}
            if any(i >= len(K[k]) for k, i in reads.items()):
                continue
            for pre in views_above(K, vmap[cl]):
                if any(max(pre[k]) != i for k, i in reads.items()):
                    continue
                K2 = update_kv(K, pre, F, t)
                if not _prefix_of(K2, target):
                    continue
                post = minimal_post_view(m, K2, pre, t)
                if not et_allows(m, K, pre, F, K2, post, t, check_update=False):
                    continue
                nviews = tuple(
                    (c, post if c == cl else extend_view(K2, v)) for c, v in views
                )
                rest = search(K2, nviews, done | {t})
                if rest is not None:
                    return [Commit(cl, t, F, pre, post)] + rest
        return None

    return search(K0, tuple((cl, u0) for cl in clients), frozenset())


def admits(m: str, target: KVStore) -> bool:
    """Whether target is reachable under the model by some sequence of commits."""
    return store_trace(m, target) is not None


# -- ET traces ---------------------------------------------------------------------


@dataclass(frozen=True)
class TraceStep:
    client: str
    fp: frozenset | None  # None for a view shift
    t: TxId | None
    config: Configuration


@dataclass(frozen=True)
class Trace:
    initial: Configuration
    steps: tuple

    @property
    def final(self) -> Configuration:
        return self.steps[-1].config if self.steps else self.initial


def et_reduce(m: str, conf: Configuration, cl: str, action) -> set[Configuration]:
    """Successor configurations for a view shift (action None) or a commit."""
    m = normalize_model(m)
    K = conf.store
    u = conf.views[cl]
    out = set()
    if action is None:
        for u2 in views_above(K, u):
            out.add(conf.with_view(cl, u2))
        return out
    F = frozenset(action)
    t = next_txid(cl, K)
    K2 = update_kv(K, u, F, t)
    views = {c: extend_view(K2, v) for c, v in conf.views.items()}
    for u2 in all_views(K2):
        if et_allows(m, K, u, F, K2, u2, t, check_update=False):
            nv = dict(views)
            nv[cl] = u2
            out.add(Configuration(K2, nv))
    return out


def check_trace(m: str, tr: Trace) -> list[str]:
    """Problems that make tr not a legal sequence of reductions."""
    m = normalize_model(m)
    problems = []
    cur = tr.initial
    for n, step in enumerate(tr.steps):
        K = cur.store
        u = cur.views[step.client]
        nxt = step.config
        others_ok = all(
            extend_view(nxt.store, cur.views[c]) == nxt.views[c]
            for c in cur.views
            if c != step.client
        )
        if not others_ok:
            problems.append(f"step {n}: another client's view changed")
        if step.fp is None:
            if nxt.store != K or not view_leq(u, nxt.views[step.client]):
                problems.append(f"step {n}: illegal view shift")
        else:
            t = step.t
            if t is None or t != next_txid(step.client, K):
                problems.append(f"step {n}: transaction id is not fresh")
                cur = nxt
                continue
            try:
                K2 = update_kv(K, u, step.fp, t)
            except StoreError as exc:
                problems.append(f"step {n}: {exc}")
                cur = nxt
                continue
            if K2 != nxt.store:
                problems.append(f"step {n}: store does not match the update")
            elif not et_allows(m, K, u, step.fp, K2, nxt.views[step.client], t, check_update=False):
                problems.append(f"step {n}: commit rejected by {m}")
        cur = nxt
    return problems


def normalize_trace(tr: Trace, m: str = "TOP") -> Trace:
    """Move every view shift to just before the same client's next commit."""
    problems = check_trace(m, tr)
    if problems:
        raise ValueError(f"not a legal trace: {problems[0]}")
    views = dict(tr.initial.views)
    steps = []
    before = tr.initial
    for step in tr.steps:
        if step.fp is not None:
            cl = step.client
            K = before.store
            pre = before.views[cl]
            cur = {c: extend_view(K, v) for c, v in views.items()}
            if cur[cl] != pre:
                cur[cl] = pre
                steps.append(TraceStep(cl, None, None, Configuration(K, cur)))
            K2 = step.config.store
            views = {c: extend_view(K2, v) for c, v in cur.items()}
            views[cl] = step.config.views[cl]
            steps.append(TraceStep(cl, step.fp, step.t, Configuration(K2, dict(views))))
        before = step.config
    return Trace(tr.initial, tuple(steps))


def random_trace(
    m: str,
    rng: random.Random,
    clients: list[str],
    keys: list[str],
    length: int,
    values: tuple = (1, 2, 3),
) -> Trace:
    """A random legal trace of view shifts and commits."""
    m = normalize_model(m)
    conf = initial_config(clients, keys)
    start = conf
    steps = []
    attempts = 0
    while len(steps) < length and attempts < 50 * length:
        attempts += 1
        cl = rng.choice(clients)
        if rng.random() < 0.4:
            options = list(views_above(conf.store, conf.views[cl]))
            nxt = rng.choice(options)
            conf = conf.with_view(cl, nxt)
            steps.append(TraceStep(cl, None, None, conf))
            continue
        snap = snapshot(conf.store, conf.views[cl])
        ops = []
        for k in keys:
            r = rng.random()
            if r < 0.4:
                ops.append(Op("R", k, snap[k]))
            if rng.random() < 0.4:
                ops.append(Op("W", k, rng.choice(values)))
        options = sorted(et_reduce(m, conf, cl, frozenset(ops)), key=lambda c: repr(c.views))
        if not options:
            continue
        t = next_txid(cl, conf.store)
        conf = rng.choice(options)
        steps.append(TraceStep(cl, frozenset(ops), t, conf))
    return Trace(start, tuple(steps))


def commits_to_trace(program_clients: Iterable[str], keys: Iterable[str], commits: list[Commit]) -> Trace:
    """Turn an engine witness into a normal-form ET trace."""
    conf = initial_config(program_clients, keys)
    start = conf
    steps = []
    for c in commits:
        K = conf.store
        views = dict(conf.views)
        if views[c.client] != c.pre:
            views[c.client] = c.pre
            conf = Configuration(K, views)
            steps.append(TraceStep(c.client, None, None, conf))
        K2 = update_kv(K, c.pre, c.fp, c.t)
        views = {cl: extend_view(K2, v) for cl, v in conf.views.items()}
        views[c.client] = c.post
        conf = Configuration(K2, views)
        steps.append(TraceStep(c.client, c.fp, c.t, conf))
    return Trace(start, tuple(steps))
