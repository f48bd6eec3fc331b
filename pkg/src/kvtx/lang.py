"""Commands, expressions and the small-step transaction semantics."""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

from .store import Op, check_fingerprint

Value = Union[int, str]

DEFAULT_ITER_BOUND = 8


class IterationBoundExceeded(RuntimeError):
    """Raised when iterate unfolding would pass the bound.

    ``partial`` holds everything that was collected before giving up.
    """

    def __init__(self, partial):
        super().__init__("iteration bound exceeded")
        self.partial = partial


# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: Value


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Lit, Var, BinOp]

BINOPS: dict[str, Callable[[Value, Value], Value]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "=": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
    "<": lambda a, b: int(a < b),
    "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b),
    ">=": lambda a, b: int(a >= b),
    "and": lambda a, b: int(bool(a) and bool(b)),
    "or": lambda a, b: int(bool(a) or bool(b)),
}


def eval_expr(s: Mapping[str, Value], e: Expr) -> Value:
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Var):
        return s.get(e.name, 0)
    if isinstance(e, BinOp):
        try:
            fn = BINOPS[e.op]
        except KeyError:
            raise ValueError(f"unknown operator {e.op!r}") from None
        return fn(eval_expr(s, e.left), eval_expr(s, e.right))
    raise TypeError(f"not an expression: {e!r}")


def eval_key(s: Mapping[str, Value], e: Expr) -> str:
    if isinstance(e, BinOp):
        raise ValueError("key expressions must be literals or variables")
    k = eval_expr(s, e)
    if not isinstance(k, str):
        raise ValueError(f"key expression evaluated to non-key {k!r}")
    return k


# -- commands ----------------------------------------------------------------


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Assign:
    var: str
    expr: Expr


@dataclass(frozen=True)
class Assume:
    expr: Expr


@dataclass(frozen=True)
class Lookup:
    var: str
    key: Expr


@dataclass(frozen=True)
class Mutate:
    key: Expr
    expr: Expr


@dataclass(frozen=True)
class Seq:
    first: "Cmd"
    second: "Cmd"


@dataclass(frozen=True)
class Choice:
    left: "Cmd"
    right: "Cmd"


@dataclass(frozen=True)
class Iter:
    body: "Cmd"


@dataclass(frozen=True)
class Atomic:
    body: "Cmd"


Cmd = Union[Skip, Assign, Assume, Lookup, Mutate, Seq, Choice, Iter, Atomic]

SKIP = Skip()


def seq(*cmds: Cmd) -> Cmd:
    """Right-nested sequence; an empty sequence is skip."""
    cmds = [c for c in cmds if not isinstance(c, Skip)]
    if not cmds:
        return SKIP
    out = cmds[-1]
    for c in reversed(cmds[:-1]):
        out = Seq(c, out)
    return out


def if_then_else(cond: Expr, then: Cmd, other: Cmd = SKIP) -> Cmd:
    negated = BinOp("=", cond, Lit(0))
    return Choice(seq(Assume(cond), then), seq(Assume(negated), other))


def check_program_cmd(c: Cmd, in_txn: bool = False) -> None:
    """Reject lookup/mutate outside transactions and nested transactions."""
    if isinstance(c, (Lookup, Mutate)) and not in_txn:
        raise ValueError(f"{type(c).__name__.lower()} outside a transaction")
    if isinstance(c, Atomic):
        if in_txn:
            raise ValueError("nested transaction")
        check_program_cmd(c.body, True)
    elif isinstance(c, Seq):
        check_program_cmd(c.first, in_txn)
        check_program_cmd(c.second, in_txn)
    elif isinstance(c, Choice):
        check_program_cmd(c.left, in_txn)
        check_program_cmd(c.right, in_txn)
    elif isinstance(c, Iter):
        check_program_cmd(c.body, in_txn)


# -- fingerprints --------------------------------------------------------------


def combine(F: frozenset, o: Op | None) -> frozenset:
    """Add one observable operation to a fingerprint.

    Only the first access to a key is recorded as a read, and later writes
    overwrite earlier ones.
    """
    if o is None:
        return F
    if o.kind == "R":
        if any(p.key == o.key for p in F):
            return F
        return F | {o}
    if o.kind == "W":
        return frozenset(p for p in F if not (p.kind == "W" and p.key == o.key)) | {
            o
        }
    raise ValueError(f"bad operation kind {o.kind!r}")


# -- transactional small steps -----------------------------------------------


def freeze(d: Mapping) -> tuple:
    return tuple(sorted(d.items()))


@dataclass(frozen=True)
class TxnState:
    stack: tuple  # sorted (var, value) pairs, missing variables read 0
    snap: tuple  # sorted (key, value) pairs
    fp: frozenset = frozenset()

    @classmethod
    def make(cls, stack: Mapping, snap: Mapping, fp=frozenset()) -> "TxnState":
        return cls(freeze(stack), freeze(snap), frozenset(fp))

    @property
    def stack_map(self) -> dict:
        return dict(self.stack)

    @property
    def snap_map(self) -> dict:
        return dict(self.snap)


def _primitive(st: TxnState, c: Cmd) -> TxnState | None:
    s = st.stack_map
    if isinstance(c, Skip):
        return st
    if isinstance(c, Assign):
        s[c.var] = eval_expr(s, c.expr)
        return TxnState(freeze(s), st.snap, st.fp)
    if isinstance(c, Assume):
        if eval_expr(s, c.expr) == 0:
            return None
        return st
    if isinstance(c, Lookup):
        k = eval_key(s, c.key)
        snap = st.snap_map
        if k not in snap:
            raise ValueError(f"unknown key {k!r}")
        s[c.var] = snap[k]
        return TxnState(freeze(s), st.snap, combine(st.fp, Op("R", k, snap[k])))
    if isinstance(c, Mutate):
        k = eval_key(s, c.key)
        snap = st.snap_map
        if k not in snap:
            raise ValueError(f"unknown key {k!r}")
        v = eval_expr(s, c.expr)
        snap[k] = v
        return TxnState(st.stack, freeze(snap), combine(st.fp, Op("W", k, v)))
    raise TypeError(f"not a primitive command: {c!r}")


def step_txn(st: TxnState, T: Cmd) -> set[tuple[TxnState, Cmd]]:
    """One small step of a transaction body; skip has no successors."""
    if isinstance(T, Skip):
        return set()
    if isinstance(T, (Assign, Assume, Lookup, Mutate)):
        nxt = _primitive(st, T)
        return set() if nxt is None else {(nxt, SKIP)}
    if isinstance(T, Choice):
        return {(st, T.left), (st, T.right)}
    if isinstance(T, Iter):
        return {(st, Choice(SKIP, Seq(T.body, T)))}
    if isinstance(T, Seq):
        if isinstance(T.first, Skip):
            return {(st, T.second)}
        return {(st2, Seq(c2, T.second)) for st2, c2 in step_txn(st, T.first)}
    if isinstance(T, Atomic):
        raise ValueError("nested transaction")
    raise TypeError(f"not a command: {T!r}")


def final_fingerprints(
    T: Cmd,
    s: Mapping[str, Value],
    snap: Mapping[str, Value],
    iter_bound: int = DEFAULT_ITER_BOUND,
    strict: bool = True,
) -> set[tuple[tuple, frozenset]]:
    """All (final stack, fingerprint) pairs of T run from snap.

    Stacks come back frozen as sorted (var, value) tuples. Iteration is
    unfolded at most ``iter_bound`` times along any path; if a path would
    need more and reaches a configuration not seen before, the bound is
    reported as exceeded (an exception when ``strict``).
    """
    start = TxnState.make(s, snap)
    results: set[tuple[tuple, frozenset]] = set()
    seen: set[tuple[TxnState, Cmd]] = set()
    frontier = [(start, T, 0)]
    truncated = False
    while frontier:
        st, c, unfolds = frontier.pop()
        if (st, c) in seen:
            continue
        seen.add((st, c))
        if isinstance(c, Skip):
            results.add((st.stack, st.fp))
            continue
        for st2, c2, used in _steps_with_unfold(st, c):
            n = unfolds + used
            if n > iter_bound:
                if (st2, c2) not in seen:
                    truncated = True
                continue
            frontier.append((st2, c2, n))
    if truncated and strict:
        raise IterationBoundExceeded(results)
    return results


def _steps_with_unfold(st: TxnState, c: Cmd):
    """Like step_txn, also reporting whether the step unfolded an iteration."""
    if isinstance(c, Iter):
        yield st, SKIP, 0
        yield st, Seq(c.body, c), 1
        return
    if isinstance(c, Choice):
        yield st, c.left, 0
        yield st, c.right, 0
        return
    if isinstance(c, Seq):
        if isinstance(c.first, Skip):
            yield st, c.second, 0
            return
        for st2, c2, used in _steps_with_unfold(st, c.first):
            yield st2, Seq(c2, c.second), used
        return
    for st2, c2 in step_txn(st, c):
        yield st2, c2, 0


def run_straight(T: Cmd, s: Mapping, snap: Mapping) -> tuple[dict, frozenset]:
    outs = final_fingerprints(T, s, snap)
    if len(outs) != 1:
        raise ValueError(f"expected one outcome, got {len(outs)}")
    (stack, fp), = outs
    check_fingerprint(fp)
    return dict(stack), fp


# -- program-level small steps ----------------------------------------------


def cmd_steps(c: Cmd, s: Mapping) -> list[tuple]:
    """Client-local steps of a program command.

    Yields ("local", stack', cmd') for steps that touch only the stack, and
    ("atomic", body, continuation) when a transaction is next.
    """
    if isinstance(c, Skip):
        return []
    if isinstance(c, Assign):
        s2 = dict(s)
        s2[c.var] = eval_expr(s, c.expr)
        return [("local", s2, SKIP)]
    if isinstance(c, Assume):
        if eval_expr(s, c.expr) == 0:
            return []
        return [("local", dict(s), SKIP)]
    if isinstance(c, Atomic):
        return [("atomic", c.body, SKIP)]
    if isinstance(c, Choice):
        return [("local", dict(s), c.left), ("local", dict(s), c.right)]
    if isinstance(c, Iter):
        return [("local", dict(s), Choice(SKIP, Seq(c.body, c)))]
    if isinstance(c, Seq):
        if isinstance(c.first, Skip):
            return [("local", dict(s), c.second)]
        out = []
        for step in cmd_steps(c.first, s):
            if step[0] == "local":
                out.append(("local", step[1], Seq(step[2], c.second)))
            else:
                out.append(("atomic", step[1], seq(step[2], c.second)))
        return out
    if isinstance(c, (Lookup, Mutate)):
        raise ValueError(f"{type(c).__name__.lower()} outside a transaction")
    raise TypeError(f"not a command: {c!r}")


def atomic_heads(
    c: Cmd, s: Mapping, iter_bound: int = DEFAULT_ITER_BOUND
) -> set[tuple[tuple, object]]:
    """Run local steps until the client finishes or reaches a transaction.

    Returns (frozen stack, head) pairs where head is None for a finished
    client and (body, continuation) otherwise.
    """
    out: set = set()
    seen: set = set()
    frontier = [(freeze(s), c, 0)]
    while frontier:
        st, cmd, unfolds = frontier.pop()
        if (st, cmd) in seen:
            continue
        seen.add((st, cmd))
        if isinstance(cmd, Skip):
            out.add((st, None))
            continue
        for step in cmd_steps(cmd, dict(st)):
            if step[0] == "atomic":
                out.add((st, (step[1], step[2])))
            else:
                n = unfolds + _unfolds(cmd)
                if n > iter_bound:
                    continue
                frontier.append((freeze(step[1]), step[2], n))
    return out


def _unfolds(c: Cmd) -> int:
    # the Iter rule is the only one that unfolds; find it at the head
    while isinstance(c, Seq) and not isinstance(c.first, Skip):
        c = c.first
    return 1 if isinstance(c, Iter) else 0


def txn_keys(c: Cmd) -> set[str]:
    """Literal keys mentioned by a command."""
    out: set[str] = set()

    def walk(x):
        if isinstance(x, (Lookup, Mutate)) and isinstance(x.key, Lit):
            out.add(x.key.value)
        for f in ("first", "second", "left", "right", "body"):
            if hasattr(x, f):
                walk(getattr(x, f))

    walk(c)
    return out


def iter_cmds(c: Cmd) -> Iterable[Cmd]:
    yield c
    for f in ("first", "second", "left", "right", "body"):
        if hasattr(c, f):
            yield from iter_cmds(getattr(c, f))
