"""S-expression scenario files: keys, per-client programs, a model and bounds.

    ; two clients increment one counter
    (scenario
      (keys "k")
      (model psi)
      (bound 32)
      (client cl1 (atomic (seq (read a "k") (write "k" (+ a 1)))))
      (client cl2 (atomic (seq (read a "k") (write "k" (+ a 1))))))

Quoted strings are key literals, bare symbols are variables, integers are
integers. Printing and parsing round-trip exactly, including how sequences nest.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .lang import (
    BINOPS,
    Assign,
    Assume,
    Atomic,
    BinOp,
    Choice,
    Cmd,
    Expr,
    Iter,
    Lit,
    Lookup,
    Mutate,
    Seq,
    Skip,
    Var,
)


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int) -> None:
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line, self.col = line, col


@dataclass(frozen=True)
class Atom:
    text: str
    line: int
    col: int


@dataclass(frozen=True)
class SList:
    items: tuple
    line: int
    col: int


_TOKEN = re.compile(r'\s+|;[^\n]*|\(|\)|"[^"\n]*"|[^\s()";]+|"')


def read_sexprs(text: str) -> list:
    stack: list[list] = [[]]
    opened: list[tuple[int, int]] = []
    line, line_start = 1, 0
    for m in _TOKEN.finditer(text):
        tok, pos = m.group(), m.start()
        col = pos - line_start + 1
        if tok[0].isspace() or tok[0] == ";":
            nl = tok.count("\n")
            if nl:
                line += nl
                line_start = pos + tok.rindex("\n") + 1
            continue
        if tok == "(":
            stack.append([])
            opened.append((line, col))
        elif tok == ")":
            if not opened:
                raise ParseError("unbalanced ')'", line, col)
            items = stack.pop()
            ln, c = opened.pop()
            stack[-1].append(SList(tuple(items), ln, c))
        elif tok == '"':
            raise ParseError("unterminated string", line, col)
        else:
            stack[-1].append(Atom(tok, line, col))
    if opened:
        ln, c = opened[-1]
        raise ParseError("'(' is never closed", ln, c)
    return stack[0]


def _err(node, msg: str) -> ParseError:
    return ParseError(msg, node.line, node.col)


def _head(node) -> str:
    if not isinstance(node, SList) or not node.items or not isinstance(node.items[0], Atom):
        raise _err(node, "expected a form like (name ...)")
    return node.items[0].text


def _args(node, n: int) -> tuple:
    got = node.items[1:]
    if len(got) != n:
        raise _err(node, f"({node.items[0].text} ...) takes {n} argument(s), got {len(got)}")
    return got


def parse_expr(node) -> Expr:
    if isinstance(node, Atom):
        t = node.text
        if t.startswith('"'):
            return Lit(t[1:-1])
        if re.fullmatch(r"-?\d+", t):
            return Lit(int(t))
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", t):
            return Var(t)
        raise _err(node, f"bad expression {t!r}")
    op = _head(node)
    if op not in BINOPS:
        raise _err(node, f"unknown operator {op!r}")
    left, right = _args(node, 2)
    return BinOp(op, parse_expr(left), parse_expr(right))


def _var(node) -> str:
    if not isinstance(node, Atom) or not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", node.text):
        raise _err(node, "expected a variable name")
    return node.text


def parse_cmd(node) -> Cmd:
    h = _head(node)
    if h == "skip":
        _args(node, 0)
        return Skip()
    if h == "assign":
        x, e = _args(node, 2)
        return Assign(_var(x), parse_expr(e))
    if h == "assume":
        (e,) = _args(node, 1)
        return Assume(parse_expr(e))
    if h == "read":
        x, k = _args(node, 2)
        return Lookup(_var(x), parse_expr(k))
    if h == "write":
        k, e = _args(node, 2)
        return Mutate(parse_expr(k), parse_expr(e))
    if h == "seq":
        parts = [parse_cmd(c) for c in node.items[1:]]
        if len(parts) < 2:
            raise _err(node, "(seq ...) needs at least two commands")
        out = parts[-1]
        for c in reversed(parts[:-1]):
            out = Seq(c, out)
        return out
    if h == "choice":
        a, b = _args(node, 2)
        return Choice(parse_cmd(a), parse_cmd(b))
    if h == "iter":
        (c,) = _args(node, 1)
        return Iter(parse_cmd(c))
    if h == "atomic":
        (c,) = _args(node, 1)
        return Atomic(parse_cmd(c))
    raise _err(node, f"unknown command {h!r}")


def format_expr(e: Expr) -> str:
    if isinstance(e, Lit):
        return f'"{e.value}"' if isinstance(e.value, str) else str(e.value)
    if isinstance(e, Var):
        return e.name
    return f"({e.op} {format_expr(e.left)} {format_expr(e.right)})"


def format_cmd(c: Cmd) -> str:
    if isinstance(c, Skip):
        return "(skip)"
    if isinstance(c, Assign):
        return f"(assign {c.var} {format_expr(c.expr)})"
    if isinstance(c, Assume):
        return f"(assume {format_expr(c.expr)})"
    if isinstance(c, Lookup):
        return f"(read {c.var} {format_expr(c.key)})"
    if isinstance(c, Mutate):
        return f"(write {format_expr(c.key)} {format_expr(c.expr)})"
    if isinstance(c, Seq):
        parts = [c.first]
        rest = c.second
        while isinstance(rest, Seq):
            parts.append(rest.first)
            rest = rest.second
        parts.append(rest)
        return "(seq " + " ".join(format_cmd(p) for p in parts) + ")"
    if isinstance(c, Choice):
        return f"(choice {format_cmd(c.left)} {format_cmd(c.right)})"
    if isinstance(c, Iter):
        return f"(iter {format_cmd(c.body)})"
    if isinstance(c, Atomic):
        return f"(atomic {format_cmd(c.body)})"
    raise TypeError(f"not a command: {c!r}")


@dataclass
class Scenario:
    keys: tuple = ()
    clients: dict = field(default_factory=dict)  # client -> Cmd
    model: str | None = None
    bound: int | None = None

    def to_text(self) -> str:
        lines = ["(scenario"]
        if self.keys:
            lines.append("  (keys " + " ".join(f'"{k}"' for k in self.keys) + ")")
        if self.model is not None:
            lines.append(f"  (model {self.model})")
        if self.bound is not None:
            lines.append(f"  (bound {self.bound})")
        for cl, c in self.clients.items():
            lines.append(f"  (client {cl} {format_cmd(c)})")
        lines[-1] += ")"
        return "\n".join(lines) + "\n"


def parse_scenario(text: str) -> Scenario:
    forms = read_sexprs(text)
    if len(forms) != 1 or _head(forms[0]) != "scenario":
        where = forms[1] if len(forms) > 1 else (forms[0] if forms else Atom("", 1, 1))
        raise _err(where, "expected exactly one (scenario ...) form")
    sc = Scenario()
    for item in forms[0].items[1:]:
        h = _head(item)
        if h == "keys":
            ks = []
            for a in item.items[1:]:
                if not isinstance(a, Atom) or not a.text.startswith('"'):
                    raise _err(a, "keys are quoted strings")
                ks.append(a.text[1:-1])
            sc.keys = tuple(ks)
        elif h == "model":
            (m,) = _args(item, 1)
            if not isinstance(m, Atom):
                raise _err(m, "expected a model name")
            sc.model = m.text
        elif h == "bound":
            (b,) = _args(item, 1)
            if not isinstance(b, Atom) or not b.text.isdigit():
                raise _err(b, "expected a non-negative integer")
            sc.bound = int(b.text)
        elif h == "client":
            name, body = _args(item, 2)
            if not isinstance(name, Atom) or name.text.startswith('"'):
                raise _err(name, "expected a client name")
            if name.text in sc.clients:
                raise _err(name, f"client {name.text} defined twice")
            sc.clients[name.text] = parse_cmd(body)
        else:
            raise _err(item, f"unknown scenario field {h!r}")
    if not sc.clients:
        raise _err(forms[0], "scenario has no clients")
    return sc


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text())
