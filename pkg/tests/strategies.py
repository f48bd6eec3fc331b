"""Hypothesis strategies and small program builders shared by the tests."""

import random

from hypothesis import strategies as st

from oracles import random_store

from kvtx.lang import Atomic, BinOp, Lit, Lookup, Mutate, Var, seq


@st.composite
def stores(draw, keys=("k1", "k2", "k3"), max_versions=5):
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    steps = draw(st.integers(min_value=0, max_value=8))
    return random_store(random.Random(seed), keys, max_versions=max_versions, steps=steps)


def inc(k: str):
    return seq(Lookup("a", Lit(k)), Mutate(Lit(k), BinOp("+", Var("a"), Lit(1))))


def read(k: str, var: str = "a"):
    return Lookup(var, Lit(k))


def write(k: str, v: int):
    return Mutate(Lit(k), Lit(v))


def session(*bodies):
    """A client program committing each body as its own transaction."""
    return seq(*(Atomic(b) for b in bodies))


INC2 = {"cl1": session(inc("k")), "cl2": session(inc("k"))}
WRITE_SKEW = {
    "cl1": session(seq(read("k1", "x"), read("k2", "y"), write("k1", 1))),
    "cl2": session(seq(read("k1", "x"), read("k2", "y"), write("k2", 2))),
}
