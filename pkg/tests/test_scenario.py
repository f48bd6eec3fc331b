import pytest
from hypothesis import given, settings, strategies as st

from strategies import INC2, WRITE_SKEW

from kvtx.lang import (
    SKIP,
    Assign,
    Assume,
    Atomic,
    BinOp,
    Choice,
    Iter,
    Lit,
    Lookup,
    Mutate,
    Seq,
    Var,
)
from kvtx.scenario import (
    ParseError,
    Scenario,
    format_cmd,
    load_scenario,
    parse_cmd,
    parse_scenario,
    read_sexprs,
)


def _cmd(text):
    (node,) = read_sexprs(text)
    return parse_cmd(node)


def test_fixture_scenarios_load(fixtures_dir):
    sc = load_scenario(fixtures_dir / "inc2.scn")
    assert sc.keys == ("k",)
    assert sc.model == "psi"
    assert sc.clients == INC2
    sk = load_scenario(fixtures_dir / "write-skew.scn")
    assert sk.clients == WRITE_SKEW
    assert sk.model is None


def test_strings_are_keys_symbols_are_variables():
    assert _cmd('(read x "k")') == Lookup("x", Lit("k"))
    assert _cmd("(read x k)") == Lookup("x", Var("k"))
    assert _cmd("(write \"k\" (+ x -1))") == Mutate(Lit("k"), BinOp("+", Var("x"), Lit(-1)))


def test_seq_nests_to_the_right():
    a, b, c = Assign("a", Lit(1)), Assign("b", Lit(2)), Assign("c", Lit(3))
    assert _cmd("(seq (assign a 1) (assign b 2) (assign c 3))") == Seq(a, Seq(b, c))
    left = Seq(Seq(a, b), c)
    assert _cmd(format_cmd(left)) == left


def test_comments_and_whitespace():
    text = '; header\n(scenario ; trailing\n  (keys "k")\n  (client c1 (skip)))\n'
    assert parse_scenario(text).clients == {"c1": SKIP}


@pytest.mark.parametrize(
    "text,line,col,fragment",
    [
        ('(scenario\n  (keys "k")\n  (client c1 (read x "k")', 3, 3, "never closed"),
        ('(scenario (keys "k"))\n)', 2, 1, "unbalanced"),
        ('(scenario\n  (client c1 (frob)))', 2, 14, "unknown command"),
        ('(scenario\n  (keys k))', 2, 9, "quoted strings"),
        ('(scenario (client c1 (seq (skip))))', 1, 22, "at least two"),
        ('(scenario\n (client c1 (read 3 "k")))', 2, 19, "variable name"),
        ('(scenario\n (client c1 (assign x (/ 1 2))))', 2, 23, "unknown operator"),
        ('(scenario (keys "k"))', 1, 1, "no clients"),
        ('(scenario (client c1 (skip)) (client c1 (skip)))', 1, 38, "defined twice"),
        ('(scenario (keys "k)))', 1, 17, "unterminated"),
        ('(keys "k")', 1, 1, "exactly one"),
    ],
)
def test_parse_errors_carry_position(text, line, col, fragment):
    with pytest.raises(ParseError) as err:
        parse_scenario(text)
    assert (err.value.line, err.value.col) == (line, col)
    assert fragment in str(err.value)
    assert str(err.value).startswith(f"line {line}, column {col}:")


# -- round trip ------------------------------------------------------------------

_names = st.sampled_from(["a", "b", "x_1"])
_keys = st.sampled_from(["k", "k1", "acct:7"])
_exprs = st.recursive(
    st.one_of(st.builds(Lit, st.integers(-5, 5)), st.builds(Lit, _keys), st.builds(Var, _names)),
    lambda sub: st.builds(BinOp, st.sampled_from(["+", "-", "=", "<", "!=", "and"]), sub, sub),
    max_leaves=4,
)
_key_exprs = st.one_of(st.builds(Lit, _keys), st.builds(Var, _names))
_body = st.recursive(
    st.one_of(
        st.just(SKIP),
        st.builds(Assign, _names, _exprs),
        st.builds(Assume, _exprs),
        st.builds(Lookup, _names, _key_exprs),
        st.builds(Mutate, _key_exprs, _exprs),
    ),
    lambda sub: st.one_of(st.builds(Seq, sub, sub), st.builds(Choice, sub, sub), st.builds(Iter, sub)),
    max_leaves=8,
)
_program = st.recursive(
    st.one_of(st.builds(Atomic, _body), st.builds(Assign, _names, _exprs)),
    lambda sub: st.one_of(st.builds(Seq, sub, sub), st.builds(Choice, sub, sub), st.builds(Iter, sub)),
    max_leaves=5,
)


@settings(max_examples=300)
@given(_body)
def test_command_round_trip(c):
    assert _cmd(format_cmd(c)) == c


@settings(max_examples=100)
@given(
    st.dictionaries(st.sampled_from(["cl1", "cl2", "c3"]), _program, min_size=1),
    st.lists(_keys, unique=True, max_size=3),
    st.one_of(st.none(), st.sampled_from(["cc", "psi", "SER"])),
    st.one_of(st.none(), st.integers(0, 50)),
)
def test_scenario_round_trip(clients, keys, model, bound):
    sc = Scenario(tuple(keys), clients, model, bound)
    text = sc.to_text()
    assert parse_scenario(text) == sc
    assert parse_scenario(text).to_text() == text
