import random

import pytest

from strategies import INC2, WRITE_SKEW, inc, read, session, write

from kvtx.anomalies import anomaly_stores
from kvtx.engine import (
    MachineState,
    Trace,
    TraceStep,
    admits,
    all_views,
    check_trace,
    commits_to_trace,
    et_reduce,
    explore,
    macro_steps,
    normalize_trace,
    random_trace,
    reachable_stores,
    step_program,
    store_trace,
)
from kvtx.lang import SKIP, Assign, Atomic, Choice, Lit, seq
from kvtx.models import MODELS
from kvtx.robustness import canonical_up_to_clients
from kvtx.store import (
    T0,
    Configuration,
    KVStore,
    Op,
    Version,
    View,
    initial_config,
    initial_store,
    is_valid_view,
    is_wellformed,
    next_txid,
    snapshot,
    tx,
    update_kv,
    view_leq,
)

LOST_UPDATE = KVStore(
    {"k": [Version(0, T0, {tx("cl1", 1), tx("cl2", 1)}), Version(1, tx("cl1", 1)), Version(1, tx("cl2", 1))]}
)


def test_single_increment_under_top():
    st0 = MachineState.initial({"cl1": Atomic(inc("k"))}, ["k"])
    stores = {s.store for (_, c), s in step_program("TOP", st0) if c is not None}
    t = tx("cl1", 1)
    assert KVStore({"k": [Version(0, T0, {t}), Version(1, t)]}) in stores


def test_skip_program_has_no_steps():
    st0 = MachineState.initial({"cl1": SKIP}, ["k"])
    assert step_program("TOP", st0) == set()
    assert st0.terminal


def test_local_steps_are_labelled_without_commit():
    st0 = MachineState.initial({"cl1": seq(Assign("x", Lit(1)), Atomic(inc("k")))}, ["k"])
    ((label, nxt),) = step_program("TOP", st0)
    assert label == ("cl1", None)
    assert nxt.stack("cl1") == {"x": 1}


def test_ser_refuses_stale_increment():
    st0 = MachineState.initial(INC2, ["k"])
    (c, st1), *_ = [(c, s) for c, s in macro_steps("SER", st0) if c.client == "cl1"]
    assert all(c2.client != "cl2" or max(c2.pre["k"]) == 1 for c2, _ in macro_steps("SER", st1))
    stale = [c2 for c2, _ in macro_steps("CC", st1) if c2.client == "cl2" and c2.pre["k"] == {0}]
    assert stale


def test_et_reduce_view_shift():
    conf = initial_config(["cl1"], ["k"])
    assert et_reduce("TOP", conf, "cl1", None) == {conf}


def test_et_reduce_empty_commit():
    conf = initial_config(["cl1"], ["k"])
    assert {c.store for c in et_reduce("TOP", conf, "cl1", frozenset())} == {conf.store}


def test_et_reduce_write():
    conf = initial_config(["cl1", "cl2"], ["k"])
    out = et_reduce("TOP", conf, "cl1", frozenset({Op("W", "k", 1)}))
    t = tx("cl1", 1)
    assert {c.store for c in out} == {KVStore({"k": [Version(0, T0), Version(1, t)]})}
    assert {c.views["cl1"] for c in out} == {View({"k": {0}}), View({"k": {0, 1}})}
    assert all(c.views["cl2"] == View({"k": {0}}) for c in out)


def test_lost_update_only_under_weak_models():
    cc = {canonical_up_to_clients(K) for K in reachable_stores("CC", INC2)}
    assert canonical_up_to_clients(LOST_UPDATE) in cc
    for m in ("PSI", "SI", "SER"):
        finals = reachable_stores(m, INC2)
        assert all(K["k"][-1].value == 2 for K in finals), m
        assert len(finals) == 2


def test_empty_program():
    assert reachable_stores("SER", {}) == {initial_store(["k"])}


def test_bound_reports_partial():
    ex = explore("TOP", INC2, max_steps=1)
    assert ex.partial
    assert not explore("TOP", INC2, max_steps=2).partial


def test_traces_lead_to_finals():
    ex = explore("PSI", INC2)
    for st in ex.final_states:
        commits = ex.trace_to(st)
        tr = commits_to_trace(INC2, ["k"], commits)
        assert check_trace("PSI", tr) == []
        assert tr.final.store == st.store


def test_choice_program_branches():
    prog = {"cl1": Choice(Atomic(write("k", 1)), Atomic(write("k", 2)))}
    assert {K["k"][-1].value for K in reachable_stores("SER", prog)} == {1, 2}


@pytest.mark.parametrize("m", MODELS)
@pytest.mark.parametrize("prog", [INC2, WRITE_SKEW], ids=["inc2", "write-skew"])
def test_minimal_post_views_lose_nothing(m, prog):
    assert reachable_stores(m, prog, 6) == reachable_stores(m, prog, 6, every_post_view=True)


def test_enumerated_states_are_well_formed():
    prog = {"cl1": session(inc("k1"), read("k2")), "cl2": session(write("k2", 5), inc("k1"))}
    ex = explore("TOP", prog, max_steps=6)
    for st in ex.parents:
        assert is_wellformed(st.store)
        for _, u in st.views:
            assert is_valid_view(st.store, u)


def test_top_finals_closed_under_late_commits():
    base = reachable_stores("TOP", {"cl1": session(inc("k")), "cl2": session(write("k", 5))})
    bigger = reachable_stores(
        "TOP", {"cl1": session(inc("k")), "cl2": session(write("k", 5)), "cl3": session(inc("k"))}
    )
    for K in base:
        t = next_txid("cl3", K)
        for u in all_views(K):
            v = snapshot(K, u)["k"]
            K2 = update_kv(K, u, {Op("R", "k", v), Op("W", "k", v + 1)}, t)
            assert K2 in bigger


# -- admission of given stores -----------------------------------------------------


def test_store_trace_witness_is_legal():
    for name, K in anomaly_stores().items():
        for m in ("TOP", "CC", "SER"):
            commits = store_trace(m, K)
            if commits is None:
                continue
            tr = commits_to_trace(sorted({t.client for t in K.txids() if not t.is_initial}), K.keys(), commits)
            assert check_trace(m, tr) == [], (name, m)
            assert tr.final.store == K


def test_admits_simple_cases():
    assert admits("SER", initial_store(["k"]))
    assert admits("CC", LOST_UPDATE)
    assert not admits("PSI", LOST_UPDATE)


# -- traces and normal form ---------------------------------------------------------


def test_check_trace_catches_bad_steps():
    conf = initial_config(["cl1"], ["k"])
    t = tx("cl1", 1)
    K2 = update_kv(conf.store, conf.views["cl1"], {Op("W", "k", 1)}, t)
    good = Configuration(K2, {"cl1": View({"k": {0}})})
    assert check_trace("TOP", Trace(conf, (TraceStep("cl1", frozenset({Op("W", "k", 1)}), t, good),))) == []
    stale = TraceStep("cl1", frozenset({Op("W", "k", 1)}), tx("cl1", 3), good)
    assert "not fresh" in check_trace("TOP", Trace(conf, (stale,)))[0]
    lying = TraceStep("cl1", frozenset({Op("R", "k", 7)}), t, Configuration(update_kv(conf.store, conf.views["cl1"], {Op("R", "k", 7)}, t), {"cl1": View({"k": {0}})}))
    assert "rejected" in check_trace("TOP", Trace(conf, (lying,)))[0]
    with pytest.raises(ValueError, match="not a legal trace"):
        normalize_trace(Trace(conf, (stale,)))


def test_normal_trace_is_unchanged():
    ex = explore("CC", INC2)
    st = ex.final_states[0]
    tr = commits_to_trace(INC2, ["k"], ex.trace_to(st))
    assert normalize_trace(tr) == tr


def test_consecutive_shifts_are_fused():
    conf = initial_config(["cl1", "cl2"], ["k"])
    t = tx("cl2", 1)
    K = update_kv(conf.store, conf.views["cl2"], {Op("W", "k", 1)}, t)
    c1 = Configuration(K, {"cl1": View({"k": {0}}), "cl2": View({"k": {0, 1}})})
    c2 = c1.with_view("cl1", View({"k": {0}}))
    c3 = c1.with_view("cl1", View({"k": {0, 1}}))
    t1 = tx("cl1", 1)
    K4 = update_kv(K, View({"k": {0, 1}}), {Op("R", "k", 1)}, t1)
    c4 = Configuration(K4, {"cl1": View({"k": {0, 1}}), "cl2": View({"k": {0, 1}})})
    tr = Trace(
        conf,
        (
            TraceStep("cl2", frozenset({Op("W", "k", 1)}), t, c1),
            TraceStep("cl1", None, None, c2),
            TraceStep("cl1", None, None, c3),
            TraceStep("cl1", frozenset({Op("R", "k", 1)}), t1, c4),
        ),
    )
    norm = normalize_trace(tr)
    assert [s.fp is None for s in norm.steps] == [False, True, False]
    assert norm.final.store == tr.final.store


@pytest.mark.parametrize("seed", range(40))
def test_normalize_random_traces(seed):
    rng = random.Random(seed)
    tr = random_trace("TOP", rng, ["a", "b"], ["k1", "k2"], 8)
    norm = normalize_trace(tr)
    assert check_trace("TOP", norm) == []
    assert norm.final.store == tr.final.store
    for cl, u in norm.final.views.items():
        assert view_leq(u, tr.final.views[cl])
    # every shift is followed by a commit of the same client
    for a, b in zip(norm.steps, norm.steps[1:] + (None,)):
        if a.fp is None:
            assert b is not None and b.fp is not None and b.client == a.client
