import random

import pytest

from kvtx.protocols import (
    CopsState,
    ProtocolError,
    cops_check_run,
    cops_deliver,
    cops_encode,
    cops_get_trans,
    cops_put,
    cops_replay,
    cops_run,
)
from kvtx.protocols.cops import INITIAL_STAMP, _Runner, converged, get_begin, get_fetch, get_finish
from kvtx.store import T0, KVStore, Version, View, initial_store, is_valid_view, tx


def _state(clients=1, replicas=2, keys=("k1", "k2"), check_deps=True):
    return CopsState.initial(clients, replicas, keys, check_deps)


def _drain(state):
    while state.inflight:
        for msg in list(state.inflight):
            cops_deliver(state, msg)


def test_first_put_has_no_dependencies():
    st = _state()
    _, stamp = cops_put(st, "cl1", "k1", 10)
    ver = st.replicas[0].latest("k1")
    assert ver.stamp == stamp == (1, 0)
    assert ver.deps == frozenset()
    assert st.clients["cl1"].context == {("k1", (1, 0))}
    assert len(st.inflight) == 1


def test_second_put_depends_on_first():
    st = _state()
    cops_put(st, "cl1", "k1", 10)
    _, s2 = cops_put(st, "cl1", "k2", 20)
    assert ("k1", (1, 0)) in st.replicas[0].get("k2", s2).deps


def test_concurrent_puts_ordered_by_time_then_replica():
    st = _state(clients=2)
    _, a = cops_put(st, "cl1", "k1", 1)
    _, b = cops_put(st, "cl2", "k1", 2)
    assert (a, b) == ((1, 0), (1, 1))
    _drain(st)
    assert [v.stamp for v in st.replicas[0].kv["k1"]] == [INITIAL_STAMP, a, b]
    assert converged(st)


def test_get_without_interleaving():
    st = _state()
    cops_put(st, "cl1", "k1", 7)
    _, vals = cops_get_trans(st, "cl1", ["k1", "k2"])
    assert vals == {"k1": 7, "k2": 0}
    assert st.log[-1].reads == {"k1": (1, 0), "k2": INITIAL_STAMP}


def test_get_refetches_after_interleaved_sync():
    # cl1 lives on replica 0, cl2 on replica 1
    st = _state(clients=2)
    cops_put(st, "cl1", "k1", 1)
    cops_put(st, "cl2", "k1", 11)
    _, s2 = cops_put(st, "cl2", "k2", 22)
    get_begin(st, "cl1", ["k1", "k2"])
    assert get_fetch(st, "cl1", "k1").stamp == (1, 0)
    for msg in [m for m in st.inflight if m.target == 0]:
        assert cops_deliver(st, msg)
    assert get_fetch(st, "cl1", "k2").stamp == s2
    assert get_finish(st, "cl1") == {"k1": 11, "k2": 22}
    assert st.log[-1].reads == {"k1": (1, 1), "k2": s2}


def test_get_reads_own_writes():
    st = _state()
    cops_put(st, "cl1", "k2", 5)
    assert cops_get_trans(st, "cl1", ["k2"])[1] == {"k2": 5}


def test_get_waits_for_missing_dependency_without_check():
    st = _state(clients=2, check_deps=False)
    cops_put(st, "cl2", "k1", 11)
    _, s2 = cops_put(st, "cl2", "k2", 22)
    k2_msg = next(m for m in st.inflight if m.key == "k2")
    cops_deliver(st, k2_msg)
    get_begin(st, "cl1", ["k1", "k2"])
    get_fetch(st, "cl1", "k1")
    get_fetch(st, "cl1", "k2")
    assert get_finish(st, "cl1") is None
    with pytest.raises(ProtocolError):
        get_begin(st, "cl1", ["k1"])


def test_deliver_requeues_until_dependencies_arrive():
    st = _state(clients=1)
    cops_put(st, "cl1", "k1", 1)
    cops_put(st, "cl1", "k2", 2)
    first, second = st.inflight
    assert not cops_deliver(st, second)
    assert st.replicas[1].kv["k2"] == [st.replicas[1].kv["k2"][0]]
    assert st.inflight == [first, second]
    assert cops_deliver(st, first) and cops_deliver(st, second)
    assert st.replicas[1].local_time == 2


def test_out_of_order_delivery_matches_in_order():
    def build():
        st = _state(clients=1, replicas=2, keys=("k1", "k2", "k3"))
        for k, v in (("k1", 1), ("k2", 2), ("k3", 3)):
            cops_put(st, "cl1", k, v)
        return st

    in_order = build()
    for msg in list(in_order.inflight):
        cops_deliver(in_order, msg)
    shuffled = build()
    first_try = list(reversed(shuffled.inflight))
    assert not cops_deliver(shuffled, first_try[0])
    while shuffled.inflight:
        for msg in list(reversed(shuffled.inflight)):
            cops_deliver(shuffled, msg)
    assert shuffled.replicas[1].kv == in_order.replicas[1].kv


def test_encode_after_first_put():
    st = _state(clients=1)
    cops_put(st, "cl1", "k1", 10)
    enc = cops_encode(st)
    t = tx("cl1", 1)
    assert enc.config.store == KVStore({"k1": [Version(0, T0), Version(10, t)], "k2": [Version(0, T0)]})
    assert enc.config.views["cl1"] == View({"k1": {0, 1}, "k2": {0}})
    assert enc.audit == [(0, t, None)]


def test_encode_empty_run():
    st = _state(clients=2)
    enc = cops_encode(st)
    assert enc.config.store == initial_store(["k1", "k2"])
    assert all(u == View({"k1": {0}, "k2": {0}}) for u in enc.config.views.values())


def test_encode_detects_conflicting_replicas():
    st = _state()
    cops_put(st, "cl1", "k1", 10)
    _drain(st)
    v = st.replicas[1].kv["k1"][1]
    st.replicas[1].kv["k1"][1] = v._replace(value=99)
    with pytest.raises(ProtocolError, match="conflicting"):
        cops_encode(st)


def test_read_only_transactions_become_readers():
    st = _state()
    cops_put(st, "cl1", "k1", 10)
    cops_get_trans(st, "cl1", ["k1"])
    K = cops_encode(st).config.store
    assert K["k1"][1].readers == {tx("cl1", 2)}


@pytest.mark.parametrize("seed", range(30))
def test_invariants_hold_at_every_step(seed):
    rng = random.Random(seed)
    r = _Runner(seed, rng.randint(1, 3), rng.randint(1, 3), 6, 2, True, None)
    contexts = {cl: set() for cl in r.state.clients}
    while r.choices():
        r.step(r.rng.choice(r.choices()))
        st = r.state
        for rep in st.replicas:
            for vs in rep.kv.values():
                for v in vs:
                    assert all(rep.has(k, s) for k, s in v.deps), "replica not dependency-closed"
        for cl, c in st.clients.items():
            assert contexts[cl] <= c.context
            contexts[cl] = set(c.context)
        enc = cops_encode(st)
        assert enc.config is not None
        for u in enc.config.views.values():
            assert is_valid_view(enc.config.store, u)
    assert converged(r.state)


def test_sequential_run_is_conformant():
    for seed in range(20):
        rep = cops_check_run(seed, clients=1, replicas=2, ops=6)
        assert rep.conformant and rep.converged


def test_replay_reproduces_run():
    state, trace, _ = cops_run(11, clients=3, replicas=3, ops=6)
    again = cops_replay(trace)
    assert again.log == state.log
    assert [r.kv for r in again.replicas] == [r.kv for r in state.replicas]
    assert cops_run(11, clients=3, replicas=3, ops=6)[1] == trace


def test_replay_rejects_disabled_step():
    _, trace, _ = cops_run(3)
    bad = trace[:1] + ["deliver 9 k1 1.0"]
    with pytest.raises(ProtocolError, match="not enabled"):
        cops_replay(bad)


def test_mutant_breaks_causality():
    rep = cops_check_run(20, clients=2, replicas=2, ops=6, keys=2, check_deps=False)
    assert not rep.conformant
    assert "CC violations" in rep.summary()


def test_fuel_exhaustion_is_reported():
    rep = cops_check_run(0, clients=2, replicas=2, ops=6, fuel=2)
    assert rep.livelock and not rep.conformant
    assert "fuel exhausted" in rep.summary()
