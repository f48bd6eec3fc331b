import pytest

from kvtx.protocols import (
    AbortError,
    ClockSiState,
    ProtocolError,
    clocksi_check_run,
    clocksi_commit,
    clocksi_read,
    clocksi_replay,
    clocksi_run,
    clocksi_start,
    clocksi_write,
)
from kvtx.protocols.clocksi import _Runner


def _state(clocks, keys=("k1", "k2"), clients=2, rule="max"):
    return ClockSiState.initial(clients, clocks, keys, rule)


def test_fresh_client_takes_coordinator_clock():
    st = _state([5, 1])
    assert clocksi_start(st, "cl1", 0) == 5
    assert st.clocks == [6, 1]
    with pytest.raises(ProtocolError, match="already"):
        clocksi_start(st, "cl1", 0)


def test_start_waits_for_clock_to_pass_client():
    st = _state([4, 1])
    st.client_time["cl1"] = 9
    ticks = 0
    while clocksi_start(st, "cl1", 0) is None:
        st.tick(0)
        ticks += 1
    assert ticks >= 5
    assert st.active["cl1"].snapshot > 9


def test_starts_on_one_shard_get_distinct_snapshots():
    st = _state([3, 3])
    assert clocksi_start(st, "cl1", 0) != clocksi_start(st, "cl2", 0)


def test_read_sees_own_write():
    st = _state([5, 5])
    clocksi_start(st, "cl1", 0)
    clocksi_write(st, "cl1", "k2", 7)
    assert clocksi_read(st, "cl1", "k2") == 7


def test_read_blocks_while_shard_lags():
    st = _state([8, 2])
    snap = clocksi_start(st, "cl1", 0)
    assert clocksi_read(st, "cl1", "k2") is None
    while st.clocks[1] <= snap:
        st.tick(1)
    assert clocksi_read(st, "cl1", "k2") == 0


def test_version_at_snapshot_is_invisible():
    st = _state([5, 5])
    snap = clocksi_start(st, "cl1", 0)
    st.store["k1"].append((snap, 42, None))
    st.store["k1"].append((snap - 1, 41, None))
    st.store["k1"].sort(key=lambda v: v[0])
    assert clocksi_read(st, "cl1", "k1") == 41


def test_single_shard_commit_time():
    # coordinate on shard 1 so that shard 0 still reads 7 at commit
    st = _state([7, 3])
    clocksi_start(st, "cl1", 1)
    clocksi_write(st, "cl1", "k1", 1)
    assert clocksi_commit(st, "cl1") == 7
    assert st.clocks[0] == 8
    assert st.client_time["cl1"] == 8


def test_two_shard_commit_takes_largest_clock():
    st = _state([4, 9], keys=("k1", "k2", "k3"))
    clocksi_start(st, "cl1", 0)
    clocksi_write(st, "cl1", "k1", 1)
    clocksi_write(st, "cl1", "k2", 2)
    assert clocksi_commit(st, "cl1") == 9
    assert st.store["k1"][-1][:2] == (9, 1)


def test_min_rule_commits_at_smallest_clock():
    st = _state([4, 9], rule="min")
    clocksi_start(st, "cl1", 1)
    clocksi_write(st, "cl1", "k1", 1)
    clocksi_write(st, "cl1", "k2", 2)
    # below its own snapshot of 9
    assert clocksi_commit(st, "cl1") == 4


def test_concurrent_write_aborts():
    st = _state([5, 5])
    clocksi_start(st, "cl1", 0)
    clocksi_start(st, "cl2", 0)
    clocksi_write(st, "cl2", "k1", 2)
    clocksi_commit(st, "cl2")
    clocksi_write(st, "cl1", "k1", 1)
    with pytest.raises(AbortError, match="abort: concurrent write"):
        clocksi_commit(st, "cl1")
    assert st.aborts == 1 and "cl1" not in st.active
    assert [rec.client for rec in st.log] == ["cl2"]


@pytest.mark.parametrize("seed", range(40))
def test_run_invariants(seed):
    state, _, livelock = clocksi_run(seed, clients=3, shards=3, ops=6, skew=5)
    assert not livelock
    last = {}
    for rec in state.log:
        assert rec.commit_time >= rec.snapshot
        assert rec.commit_time > last.get(rec.client, -1)
        last[rec.client] = rec.commit_time
    for vs in state.store.values():
        assert [v[0] for v in vs] == sorted(v[0] for v in vs)


def test_clocks_never_go_back():
    r = _Runner(4, 2, 2, 6, 5, None, "max", None)
    before = list(r.state.clocks)
    while r.choices():
        r.step(r.rng.choice(r.choices()))
        assert all(a <= b for a, b in zip(before, r.state.clocks))
        before = list(r.state.clocks)


def test_replay_reproduces_run():
    state, trace, _ = clocksi_run(8, clients=3, shards=3, ops=6, skew=5)
    again = clocksi_replay(trace)
    assert again.log == state.log
    assert again.store == state.store
    assert clocksi_run(8, clients=3, shards=3, ops=6, skew=5)[1] == trace


def test_replay_rejects_unknown_step():
    _, trace, _ = clocksi_run(1)
    with pytest.raises(ProtocolError, match="not enabled"):
        clocksi_replay(trace[:1] + ["client cl9"])


def test_runs_are_conformant():
    for seed in range(30):
        rep = clocksi_check_run(seed, clients=3, shards=3, ops=6, skew=5)
        assert rep.conformant, rep.summary()


def test_min_rule_mutant_violates():
    rep = clocksi_check_run(14, clients=3, shards=3, ops=6, skew=5, commit_rule="min")
    assert not rep.conformant
    assert "covers" in rep.summary()


def test_unknown_rule_rejected():
    with pytest.raises(ValueError, match="commit rule"):
        clocksi_run(0, commit_rule="median")
