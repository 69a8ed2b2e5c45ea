import random

import pytest

from mvlist import NO_VAL, ShadowLog, VersionedList
from mvlist.verify import (HistoryEvent, MalformedHistory, Recorder, ShadowAuditor,
                           audit_shadow_log, check_linearizable, probe_structural_invariants,
                           snapshot)
from mvlist.verify.oracle import OracleMap, first_divergence, random_script, replay
from mvlist.verify.sched import Directive, RandomPolicy, Scheduler, ScriptPolicy
from mvlist.verify import stress
from mvlist.words import REF_MASK, SLOT_SHIFT


def ev(seq, thread, kind, op, args, result=None):
    return HistoryEvent(thread, kind, op, args, result, seq)


def call(seq_inv, seq_res, thread, op, args, result):
    return [ev(seq_inv, thread, "invoke", op, args), ev(seq_res, thread, "respond", op, args, result)]


def merged(*pairs):
    return sorted((e for p in pairs for e in p), key=lambda e: e.seq)


# oracle

def test_oracle_semantics():
    m = OracleMap()
    assert m.insert(5, 1) == NO_VAL
    assert m.insert(5, 2) == 1
    assert m.contains(5) == 1
    m.insert(2, 7)
    assert m.range_query(1, 5) == [(2, 7), (5, 1)]
    assert m.remove(5) == 1 and m.remove(5) == NO_VAL


def test_replay_and_divergence():
    script = random_script(1, 200, 10)
    want = replay(OracleMap(), script)
    assert first_divergence(script, replay(VersionedList(64), script), want) is None
    bad = list(want)
    bad[17] = "nope"
    div = first_divergence(script, bad, want)
    assert div["step"] == 17 and div["got"] == "nope"


# linearizability checker

def test_single_thread_history_is_checked_directly():
    h = merged(call(0, 1, 0, "insert", (1, 5), NO_VAL), call(2, 3, 0, "contains", (1,), 5))
    assert check_linearizable(h).ok
    h = merged(call(0, 1, 0, "insert", (1, 5), NO_VAL), call(2, 3, 0, "contains", (1,), NO_VAL))
    assert not check_linearizable(h).ok


def test_racing_removes():
    a = 9
    init = [(5, a)]
    ok = merged(call(0, 2, 0, "remove", (5,), a), call(1, 3, 1, "remove", (5,), NO_VAL))
    assert check_linearizable(ok, initial=init).label == "ACCEPT"
    bad = merged(call(0, 2, 0, "remove", (5,), a), call(1, 3, 1, "remove", (5,), a))
    assert check_linearizable(bad, initial=init).label == "REJECT"


@pytest.mark.parametrize("seen", [[], [(7, 1)]])
def test_range_query_overlapping_insert_may_go_either_way(seen):
    h = merged(call(0, 3, 0, "insert", (7, 1), NO_VAL), call(1, 2, 1, "range_query", (1, 10), seen))
    assert check_linearizable(h).ok


def test_range_query_after_insert_must_see_it():
    h = merged(call(0, 1, 0, "insert", (7, 1), NO_VAL), call(2, 3, 1, "range_query", (1, 10), []))
    assert not check_linearizable(h).ok


@pytest.mark.parametrize("events", [
    [ev(0, 0, "respond", "contains", (1,), 0)],
    [ev(0, 0, "invoke", "contains", (1,)), ev(1, 0, "invoke", "contains", (1,))],
    [ev(0, 0, "invoke", "contains", (1,))],
    [ev(0, 0, "invoke", "contains", (1,)), ev(1, 0, "respond", "contains", (2,), 0)],
    [ev(1, 0, "invoke", "contains", (1,)), ev(0, 0, "respond", "contains", (1,), 0)],
    [ev(0, 0, "start", "contains", (1,))],
])
def test_malformed_history_is_an_input_error(events):
    with pytest.raises(MalformedHistory):
        check_linearizable(events)


def test_recorder_orders_events():
    rec = Recorder()
    lst = VersionedList(16)
    rec.call(0, lst, "insert", (1, 2))
    rec.call(1, lst, "contains", (1,))
    h = rec.history()
    assert [e.seq for e in h] == [0, 1, 2, 3]
    assert check_linearizable(h).ok


# scheduler

def test_same_seed_same_history():
    scripts = [[("insert", (k, k + 1)), ("remove", (k,))] for k in (1, 2, 3)]

    def run():
        lst = VersionedList(256, traced=True, batch_size=2)
        sched = Scheduler(RandomPolicy(4, 0.5))
        lst.set_step_hook(sched.hook)
        h = sched.run_ops(lst, scripts)
        return [(e.thread, e.kind, e.op, e.result) for e in h], sched.steps

    assert run() == run()


def test_script_policy_pauses_at_label():
    lst = VersionedList(256, traced=True)
    seen = []
    sched = Scheduler(ScriptPolicy([Directive(0, "cas_next"), Directive(1, None)]))

    def hook(label):
        seen.append((sched._tls.tid, label))
        sched.hook(label)
    lst.set_step_hook(hook)
    sched.run_ops(lst, [[("insert", (1, 1))], [("contains", (1,))]])
    first_one = next(i for i, (t, _) in enumerate(seen) if t == 1)
    assert seen[first_one - 1] == (0, "cas_next")


# negative controls

def test_mutants_are_rejected_and_schedule_is_fine_on_real_list():
    _, v = stress.no_flag_history()
    assert v.label == "REJECT"
    _, v = stress.eager_remove_history()
    assert v.label == "REJECT"
    _, v = stress.same_schedule_on_correct_list()
    assert v.label == "ACCEPT"


@pytest.mark.parametrize("index", ["none", "skiplist"])
def test_random_histories_accept(index):
    for seed in range(40):
        case = stress.random_history(seed, index=index)
        assert case.verdict.ok, case.as_dict()
        assert case.audit.ok, case.audit.as_dict()
        assert case.probe.ok, case.probe.violations


# structural probe

def test_probe_fresh_list():
    rep = probe_structural_invariants(VersionedList(8))
    assert rep.ok and rep.reachable == 2 and rep.logical == []


def test_probe_detects_swapped_keys():
    lst = VersionedList(64)
    for k in (1, 2, 3):
        lst.insert(k, k)
    snap = snapshot(lst)
    a = (snap.next[snap.head][0] & REF_MASK) >> SLOT_SHIFT
    b = (snap.next[a][0] & REF_MASK) >> SLOT_SHIFT
    snap.key[a], snap.key[b] = snap.key[b], snap.key[a]
    rep = probe_structural_invariants(snap)
    assert not rep.ok
    assert rep.violations[0]["check"] == "sorted"
    assert rep.violations[0]["pair"] == [a, b]
    assert probe_structural_invariants(lst).ok


def test_probe_detects_prior_timestamp_inversion():
    lst = VersionedList(64)
    lst.insert(1, 1)
    lst.insert(2, 2)
    lst.remove(1)
    snap = snapshot(lst)
    node = (snap.next[snap.head][0] & REF_MASK) >> SLOT_SHIFT
    p = snap.prior[node] >> SLOT_SHIFT
    snap.state[p] = (snap.state[node][0] + 5, snap.state[p][1])
    checks = {x["check"] for x in probe_structural_invariants(snap).violations}
    assert "prior-ts" in checks


def test_probe_after_concurrent_run():
    for seed in range(5):
        rep, lst = stress.probe_after_run(seed)
        assert rep.ok, rep.violations


# shadow audit

def test_audit_single_thread_has_no_stale_reads():
    log_lst = VersionedList(64, shadow=ShadowLog(), batch_size=1)
    rng = random.Random(1)
    for i in range(500):
        k = rng.randint(1, 10)
        if i % 2:
            log_lst.insert(k, i + 1)
        else:
            log_lst.remove(k)
    rep = audit_shadow_log(log_lst.pool.shadow, threads=1, batch_size=1)
    assert rep.ok and rep.stale == 0 and rep.lifetimes > 10


def test_audit_flags_effect_after_unrolled_stale_read():
    a = ShadowAuditor(threads=1, batch_size=1)
    a.feed((0, 7, "stale", 3, 1, 2))
    a.feed((1, 7, "effect", 3, "cas_next", None))
    assert not a.report.ok and len(a.report.unrolled) == 1
    b = ShadowAuditor(threads=1, batch_size=1)
    b.feed((0, 7, "stale", 3, 1, 2))
    b.feed((1, 7, "rollback", 0, None, None))
    b.feed((2, 7, "effect", 3, "cas_next", None))
    assert b.report.ok and b.report.rolled_back == 1


def test_audit_flags_overlapping_lifetimes_and_garbage():
    a = ShadowAuditor(threads=1, batch_size=1)
    a.feed((0, 1, "alloc", 3, 10, 1))
    a.feed((1, 1, "alloc", 3, 11, 1))
    assert a.report.overlaps
    b = ShadowAuditor(threads=1, batch_size=1)
    b.feed((0, 1, "alloc", 3, 10, 1))
    b.feed((1, 1, "retire", 3, 10, 1))
    b.feed((2, 1, "alloc", 3, 11, 1))   # reborn in the epoch it died in
    assert b.report.overlaps
    c = ShadowAuditor(threads=1, batch_size=1)
    c.feed((0, 1, "garbage", 0, 2, None))
    assert not c.report.ok


def test_forced_reuse_small():
    for bs in (1, 64):
        rep = stress.forced_reuse(bs, threads=4, ops=8000)
        assert rep.ok, rep.as_dict()
        assert rep.audit.stale == rep.audit.rolled_back
    # with batch 1 slots are recycled constantly
    assert stress.forced_reuse(1, threads=4, ops=20000).audit.lifetimes > 1000


def test_reuse_free_run_keeps_epoch():
    lst = VersionedList(4096)
    for k in range(1, 500):
        lst.insert(k, k)
    for k in range(1, 50):
        lst.remove(k)
    st = lst.stats()
    assert st["reused_batches"] == 0 and st["epoch_advances"] == 0


def test_lock_freedom_short():
    rep = stress.lock_freedom(windows=10, ops_per_thread=60)
    assert rep.ok and rep.windows == 10


def test_ping_pong_short():
    rep = stress.ping_pong(duration=0.5)
    assert rep.impossible == 0
    assert rep.queries > 0
