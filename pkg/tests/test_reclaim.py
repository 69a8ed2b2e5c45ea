import threading

import pytest

from mvlist import NodePool, PoolExhausted, Rollback, ShadowLog, SlotAllocator, TracedNodePool
from mvlist.atomics import AtomicInt
from mvlist.core import VersionedList
from mvlist.reclaim import INITIAL_EPOCH, pool_slots_from_env
from mvlist.words import BOT, INITIAL_TS, NO_VAL, NULL, SLOT_SHIFT


def tail_ref():
    return NodePool.TAIL_SLOT << SLOT_SHIFT


def fresh_pool(capacity, batch_size=1, traced=False):
    clock = AtomicInt(INITIAL_TS)
    cls = TracedNodePool if traced else NodePool
    pool = cls(capacity, clock, batch_size=batch_size)
    pool.init_sentinel(NodePool.TAIL_SLOT, 2**63 - 1, NULL)
    return pool


# allocation and batches

def test_fresh_allocation_has_current_birth_and_bot_ts():
    pool = fresh_pool(4)
    ref, birth = pool.allocate(5, 50, tail_ref(), INITIAL_EPOCH, NULL)
    assert birth == INITIAL_EPOCH
    assert pool.raw_state(ref) == (BOT, INITIAL_EPOCH)
    assert pool.epoch.value == INITIAL_EPOCH


def test_batch_published_only_when_full():
    alloc = SlotAllocator(128, batch_size=64)
    taken = [alloc.take() for _ in range(64)]
    assert alloc.free_batches() == 1
    for s in taken[:63]:
        alloc.give(s)
    assert alloc.free_batches() == 1
    assert alloc.garbage == 63
    alloc.give(taken[63])
    assert alloc.free_batches() == 2
    assert alloc.garbage == 0
    # the 64th slot counts until its batch is published
    assert alloc.peak_garbage == 64


def test_reusing_batch_of_current_epoch_advances_epoch():
    pool = fresh_pool(1)
    ref, birth = pool.allocate(5, 50, tail_ref(), 1, NULL)
    pool.retire(ref)
    assert pool.epoch.value == 1
    ref2, birth2 = pool.allocate(6, 60, tail_ref(), 1, NULL)
    assert ref2 == ref
    assert (birth, birth2) == (1, 2)
    assert pool.epoch.value == 2
    assert pool.alloc.epoch_advances.value == 1


def test_reusing_older_batch_keeps_epoch():
    pool = fresh_pool(2)
    a, _ = pool.allocate(1, 10, tail_ref(), 1, NULL)
    pool.retire(a)                       # stamped at epoch 1
    b, _ = pool.allocate(2, 20, tail_ref(), 1, NULL)
    assert b == a and pool.epoch.value == 2
    c, _ = pool.allocate(3, 30, tail_ref(), 1, NULL)
    pool.retire(c)                       # stamped at epoch 2
    pool.epoch.store(3)                  # pretend someone else moved on
    d, bd = pool.allocate(4, 40, tail_ref(), 1, NULL)
    assert d == c and bd == 3 and pool.epoch.value == 3


def test_clock_nudged_when_unchanged_since_stamp():
    pool = fresh_pool(1)
    ref, _ = pool.allocate(5, 50, tail_ref(), 1, NULL)
    pool.retire(ref)
    assert pool.get_ts() == 2
    pool.allocate(6, 60, tail_ref(), 1, NULL)
    assert pool.get_ts() == 3
    # clock moved since the stamp: no extra nudge
    p2 = fresh_pool(1)
    r, _ = p2.allocate(5, 50, tail_ref(), 1, NULL)
    p2.retire(r)
    p2.fetch_add_ts()
    p2.allocate(6, 60, tail_ref(), 1, NULL)
    assert p2.get_ts() == 3


def test_clock_and_epoch_are_independent():
    pool = fresh_pool(4)
    for _ in range(5):
        pool.fetch_add_ts()
    assert pool.get_ts() == 7
    assert pool.epoch.value == INITIAL_EPOCH


def test_exhaustion_raises():
    pool = fresh_pool(2)
    pool.allocate(1, 1, tail_ref(), 1, NULL)
    pool.allocate(2, 2, tail_ref(), 1, NULL)
    with pytest.raises(PoolExhausted):
        pool.allocate(3, 3, tail_ref(), 1, NULL)


def test_pool_size_from_environment(monkeypatch):
    monkeypatch.setenv("MVLIST_POOL_SLOTS", "123")
    assert pool_slots_from_env(7) == 123
    assert VersionedList().pool.capacity == 123
    monkeypatch.setenv("MVLIST_POOL_SLOTS", "0")
    with pytest.raises(ValueError):
        pool_slots_from_env(7)
    monkeypatch.delenv("MVLIST_POOL_SLOTS")
    assert pool_slots_from_env(7) == 7


# guarded reads on a recycled slot

@pytest.mark.parametrize("traced", [False, True])
def test_field_read_after_reuse_rolls_back(traced):
    pool = fresh_pool(1, traced=traced)
    ref, birth = pool.allocate(5, 50, tail_ref(), 1, NULL)
    assert pool.read_key(ref, birth) == 5
    pool.retire(ref)
    pool.allocate(6, 60, tail_ref(), 1, NULL)
    for read in (pool.read_key, pool.read_value, pool.read_next, pool.read_ts):
        with pytest.raises(Rollback):
            read(ref, birth)


@pytest.mark.parametrize("traced", [False, True])
def test_next_deref_after_target_reuse_rolls_back(traced):
    pool = fresh_pool(2, traced=traced)
    target, tb = pool.allocate(9, 90, tail_ref(), 1, NULL)
    src, sb = pool.allocate(5, 50, target, tb, NULL)
    cell = pool.read_next(src, sb)
    assert pool.deref_next(cell)[0] == target
    pool.retire(target)
    pool.allocate(7, 70, tail_ref(), 1, NULL)
    assert pool.raw_key(target) == 7
    with pytest.raises(Rollback):
        pool.deref_next(pool.read_next(src, sb))


@pytest.mark.parametrize("traced", [False, True])
def test_prior_deref_after_target_reuse_rolls_back(traced):
    pool = fresh_pool(2, traced=traced)
    old, ob = pool.allocate(9, 90, tail_ref(), 1, NULL)
    node, nb = pool.allocate(9, 91, tail_ref(), 1, old)
    assert pool.deref_prior(node, nb)[0] == old
    pool.retire(old)
    pool.allocate(3, 30, tail_ref(), 1, NULL)
    with pytest.raises(Rollback):
        pool.deref_prior(node, nb)


def test_link_version_is_max_of_births():
    pool = fresh_pool(2)
    a, ab = pool.allocate(1, 1, tail_ref(), 1, NULL)
    pool.retire(a)
    b, bb = pool.allocate(2, 2, tail_ref(), 1, NULL)   # epoch 2
    assert bb == 2
    c, cb = pool.allocate(3, 3, b, bb, NULL)
    assert pool.raw_next(c) == (b, 2)


def test_publish_ts_only_once():
    pool = fresh_pool(2)
    ref, birth = pool.allocate(1, 1, tail_ref(), 1, NULL)
    pool.publish_ts(ref, birth)
    ts = pool.raw_state(ref)[0]
    pool.fetch_add_ts()
    pool.publish_ts(ref, birth)
    assert pool.raw_state(ref) == (ts, birth) and ts == INITIAL_TS


# shadow log

def test_shadow_log_records_stale_then_rollback():
    log = ShadowLog()
    clock = AtomicInt(INITIAL_TS)
    pool = TracedNodePool(1, clock, batch_size=1, shadow=log)
    pool.init_sentinel(NodePool.TAIL_SLOT, 2**63 - 1, NULL)
    ref, birth = pool.allocate(5, 50, tail_ref(), 1, NULL)
    pool.retire(ref)
    pool.allocate(6, 60, tail_ref(), 1, NULL)

    # a second thread still believes in the first lifetime
    def other():
        pool._beliefs()[ref >> SLOT_SHIFT] = 2
        with pytest.raises(Rollback):
            pool.read_key(ref, birth)
    t = threading.Thread(target=other)
    t.start()
    t.join()
    kinds = [e[2] for e in log.events]
    assert kinds[-2:] == ["stale", "rollback"]
    assert len(log.of_kind("alloc")) == 3  # tail plus two lifetimes


# checkpoints in the list operations

class _Flaky:
    """Raise Rollback from the n-th call of a wrapped method."""

    def __init__(self, fn, when):
        self.fn = fn
        self.when = when
        self.calls = 0

    def __call__(self, *a):
        self.calls += 1
        if self.calls in self.when:
            raise Rollback
        return self.fn(*a)


def test_rollback_after_mark_resumes_after_the_mark():
    lst = VersionedList(256)
    lst.insert(5, 50)
    marks = _Flaky(lst._mark, ())
    lst._mark = marks
    orig_find = lst._find
    state = {"n": 0}

    def find(key, e):
        # the find that follows a successful mark fails once
        if marks.calls == 1 and state["n"] == 0:
            state["n"] = 1
            raise Rollback
        return orig_find(key, e)

    lst._find = find
    assert lst.remove(5) == 50
    assert marks.calls == 1
    assert lst.stats()["rollbacks"] == 1
    assert lst.contains(5) == NO_VAL
    assert lst.items() == []


@pytest.mark.parametrize("op,args,want", [
    ("insert", (7, 70), NO_VAL),
    ("contains", (5,), 50),
    ("remove", (5,), 50),
    ("range_query", (1, 10), [(5, 50)]),
])
def test_operations_restart_at_their_checkpoint(op, args, want):
    lst = VersionedList(256)
    lst.insert(5, 50)
    lst._find = _Flaky(lst._find, {1, 2})
    assert getattr(lst, op)(*args) == want
    assert lst.stats()["rollbacks"] == 2


def test_range_query_retry_draws_fresh_timestamp():
    lst = VersionedList(256)
    lst.insert(5, 50)
    lst._collect = _Flaky(lst._collect, {1})
    before = lst.get_ts()
    assert lst.range_query(1, 10) == [(5, 50)]
    assert lst.get_ts() == before + 2
