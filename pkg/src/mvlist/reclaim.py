"""Version-based reclamation for the list node arena.

Nodes live in a fixed arena of slots laid out as parallel Python lists (one
list per field). Each slot carries a birth epoch. The ``(ts, birth)`` pair and
the ``(next, version)`` pair are each stored as one tuple, so a single list
item read or compare-and-set sees both halves together.

Every guarded read returns the field only after checking that the slot still
holds the lifetime the caller expects. A failed check raises ``Rollback`` and
the operation restarts from its last checkpoint.

Freed slots are recycled in batches. A thread fills a private retire batch,
stamps it with the global epoch when full, and pushes it on a shared stack.
Allocation pops whole batches. If a popped batch was stamped in the current
epoch the epoch is bumped, so a recycled slot is always born in an epoch
strictly later than the one it was retired in.
"""

import itertools
import os
import threading

from .atomics import AtomicInt, AtomicRef, make_stripes
from .words import BOT, INITIAL_TS, NO_VAL, NULL, REF_MASK, SLOT_SHIFT

INITIAL_EPOCH = 1
DEFAULT_BATCH = 64
POOL_ENV = "MVLIST_POOL_SLOTS"


class Rollback(Exception):
    """A guarded read observed a recycled slot; restart from the checkpoint."""


class PoolExhausted(RuntimeError):
    pass


def pool_slots_from_env(default):
    raw = os.environ.get(POOL_ENV)
    if not raw:
        return default
    n = int(raw)
    if n < 1:
        raise ValueError(f"{POOL_ENV} must be positive, got {raw!r}")
    return n


class RetireBatch:
    __slots__ = ("slots", "epoch", "ts")

    def __init__(self, slots=None, epoch=0, ts=None):
        self.slots = slots if slots is not None else []
        # epoch and clock reading at the time the batch filled up;
        # fresh batches were never retired and carry epoch 0
        self.epoch = epoch
        self.ts = ts


class BatchStack:
    """Treiber stack of full retire batches."""

    def __init__(self):
        self._top = AtomicRef(None)

    def push(self, batch):
        while True:
            top = self._top.value
            if self._top.compare_and_set(top, (batch, top)):
                return

    def pop(self):
        while True:
            top = self._top.value
            if top is None:
                return None
            if self._top.compare_and_set(top, top[1]):
                return top[0]

    def __len__(self):
        n, node = 0, self._top.value
        while node is not None:
            n, node = n + 1, node[1]
        return n


class _ThreadState:
    __slots__ = ("free", "retired", "rollbacks", "retires")

    def __init__(self):
        self.free = []
        self.retired = RetireBatch()
        self.rollbacks = 0
        self.retires = 0


class SlotAllocator:
    """Batch-recycling slot allocator shared by the list and the index.

    Slots ``first_slot .. first_slot + capacity - 1`` are handed out. Lower
    slots are left for sentinels owned by the caller.
    """

    def __init__(self, capacity, *, batch_size=DEFAULT_BATCH, first_slot=1, clock=None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.capacity = capacity
        self.batch_size = batch_size
        self.epoch = AtomicInt(INITIAL_EPOCH)
        self.clock = clock
        self._stack = BatchStack()
        slots = list(range(first_slot + capacity - 1, first_slot - 1, -1))
        for i in range(0, capacity, batch_size):
            self._stack.push(RetireBatch(slots[i:i + batch_size]))
        self._tls = threading.local()
        self._states = []
        self._states_lock = threading.Lock()
        self._garbage_lock = threading.Lock()
        self.garbage = 0
        self.peak_garbage = 0
        self.epoch_advances = AtomicInt(0)
        self.reused_batches = AtomicInt(0)

    def thread_state(self):
        try:
            return self._tls.state
        except AttributeError:
            st = _ThreadState()
            self._tls.state = st
            with self._states_lock:
                self._states.append(st)
            return st

    @property
    def threads(self):
        return len(self._states)

    def rollbacks(self):
        return sum(st.rollbacks for st in self._states)

    def retires(self):
        return sum(st.retires for st in self._states)

    def take(self):
        st = self.thread_state()
        if not st.free:
            self._refill(st)
        return st.free.pop()

    def _refill(self, st):
        batch = self._stack.pop()
        if batch is None:
            raise PoolExhausted(
                f"no free slots left (capacity {self.capacity}, "
                f"{self.garbage} retired slots still in partial batches)")
        if batch.epoch:
            self.reused_batches.fetch_add(1)
            e = self.epoch.value
            if batch.epoch == e and self.epoch.compare_and_set(e, e + 1):
                self.epoch_advances.fetch_add(1)
            clock = self.clock
            if clock is not None and clock.value == batch.ts:
                clock.fetch_add(1)
        st.free = batch.slots

    def give(self, slot):
        st = self.thread_state()
        st.retires += 1
        batch = st.retired
        batch.slots.append(slot)
        with self._garbage_lock:
            self.garbage += 1
            if self.garbage > self.peak_garbage:
                self.peak_garbage = self.garbage
        if len(batch.slots) >= self.batch_size:
            batch.epoch = self.epoch.value
            batch.ts = self.clock.value if self.clock is not None else None
            st.retired = RetireBatch()
            with self._garbage_lock:
                self.garbage -= len(batch.slots)
            self._stack.push(batch)

    def free_batches(self):
        return len(self._stack)


class NodePool:
    """Arena of list nodes with guarded field access."""

    SENTINELS = 2
    HEAD_SLOT = 1
    TAIL_SLOT = 2

    def __init__(self, capacity, clock, *, batch_size=DEFAULT_BATCH):
        self.clock = clock
        self.alloc = SlotAllocator(capacity, batch_size=batch_size,
                                   first_slot=1 + self.SENTINELS, clock=clock)
        n = capacity + 1 + self.SENTINELS
        self._state = [(BOT, 0)] * n
        self._next = [(NULL, 0)] * n
        self._key = [0] * n
        self._value = [NO_VAL] * n
        self._prior = [NULL] * n
        self._locks = make_stripes()

    @property
    def epoch(self):
        return self.alloc.epoch

    @property
    def capacity(self):
        return self.alloc.capacity

    def init_sentinel(self, slot, key, next_link):
        birth = self.alloc.epoch.value
        self._state[slot] = (INITIAL_TS, birth)
        self._key[slot] = key
        self._next[slot] = (next_link, birth)
        return slot << SLOT_SHIFT, birth

    # clock

    def get_ts(self):
        return self.clock.value

    def fetch_add_ts(self):
        return self.clock.fetch_add(1)

    # allocation and retirement

    def allocate(self, key, value, next_link, next_birth, prior):
        """Take a slot and initialise it. Returns ``(ref, birth)``."""
        s = self.alloc.take()
        birth = self.alloc.epoch.value
        with self._locks[s & 63]:
            # birth goes first so a stale reader of any later field fails
            # its birth re-check
            self._state[s] = (BOT, birth)
            self._key[s] = key
            self._value[s] = value
            self._prior[s] = prior
            self._next[s] = (next_link, birth if birth > next_birth else next_birth)
        return s << SLOT_SHIFT, birth

    def retire(self, ref):
        self.alloc.give(ref >> SLOT_SHIFT)

    def note_rollback(self):
        self.alloc.thread_state().rollbacks += 1

    def respond(self):
        pass

    def fail(self):
        raise Rollback

    # guarded reads

    def read_next(self, ref, birth):
        """Read the ``(next, version)`` cell of a node known to have ``birth``."""
        s = ref >> SLOT_SHIFT
        cell = self._next[s]
        if self._state[s][1] != birth:
            raise Rollback
        return cell

    def read_key(self, ref, birth):
        s = ref >> SLOT_SHIFT
        key = self._key[s]
        if self._state[s][1] != birth:
            raise Rollback
        return key

    def read_value(self, ref, birth):
        s = ref >> SLOT_SHIFT
        value = self._value[s]
        if self._state[s][1] != birth:
            raise Rollback
        return value

    def read_ts(self, ref, birth):
        ts, b = self._state[ref >> SLOT_SHIFT]
        if b != birth:
            raise Rollback
        return ts

    def deref_next(self, cell):
        """Follow a ``(next, version)`` cell. Returns ``(ref, ts, birth)``.

        A successor born after the link version is a recycled slot.
        """
        ref = cell[0] & REF_MASK
        ts, birth = self._state[ref >> SLOT_SHIFT]
        if birth > cell[1]:
            raise Rollback
        return ref, ts, birth

    def deref_prior(self, ref, birth):
        """Follow the prior link of a node. Returns ``(ref, ts, birth)``.

        The target of a prior link is always older than its source, so a
        target born later than the source has been recycled.
        """
        s = ref >> SLOT_SHIFT
        prior = self._prior[s]
        if self._state[s][1] != birth:
            raise Rollback
        ts, pb = self._state[prior >> SLOT_SHIFT]
        if pb > birth:
            raise Rollback
        return prior, ts, pb

    def load_state(self, ref):
        """Unguarded ``(ts, birth)`` read, used to adopt an index candidate."""
        return self._state[ref >> SLOT_SHIFT]

    # writes

    def cas_next(self, ref, old, new):
        s = ref >> SLOT_SHIFT
        with self._locks[s & 63]:
            if self._next[s] != old:
                return False
            self._next[s] = new
            return True

    def publish_ts(self, ref, birth):
        """Set the timestamp of a node if it is still unset."""
        s = ref >> SLOT_SHIFT
        st = self._state[s]
        if st[0] != BOT or st[1] != birth:
            return
        ts = self.clock.value
        with self._locks[s & 63]:
            if self._state[s] == st:
                self._state[s] = (ts, birth)

    # unguarded reads for nodes the caller owns or for quiescent inspection

    def raw_next(self, ref):
        return self._next[ref >> SLOT_SHIFT]

    def raw_key(self, ref):
        return self._key[ref >> SLOT_SHIFT]

    def raw_value(self, ref):
        return self._value[ref >> SLOT_SHIFT]

    def raw_state(self, ref):
        return self._state[ref >> SLOT_SHIFT]

    def raw_prior(self, ref):
        return self._prior[ref >> SLOT_SHIFT]


class ShadowLog:
    """Append-only event log written by a traced pool.

    With a ``sink`` the events are streamed to it instead of being kept.

    Events are tuples ``(seq, thread, kind, slot, a, b)``. Kinds:

    alloc     slot got lifetime tag ``a`` with birth epoch ``b``
    retire    lifetime ``a`` of slot retired in epoch ``b``
    stale     thread expected lifetime ``a`` but the slot held ``b``
    rollback  the thread discarded its state back to a checkpoint
    effect    a successful compare-and-set, ``a`` names it
    write     next-cell transition of slot, ``a`` old cell, ``b`` new cell
    respond   an operation returned to its caller
    garbage   ``a`` retired slots were waiting in partial batches
    """

    def __init__(self, sink=None):
        self.events = []
        self.sink = sink
        self._seq = itertools.count()
        self._lock = threading.Lock()

    def record(self, kind, slot=0, a=None, b=None):
        # the lock keeps sequence numbers in the same order as the list
        with self._lock:
            ev = (next(self._seq), threading.get_ident(), kind, slot, a, b)
            if self.sink is None:
                self.events.append(ev)
            else:
                self.sink(ev)

    def of_kind(self, kind):
        return [e for e in self.events if e[2] == kind]


class TaggedCell(tuple):
    """A ``(next, version)`` cell that also remembers its target lifetime."""

    tag = 0


class TracedNodePool(NodePool):
    """NodePool for test builds.

    Calls ``hook(label)`` before every shared-memory access so a scheduler can
    interleave threads, and tracks a lifetime tag per slot that the algorithm
    itself never sees. When a ``ShadowLog`` is attached, every access whose
    slot no longer holds the lifetime the thread reached it through is
    logged as ``stale``, alongside rollbacks, effects and responses.
    """

    def __init__(self, capacity, clock, *, batch_size=DEFAULT_BATCH, shadow=None):
        super().__init__(capacity, clock, batch_size=batch_size)
        self.hook = None
        self.shadow = shadow
        n = len(self._state)
        self._life = [0] * n
        self._next_tag = [0] * n
        self._prior_tag = [0] * n
        self._tags = itertools.count(1)
        self._belief_tls = threading.local()
        self._sentinel_tags = {}

    def _step(self, label):
        h = self.hook
        if h is not None:
            h(label)

    def _log(self, kind, slot=0, a=None, b=None):
        if self.shadow is not None:
            self.shadow.record(kind, slot, a, b)

    def _beliefs(self):
        try:
            return self._belief_tls.map
        except AttributeError:
            m = dict(self._sentinel_tags)
            self._belief_tls.map = m
            return m

    def _seen(self, s, actual):
        believed = self._beliefs().get(s)
        if believed is None:
            raise AssertionError(f"slot {s} reached without a known lifetime")
        if believed != actual:
            self._log("stale", s, believed, actual)

    def _rollback(self):
        self._log("rollback")
        raise Rollback

    def init_sentinel(self, slot, key, next_link):
        out = super().init_sentinel(slot, key, next_link)
        tag = next(self._tags)
        self._life[slot] = tag
        self._sentinel_tags[slot] = tag
        if next_link:
            self._next_tag[slot] = self._life[next_link >> SLOT_SHIFT]
        self._log("alloc", slot, tag, out[1])
        return out

    def lifetime(self, ref):
        return self._life[ref >> SLOT_SHIFT]

    def get_ts(self):
        self._step("get_ts")
        return self.clock.value

    def fetch_add_ts(self):
        self._step("fetch_add_ts")
        return self.clock.fetch_add(1)

    def allocate(self, key, value, next_link, next_birth, prior):
        self._step("alloc")
        beliefs = self._beliefs()
        s = self.alloc.take()
        birth = self.alloc.epoch.value
        tag = next(self._tags)
        with self._locks[s & 63]:
            self._life[s] = tag
            self._state[s] = (BOT, birth)
            self._key[s] = key
            self._value[s] = value
            self._prior[s] = prior
            self._prior_tag[s] = beliefs.get(prior >> SLOT_SHIFT, 0) if prior else 0
            self._next[s] = (next_link, birth if birth > next_birth else next_birth)
            t = (next_link & REF_MASK) >> SLOT_SHIFT
            self._next_tag[s] = beliefs.get(t, 0) if t else 0
        beliefs[s] = tag
        self._log("alloc", s, tag, birth)
        return s << SLOT_SHIFT, birth

    def retire(self, ref):
        self._step("retire")
        s = ref >> SLOT_SHIFT
        self._log("retire", s, self._life[s], self.alloc.epoch.value)
        self.alloc.give(s)
        self._log("garbage", 0, self.alloc.garbage)

    def respond(self):
        self._log("respond")

    def fail(self):
        self._rollback()

    def _tagged(self, cell, tag):
        c = TaggedCell(cell)
        c.tag = tag
        return c

    def read_next(self, ref, birth):
        self._step("read_next")
        s = ref >> SLOT_SHIFT
        with self._locks[s & 63]:
            cell, tag, life = self._next[s], self._next_tag[s], self._life[s]
        self._seen(s, life)
        if self._state[s][1] != birth:
            self._rollback()
        return self._tagged(cell, tag)

    def _read_field(self, field, ref, birth):
        s = ref >> SLOT_SHIFT
        with self._locks[s & 63]:
            v, life = field[s], self._life[s]
        self._seen(s, life)
        if self._state[s][1] != birth:
            self._rollback()
        return v

    def read_key(self, ref, birth):
        self._step("read_key")
        return self._read_field(self._key, ref, birth)

    def read_value(self, ref, birth):
        self._step("read_value")
        return self._read_field(self._value, ref, birth)

    def read_ts(self, ref, birth):
        self._step("read_ts")
        s = ref >> SLOT_SHIFT
        with self._locks[s & 63]:
            st, life = self._state[s], self._life[s]
        self._seen(s, life)
        if st[1] != birth:
            self._rollback()
        return st[0]

    def deref_next(self, cell):
        self._step("deref_next")
        if not isinstance(cell, TaggedCell):
            raise AssertionError("dereferenced a cell that was not read through the pool")
        ref = cell[0] & REF_MASK
        s = ref >> SLOT_SHIFT
        self._beliefs()[s] = cell.tag
        with self._locks[s & 63]:
            st, life = self._state[s], self._life[s]
        self._seen(s, life)
        if st[1] > cell[1]:
            self._rollback()
        return ref, st[0], st[1]

    def deref_prior(self, ref, birth):
        self._step("deref_prior")
        s = ref >> SLOT_SHIFT
        with self._locks[s & 63]:
            prior, tag, life = self._prior[s], self._prior_tag[s], self._life[s]
        self._seen(s, life)
        if self._state[s][1] != birth:
            self._rollback()
        p = prior >> SLOT_SHIFT
        self._beliefs()[p] = tag
        with self._locks[p & 63]:
            st, plife = self._state[p], self._life[p]
        self._seen(p, plife)
        if st[1] > birth:
            self._rollback()
        return prior, st[0], st[1]

    def load_state(self, ref):
        self._step("load_state")
        s = ref >> SLOT_SHIFT
        with self._locks[s & 63]:
            st, life = self._state[s], self._life[s]
        # an index candidate carries no expectation; whatever lifetime is
        # found here is the one the thread goes on to use
        self._beliefs()[s] = life
        return st

    def cas_next(self, ref, old, new):
        self._step("cas_next")
        s = ref >> SLOT_SHIFT
        beliefs = self._beliefs()
        with self._locks[s & 63]:
            cur = self._next[s]
            if cur != old:
                return False
            self._seen(s, self._life[s])
            new = (new[0], new[1])
            self._next[s] = new
            t = (new[0] & REF_MASK) >> SLOT_SHIFT
            if t != (cur[0] & REF_MASK) >> SLOT_SHIFT:
                self._next_tag[s] = beliefs.get(t, 0) if t else 0
            self._log("write", s, cur, new)
            self._log("effect", s, "cas_next")
        return True

    def publish_ts(self, ref, birth):
        self._step("publish_ts")
        s = ref >> SLOT_SHIFT
        st = self._state[s]
        if st[0] != BOT or st[1] != birth:
            return
        self._step("get_ts")
        ts = self.clock.value
        with self._locks[s & 63]:
            if self._state[s] == st:
                self._seen(s, self._life[s])
                self._state[s] = (ts, birth)
                self._log("effect", s, "publish_ts")

    def raw_next(self, ref):
        self._step("raw_next")
        return self._next[ref >> SLOT_SHIFT]

    def raw_key(self, ref):
        self._step("raw_key")
        return self._key[ref >> SLOT_SHIFT]
