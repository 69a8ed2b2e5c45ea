"""Lock-free sorted linked list with versioned range queries.

Each node keeps a ``prior`` link to the node it logically succeeded, which
turns the list into a multi-version structure: a range query fixes a
timestamp and, wherever it meets a node that is too new, walks back along
``prior`` links until it finds the version that was current at its
timestamp.

Removal is a two-step affair. ``remove`` marks the victim's next link.
``_trim`` later unlinks a run of marked nodes together with the first
unmarked node after them, which it replaces by a fresh copy whose ``prior``
points at the first victim. The copy keeps the key and value of the node it
replaces, so the set of logical keys is unchanged by a trim, but the copy
lets old range queries step back over the removed run.

Node references are passed around as ``(ref, birth)`` pairs so that every
read can be checked against slot recycling. A failed check raises
``Rollback``; every public operation catches it at a checkpoint and retries.
"""

from . import index as _index
from .atomics import AtomicInt
from .reclaim import (DEFAULT_BATCH, NodePool, Rollback, ShadowLog, TracedNodePool,
                      pool_slots_from_env)
from .words import (AUX_MASK, BOT, FLAG_MASK, INITIAL_TS, KEY_MAX, KEY_MIN, MARK_MASK,
                    NO_VAL, NULL, REF_MASK, check_key, check_value)

DEFAULT_CAPACITY = 1 << 16


class VersionedList:
    """Concurrent ordered map from int keys to non-zero int values.

    Args:
        capacity: number of node slots, excluding the two sentinels. Falls
            back to ``MVLIST_POOL_SLOTS`` and then to 65536.
        index: ``"none"``, ``"skiplist"`` or an ``Index`` instance.
        batch_size: slots per retire batch.
        traced: build on a ``TracedNodePool`` so tests can hook every shared
            access. Implied by ``shadow``.
        shadow: a ``ShadowLog`` that records slot lifetimes and stale reads.
    """

    def __init__(self, capacity=None, *, index="none", batch_size=DEFAULT_BATCH,
                 traced=False, shadow=None, seed=0):
        if capacity is None:
            capacity = pool_slots_from_env(DEFAULT_CAPACITY)
        self.clock = AtomicInt(INITIAL_TS)
        if traced or shadow is not None:
            self._pool = TracedNodePool(capacity, self.clock, batch_size=batch_size,
                                        shadow=shadow)
        else:
            self._pool = NodePool(capacity, self.clock, batch_size=batch_size)
        pool = self._pool
        tail, _ = pool.init_sentinel(NodePool.TAIL_SLOT, KEY_MAX, NULL)
        self._head, self._head_birth = pool.init_sentinel(NodePool.HEAD_SLOT, KEY_MIN, tail)
        self._tail = tail
        self.index = _index.make_index(index, capacity=capacity, batch_size=batch_size,
                                       seed=seed)

    @property
    def pool(self):
        return self._pool

    def set_step_hook(self, hook):
        """Install ``hook(label)`` before every shared access (traced builds only)."""
        if not isinstance(self._pool, TracedNodePool):
            raise TypeError("step hooks need a list built with traced=True")
        self._pool.hook = hook
        if self.index is not None:
            self.index.hook = hook

    # timestamps

    def get_ts(self):
        return self._pool.get_ts()

    def fetch_add_ts(self):
        return self._pool.fetch_add_ts()

    # public operations

    def insert(self, key, value):
        """Insert ``key`` unless present. Returns NO_VAL on success, else the present value."""
        check_key(key)
        check_value(value)
        pool = self._pool
        epoch = pool.epoch
        while True:
            try:
                out = self._insert(key, value, epoch.value)
                break
            except Rollback:
                pool.note_rollback()
        pool.respond()
        return out

    def remove(self, key):
        """Remove ``key``. Returns its value, or NO_VAL if absent."""
        check_key(key)
        pool = self._pool
        epoch = pool.epoch
        while True:
            try:
                value = self._remove_mark(key, epoch.value)
                break
            except Rollback:
                pool.note_rollback()
        if value != NO_VAL:
            # the mark is the linearization point; what follows only tidies up
            while True:
                try:
                    self._find(key, epoch.value)
                    break
                except Rollback:
                    pool.note_rollback()
        pool.respond()
        return value

    def contains(self, key):
        """Return the value stored under ``key``, or NO_VAL."""
        check_key(key)
        pool = self._pool
        epoch = pool.epoch
        while True:
            try:
                _, _, _, curr, cb, ckey = self._find(key, epoch.value)
                out = pool.read_value(curr, cb) if ckey == key else NO_VAL
                break
            except Rollback:
                pool.note_rollback()
        pool.respond()
        return out

    def range_query(self, low, high):
        """Return the ``(key, value)`` pairs with ``low <= key <= high``, sorted by key.

        The result is an atomic snapshot.
        """
        out = []
        self.range_query_into(low, high, out)
        return out

    def range_query_into(self, low, high, out):
        """Append the snapshot of ``[low, high]`` to ``out`` and return the count."""
        check_key(low)
        check_key(high)
        if low > high:
            raise ValueError(f"empty range: low {low} > high {high}")
        pool = self._pool
        epoch = pool.epoch
        start = len(out)
        while True:
            # the checkpoint covers the timestamp draw, so a retry reads a
            # fresh snapshot
            ts = pool.fetch_add_ts()
            try:
                self._collect(low, high, ts, epoch.value, out)
                break
            except Rollback:
                del out[start:]
                pool.note_rollback()
        pool.respond()
        return len(out) - start

    # mark and flag

    def _mark(self, ref, birth):
        """Tag the next link of a node as marked. True only for the thread that set it."""
        pool = self._pool
        while True:
            cell = pool.read_next(ref, birth)
            if cell[0] & AUX_MASK:
                return False
            if pool.cas_next(ref, cell, (cell[0] | MARK_MASK, cell[1])):
                return True

    def _flag(self, ref, birth):
        pool = self._pool
        while True:
            cell = pool.read_next(ref, birth)
            if cell[0] & AUX_MASK:
                return False
            if pool.cas_next(ref, cell, (cell[0] | FLAG_MASK, cell[1])):
                return True

    # internals

    def _insert(self, key, value, e):
        pool = self._pool
        while True:
            pred, pb, pw, curr, cb, ckey = self._find(key, e)
            if ckey == key:
                return pool.read_value(curr, cb)
            new, nb = pool.allocate(key, value, curr, cb, curr)
            if pool.cas_next(pred, pw, (new, pb if pb > nb else nb)):
                pool.publish_ts(new, nb)
                if self.index is not None:
                    self.index.insert(key, new, nb)
                return NO_VAL
            pool.retire(new)

    def _remove_mark(self, key, e):
        pool = self._pool
        while True:
            _, _, _, curr, cb, ckey = self._find(key, e)
            if ckey != key:
                return NO_VAL
            value = pool.read_value(curr, cb)
            if self._mark(curr, cb):
                return value

    def _start(self, key, e):
        if self.index is None:
            return self._head, self._head_birth, self._pool.read_next(self._head, self._head_birth)
        return _index.traversal_start(self.index, self._pool, self._head, self._head_birth,
                                      key, e)

    def _find(self, key, e):
        """Locate the window for ``key``.

        Returns ``(pred, pred_birth, pred_cell, curr, curr_birth, curr_key)``
        where ``pred.key < key <= curr.key``, ``pred`` links straight to
        ``curr`` through ``pred_cell``, and both timestamps are published.
        Marked runs met on the way are trimmed.
        """
        while True:
            out = self._find_once(key, e)
            if out is not None:
                return out

    def _find_once(self, key, e):
        pool = self._pool
        read_next = pool.read_next
        deref = pool.deref_next
        read_key = pool.read_key

        pred, pb, pw = self._start(key, e)
        curr, _, cb = deref(pw)
        first, fb = curr, cb
        while True:
            cw = read_next(curr, cb)
            # skip marked and flagged nodes
            while cw[0] & AUX_MASK:
                if not cw[0] & REF_MASK:
                    break
                curr, _, cb = deref(cw)
                cw = read_next(curr, cb)
            ckey = read_key(curr, cb)
            if ckey >= key:
                break
            pred, pb = curr, cb
            pw = read_next(pred, pb)
            if pw[0] & AUX_MASK:
                return None
            curr, _, cb = deref(pw)
            first, fb = curr, cb

        pool.publish_ts(pred, pb)
        if (pw[0] & REF_MASK) != curr:
            if not self._trim(pred, pb, pw, first, fb):
                return None
            pw = read_next(pred, pb)
            if pw[0] & AUX_MASK:
                return None
            curr, _, cb = deref(pw)
            cw = read_next(curr, cb)
            ckey = read_key(curr, cb)
            if cw[0] & AUX_MASK or ckey < key:
                return None
        pool.publish_ts(curr, cb)
        return pred, pb, pw, curr, cb, ckey

    def _trim(self, pred, pb, pw, victim, vb):
        """Unlink the marked run starting at ``victim`` and replace the node after it.

        ``pw`` is the cell of ``pred`` that points at ``victim``.
        """
        pool = self._pool
        read_next = pool.read_next
        curr, cb = victim, vb
        cw = read_next(curr, cb)
        while cw[0] & MARK_MASK:
            curr, _, cb = pool.deref_next(cw)
            cw = read_next(curr, cb)
        pool.publish_ts(curr, cb)
        if not self._flag(curr, cb):
            if not read_next(curr, cb)[0] & FLAG_MASK:
                return False
        cw = read_next(curr, cb)
        succ = cw[0] & REF_MASK
        sb = 0
        if succ:
            succ, _, sb = pool.deref_next(cw)
            pool.publish_ts(succ, sb)
        ckey = pool.read_key(curr, cb)
        cval = pool.read_value(curr, cb)
        new, nb = pool.allocate(ckey, cval, succ, sb, victim)
        if pool.cas_next(pred, pw, (new, pb if pb > nb else nb)):
            pool.publish_ts(new, nb)
            self._retire_run(victim, curr, ckey, new, nb)
            return True
        pool.retire(new)
        return False

    def _retire_run(self, victim, last, last_key, new, nb):
        # This thread unlinked the run, so nobody else will retire these
        # nodes and their links are frozen; plain reads are safe.
        pool = self._pool
        idx = self.index
        node = victim
        while node != last:
            nxt = pool.raw_next(node)[0] & REF_MASK
            if idx is not None:
                idx.remove(pool.raw_key(node), node)
            pool.retire(node)
            node = nxt
        if idx is not None:
            idx.update(last_key, new, nb)
        pool.retire(last)

    def _collect(self, low, high, ts, e, out):
        pool = self._pool
        read_next = pool.read_next
        deref = pool.deref_next
        deref_prior = pool.deref_prior
        read_key = pool.read_key

        # find a node that was in the list at ts and sits at or below low
        curr_key = low
        while True:
            pred, pb = self._find(curr_key, e)[:2]
            curr_key = read_key(pred, pb)
            pts = pool.read_ts(pred, pb)
            while pts > ts:
                pred, pts, pb = deref_prior(pred, pb)
            if read_key(pred, pb) <= low:
                break
            # the predecessor version is too young; look further left with
            # a timestamp that is already fixed
            ts = pool.get_ts() - 1

        curr, cb = pred, pb
        k = read_key(curr, cb)
        while k < low:
            curr, cb = self._succ_at(curr, cb, ts)
            k = read_key(curr, cb)
        while k <= high:
            out.append((k, pool.read_value(curr, cb)))
            curr, cb = self._succ_at(curr, cb, ts)
            k = read_key(curr, cb)

    def _succ_at(self, ref, birth, ts):
        """Successor of a node as it stood at time ``ts``."""
        pool = self._pool
        succ, sts, sb = pool.deref_next(pool.read_next(ref, birth))
        if sts == BOT:
            pool.publish_ts(succ, sb)
            sts = pool.read_ts(succ, sb)
        while sts > ts:
            succ, sts, sb = pool.deref_prior(succ, sb)
        return succ, sb

    # quiescent helpers

    def items(self):
        """Snapshot of the logical contents. Only valid while no operation is running."""
        pool = self._pool
        out = []
        node = pool.raw_next(self._head)[0] & REF_MASK
        while node:
            cell = pool.raw_next(node)
            k = pool.raw_key(node)
            if k != KEY_MAX and not cell[0] & MARK_MASK and pool.raw_state(node)[0] != BOT:
                out.append((k, pool.raw_value(node)))
            node = cell[0] & REF_MASK
        return out

    def __len__(self):
        return len(self.items())

    def stats(self):
        alloc = self._pool.alloc
        return {
            "epoch": alloc.epoch.value,
            "epoch_advances": alloc.epoch_advances.value,
            "rollbacks": alloc.rollbacks(),
            "retires": alloc.retires(),
            "peak_garbage": alloc.peak_garbage,
            "garbage": alloc.garbage,
            "reused_batches": alloc.reused_batches.value,
            "threads": alloc.threads,
        }


def make_shadow_list(capacity=None, **kw):
    log = ShadowLog()
    return VersionedList(capacity, shadow=log, **kw), log

