"""Optional shortcut index over the list.

An index maps keys to list nodes and may lag behind or point at nodes that
have since been removed or recycled. The list never trusts it: a candidate
returned by ``find_pred`` is validated before the traversal starts from it,
and after ``MAX_ATTEMPTS`` unusable candidates the traversal starts from the
head instead.

The skip list here reclaims its own nodes with a separate epoch, using the
plain rule: any change of the epoch during an index operation restarts it.
"""

import random
import threading

from .atomics import AtomicInt, make_stripes
from .reclaim import DEFAULT_BATCH, PoolExhausted, SlotAllocator
from .words import AUX_MASK, BOT, KEY_MAX, KEY_MIN, MARK_MASK, NULL, REF_MASK, SLOT_SHIFT

MAX_ATTEMPTS = 5
MAX_LEVEL = 20


def traversal_start(index, pool, head, head_birth, key, e):
    """Pick the node a traversal for ``key`` should start from.

    Returns ``(ref, birth, next_cell)`` of a node that is reachable, has a
    published timestamp, an untagged next link and a key below ``key``.
    Raises ``Rollback`` when a candidate was born after the caller's
    checkpoint epoch ``e``.
    """
    probe = key
    for _ in range(MAX_ATTEMPTS):
        cand = index.find_pred(probe)
        if cand is None:
            break
        ref = cand[0]
        ts, birth = pool.load_state(ref)
        cell = pool.read_next(ref, birth)
        ckey = pool.read_key(ref, birth)
        if birth > e:
            pool.fail()
        if ckey >= key or ts == BOT:
            continue
        if cell[0] & AUX_MASK:
            # removed from the list; try something further left
            probe = ckey
            continue
        return ref, birth, cell
    return head, head_birth, pool.read_next(head, head_birth)


class Index:
    """Contract for list indexes.

    ``insert``, ``update`` and ``remove`` are best effort. ``find_pred(key)``
    returns ``(ref, birth)`` of some indexed node with a key below ``key``, or
    None. Subclasses that only support exact lookups implement ``lookup`` and
    inherit a probing ``find_pred``.
    """

    hook = None

    def insert(self, key, ref, birth):
        raise NotImplementedError

    def update(self, key, ref, birth):
        self.insert(key, ref, birth)

    def remove(self, key, ref=None):
        raise NotImplementedError

    def lookup(self, key):
        raise NotImplementedError

    def find_pred(self, key):
        for probe in probe_keys(key):
            hit = self.lookup(probe)
            if hit is not None:
                return hit
        return None


def probe_keys(key, limit=64):
    """Smaller keys to try when only exact lookups are available."""
    if key - 2 > KEY_MIN:
        yield key - 2
    if key - 10 > KEY_MIN:
        yield key - 10
    gap = key - KEY_MIN
    for _ in range(limit):
        gap //= 2
        if gap <= 0:
            return
        yield KEY_MIN + gap


class DictIndex(Index):
    """Exact-match index backed by a dict (single dict ops are atomic in CPython)."""

    def __init__(self):
        self._map = {}

    def insert(self, key, ref, birth):
        old = self._map.get(key)
        if old is None or old[1] <= birth:
            self._map[key] = (ref, birth)

    def remove(self, key, ref=None):
        cur = self._map.get(key)
        if cur is not None and (ref is None or cur[0] == ref):
            # only drop the entry we were asked about
            try:
                if self._map[key] is cur:
                    del self._map[key]
            except KeyError:
                pass

    def lookup(self, key):
        return self._map.get(key)

    def __len__(self):
        return len(self._map)


class IndexRollback(Exception):
    pass


class SkipListIndex(Index):
    """Lock-free skip list from keys to ``(list_ref, list_birth)``.

    Nodes are slots in an arena with one ``(link, version)`` cell per level.
    A node is only physically removed once its inserter finished linking it
    (``linked`` is set). Removal first clears the value, so a half-linked
    node can be left behind as an empty entry and revived by a later insert.
    """

    HEAD = 1
    TAIL = 2

    def __init__(self, capacity, *, max_level=MAX_LEVEL, batch_size=DEFAULT_BATCH, seed=0,
                 retries=8):
        self.max_level = max_level
        self.retries = retries
        self.alloc = SlotAllocator(capacity, batch_size=batch_size, first_slot=3)
        n = capacity + 3
        self._key = [0] * n
        self._birth = [0] * n
        self._top = [0] * n
        self._val = [None] * n
        self._next = [None] * n
        self._linked = [False] * n
        self._locks = make_stripes()
        self._seed = seed
        self._rng_tls = threading.local()
        self._thread_ids = AtomicInt(0)
        self.hook = None
        # highest level any node has used; only grows
        self._height = 1
        self._height_lock = threading.Lock()
        e = self.alloc.epoch.value
        for slot, key in ((self.TAIL, KEY_MAX), (self.HEAD, KEY_MIN)):
            self._key[slot] = key
            self._birth[slot] = e
            self._top[slot] = max_level
            self._linked[slot] = True
        self._next[self.TAIL] = [(NULL, e)] * max_level
        self._next[self.HEAD] = [(self.TAIL << SLOT_SHIFT, e)] * max_level

    # primitives; every read is followed by the birth and epoch checks.
    # A recycled slot always gets a new birth, so a changed birth means the
    # read may have seen the next occupant.

    def _step(self, label):
        h = self.hook
        if h is not None:
            h(label)

    def _check(self, e):
        if self.alloc.epoch.value != e:
            raise IndexRollback

    def _guard(self, s, b, e):
        if self._birth[s] != b or self.alloc.epoch.value != e:
            raise IndexRollback

    def _read_next(self, s, b, lvl, e):
        self._step("index.read")
        try:
            cell = self._next[s][lvl]
        except (IndexError, TypeError):
            # shorter tower of a new occupant
            self._guard(s, b, e)
            raise
        self._guard(s, b, e)
        return cell

    def _read_key(self, s, b, e):
        self._step("index.read")
        k = self._key[s]
        self._guard(s, b, e)
        return k

    def _read_val(self, s, b, e):
        self._step("index.read")
        v = self._val[s]
        self._guard(s, b, e)
        return v

    def _deref(self, cell, e):
        s = (cell[0] & REF_MASK) >> SLOT_SHIFT
        b = self._birth[s]
        if b > cell[1]:
            raise IndexRollback
        self._check(e)
        return s, b

    def _cas_next(self, s, b, lvl, old, new):
        self._step("index.cas")
        with self._locks[s & 63]:
            cells = self._next[s]
            if self._birth[s] != b or cells[lvl] != old:
                return False
            cells[lvl] = new
            return True

    def _cas_val(self, s, b, old, new):
        self._step("index.cas")
        with self._locks[s & 63]:
            if self._birth[s] != b or self._val[s] != old:
                return False
            self._val[s] = new
            return True

    def _random_level(self):
        try:
            rng = self._rng_tls.rng
        except AttributeError:
            rng = random.Random(self._seed * 1000003 + self._thread_ids.fetch_add(1))
            self._rng_tls.rng = rng
        lvl = 1
        while lvl < self.max_level and rng.random() < 0.5:
            lvl += 1
        return lvl

    # search

    def _find(self, key, e):
        """Returns per-level ``preds`` as ``(slot, birth, cell)`` and ``succs`` as ``(slot, birth)``."""
        while True:
            out = self._find_once(key, e)
            if out is not None:
                return out

    def _find_once(self, key, e):
        L = self.max_level
        preds = [None] * L
        succs = [None] * L
        pred, pb = self.HEAD, self._birth[self.HEAD]
        for lvl in range(self._height - 1, -1, -1):
            pc = self._read_next(pred, pb, lvl, e)
            if pc[0] & MARK_MASK:
                # pred is being removed; a CAS on its cell would wipe the mark
                return None
            curr, cb = self._deref(pc, e)
            while True:
                cc = self._read_next(curr, cb, lvl, e)
                while cc[0] & MARK_MASK:
                    succ, sb = self._deref(cc, e)
                    new = ((cc[0] & REF_MASK), pb if pb > sb else sb)
                    if not self._cas_next(pred, pb, lvl, pc, new):
                        return None
                    pc = new
                    curr, cb = succ, sb
                    cc = self._read_next(curr, cb, lvl, e)
                if self._read_key(curr, cb, e) < key:
                    pred, pb, pc = curr, cb, cc
                    curr, cb = self._deref(cc, e)
                else:
                    break
            preds[lvl] = (pred, pb, pc)
            succs[lvl] = (curr, cb)
        return preds, succs

    # updates

    def insert(self, key, ref, birth):
        for _ in range(self.retries):
            try:
                if self._upsert(key, ref, birth, self.alloc.epoch.value):
                    return
            except IndexRollback:
                pass
            except PoolExhausted:
                # the index is only a hint; skip the entry
                return

    update = insert

    def _upsert(self, key, ref, birth, e):
        top = self._random_level()
        if top > self._height:
            with self._height_lock:
                if top > self._height:
                    self._height = top
        preds, succs = self._find(key, e)
        node, node_b = succs[0]
        if self._read_key(node, node_b, e) == key:
            v = self._read_val(node, node_b, e)
            if v is not None and v[1] > birth:
                return True
            return self._cas_val(node, node_b, v, (ref, birth))

        s = self.alloc.take()
        nb = self.alloc.epoch.value
        cells = []
        for lvl in range(top):
            succ, sb = succs[lvl]
            cells.append((succ << SLOT_SHIFT, nb if nb > sb else sb))
        with self._locks[s & 63]:
            self._birth[s] = nb
            self._key[s] = key
            self._top[s] = top
            self._val[s] = (ref, birth)
            self._linked[s] = False
            self._next[s] = cells
        pred, pb, pc = preds[0]
        if not self._cas_next(pred, pb, 0, pc, (s << SLOT_SHIFT, pb if pb > nb else nb)):
            self.alloc.give(s)
            return False
        try:
            self._link_upper(s, nb, key, top, preds, succs, e)
        except IndexRollback:
            pass
        finally:
            self._linked[s] = True
        return True

    def _link_upper(self, s, nb, key, top, preds, succs, e):
        for lvl in range(1, top):
            while True:
                pred, pb, pc = preds[lvl]
                succ, sb = succs[lvl]
                want = succ << SLOT_SHIFT
                cur = self._next[s][lvl]
                if cur[0] & MARK_MASK:
                    return
                if cur[0] != want:
                    new = (want, nb if nb > sb else sb)
                    if not self._cas_next(s, nb, lvl, cur, new):
                        return
                if self._cas_next(pred, pb, lvl, pc, (s << SLOT_SHIFT, pb if pb > nb else nb)):
                    break
                preds, succs = self._find(key, e)
                if succs[0][0] != s:
                    # someone already removed the node
                    return

    def remove(self, key, ref=None):
        for _ in range(self.retries):
            try:
                if self._remove(key, ref, self.alloc.epoch.value):
                    return
            except IndexRollback:
                pass

    def _remove(self, key, ref, e):
        _, succs = self._find(key, e)
        node, node_b = succs[0]
        if self._read_key(node, node_b, e) != key:
            return True
        v = self._read_val(node, node_b, e)
        if v is None or (ref is not None and v[0] != ref):
            return True
        if not self._cas_val(node, node_b, v, None):
            return False
        if not self._linked[node]:
            # leave an empty entry; the inserter may still be linking it
            return True
        for lvl in range(self._top[node] - 1, -1, -1):
            while True:
                with self._locks[node & 63]:
                    cell = self._next[node][lvl] if self._birth[node] == node_b else None
                if cell is None:
                    # revived, removed and recycled by others meanwhile
                    return True
                if cell[0] & MARK_MASK:
                    if lvl == 0:
                        return True
                    break
                if self._cas_next(node, node_b, lvl, cell, (cell[0] | MARK_MASK, cell[1])):
                    break
        # this thread marked the bottom level and owns the node now
        while True:
            try:
                self._find(key, self.alloc.epoch.value)
                break
            except IndexRollback:
                pass
        self.alloc.give(node)
        return True

    # queries

    def find_pred(self, key):
        for _ in range(self.retries):
            try:
                return self._find_pred(key, self.alloc.epoch.value)
            except IndexRollback:
                pass
        return None

    def _find_pred(self, key, e):
        best = None
        pred, pb = self.HEAD, self._birth[self.HEAD]
        for lvl in range(self._height - 1, -1, -1):
            curr, cb = self._deref(self._read_next(pred, pb, lvl, e), e)
            while True:
                cc = self._read_next(curr, cb, lvl, e)
                if cc[0] & MARK_MASK:
                    curr, cb = self._deref(cc, e)
                    continue
                if self._read_key(curr, cb, e) >= key:
                    break
                pred, pb = curr, cb
                curr, cb = self._deref(cc, e)
            if pred != self.HEAD:
                v = self._read_val(pred, pb, e)
                if v is not None:
                    best = v
        return best

    def lookup(self, key):
        for _ in range(self.retries):
            try:
                _, succs = self._find(key, self.alloc.epoch.value)
                node, node_b = succs[0]
                e = self.alloc.epoch.value
                if self._read_key(node, node_b, e) != key:
                    return None
                return self._read_val(node, node_b, e)
            except IndexRollback:
                pass
        return None

    def entries(self):
        """Quiescent listing of ``(key, (ref, birth))`` at the bottom level."""
        out = []
        s = (self._next[self.HEAD][0][0] & REF_MASK) >> SLOT_SHIFT
        while s != self.TAIL:
            cell = self._next[s][0]
            if not cell[0] & MARK_MASK and self._val[s] is not None:
                out.append((self._key[s], self._val[s]))
            s = (cell[0] & REF_MASK) >> SLOT_SHIFT
        return out

    def __len__(self):
        return len(self.entries())


def make_index(spec, *, capacity, batch_size=DEFAULT_BATCH, seed=0):
    if spec is None or spec == "none":
        return None
    if isinstance(spec, Index):
        return spec
    if spec == "skiplist":
        return SkipListIndex(capacity, batch_size=batch_size, seed=seed)
    if spec == "dict":
        return DictIndex()
    raise ValueError(f"unknown index kind {spec!r}")
