"""Structural invariant checks on a quiescent list."""

from dataclasses import dataclass, field

from ..reclaim import NodePool
from ..words import AUX_MASK, BOT, KEY_MAX, MARK_MASK, REF_MASK, SLOT_SHIFT


@dataclass
class Snapshot:
    """Copy of every slot of a list's pool."""

    key: list
    value: list
    state: list
    next: list
    prior: list
    head: int
    tail: int
    recycled: bool


def snapshot(lst):
    """Copy the pool of ``lst``. Only meaningful while no operation is running."""
    pool = lst.pool
    return Snapshot(list(pool._key), list(pool._value), list(pool._state), list(pool._next),
                    list(pool._prior), NodePool.HEAD_SLOT, NodePool.TAIL_SLOT,
                    pool.alloc.reused_batches.value > 0)


@dataclass
class ProbeReport:
    violations: list = field(default_factory=list)
    reachable: int = 0
    logical: list = field(default_factory=list)
    prior_walks: int = 0

    @property
    def ok(self):
        return not self.violations

    def as_dict(self):
        return {"ok": self.ok, "reachable": self.reachable, "logical": self.logical,
                "violations": self.violations[:10]}


def probe_structural_invariants(target):
    """Check a list (or a Snapshot) for the structural invariants.

    * keys strictly increase along next links and the walk ends at a
      KEY_MAX node with a null link;
    * no reachable node with a tagged next link has an unset timestamp;
    * the target of a prior link is not newer than its source;
    * prior chains end at the original tail. Once slots have been recycled
      a chain may instead stop at a link whose target was reborn, which is
      recognised by a birth epoch above the source's.
    """
    snap = target if isinstance(target, Snapshot) else snapshot(target)
    rep = ProbeReport()
    v = rep.violations
    n = len(snap.key)

    s = snap.head
    prev = None
    reachable = []
    while True:
        reachable.append(s)
        if len(reachable) > n:
            v.append({"check": "termination", "detail": "next links form a cycle"})
            break
        link = snap.next[s][0]
        if link & AUX_MASK and snap.state[s][0] == BOT:
            v.append({"check": "tagged-bot", "node": s, "key": snap.key[s]})
        if prev is not None and snap.key[prev] >= snap.key[s]:
            v.append({"check": "sorted", "pair": [prev, s],
                      "keys": [snap.key[prev], snap.key[s]]})
        nxt = (link & REF_MASK) >> SLOT_SHIFT
        if not nxt:
            if snap.key[s] != KEY_MAX:
                v.append({"check": "tail", "node": s, "key": snap.key[s]})
            break
        prev, s = s, nxt
    rep.reachable = len(reachable)
    rep.logical = [snap.key[s] for s in reachable[1:]
                   if snap.key[s] != KEY_MAX and snap.state[s][0] != BOT
                   and not snap.next[s][0] & MARK_MASK]

    done = set()
    for s in reachable:
        chain = []
        cur = s
        while True:
            if cur in done:
                break
            chain.append(cur)
            if len(chain) > n:
                v.append({"check": "prior-cycle", "start": s})
                break
            p = snap.prior[cur] >> SLOT_SHIFT
            if not p:
                if cur != snap.tail and cur != snap.head:
                    v.append({"check": "prior-end", "start": s, "end": cur})
                elif cur == snap.head and s != snap.head:
                    v.append({"check": "prior-end", "start": s, "end": cur})
                break
            ts, birth = snap.state[cur]
            pts, pbirth = snap.state[p]
            if pbirth > birth:
                if not snap.recycled:
                    v.append({"check": "prior-birth", "pair": [cur, p],
                              "births": [birth, pbirth]})
                break
            if ts != BOT and pts != BOT and pts > ts:
                v.append({"check": "prior-ts", "pair": [cur, p], "ts": [ts, pts]})
            cur = p
        rep.prior_walks += 1
        done.update(chain)
    return rep
