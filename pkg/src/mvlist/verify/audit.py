"""Checks over the event stream of a ShadowLog."""

from collections import deque
from dataclasses import dataclass, field

from ..reclaim import DEFAULT_BATCH
from ..words import AUX_MASK


@dataclass
class AuditReport:
    stale: int = 0
    rolled_back: int = 0
    lifetimes: int = 0
    peak_garbage: int = 0
    garbage_bound: int = 0
    dead_link_writes: int = 0
    unrolled: list = field(default_factory=list)
    overlaps: list = field(default_factory=list)

    @property
    def ok(self):
        return (not self.unrolled and not self.overlaps and not self.dead_link_writes
                and self.peak_garbage <= self.garbage_bound)

    def as_dict(self):
        return {
            "ok": self.ok,
            "stale": self.stale,
            "rolled_back": self.rolled_back,
            "unrolled": len(self.unrolled),
            "lifetimes": self.lifetimes,
            "overlaps": len(self.overlaps),
            "dead_link_writes": self.dead_link_writes,
            "peak_garbage": self.peak_garbage,
            "garbage_bound": self.garbage_bound,
        }


class ShadowAuditor:
    """Incremental audit; pass ``auditor.feed`` as a ShadowLog sink.

    Checks that:

    * every stale access is followed, in the same thread, by a rollback
      before that thread's next effect or response;
    * per slot, lifetimes do not overlap and a new lifetime is born in a
      strictly later epoch than the previous one was retired in;
    * no compare-and-set replaces a marked or flagged next link;
    * retired-but-unrecycled slots never exceed ``batch_size * threads``.
    """

    def __init__(self, threads, batch_size=DEFAULT_BATCH, excerpt=8, keep=20):
        self.report = AuditReport(garbage_bound=batch_size * threads)
        self._excerpt = excerpt
        self._keep = keep
        self._pending = {}
        self._trail = {}
        self._live = {}
        self._last_retire = {}

    def _note(self, bucket, item):
        if len(bucket) < self._keep:
            bucket.append(item)

    def feed(self, ev):
        rep = self.report
        seq, tid, kind, slot, a, b = ev
        trail = self._trail.get(tid)
        if trail is None:
            trail = self._trail[tid] = deque(maxlen=self._excerpt)
        trail.append(ev)
        if kind == "stale":
            rep.stale += 1
            self._pending.setdefault(tid, ev)
        elif kind == "rollback":
            if self._pending.pop(tid, None) is not None:
                rep.rolled_back += 1
        elif kind in ("effect", "respond"):
            stale = self._pending.pop(tid, None)
            if stale is not None:
                rep.unrolled.append({"stale": stale, "effect": ev, "trail": list(trail)})
        elif kind == "alloc":
            rep.lifetimes += 1
            if slot in self._live:
                self._note(rep.overlaps, {"slot": slot, "live": self._live[slot], "alloc": ev})
            prev = self._last_retire.get(slot)
            if prev is not None and b <= prev[5]:
                self._note(rep.overlaps, {"slot": slot, "retired": prev, "alloc": ev,
                                          "reason": "born in the epoch it was retired in"})
            self._live[slot] = ev
        elif kind == "retire":
            cur = self._live.pop(slot, None)
            if cur is None or cur[4] != a:
                self._note(rep.overlaps, {"slot": slot, "retire": ev, "live": cur,
                                          "reason": "retired a lifetime that was not live"})
            self._last_retire[slot] = ev
        elif kind == "write":
            if a[0] & AUX_MASK:
                rep.dead_link_writes += 1
        elif kind == "garbage":
            if a > rep.peak_garbage:
                rep.peak_garbage = a


def audit_shadow_log(log, threads, batch_size=DEFAULT_BATCH):
    """Audit a complete ShadowLog. Returns an AuditReport."""
    auditor = ShadowAuditor(threads, batch_size)
    for ev in log.events:
        auditor.feed(ev)
    return auditor.report
