"""Concurrent operation histories."""

import itertools
import threading
from dataclasses import dataclass, field


@dataclass(frozen=True)
class HistoryEvent:
    thread: int
    kind: str  # "invoke" or "respond"
    op: str
    args: tuple
    result: object
    seq: int


@dataclass
class Operation:
    """An invoke/respond pair."""

    thread: int
    op: str
    args: tuple
    result: object
    invoked: int
    responded: int
    id: int = field(default=0)


class MalformedHistory(ValueError):
    pass


class Recorder:
    """Per-thread append-only logs merged by a global sequence counter."""

    def __init__(self):
        self._seq = itertools.count()
        self._lock = threading.Lock()
        self._logs = {}

    def _log(self, thread):
        log = self._logs.get(thread)
        if log is None:
            with self._lock:
                log = self._logs.setdefault(thread, [])
        return log

    def call(self, thread, target, op, args):
        log = self._log(thread)
        log.append(HistoryEvent(thread, "invoke", op, tuple(args), None, next(self._seq)))
        result = getattr(target, op)(*args)
        log.append(HistoryEvent(thread, "respond", op, tuple(args), result, next(self._seq)))
        return result

    def history(self):
        events = [e for log in self._logs.values() for e in log]
        events.sort(key=lambda e: e.seq)
        return events


def pair_operations(history):
    """Turn a well-formed event list into operations; raises MalformedHistory."""
    pending = {}
    ops = []
    seen = set()
    last = None
    for e in history:
        if e.kind not in ("invoke", "respond"):
            raise MalformedHistory(f"unknown event kind {e.kind!r}")
        if e.seq in seen:
            raise MalformedHistory(f"duplicate sequence number {e.seq}")
        seen.add(e.seq)
        if last is not None and e.seq < last:
            raise MalformedHistory("events are not ordered by sequence number")
        last = e.seq
        if e.kind == "invoke":
            if e.thread in pending:
                raise MalformedHistory(f"thread {e.thread} invoked twice without a response")
            pending[e.thread] = e
        else:
            inv = pending.pop(e.thread, None)
            if inv is None:
                raise MalformedHistory(f"thread {e.thread} responded without an invoke")
            if inv.op != e.op or tuple(inv.args) != tuple(e.args):
                raise MalformedHistory(f"thread {e.thread} response does not match its invoke")
            ops.append(Operation(e.thread, e.op, tuple(e.args), e.result, inv.seq, e.seq,
                                 len(ops)))
    if pending:
        raise MalformedHistory(f"threads {sorted(pending)} have pending invocations")
    return ops
