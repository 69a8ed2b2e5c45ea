"""Linearizability checking for small map histories.

Depth-first search over linearization orders in the style of Wing and Gong,
memoising on (set of linearized operations, abstract map state) as Lowe
suggests. An operation may be linearized next only if it was invoked before
every not-yet-linearized operation responded.
"""

from dataclasses import dataclass

from ..words import NO_VAL
from .history import pair_operations


@dataclass
class Verdict:
    ok: bool
    order: list = None  # operation ids in a witness order, if ok
    explored: int = 0
    operations: int = 0

    @property
    def label(self):
        return "ACCEPT" if self.ok else "REJECT"

    def __bool__(self):
        return self.ok


def apply_op(state, op, args):
    """Run one operation on a frozen map state. Returns ``(result, new_state)``."""
    m = dict(state)
    if op == "insert":
        k, v = args
        if k in m:
            return m[k], state
        m[k] = v
        return NO_VAL, tuple(sorted(m.items()))
    if op == "remove":
        (k,) = args
        if k not in m:
            return NO_VAL, state
        v = m.pop(k)
        return v, tuple(sorted(m.items()))
    if op == "contains":
        (k,) = args
        return m.get(k, NO_VAL), state
    if op == "range_query":
        lo, hi = args
        return [(k, v) for k, v in state if lo <= k <= hi], state
    raise ValueError(f"unknown operation {op!r}")


def _same(result, expected):
    if isinstance(expected, list):
        return [tuple(x) for x in result] == expected
    return result == expected


def check_linearizable(history, initial=()):
    """Decide whether ``history`` (a list of HistoryEvent) is linearizable.

    ``initial`` is the map content before the first operation.
    Raises ``MalformedHistory`` for histories that are not well formed.
    """
    ops = pair_operations(history)
    n = len(ops)
    full = (1 << n) - 1
    start = tuple(sorted(initial))
    seen = set()
    explored = 0

    # stack entries: (done mask, state, order so far)
    stack = [(0, start, ())]
    while stack:
        done, state, order = stack.pop()
        if done == full:
            return Verdict(True, list(order), explored, n)
        if (done, state) in seen:
            continue
        seen.add((done, state))
        explored += 1
        horizon = min(o.responded for o in ops if not done >> o.id & 1)
        for o in ops:
            if done >> o.id & 1 or o.invoked > horizon:
                continue
            result, nxt = apply_op(state, o.op, o.args)
            if _same(o.result, result):
                stack.append((done | 1 << o.id, nxt, order + (o.id,)))
    return Verdict(False, None, explored, n)
