"""Sequential reference map and random operation scripts."""

import bisect
import random

from ..words import NO_VAL

OPS = ("insert", "remove", "contains", "range_query")


class OracleMap:
    """Plain sorted map with the same operation results as the concurrent list."""

    def __init__(self, items=()):
        self._map = {}
        self._keys = []
        for k, v in items:
            self.insert(k, v)

    def insert(self, key, value):
        old = self._map.get(key)
        if old is not None:
            return old
        self._map[key] = value
        bisect.insort(self._keys, key)
        return NO_VAL

    def remove(self, key):
        old = self._map.pop(key, None)
        if old is None:
            return NO_VAL
        del self._keys[bisect.bisect_left(self._keys, key)]
        return old

    def contains(self, key):
        return self._map.get(key, NO_VAL)

    def range_query(self, low, high):
        if low > high:
            raise ValueError(f"empty range: low {low} > high {high}")
        i = bisect.bisect_left(self._keys, low)
        j = bisect.bisect_right(self._keys, high)
        return [(k, self._map[k]) for k in self._keys[i:j]]

    def items(self):
        return [(k, self._map[k]) for k in self._keys]

    def __len__(self):
        return len(self._keys)

    def apply(self, op, args):
        return getattr(self, op)(*args)


def random_op(rng, key_range, mix=(30, 30, 30, 10), rq_size=None, values=None):
    """Draw one ``(op, args)`` with keys in ``1..key_range``."""
    op = rng.choices(OPS, weights=mix)[0]
    k = rng.randint(1, key_range)
    if op == "insert":
        v = next(values) if values is not None else rng.randint(1, 1 << 30)
        return op, (k, v)
    if op == "range_query":
        size = rq_size or max(1, key_range // 4)
        return op, (k, min(key_range, k + size - 1))
    return op, (k,)


def random_script(seed, n_ops, key_range, mix=(30, 30, 30, 10)):
    rng = random.Random(seed)
    return [random_op(rng, key_range, mix) for _ in range(n_ops)]


def replay(target, script):
    """Run a script against any object with the map operations; returns the results."""
    return [getattr(target, op)(*args) for op, args in script]


def first_divergence(script, got, want):
    for i, (g, w) in enumerate(zip(got, want)):
        if g != w:
            op, args = script[i]
            return {"step": i, "op": op, "args": list(args), "got": g, "want": w}
    if len(got) != len(want):
        return {"step": min(len(got), len(want)), "op": None, "args": [], "got": None, "want": None}
    return None
