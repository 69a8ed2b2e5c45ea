"""Small atomic cells.

CPython does not expose hardware compare-and-swap, so read-modify-write
operations take a short lock. Plain loads of an attribute or list item are
single bytecodes and need no lock.
"""

import threading

STRIPES = 64


class AtomicInt:
    __slots__ = ("value", "_lock")

    def __init__(self, value=0):
        self.value = value
        self._lock = threading.Lock()

    def load(self):
        return self.value

    def store(self, value):
        with self._lock:
            self.value = value

    def fetch_add(self, delta=1):
        """Add ``delta`` and return the previous value."""
        with self._lock:
            old = self.value
            self.value = old + delta
            return old

    def compare_and_set(self, expected, new):
        with self._lock:
            if self.value != expected:
                return False
            self.value = new
            return True

    def update_max(self, candidate):
        with self._lock:
            if candidate > self.value:
                self.value = candidate

    def __repr__(self):
        return f"AtomicInt({self.value})"


class AtomicRef:
    """Reference cell whose compare-and-set tests identity."""

    __slots__ = ("value", "_lock")

    def __init__(self, value=None):
        self.value = value
        self._lock = threading.Lock()

    def load(self):
        return self.value

    def compare_and_set(self, expected, new):
        with self._lock:
            if self.value is not expected:
                return False
            self.value = new
            return True


def make_stripes(n=STRIPES):
    return [threading.Lock() for _ in range(n)]
