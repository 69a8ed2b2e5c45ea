import threading

import pytest

from mvlist.atomics import AtomicInt, AtomicRef
from mvlist.words import (BOT, INITIAL_TS, KEY_MAX, KEY_MIN, NO_VAL, check_key, check_value,
                          flag, get_ref, is_flagged, is_marked, is_marked_or_flagged, mark, ref_of,
                          slot_of)


def test_reserved_constants():
    assert (NO_VAL, BOT, INITIAL_TS) == (0, 1, 2)
    assert KEY_MIN == -2**63 and KEY_MAX == 2**63 - 1


def test_tag_bits():
    addr = ref_of(7)
    assert get_ref(addr | 0x1) == addr
    assert is_marked_or_flagged(addr | 0x2)
    assert not is_marked(addr)
    assert is_marked(mark(addr)) and not is_flagged(mark(addr))
    assert is_flagged(flag(addr)) and not is_marked(flag(addr))
    assert slot_of(mark(addr)) == 7


@pytest.mark.parametrize("key", [KEY_MIN, KEY_MAX])
def test_sentinel_keys_rejected(key):
    with pytest.raises(ValueError):
        check_key(key)


def test_bad_types_rejected():
    with pytest.raises(TypeError):
        check_key(1.5)
    with pytest.raises(ValueError):
        check_value(NO_VAL)
    check_key(KEY_MIN + 1)
    check_key(KEY_MAX - 1)


def test_fetch_add_returns_distinct_values():
    c = AtomicInt(2)
    seen = []
    lock = threading.Lock()

    def work():
        mine = [c.fetch_add(1) for _ in range(2000)]
        with lock:
            seen.extend(mine)

    ts = [threading.Thread(target=work) for _ in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert sorted(seen) == list(range(2, 2 + 8000))
    assert c.load() == 8002


def test_compare_and_set():
    c = AtomicInt(5)
    assert not c.compare_and_set(4, 9)
    assert c.compare_and_set(5, 9) and c.load() == 9
    c.update_max(3)
    assert c.load() == 9
    c.update_max(11)
    assert c.load() == 11
    box = [1, 2]
    r = AtomicRef(box)
    assert not r.compare_and_set([1, 2], None)  # identity, not equality
    assert r.compare_and_set(box, None) and r.load() is None
