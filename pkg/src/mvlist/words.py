"""Word-level constants and tagged-link helpers.

A link is a node reference (``slot << SLOT_SHIFT``) whose two low bits carry
the mark and flag tags. References are 16-aligned, so the tags never collide
with address bits.
"""

KEY_MIN = -(1 << 63)
KEY_MAX = (1 << 63) - 1
NO_VAL = 0

# timestamp that has not been published yet
BOT = 1
INITIAL_TS = 2

SLOT_SHIFT = 4
NULL = 0

MARK_MASK = 0x1
FLAG_MASK = 0x2
AUX_MASK = MARK_MASK | FLAG_MASK
REF_MASK = ~AUX_MASK


def ref_of(slot):
    return slot << SLOT_SHIFT


def slot_of(link):
    return link >> SLOT_SHIFT


def get_ref(link):
    """Strip the tag bits from a link."""
    return link & REF_MASK


def mark(link):
    return link | MARK_MASK


def flag(link):
    return link | FLAG_MASK


def is_marked(link):
    return bool(link & MARK_MASK)


def is_flagged(link):
    return bool(link & FLAG_MASK)


def is_marked_or_flagged(link):
    return bool(link & AUX_MASK)


def check_key(key):
    if not isinstance(key, int):
        raise TypeError(f"key must be an int, got {type(key).__name__}")
    if not KEY_MIN < key < KEY_MAX:
        raise ValueError(f"key {key} outside the open interval (KEY_MIN, KEY_MAX)")


def check_value(value):
    if not isinstance(value, int):
        raise TypeError(f"value must be an int, got {type(value).__name__}")
    if value == NO_VAL:
        raise ValueError("NO_VAL cannot be stored")
