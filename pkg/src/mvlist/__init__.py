"""Lock-free ordered map with linearizable range queries and slot recycling."""

from .core import VersionedList, make_shadow_list
from .index import MAX_ATTEMPTS, DictIndex, Index, SkipListIndex, traversal_start
from .reclaim import NodePool, PoolExhausted, Rollback, ShadowLog, SlotAllocator, TracedNodePool
from .words import BOT, KEY_MAX, KEY_MIN, NO_VAL

__version__ = "0.1.0"

__all__ = [
    "BOT", "KEY_MAX", "KEY_MIN", "MAX_ATTEMPTS", "NO_VAL",
    "DictIndex", "Index", "NodePool", "PoolExhausted", "Rollback", "ShadowLog",
    "SkipListIndex", "SlotAllocator", "TracedNodePool", "VersionedList",
    "make_shadow_list", "traversal_start",
]
