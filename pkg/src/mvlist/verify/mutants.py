"""Deliberately broken list variants used as negative controls.

Both must be built traced (``traced=True``) since they add labelled steps.
"""

from ..core import VersionedList
from ..reclaim import Rollback
from ..words import MARK_MASK, REF_MASK


class NoFlagList(VersionedList):
    """Trim that skips freezing the node it replaces.

    Without the flag, an insert right after that node can land between the
    snapshot of its successor and the unlinking CAS, and is then lost.
    """

    def _trim(self, pred, pb, pw, victim, vb):
        pool = self._pool
        curr, cb = victim, vb
        cw = pool.read_next(curr, cb)
        while cw[0] & MARK_MASK:
            curr, _, cb = pool.deref_next(cw)
            cw = pool.read_next(curr, cb)
        pool.publish_ts(curr, cb)
        succ = cw[0] & REF_MASK
        sb = 0
        if succ:
            succ, _, sb = pool.deref_next(cw)
            pool.publish_ts(succ, sb)
        ckey = pool.read_key(curr, cb)
        cval = pool.read_value(curr, cb)
        new, nb = pool.allocate(ckey, cval, succ, sb, victim)
        pool._step("trim.before_cas")
        if pool.cas_next(pred, pw, (new, max(pb, nb))):
            pool.publish_ts(new, nb)
            self._retire_run(victim, curr, ckey, new, nb)
            return True
        pool.retire(new)
        return False


class EagerRemoveList(VersionedList):
    """Remove that returns as soon as it has marked, leaving the node linked.

    Range queries still see a marked node until it is unlinked, so a query
    issued after such a remove returned can report the removed key.
    """

    def remove(self, key):
        pool = self._pool
        while True:
            try:
                value = self._remove_mark(key, pool.epoch.value)
                break
            except Rollback:
                pool.note_rollback()
        pool.respond()
        return value


MUTANTS = {"no-flag": NoFlagList, "eager-remove": EagerRemoveList}
