"""Cooperative scheduler for traced lists.

Workers are real threads, but only the one holding the baton runs. The
baton can change hands only inside ``hook(label)``, which a traced pool calls
before every shared access, or at operation boundaries. A policy object
decides who runs next, so a seed (or a script) fully determines the
interleaving.
"""

import random
import threading
from dataclasses import dataclass

from .history import Recorder


class SchedulerTimeout(RuntimeError):
    pass


class RandomPolicy:
    """Switch to a random live worker with probability ``switch_prob`` at each step."""

    def __init__(self, seed=0, switch_prob=0.25):
        self.rng = random.Random(seed)
        self.switch_prob = switch_prob

    def first(self, sched):
        return self.rng.choice(sched.live)

    def on_step(self, sched, tid, label):
        if len(sched.live) > 1 and self.rng.random() < self.switch_prob:
            return self.rng.choice(sched.live)
        return None

    def on_op_end(self, sched, tid):
        return None

    def on_exit(self, sched, tid):
        return self.rng.choice(sched.live)


class SoloPolicy(RandomPolicy):
    """Random interleaving with occasional solo windows.

    With probability ``solo_prob`` per step (until ``windows`` have been
    opened) every worker except the current one is frozen, and the current
    one runs alone until its operation completes. ``results`` collects the
    number of steps each window took; a window that exceeds ``limit`` steps
    is recorded as None and counted in ``timeouts``.
    """

    def __init__(self, seed=0, switch_prob=0.25, solo_prob=0.01, windows=100,
                 limit=1_000_000):
        super().__init__(seed, switch_prob)
        self.solo_prob = solo_prob
        self.windows = windows
        self.limit = limit
        self.solo = None
        self.solo_steps = 0
        self.results = []
        self.timeouts = 0

    def on_step(self, sched, tid, label):
        if self.solo is not None:
            self.solo_steps += 1
            if self.solo_steps > self.limit:
                self.results.append(None)
                self.timeouts += 1
                self.solo = None
            return None
        if len(self.results) < self.windows and self.rng.random() < self.solo_prob:
            self.solo = tid
            self.solo_steps = 0
            return None
        return super().on_step(sched, tid, label)

    def on_op_end(self, sched, tid):
        if self.solo == tid:
            self.results.append(self.solo_steps)
            self.solo = None
        return None


@dataclass
class Directive:
    """Run ``thread`` until it is about to take step ``until`` for the ``count``-th
    time, or until its current operation finishes when ``until`` is None."""

    thread: int
    until: str = None
    count: int = 1


class ScriptPolicy:
    """Follow a fixed list of directives, then run the remaining workers in order."""

    def __init__(self, directives):
        self.todo = [d if isinstance(d, Directive) else Directive(*d) for d in directives]
        self.hits = 0

    def _next(self, sched):
        while self.todo and self.todo[0].thread not in sched.live:
            self.todo.pop(0)
        return self.todo[0].thread if self.todo else sched.live[0]

    def first(self, sched):
        return self._next(sched)

    def on_step(self, sched, tid, label):
        if not self.todo:
            return None
        d = self.todo[0]
        if d.thread == tid and d.until is not None and label == d.until:
            self.hits += 1
            if self.hits >= d.count:
                self.todo.pop(0)
                self.hits = 0
                return self._next(sched)
        return None

    def on_op_end(self, sched, tid):
        if self.todo and self.todo[0].thread == tid and self.todo[0].until is None:
            self.todo.pop(0)
            self.hits = 0
            return self._next(sched)
        return None

    def on_exit(self, sched, tid):
        if self.todo and self.todo[0].thread == tid:
            self.todo.pop(0)
            self.hits = 0
        return self._next(sched)


class Scheduler:
    def __init__(self, policy=None, *, seed=0, max_steps=20_000_000):
        self.policy = policy if policy is not None else RandomPolicy(seed)
        self.max_steps = max_steps
        self.steps = 0
        self.live = []
        self.errors = []
        self._cv = threading.Condition()
        self._turn = None
        self._tls = threading.local()

    def hook(self, label):
        tid = getattr(self._tls, "tid", None)
        if tid is None:
            return
        self.steps += 1
        if self.steps > self.max_steps:
            raise SchedulerTimeout(f"more than {self.max_steps} steps")
        nxt = self.policy.on_step(self, tid, label)
        if nxt is not None and nxt != tid:
            self._switch(tid, nxt)

    def op_end(self):
        tid = self._tls.tid
        nxt = self.policy.on_op_end(self, tid)
        if nxt is not None and nxt != tid:
            self._switch(tid, nxt)

    def _switch(self, me, to):
        with self._cv:
            self._turn = to
            self._cv.notify_all()
            while self._turn != me:
                self._cv.wait()

    def _finish(self, me):
        with self._cv:
            self.live.remove(me)
            self._turn = self.policy.on_exit(self, me) if self.live else None
            self._cv.notify_all()

    def run(self, bodies, timeout=600.0):
        """Run ``bodies[i](i)`` on worker ``i`` under the policy."""
        self.live = list(range(len(bodies)))
        if not bodies:
            return

        def worker(tid, body):
            self._tls.tid = tid
            with self._cv:
                while self._turn != tid:
                    self._cv.wait()
            try:
                body(tid)
            except BaseException as ex:  # surfaced after join
                self.errors.append((tid, ex))
            finally:
                self._tls.tid = None
                self._finish(tid)

        self._turn = self.policy.first(self)
        threads = [threading.Thread(target=worker, args=(i, b), daemon=True)
                   for i, b in enumerate(bodies)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout)
            if t.is_alive():
                raise SchedulerTimeout(f"workers still running after {timeout} s")
        if self.errors:
            raise self.errors[0][1]

    def run_ops(self, target, scripts, recorder=None):
        """Run per-thread lists of ``(op, args)`` and return the recorded history."""
        rec = recorder if recorder is not None else Recorder()

        def body(tid):
            for op, args in scripts[tid]:
                self.hook("op.begin")
                rec.call(tid, target, op, args)
                self.op_end()

        self.run([body] * len(scripts))
        return rec.history()


def attach(lst, sched):
    lst.set_step_hook(sched.hook)
    return sched
