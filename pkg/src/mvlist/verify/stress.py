"""Drivers that exercise a list and feed the checkers."""

import contextlib
import itertools
import random
import sys
import threading
import time
from dataclasses import dataclass, field

from ..core import VersionedList
from ..reclaim import ShadowLog
from .audit import ShadowAuditor, audit_shadow_log
from .linearize import check_linearizable
from .mutants import EagerRemoveList, NoFlagList
from .oracle import OracleMap, first_divergence, random_op, random_script, replay
from .probe import probe_structural_invariants
from .sched import Directive, RandomPolicy, Scheduler, ScriptPolicy, SoloPolicy


@contextlib.contextmanager
def switch_interval(seconds):
    """Make the interpreter hand the GIL over more often while stressing."""
    old = sys.getswitchinterval()
    sys.setswitchinterval(seconds)
    try:
        yield
    finally:
        sys.setswitchinterval(old)


def pool_size(key_range, threads, batch_size):
    return 2 * (key_range + batch_size * threads) + 8


# sequential oracle

def oracle_run(seed, n_ops=10_000, key_range=32, index="none"):
    """Replay a random script on a fresh list and on the oracle.

    Returns None when every result matches, else the first divergence.
    """
    script = random_script(seed, n_ops, key_range)
    lst = VersionedList(pool_size(key_range, 1, 64), index=index, seed=seed)
    got = replay(lst, script)
    want = replay(OracleMap(), script)
    return first_divergence(script, got, want)


# small concurrent histories

@dataclass
class HistoryCase:
    seed: int
    threads: int
    key_range: int
    scripts: list
    history: list = None
    verdict: object = None
    audit: object = None
    probe: object = None

    def as_dict(self):
        out = {"seed": self.seed, "threads": self.threads, "key_range": self.key_range,
               "ops": sum(len(s) for s in self.scripts),
               "verdict": self.verdict.label if self.verdict is not None else None}
        if self.audit is not None:
            out["audit"] = self.audit.as_dict()
        if self.probe is not None:
            out["probe_ok"] = self.probe.ok
        return out


def random_scripts(rng, threads, total, key_range):
    values = itertools.count(1)
    scripts = [[] for _ in range(threads)]
    for _ in range(total):
        scripts[rng.randrange(threads)].append(random_op(rng, key_range, values=values))
    return scripts


def random_history(seed, *, index="none", threads=None, ops=None, key_range=None,
                   batch_size=None, switch_prob=None, audit=True, probe=True):
    """Run one small random history under the cooperative scheduler and check it."""
    rng = random.Random(seed)
    threads = threads or rng.randint(2, 4)
    key_range = key_range or rng.randint(8, 16)
    total = ops or rng.randint(10, 40)
    batch_size = batch_size or rng.choice((1, 2, 4))
    switch_prob = switch_prob if switch_prob is not None else rng.choice((0.1, 0.3, 0.6))
    scripts = random_scripts(rng, threads, total, key_range)

    log = ShadowLog() if audit else None
    lst = VersionedList(pool_size(key_range, threads, batch_size), index=index,
                        batch_size=batch_size, traced=True, shadow=log, seed=seed)
    sched = Scheduler(RandomPolicy(seed, switch_prob))
    lst.set_step_hook(sched.hook)
    case = HistoryCase(seed, threads, key_range, scripts)
    case.history = sched.run_ops(lst, scripts)
    lst.set_step_hook(None)
    case.verdict = check_linearizable(case.history)
    if audit:
        case.audit = audit_shadow_log(log, threads, batch_size)
    if probe:
        case.probe = probe_structural_invariants(lst)
    return case


# negative controls

def no_flag_history(index="none"):
    """Lose an insert through an unfrozen trim.

    Thread 0 removes 3 from {3, 5} and stops just before the trim swaps in a
    copy of 5. Thread 1 then inserts 7 behind 5 and finishes. When thread 0
    resumes, the copy of 5 still points at the tail, so 7 disappears.
    """
    lst = NoFlagList(256, index=index, traced=True)
    scripts = [
        [("insert", (3, 30)), ("insert", (5, 50)), ("remove", (3,))],
        [("insert", (7, 70)), ("contains", (7,))],
    ]
    plan = [
        Directive(0, "trim.before_cas"),
        Directive(1, None),
        Directive(0, None),
        Directive(1, None),
    ]
    sched = Scheduler(ScriptPolicy(plan))
    lst.set_step_hook(sched.hook)
    history = sched.run_ops(lst, scripts)
    return history, check_linearizable(history)


def eager_remove_history(index="none"):
    """A range query after an eager remove still sees the removed key."""
    lst = EagerRemoveList(256, index=index, traced=True)
    scripts = [[("insert", (2, 20)), ("insert", (5, 50)), ("remove", (5,)),
                ("range_query", (1, 10))]]
    sched = Scheduler(RandomPolicy(0, 0.0))
    lst.set_step_hook(sched.hook)
    history = sched.run_ops(lst, scripts)
    return history, check_linearizable(history)


def same_schedule_on_correct_list(index="none"):
    """The no-flag schedule replayed on the real list; the flag blocks the insert."""
    lst = VersionedList(256, index=index, traced=True)
    scripts = [
        [("insert", (3, 30)), ("insert", (5, 50)), ("remove", (3,))],
        [("insert", (7, 70)), ("contains", (7,))],
    ]
    # thread 0 allocates once per insert and once in the trim, so its third
    # allocation is the replacement copy, after the flag and before the swap
    plan = [Directive(0, "alloc", 3), Directive(1, None), Directive(0, None),
            Directive(1, None)]
    sched = Scheduler(ScriptPolicy(plan))
    lst.set_step_hook(sched.hook)
    history = sched.run_ops(lst, scripts)
    return history, check_linearizable(history)


# range snapshot ping-pong

@dataclass
class PingPongReport:
    duration: float
    queries: int = 0
    toggles: int = 0
    # pair A is toggled insert-first (never empty), pair B remove-first
    # (never full)
    a_neither: int = 0
    a_both: int = 0
    b_neither: int = 0
    b_both: int = 0

    @property
    def impossible(self):
        """Results showing a state the pair never had."""
        return self.a_neither + self.b_both

    @property
    def not_exactly_one(self):
        return self.a_neither + self.a_both + self.b_neither + self.b_both

    def as_dict(self):
        return {"duration_s": self.duration, "queries": self.queries, "toggles": self.toggles,
                "a_neither": self.a_neither, "a_both": self.a_both,
                "b_neither": self.b_neither, "b_both": self.b_both,
                "impossible": self.impossible, "not_exactly_one": self.not_exactly_one}


PAIR_A = (10, 20)
PAIR_B = (30, 40)


def ping_pong(duration=10.0, writers=2, readers=4, index="none", interval=5e-5):
    """Writers move a token back and forth between two keys; readers scan both.

    Writer 0 owns pair A and always inserts the new key before removing the
    old one, so at every instant one or two of its keys are present. Writer 1
    owns pair B and removes first, so zero or one are present. A snapshot
    can therefore never show pair A empty or pair B full.
    """
    if writers != 2:
        raise ValueError("the ping-pong pattern uses exactly two writers")
    lst = VersionedList(pool_size(64, writers + readers, 64), index=index)
    lst.insert(PAIR_A[0], 1)
    lst.insert(PAIR_B[0], 1)
    rep = PingPongReport(duration)
    stop = threading.Event()
    counts = []

    def writer(pair, insert_first):
        here, there = pair
        n = 0
        while not stop.is_set():
            if insert_first:
                lst.insert(there, n + 2)
                lst.remove(here)
            else:
                lst.remove(here)
                lst.insert(there, n + 2)
            here, there = there, here
            n += 1
        counts.append(("w", n))

    def reader():
        c = [0, 0, 0, 0, 0]
        out = []
        while not stop.is_set():
            out.clear()
            lst.range_query_into(1, 50, out)
            keys = {k for k, _ in out}
            na = (PAIR_A[0] in keys) + (PAIR_A[1] in keys)
            nb = (PAIR_B[0] in keys) + (PAIR_B[1] in keys)
            c[0] += 1
            c[1] += na == 0
            c[2] += na == 2
            c[3] += nb == 0
            c[4] += nb == 2
        counts.append(("r", c))

    threads = [threading.Thread(target=writer, args=(PAIR_A, True)),
               threading.Thread(target=writer, args=(PAIR_B, False))]
    threads += [threading.Thread(target=reader) for _ in range(readers)]
    with switch_interval(interval):
        for t in threads:
            t.start()
        time.sleep(duration)
        stop.set()
        for t in threads:
            t.join()
    for kind, c in counts:
        if kind == "w":
            rep.toggles += c
        else:
            rep.queries += c[0]
            rep.a_neither += c[1]
            rep.a_both += c[2]
            rep.b_neither += c[3]
            rep.b_both += c[4]
    return rep


# forced reuse with shadow auditing

@dataclass
class ReuseReport:
    batch_size: int
    threads: int
    ops: int
    seconds: float = 0.0
    audit: object = None
    stats: dict = field(default_factory=dict)
    probe_ok: bool = True

    @property
    def ok(self):
        return self.audit.ok and self.probe_ok

    def as_dict(self):
        return {"batch_size": self.batch_size, "threads": self.threads, "ops": self.ops,
                "seconds": round(self.seconds, 2), "probe_ok": self.probe_ok,
                **self.audit.as_dict(), **{f"pool_{k}": v for k, v in self.stats.items()}}


def forced_reuse(batch_size, threads=4, ops=1_000_000, key_range=32, index="none", seed=1,
                 interval=2e-5):
    """Free-running threads on a pool barely larger than the live set.

    Events stream into a ShadowAuditor, so memory stays flat however long
    the run is.
    """
    auditor = ShadowAuditor(threads, batch_size)
    log = ShadowLog(sink=auditor.feed)
    lst = VersionedList(pool_size(key_range, threads, batch_size), index=index,
                        batch_size=batch_size, shadow=log, seed=seed)
    per_thread = ops // threads
    errors = []

    def worker(tid):
        rng = random.Random(seed * 7919 + tid)
        values = itertools.count(1)
        try:
            for _ in range(per_thread):
                op, args = random_op(rng, key_range, (25, 25, 40, 10), values=values)
                getattr(lst, op)(*args)
        except BaseException as ex:
            errors.append(ex)

    rep = ReuseReport(batch_size, threads, per_thread * threads)
    ts = [threading.Thread(target=worker, args=(i,)) for i in range(threads)]
    t0 = time.perf_counter()
    with switch_interval(interval):
        for t in ts:
            t.start()
        for t in ts:
            t.join()
    rep.seconds = time.perf_counter() - t0
    if errors:
        raise errors[0]
    rep.audit = auditor.report
    rep.stats = lst.stats()
    rep.probe_ok = probe_structural_invariants(lst).ok
    return rep


# lock-freedom proxy

@dataclass
class SoloReport:
    windows: int = 0
    timeouts: int = 0
    max_steps: int = 0
    rounds: int = 0
    steps: list = field(default_factory=list)

    @property
    def ok(self):
        return self.timeouts == 0

    def as_dict(self):
        return {"windows": self.windows, "timeouts": self.timeouts, "max_steps": self.max_steps,
                "rounds": self.rounds}


def lock_freedom(windows=100, limit=1_000_000, threads=4, key_range=16, ops_per_thread=200,
                 seed=1, index="none", batch_size=4):
    """Freeze all but one thread at random points and let the survivor finish its operation."""
    rep = SoloReport()
    rnd = 0
    while rep.windows < windows:
        rng = random.Random(seed * 1000 + rnd)
        scripts = [[random_op(rng, key_range, values=itertools.count(1 + 10**6 * t))
                    for _ in range(ops_per_thread)] for t in range(threads)]
        policy = SoloPolicy(seed * 1000 + rnd, switch_prob=0.3, solo_prob=0.002,
                            windows=windows - rep.windows, limit=limit)
        lst = VersionedList(pool_size(key_range, threads, batch_size), index=index,
                            batch_size=batch_size, traced=True, seed=seed)
        sched = Scheduler(policy)
        lst.set_step_hook(sched.hook)
        sched.run_ops(lst, scripts)
        for r in policy.results:
            rep.windows += 1
            if r is None:
                rep.timeouts += 1
            else:
                rep.steps.append(r)
                rep.max_steps = max(rep.max_steps, r)
        rnd += 1
    rep.rounds = rnd
    return rep


# quiescent probing after concurrent work

def probe_after_run(seed, threads=4, ops=400, key_range=16, index="none", batch_size=2):
    rng = random.Random(seed)
    scripts = random_scripts(rng, threads, ops, key_range)
    lst = VersionedList(pool_size(key_range, threads, batch_size), index=index,
                        batch_size=batch_size, traced=True, seed=seed)
    sched = Scheduler(RandomPolicy(seed, 0.3))
    lst.set_step_hook(sched.hook)
    sched.run_ops(lst, scripts)
    lst.set_step_hook(None)
    return probe_structural_invariants(lst), lst
