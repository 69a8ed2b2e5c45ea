"""Fixed-time throughput benchmark."""

import csv
import os
import random
import threading
import time
from dataclasses import asdict, dataclass, field, fields

from .core import VersionedList
from .reclaim import DEFAULT_BATCH, PoolExhausted

OP_CLASSES = ("insert", "remove", "contains", "range_query")


class BenchError(RuntimeError):
    pass


@dataclass
class WorkloadSpec:
    threads: int = 1
    duration: float = 1.0
    key_range: int = 1 << 16
    mix: tuple = (25, 25, 40, 10)
    rq_size: int = 256
    seed: int = 1
    index: str = "none"
    # the last rq_threads workers run range queries only
    rq_threads: int = 0
    pool_slots: int = None
    # per-thread operation cap; makes a run independent of timing
    max_ops: int = None

    def validate(self):
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.duration <= 0 and self.max_ops is None:
            raise ValueError("duration must be positive")
        if self.key_range < 2:
            raise ValueError("key range must be at least 2")
        if len(self.mix) != 4 or any(m < 0 for m in self.mix) or sum(self.mix) != 100:
            raise ValueError(f"mix must be four non-negative percentages summing to 100, got {self.mix}")
        if not 1 <= self.rq_size < self.key_range:
            raise ValueError("rq size must be at least 1 and below the key range")
        if self.index not in ("none", "skiplist"):
            raise ValueError(f"unknown index {self.index!r}")
        if not 0 <= self.rq_threads <= self.threads:
            raise ValueError("rq threads must be between 0 and threads")
        if self.max_ops is not None and self.max_ops < 1:
            raise ValueError("max ops must be positive")
        return self

    def slots(self):
        if self.pool_slots is not None:
            return self.pool_slots
        return 2 * (self.key_range + DEFAULT_BATCH * self.threads)


@dataclass
class BenchReport:
    inserts: int = 0
    removes: int = 0
    contains: int = 0
    range_queries: int = 0
    total_ops: int = 0
    elapsed_s: float = 0.0
    throughput: float = 0.0
    rollbacks: int = 0
    epoch_advances: int = 0
    peak_retired: int = 0
    final_size: int = 0
    per_thread: list = field(default_factory=list, repr=False)


def prefill(lst, spec, rng):
    """Insert key_range/2 distinct random keys.

    Keys go in descending order so each insert lands at the front of the
    list and prefill stays linear even without an index.
    """
    keys = rng.sample(range(1, spec.key_range + 1), spec.key_range // 2)
    for k in sorted(keys, reverse=True):
        lst.insert(k, rng.randint(1, 1 << 30))
    return keys


def _worker(lst, spec, tid, stop, out, errors):
    rng = random.Random(spec.seed * 1_000_003 + tid + 1)
    counts = [0, 0, 0, 0]
    kr = spec.key_range
    rq = spec.rq_size
    only_rq = tid >= spec.threads - spec.rq_threads
    weights = (0, 0, 0, 1) if only_rq else spec.mix
    cum = []
    acc = 0
    for w in weights:
        acc += w
        cum.append(acc)
    total = acc
    buf = []
    limit = spec.max_ops
    n = 0
    insert, remove, contains, rq_into = lst.insert, lst.remove, lst.contains, lst.range_query_into
    try:
        while not stop.is_set():
            if limit is not None and n >= limit:
                break
            r = rng.random() * total
            k = rng.randint(1, kr)
            if r < cum[0]:
                insert(k, rng.randint(1, 1 << 30))
                counts[0] += 1
            elif r < cum[1]:
                remove(k)
                counts[1] += 1
            elif r < cum[2]:
                contains(k)
                counts[2] += 1
            else:
                buf.clear()
                rq_into(k, min(k + rq - 1, kr), buf)
                counts[3] += 1
            n += 1
    except PoolExhausted as ex:
        errors.append(ex)
        stop.set()
    out[tid] = counts


def run_benchmark(spec, lst=None):
    """Prefill, run the workers for ``spec.duration`` seconds and report."""
    spec.validate()
    rng = random.Random(spec.seed)
    if lst is None:
        lst = VersionedList(spec.slots(), index=spec.index, seed=spec.seed)
    try:
        prefill(lst, spec, rng)
    except PoolExhausted as ex:
        raise BenchError(f"pool exhausted during prefill: {ex}") from ex

    stop = threading.Event()
    out = [None] * spec.threads
    errors = []
    workers = [threading.Thread(target=_worker, args=(lst, spec, t, stop, out, errors))
               for t in range(spec.threads)]
    t0 = time.perf_counter()
    for w in workers:
        w.start()
    if spec.max_ops is None:
        stop.wait(spec.duration)
        stop.set()
    for w in workers:
        w.join()
    elapsed = time.perf_counter() - t0
    if errors:
        raise BenchError(f"pool exhausted with {spec.slots()} slots: {errors[0]}; "
                         f"raise --pool-slots") from errors[0]

    rep = BenchReport(per_thread=out)
    rep.inserts = sum(c[0] for c in out)
    rep.removes = sum(c[1] for c in out)
    rep.contains = sum(c[2] for c in out)
    rep.range_queries = sum(c[3] for c in out)
    rep.total_ops = rep.inserts + rep.removes + rep.contains + rep.range_queries
    rep.elapsed_s = elapsed
    rep.throughput = rep.total_ops / elapsed if elapsed > 0 else 0.0
    st = lst.stats()
    rep.rollbacks = st["rollbacks"]
    rep.epoch_advances = st["epoch_advances"]
    rep.peak_retired = st["peak_garbage"]
    rep.final_size = len(lst)
    return rep


SPEC_COLUMNS = [f.name for f in fields(WorkloadSpec)]
REPORT_COLUMNS = [f.name for f in fields(BenchReport) if f.name != "per_thread"]


def csv_row(spec, report):
    row = asdict(spec)
    row["mix"] = ":".join(str(m) for m in spec.mix)
    rep = asdict(report)
    rep.pop("per_thread")
    rep["elapsed_s"] = round(rep["elapsed_s"], 4)
    rep["throughput"] = round(rep["throughput"], 1)
    row.update(rep)
    return row


def write_csv(path, spec, report):
    """Append one row, writing the header first if the file is new or empty."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SPEC_COLUMNS + REPORT_COLUMNS)
        if new:
            w.writeheader()
        w.writerow(csv_row(spec, report))


def parse_mix(text):
    parts = text.split(":")
    if len(parts) != 4:
        raise ValueError(f"mix must look like i:r:c:q, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"mix must be integers, got {text!r}") from None


def summary(spec, rep):
    return (f"threads={spec.threads} index={spec.index} mix={':'.join(map(str, spec.mix))} "
            f"keys={spec.key_range} ops={rep.total_ops} "
            f"({rep.inserts} ins, {rep.removes} rem, {rep.contains} con, {rep.range_queries} rq) "
            f"in {rep.elapsed_s:.2f}s = {rep.throughput:,.0f} ops/s; "
            f"rollbacks={rep.rollbacks} epoch_advances={rep.epoch_advances} "
            f"peak_retired={rep.peak_retired}")
