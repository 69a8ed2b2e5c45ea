"""Command line entry point: ``mvlist bench`` and ``mvlist verify``."""

import argparse
import json
import sys
import time

from .bench import BenchError, WorkloadSpec, parse_mix, run_benchmark, summary, write_csv
from .reclaim import PoolExhausted

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _emit(record, out):
    out.write(json.dumps(record, sort_keys=True) + "\n")
    out.flush()


# bench

def _bench(args, out):
    try:
        spec = WorkloadSpec(threads=args.threads, duration=args.duration_s,
                            key_range=args.key_range, mix=parse_mix(args.mix),
                            rq_size=args.rq_size, seed=args.seed, index=args.index,
                            rq_threads=args.rq_threads, pool_slots=args.pool_slots,
                            max_ops=args.ops).validate()
    except ValueError as ex:
        print(f"mvlist bench: {ex}", file=sys.stderr)
        return EXIT_USAGE
    try:
        rep = run_benchmark(spec)
    except BenchError as ex:
        print(f"mvlist bench: {ex}", file=sys.stderr)
        return EXIT_FAIL
    out.write(summary(spec, rep) + "\n")
    if args.csv:
        write_csv(args.csv, spec, rep)
    return EXIT_OK


# verify

def _verify_oracle(args, out):
    from .verify.stress import oracle_run
    failed = 0
    for seed in range(args.seed, args.seed + args.runs):
        t0 = time.perf_counter()
        div = oracle_run(seed, n_ops=args.ops or 10_000, key_range=args.key_range or 32,
                         index=args.index)
        rec = {"check": "oracle", "seed": seed, "index": args.index,
               "ok": div is None, "seconds": round(time.perf_counter() - t0, 3)}
        if div is not None:
            rec["divergence"] = repr(div)
            failed += 1
        _emit(rec, out)
    return failed


def _verify_linearize(args, out):
    from .verify import stress
    if args.mutant:
        run = {"no-flag": stress.no_flag_history,
               "eager-remove": stress.eager_remove_history}[args.mutant]
        _, verdict = run(index=args.index)
        # a mutant passes the check when the checker catches it
        _emit({"check": "linearize", "mutant": args.mutant, "index": args.index,
               "verdict": verdict.label, "ok": not verdict.ok}, out)
        return 0 if not verdict.ok else 1
    failed = 0
    for seed in range(args.seed, args.seed + args.runs):
        case = stress.random_history(seed, index=args.index, threads=args.threads,
                                     ops=args.ops, key_range=args.key_range,
                                     batch_size=args.batch_size)
        rec = {"check": "linearize", "index": args.index, **case.as_dict()}
        ok = case.verdict.ok and case.audit.ok and case.probe.ok
        rec["ok"] = ok
        failed += not ok
        _emit(rec, out)
    return failed


def _verify_probe(args, out):
    from .verify.stress import probe_after_run
    failed = 0
    for seed in range(args.seed, args.seed + args.runs):
        rep, lst = probe_after_run(seed, threads=args.threads or 4, ops=args.ops or 400,
                                   key_range=args.key_range or 16, index=args.index,
                                   batch_size=args.batch_size or 2)
        rec = {"check": "probe", "seed": seed, "index": args.index, **rep.as_dict()}
        failed += not rep.ok
        _emit(rec, out)
    return failed


def _verify_audit(args, out):
    from .verify.stress import forced_reuse
    failed = 0
    for seed in range(args.seed, args.seed + args.runs):
        rep = forced_reuse(args.batch_size or 1, threads=args.threads or 4,
                           ops=args.ops or 40_000, key_range=args.key_range or 32,
                           index=args.index, seed=seed)
        _emit({"check": "audit", "seed": seed, "index": args.index, "ok": rep.ok,
               **rep.as_dict()}, out)
        failed += not rep.ok
    return failed


VERIFY = {
    "oracle": _verify_oracle,
    "linearize": _verify_linearize,
    "probe": _verify_probe,
    "audit": _verify_audit,
}


def _verify(args, out):
    if args.runs < 1:
        print("mvlist verify: --runs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        failed = VERIFY[args.check](args, out)
    except PoolExhausted as ex:
        print(f"mvlist verify: {ex}", file=sys.stderr)
        return EXIT_FAIL
    _emit({"check": args.check, "summary": True, "failed": failed, "ok": failed == 0}, out)
    return EXIT_OK if failed == 0 else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="mvlist", description="Versioned lock-free ordered map tools.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a fixed-time throughput benchmark")
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--duration-s", type=float, default=1.0)
    b.add_argument("--key-range", type=int, default=1 << 16)
    b.add_argument("--mix", default="25:25:40:10", help="insert:remove:contains:rangequery percentages")
    b.add_argument("--rq-size", type=int, default=256)
    b.add_argument("--seed", type=int, default=1)
    b.add_argument("--index", choices=("none", "skiplist"), default="none")
    b.add_argument("--rq-threads", type=int, default=0,
                   help="number of workers that only run range queries")
    b.add_argument("--csv", metavar="PATH", help="append one result row to this CSV file")
    b.add_argument("--pool-slots", type=int, default=None)
    b.add_argument("--ops", type=int, default=None,
                   help="stop each worker after this many operations instead of on the timer")
    b.set_defaults(func=_bench)

    v = sub.add_parser("verify", help="run a checker and print JSON lines")
    v.add_argument("check", choices=sorted(VERIFY))
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--runs", type=int, default=1)
    v.add_argument("--threads", type=int, default=None)
    v.add_argument("--ops", type=int, default=None)
    v.add_argument("--key-range", type=int, default=None)
    v.add_argument("--index", choices=("none", "skiplist"), default="none")
    v.add_argument("--batch-size", type=int, default=None)
    v.add_argument("--mutant", choices=("no-flag", "eager-remove"), default=None,
                   help="linearize only: run a broken variant, succeed if it is rejected")
    v.set_defaults(func=_verify)
    return p


def main(argv=None, out=None):
    args = build_parser().parse_args(argv)
    return args.func(args, out or sys.stdout)


if __name__ == "__main__":
    sys.exit(main())
