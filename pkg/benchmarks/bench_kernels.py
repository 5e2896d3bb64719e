"""Compare the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--programs N] [--repeat R]
"""

from __future__ import annotations

import argparse
import time
from array import array

from statslice._kernels import purepy
from statslice.evaluation.corpus import generate_corpus
from statslice.interp import execute
from statslice.slicer import dynamic_dependence_graph
from statslice.tracing import memory_columns

try:
    from statslice._kernels import _scan as compiled
except ImportError:
    compiled = None


def scan_workload(entries):
    jobs = []
    for e in entries:
        for vec in e.inputs:
            trace = execute(e.program, vec)
            cols = memory_columns(e.program, trace)
            n_obj = len(cols.regions)
            jobs.append((cols, bytes([1]) * n_obj, array("i", range(n_obj)), len(e.program.stmts)))
    return jobs


def closure_workload(entries):
    jobs = []
    for e in entries:
        trace = execute(e.program, e.failing_input)
        insts, arcs = dynamic_dependence_graph(e.program, trace)
        arcs.sort(key=lambda a: a[0])
        indptr = array("i", [0]) * (len(insts) + 1)
        for src, _, _ in arcs:
            indptr[src + 1] += 1
        for i in range(len(insts)):
            indptr[i + 1] += indptr[i]
        jobs.append((indptr, array("i", (d for _, d, _ in arcs)), len(insts) - 1))
    return jobs


def timed(fn, jobs, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for job in jobs:
            fn(*job)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--programs", type=int, default=40)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    entries = generate_corpus(7, args.programs)
    scans = scan_workload(entries)
    closures = closure_workload(entries)

    def scan_with(mod):
        return lambda cols, mask, groups, n_stmts: mod.scan_deps(
            cols.ops, cols.stmts, cols.objs, cols.locs, cols.n_locs, mask, groups, n_stmts, len(groups)
        )

    rows = [("scan_deps", scans, scan_with), ("closure", closures, lambda mod: mod.closure)]
    print(f"{'kernel':<10} {'jobs':>6} {'pure (ms)':>10} {'compiled (ms)':>14} {'speedup':>8}")
    for name, jobs, bind in rows:
        pure = timed(bind(purepy), jobs, args.repeat)
        if compiled is None:
            print(f"{name:<10} {len(jobs):>6} {pure * 1e3:>10.2f} {'n/a':>14} {'n/a':>8}")
            continue
        fast = timed(bind(compiled), jobs, args.repeat)
        print(f"{name:<10} {len(jobs):>6} {pure * 1e3:>10.2f} {fast * 1e3:>14.2f} {pure / fast:>7.1f}x")


if __name__ == "__main__":
    main()
