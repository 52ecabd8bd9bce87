"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--cells N] [--ts K] [--threads T] [--json PATH]

Times the fibering sums (one projection's worth of t evaluations) and the
per-cell densities for each kernel family, checks that both backends agree and
prints a table of best-of-``repeat`` wall times.
"""
import argparse
import json
import timeit

import numpy as np

from phinehari import kernels
from phinehari.nfunction import parse_family

FAMILIES = ["power:1.5", "sumpower:1.5,2.5", "aniso:1.5,2,2.5", "plog:1.5"]


def best_time(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def run(cells, n_ts, threads, repeat, seed=0):
    rng = np.random.default_rng(seed)
    g = np.abs(rng.standard_normal(cells)) * 2.0
    ts = np.geomspace(1e-6, 1e4, n_ts)
    backends = ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else [])
    kernels.set_threads(threads)
    rows = []
    for family in FAMILIES:
        nf = parse_family(family)
        logg = kernels.log_magnitudes(g)
        for kernel, call in (
            ("fiber_sums", lambda b: kernels.fiber_sums(nf, g, ts, backend=b, logg=logg)),
            ("densities", lambda b: kernels.densities(nf, g, backend=b)),
        ):
            ref = call("python")
            row = {"family": family, "kernel": kernel}
            for b in backends:
                err = float(np.max(np.abs(call(b) - ref) / np.maximum(np.abs(ref), 1e-300)))
                row[b] = best_time(lambda: call(b), repeat)
                row[f"{b}_max_rel_diff"] = err
            if "compiled" in row:
                row["speedup"] = row["python"] / row["compiled"]
            rows.append(row)
    return {"backend": kernels.BACKEND, "cells": cells, "ts": n_ts, "threads": threads, "rows": rows}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cells", type=int, default=64 * 64)
    parser.add_argument("--ts", type=int, default=256)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", metavar="PATH")
    args = parser.parse_args(argv)
    res = run(args.cells, args.ts, args.threads, args.repeat)
    print(f"cells={res['cells']} ts={res['ts']} threads={res['threads']} default backend={res['backend']}")
    print(f"{'family':<18} {'kernel':<11} {'python [ms]':>12} {'compiled [ms]':>14} {'speedup':>8} {'max rel diff':>13}")
    for r in res["rows"]:
        comp = f"{1e3 * r['compiled']:14.3f}" if "compiled" in r else f"{'n/a':>14}"
        speed = f"{r['speedup']:8.1f}" if "speedup" in r else f"{'':>8}"
        diff = f"{r.get('compiled_max_rel_diff', 0.0):13.1e}"
        print(f"{r['family']:<18} {r['kernel']:<11} {1e3 * r['python']:12.3f} {comp} {speed} {diff}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(res, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
