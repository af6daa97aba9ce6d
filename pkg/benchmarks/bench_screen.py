"""Screening throughput of the compiled and numpy kernels.

Usage: python benchmarks/bench_screen.py [--length 24] [--batch 20000] [--rules 1,2,4]

Candidates are random echo-paired label arrays with uniform durations.  Both
backends screen the same batch; the script checks that pass flags agree and
prints candidates per second.
"""
import argparse
import time

import numpy as np

from seqdesign.screening import available_backends, screen_batch
from seqdesign.search import SearchConfig, StructureConstraints, candidate_blocks


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--length", type=int, default=24)
    ap.add_argument("--batch", type=int, default=20000)
    ap.add_argument("--rules", default="1,2,4")
    ap.add_argument("--tau-p-ratio", type=float, default=0.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rules = tuple(int(x) for x in args.rules.split(","))
    cfg = SearchConfig(constraints=StructureConstraints(args.length, True, True), budget=args.batch, seed=0)
    labels = np.concatenate([b for _, b in candidate_blocks(cfg)])
    tau = np.ones(labels.shape)
    tau_p = args.tau_p_ratio
    flags = {}
    print(f"length={args.length} batch={len(labels)} rules={rules} tau_p={tau_p}")
    for name in available_backends():
        best = float("inf")
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            res = screen_batch(labels, tau, tau_p, rules, backend=name)
            best = min(best, time.perf_counter() - t0)
        flags[name] = res.passed
        print(f"{name:9s} {len(labels) / best:12.0f} candidates/s  ({best * 1e3:.1f} ms, {int(res.passed.sum())} pass)")
    names = list(flags)
    for other in names[1:]:
        same = np.array_equal(flags[names[0]], flags[other])
        print(f"pass flags {names[0]} vs {other}: {'identical' if same else 'DIFFER'}")


if __name__ == "__main__":
    main()
