"""Compiled vs pure-Python kernels, plus one end-to-end run per backend.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from impflow import _kernels_py

try:
    from impflow import _kernels
except ImportError:
    _kernels = None


def maxmin_case(rng, n_links=750, n_sub=370):
    ptr, idx = [0], []
    for _ in range(n_sub):
        idx.extend(int(l) for l in rng.choice(n_links, size=6, replace=False))
        ptr.append(len(idx))
    caps = np.where(rng.random(n_sub) < 0.5, rng.uniform(1e7, 1e9, n_sub), np.inf)
    return (np.array(ptr), np.array(idx, dtype=np.int64), np.full(n_links, 1e9), caps, np.ones(n_sub))


def search_case(rng, n=8):
    demands = rng.uniform(1e7, 3e7, n)
    weights = rng.integers(1, 11, n).astype(float)
    path_ptr, edge_ptr, edges = [0], [0], []
    for _ in range(n):
        for _ in range(2):
            edges.extend(int(e) for e in rng.choice(16, size=4, replace=False))
            edge_ptr.append(len(edges))
        path_ptr.append(len(edge_ptr) - 1)
    return (demands, weights, np.array(path_ptr), np.array(edge_ptr), np.array(edges, dtype=np.int64),
            np.full(16, 5e7))


def bench(impl, repeat):
    rng = np.random.default_rng(0)
    km = sorted(rng.choice([10.0, 1.0], 150) + rng.normal(0, 0.3, 150), reverse=True)
    mm = maxmin_case(rng)
    us = search_case(rng)
    cases = {
        "kmeans1d(150 units, k=2)": lambda: impl.kmeans1d(km, 2),
        "maxmin_fair(370 subflows)": lambda: impl.maxmin_fair(*mm),
        "unsplittable_search(8 flows)": lambda: impl.unsplittable_search(*us),
    }
    out = {}
    for name, fn in cases.items():
        n = max(1, repeat)
        out[name] = min(timeit.repeat(fn, number=n, repeat=3)) / n
    return out


def end_to_end(pure):
    env = dict(os.environ)
    if pure:
        env["IMPFLOW_PURE_PYTHON"] = "1"
    code = ("import time; from impflow.engine import SimConfig, run; from impflow.workload import *;"
            "c = SimConfig(protocol='fairshare'); t = c.build_topology();"
            "f = gen_partition_aggregate(WorkloadSpec('heavy', 0.02, seed=1), t);"
            "s = time.perf_counter(); run(c, f, t); print(time.perf_counter() - s)")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(res.stdout)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    py = bench(_kernels_py, args.repeat)
    cy = bench(_kernels, args.repeat) if _kernels is not None else None
    print(f"{'kernel':32s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for name, t in py.items():
        if cy:
            print(f"{name:32s} {t * 1e3:10.3f}ms {cy[name] * 1e3:10.3f}ms {t / cy[name]:7.1f}x")
        else:
            print(f"{name:32s} {t * 1e3:10.3f}ms {'n/a':>12s}")
    e_py, e_cy = end_to_end(True), end_to_end(False)
    print(f"{'fairshare heavy run (end to end)':32s} {e_py:11.2f}s {e_cy:11.2f}s {e_py / e_cy:7.1f}x")


if __name__ == "__main__":
    main()
