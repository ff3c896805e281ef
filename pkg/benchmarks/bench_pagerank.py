"""Timing comparison of the compiled and pure-Python PageRank kernels.

Usage: python3 benchmarks/bench_pagerank.py [--nodes N ...] [--density D]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from feedmask.ranker import available_kernels


def random_csr(n: int, density: float, rng):
    """Row-stochastic CSR transition arrays plus dangling mask."""
    edges_per_row = rng.poisson(max(density * n, 1.0), size=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    indices = []
    probs = []
    for row in range(n):
        m = int(min(edges_per_row[row], n))
        indptr[row + 1] = indptr[row] + m
        if m:
            targets = rng.choice(n, size=m, replace=False)
            weights = rng.random(m) + 0.1
            weights /= weights.sum()
            indices.extend(int(t) for t in targets)
            probs.extend(float(w) for w in weights)
    dangling = (np.diff(indptr) == 0).astype(np.uint8)
    return (
        indptr,
        np.asarray(indices, dtype=np.int64),
        np.asarray(probs, dtype=np.float64),
        dangling,
    )


def bench(kernel, args, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        kernel(*args, 0.85, 1e-10, 200)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, nargs="+", default=[100, 1000, 5000, 20000])
    parser.add_argument("--density", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=7)
    cli = parser.parse_args()

    kernels = available_kernels()
    print(f"kernels available: {', '.join(kernels)}")
    header = f"{'nodes':>8}  {'edges':>9}" + "".join(f"  {name:>12}" for name in kernels)
    if len(kernels) == 2:
        header += f"  {'speedup':>8}"
    print(header)

    rng = np.random.default_rng(cli.seed)
    for n in cli.nodes:
        args = random_csr(n, cli.density, rng)
        edges = len(args[1])

        times = {}
        scores = {}
        for name, kernel in kernels.items():
            out, _, _ = kernel(*args, 0.85, 1e-10, 200)
            scores[name] = out
            times[name] = bench(kernel, args)

        names = list(kernels)
        if len(names) == 2:
            drift = float(np.abs(scores[names[0]] - scores[names[1]]).sum())
            assert drift < 1e-9, f"kernels disagree by {drift}"

        row = f"{n:>8}  {edges:>9}"
        for name in names:
            row += f"  {times[name] * 1000:>10.2f}ms"
        if len(names) == 2:
            row += f"  {times[names[0]] / times[names[1]]:>7.2f}x"
        print(row)


if __name__ == "__main__":
    main()
