"""NumPy fallback for the power-iteration kernel.

Mirrors the semantics of the compiled version in _ranker_c.pyx; selected
at import time by feedmask.ranker when the extension is unavailable.
"""

import numpy as np


def pagerank_kernel(indptr, indices, probs, dangling, damping, tol, max_iter):
    n = len(indptr) - 1
    if n == 0:
        return np.zeros(0, dtype=np.float64), 0, True

    src = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    dangling = dangling.astype(bool)
    x = np.full(n, 1.0 / n, dtype=np.float64)

    iterations = 0
    converged = False
    for it in range(max_iter):
        dmass = float(x[dangling].sum())
        acc = np.bincount(indices, weights=x[src] * probs, minlength=n)
        nxt = (1.0 - damping) / n + damping * (acc + dmass / n)
        delta = float(np.abs(nxt - x).sum())
        x = nxt
        iterations = it + 1
        if delta < tol:
            converged = True
            break

    total = float(x.sum())
    if total > 0.0:
        x = x / total
    return x, iterations, converged
