# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled power-iteration kernel over a CSR transition matrix."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def pagerank_kernel(
    cnp.int64_t[::1] indptr,
    cnp.int64_t[::1] indices,
    cnp.float64_t[::1] probs,
    cnp.uint8_t[::1] dangling,
    double damping,
    double tol,
    int max_iter,
):
    """Iterate x' = (1-d)/n + d * (P^T x + dangling_mass/n) until the L1
    delta drops below tol. Returns (scores, iterations, converged)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    if n == 0:
        return np.zeros(0, dtype=np.float64), 0, True

    cdef cnp.ndarray[cnp.float64_t, ndim=1] x_arr = np.full(n, 1.0 / n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] nxt_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.float64_t[::1] x = x_arr
    cdef cnp.float64_t[::1] nxt = nxt_arr

    cdef double base, dmass, delta, xu
    cdef Py_ssize_t u, k, it
    cdef int iterations = 0
    cdef bint converged = False

    for it in range(max_iter):
        dmass = 0.0
        for u in range(n):
            nxt[u] = 0.0
        for u in range(n):
            xu = x[u]
            if dangling[u]:
                dmass += xu
            else:
                for k in range(indptr[u], indptr[u + 1]):
                    nxt[indices[k]] += xu * probs[k]
        base = (1.0 - damping) / n + damping * dmass / n
        delta = 0.0
        for u in range(n):
            nxt[u] = base + damping * nxt[u]
            delta += abs(nxt[u] - x[u])
        x, nxt = nxt, x
        x_arr, nxt_arr = nxt_arr, x_arr
        iterations = it + 1
        if delta < tol:
            converged = True
            break

    total = float(np.sum(x_arr))
    if total > 0.0:
        x_arr = x_arr / total
    return x_arr, iterations, converged
