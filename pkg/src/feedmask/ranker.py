"""Kernel selection: compiled extension when built, NumPy fallback otherwise."""

from feedmask import _ranker_py

try:
    from feedmask import _ranker_c

    pagerank_kernel = _ranker_c.pagerank_kernel
    KERNEL_BACKEND = "cython"
except ImportError:
    pagerank_kernel = _ranker_py.pagerank_kernel
    KERNEL_BACKEND = "python"


def available_kernels():
    """Every kernel importable in this environment, keyed by backend name."""
    kernels = {"python": _ranker_py.pagerank_kernel}
    try:
        from feedmask import _ranker_c as ext

        kernels["cython"] = ext.pagerank_kernel
    except ImportError:
        pass
    return kernels
