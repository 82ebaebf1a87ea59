"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Backend selection: set ``TELEPORTSIM_BACKEND=numpy`` to force the vectorized
numpy implementations, ``TELEPORTSIM_BACKEND=numba`` to require the JIT path
(raises if numba is unavailable).  Default is ``auto``: numba when importable,
numpy otherwise.  ``benchmarks/bench_backends.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

_BACKEND_ENV = "TELEPORTSIM_BACKEND"


def _resolve_backend() -> str:
    choice = os.environ.get(_BACKEND_ENV, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{_BACKEND_ENV} must be one of auto|numba|numpy, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
        return "numba"
    except ImportError:
        if choice == "numba":
            raise
        return "numpy"


BACKEND = _resolve_backend()


# ---------------------------------------------------------------------------
# branch expansion: the inner step of every mode transformation.  Each sparse
# entry i expands into (stop[i]-start[i]) branches taken from a flat table.
# ---------------------------------------------------------------------------

def _expand_numpy(codes, other, amp, keep_bits, row, start, stop,
                  branch_bits, branch_amp):
    counts = stop[row] - start[row]
    total = int(counts.sum())
    idx = np.repeat(np.arange(codes.shape[0]), counts)
    first = np.zeros(codes.shape[0], dtype=np.int64)
    np.cumsum(counts[:-1], out=first[1:])
    pos = start[row][idx] + (np.arange(total) - first[idx])
    out_codes = keep_bits[idx] | branch_bits[pos]
    out_other = other[idx]
    out_amp = amp[idx] * branch_amp[pos]
    return out_codes, out_other, out_amp


def _expand_loop(codes, other, amp, keep_bits, row, start, stop,
                 branch_bits, branch_amp):
    n = codes.shape[0]
    total = 0
    for i in range(n):
        total += stop[row[i]] - start[row[i]]
    out_codes = np.empty(total, dtype=np.int64)
    out_other = np.empty(total, dtype=np.int64)
    out_amp = np.empty(total, dtype=np.complex128)
    k = 0
    for i in range(n):
        r = row[i]
        for p in range(start[r], stop[r]):
            out_codes[k] = keep_bits[i] | branch_bits[p]
            out_other[k] = other[i]
            out_amp[k] = amp[i] * branch_amp[p]
            k += 1
    return out_codes, out_other, out_amp


# ---------------------------------------------------------------------------
# categorical sampling for campaigns: per-attempt inverse-CDF draws of the
# BSM click pattern, then of the analyzer window click set given the pattern.
# ---------------------------------------------------------------------------

def _sample_numpy(pattern_cdf, window_cdf, u_pattern, u_window):
    patterns = np.searchsorted(pattern_cdf, u_pattern, side="right")
    patterns = np.minimum(patterns, pattern_cdf.shape[0] - 1).astype(np.int64)
    rows = window_cdf[patterns]
    windows = (rows < u_window[:, None]).sum(axis=1).astype(np.int64)
    windows = np.minimum(windows, window_cdf.shape[1] - 1)
    return patterns, windows


def _sample_loop(pattern_cdf, window_cdf, u_pattern, u_window):
    n = u_pattern.shape[0]
    n_pat = pattern_cdf.shape[0]
    n_win = window_cdf.shape[1]
    patterns = np.empty(n, dtype=np.int64)
    windows = np.empty(n, dtype=np.int64)
    for i in range(n):
        u = u_pattern[i]
        lo = 0
        hi = n_pat - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if pattern_cdf[mid] > u:
                hi = mid
            else:
                lo = mid + 1
        patterns[i] = lo
        v = u_window[i]
        w = 0
        while w < n_win - 1 and window_cdf[lo, w] <= v:
            w += 1
        windows[i] = w
    return patterns, windows


if BACKEND == "numba":
    import numba

    expand_branches = numba.njit(cache=True)(_expand_loop)
    sample_attempts = numba.njit(cache=True)(_sample_loop)
else:
    expand_branches = _expand_numpy
    sample_attempts = _sample_numpy

# always-available aliases so the benchmark can compare the two paths
expand_branches_numpy = _expand_numpy
sample_attempts_numpy = _sample_numpy


def coalesce(bra, ket, amp, tol):
    """Sort COO triplets by (bra, ket), sum duplicates, drop |amp| <= tol."""
    if bra.shape[0] == 0:
        return bra, ket, amp
    order = np.lexsort((ket, bra))
    bra = bra[order]
    ket = ket[order]
    amp = amp[order]
    new_group = np.empty(bra.shape[0], dtype=bool)
    new_group[0] = True
    np.not_equal(bra[1:], bra[:-1], out=new_group[1:])
    np.logical_or(new_group[1:], ket[1:] != ket[:-1], out=new_group[1:])
    starts = np.flatnonzero(new_group)
    sums = np.add.reduceat(amp, starts)
    bra = bra[starts]
    ket = ket[starts]
    keep = np.abs(sums) > tol
    return bra[keep], ket[keep], sums[keep]
