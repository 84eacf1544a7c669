# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled batched Thomas algorithm for tridiagonal theta-scheme solves."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def thomas_batch(lower, diag, upper, rhs):
    """Solve the tridiagonal system for each row of `rhs`.

    Same convention as the fallback: row i couples (lower[i], diag[i],
    upper[i]) with x[i-1..i+1]; lower[0] and upper[-1] are ignored.  `rhs`
    may be 1-D or (batch, n); output matches its shape.
    """
    rhs_arr = np.asarray(rhs, dtype=np.float64)
    squeeze = rhs_arr.ndim == 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = np.ascontiguousarray(
        np.atleast_2d(rhs_arr))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lo = np.ascontiguousarray(
        lower, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dg = np.ascontiguousarray(
        diag, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] up = np.ascontiguousarray(
        upper, dtype=np.float64)
    cdef Py_ssize_t nb = b.shape[0], n = b.shape[1]
    if lo.shape[0] != n or dg.shape[0] != n or up.shape[0] != n:
        raise ValueError("band arrays must match the system size")

    cdef cnp.ndarray[cnp.float64_t, ndim=2] x = np.empty((nb, n))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cp = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dp = np.empty(n)
    cdef Py_ssize_t s, i
    cdef double m

    # Forward-eliminate once per sample; the sweep is O(n) per solve.
    for s in range(nb):
        cp[0] = up[0] / dg[0]
        dp[0] = b[s, 0] / dg[0]
        for i in range(1, n):
            m = dg[i] - lo[i] * cp[i - 1]
            cp[i] = up[i] / m
            dp[i] = (b[s, i] - lo[i] * dp[i - 1]) / m
        x[s, n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            x[s, i] = dp[i] - cp[i] * x[s, i + 1]
    return x[0] if squeeze else x
