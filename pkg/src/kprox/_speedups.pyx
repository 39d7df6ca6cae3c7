# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused pairwise-cost + row-shifted Gibbs kernel.

One pass over the N^2 pairs: accumulate the squared distance row,
record the row minimum, then exponentiate the shifted row in place.
Avoids materializing the cost matrix separately from the kernel.
"""

from libc.math cimport exp

cimport cython


@cython.boundscheck(False)
@cython.wraparound(False)
def cost_gibbs(
    const double[:, ::1] feat_prev,
    const double[:, ::1] feat_next,
    double two_eps,
    double[:, ::1] kernel,
    double[::1] row_min,
):
    """kernel[i, j] = exp(-(||feat_prev[i]-feat_next[j]||^2 - row_min[i]) / two_eps)."""
    cdef Py_ssize_t n_prev = feat_prev.shape[0]
    cdef Py_ssize_t n_next = feat_next.shape[0]
    cdef Py_ssize_t width = feat_prev.shape[1]
    cdef Py_ssize_t i, j, d
    cdef double acc, diff, m, inv
    if kernel.shape[0] != n_prev or kernel.shape[1] != n_next or row_min.shape[0] != n_prev:
        raise ValueError("output buffers have wrong shape")
    if feat_next.shape[1] != width:
        raise ValueError("feature widths differ")
    inv = 1.0 / two_eps
    with nogil:
        for i in range(n_prev):
            m = 0.0
            for j in range(n_next):
                acc = 0.0
                for d in range(width):
                    diff = feat_next[j, d] - feat_prev[i, d]
                    acc += diff * diff
                kernel[i, j] = acc
                if j == 0 or acc < m:
                    m = acc
            row_min[i] = m
            for j in range(n_next):
                kernel[i, j] = exp(-(kernel[i, j] - m) * inv)
