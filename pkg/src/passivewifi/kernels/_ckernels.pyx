# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled density kernels; mirrors _pykernels exactly."""

import numpy as np

from libc.math cimport exp, fabs, log, sqrt, M_PI

GAUSSIAN = 0
EPANECHNIKOV = 1
TOPHAT = 2

cdef double _SQRT_2PI = sqrt(2.0 * M_PI)


cdef inline double _kval(double u, int kind) noexcept nogil:
    if kind == 0:
        return exp(-0.5 * u * u) / _SQRT_2PI
    elif kind == 1:
        if fabs(u) <= 1.0:
            return 0.75 * (1.0 - u * u)
        return 0.0
    else:
        if fabs(u) <= 1.0:
            return 0.5
        return 0.0


def kde_eval(samples, double bandwidth, int kind, probes):
    """Density of one sample set at each probe: (1/nh) sum_x K((v - s_x)/h)."""
    if kind not in (0, 1, 2):
        raise ValueError(f"unknown kernel kind code {kind}")
    cdef double[::1] s = np.ascontiguousarray(samples, dtype=np.float64)
    cdef double[::1] p = np.ascontiguousarray(probes, dtype=np.float64)
    out = np.empty(p.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = s.shape[0], m = p.shape[0]
    cdef double acc, v
    with nogil:
        for j in range(m):
            v = p[j]
            acc = 0.0
            for i in range(n):
                acc += _kval((v - s[i]) / bandwidth, kind)
            o[j] = acc / (n * bandwidth)
    return out


def kde_eval_blocks(flat, starts, double bandwidth, int kind, double probe):
    """Density at one probe for many sample blocks (see _pykernels)."""
    if kind not in (0, 1, 2):
        raise ValueError(f"unknown kernel kind code {kind}")
    cdef double[::1] f = np.ascontiguousarray(flat, dtype=np.float64)
    cdef long long[::1] st = np.ascontiguousarray(starts, dtype=np.int64)
    cdef Py_ssize_t nblocks = st.shape[0] - 1
    out = np.empty(nblocks)
    cdef double[::1] o = out
    cdef Py_ssize_t b, i
    cdef long long lo, hi
    cdef double acc
    with nogil:
        for b in range(nblocks):
            lo = st[b]
            hi = st[b + 1]
            acc = 0.0
            for i in range(lo, hi):
                acc += _kval((probe - f[i]) / bandwidth, kind)
            o[b] = acc / ((hi - lo) * bandwidth)
    return out


def kde_log_accumulate(flat, starts, double bandwidth, int kind, double probe,
                       double floor, out):
    """Add log(max(density_b, floor)) to out[b] for each block b."""
    if kind not in (0, 1, 2):
        raise ValueError(f"unknown kernel kind code {kind}")
    cdef double[::1] f = np.ascontiguousarray(flat, dtype=np.float64)
    cdef long long[::1] st = np.ascontiguousarray(starts, dtype=np.int64)
    cdef double[::1] o = out
    cdef Py_ssize_t b, i
    cdef Py_ssize_t nblocks = st.shape[0] - 1
    cdef long long lo, hi
    cdef double acc, dens
    with nogil:
        for b in range(nblocks):
            lo = st[b]
            hi = st[b + 1]
            acc = 0.0
            for i in range(lo, hi):
                acc += _kval((probe - f[i]) / bandwidth, kind)
            dens = acc / ((hi - lo) * bandwidth)
            if dens < floor:
                dens = floor
            o[b] += log(dens)
