"""Numpy fallback for the hot density kernels.

Same call signatures as the compiled backend (`_ckernels`); the selector in
``passivewifi.kernels`` picks whichever is available.  All inputs are float64
and the summation runs in sample order within each block, so both backends
agree with a direct per-sample summation to machine precision.
"""

import math

import numpy as np

GAUSSIAN = 0
EPANECHNIKOV = 1
TOPHAT = 2

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Cap on the probes x samples scratch matrix (doubles) used by kde_eval.
_CHUNK_ELEMS = 4_000_000


def _kernel_values(u, kind):
    if kind == GAUSSIAN:
        return np.exp(-0.5 * u * u) / _SQRT_2PI
    if kind == EPANECHNIKOV:
        return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    if kind == TOPHAT:
        return np.where(np.abs(u) <= 1.0, 0.5, 0.0)
    raise ValueError(f"unknown kernel kind code {kind}")


def kde_eval(samples, bandwidth, kind, probes):
    """Density of one sample set at each probe: (1/nh) sum_x K((v - s_x)/h)."""
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    probes = np.ascontiguousarray(probes, dtype=np.float64)
    n = samples.size
    out = np.empty(probes.size)
    step = max(1, _CHUNK_ELEMS // max(n, 1))
    for lo in range(0, probes.size, step):
        hi = min(lo + step, probes.size)
        u = (probes[lo:hi, None] - samples[None, :]) / bandwidth
        out[lo:hi] = _kernel_values(u, kind).sum(axis=1)
    return out / (n * bandwidth)


def kde_eval_blocks(flat, starts, bandwidth, kind, probe):
    """Density at one probe for many sample blocks.

    ``flat`` concatenates the blocks; ``starts`` has length B+1 with
    starts[0] = 0 and starts[B] = len(flat).  Every block must be non-empty.
    """
    flat = np.ascontiguousarray(flat, dtype=np.float64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    k = _kernel_values((probe - flat) / bandwidth, kind)
    sums = np.add.reduceat(k, starts[:-1])
    counts = np.diff(starts)
    return sums / (counts * bandwidth)


def kde_log_accumulate(flat, starts, bandwidth, kind, probe, floor, out):
    """Add log(max(density_b, floor)) to out[b] for each block b."""
    dens = kde_eval_blocks(flat, starts, bandwidth, kind, probe)
    out += np.log(np.maximum(dens, floor))
