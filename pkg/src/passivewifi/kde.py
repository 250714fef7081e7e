"""Nonparametric per-(RP, AP) RSSI densities.

A fitted density keeps its raw samples and evaluates lazily as
(1/(n*h)) * sum_x K((v - s_x)/h), so results are exact with respect to a
direct summation and pooling devices is literally concatenating their
samples.  The evaluation loop lives in ``passivewifi.kernels`` (compiled
when available).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import FingerprintRecord

KERNEL_CODES = {
    "gaussian": kernels.GAUSSIAN,
    "epanechnikov": kernels.EPANECHNIKOV,
    "tophat": kernels.TOPHAT,
}


class NoSamplesError(ValueError):
    """A fit was requested for an (RP, AP) pair with no stored samples."""


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "gaussian"   # gaussian | epanechnikov | tophat
    bandwidth: float = 2.0   # dBm

    def __post_init__(self):
        if self.kind not in KERNEL_CODES:
            raise ValueError(f"unknown kernel {self.kind!r}; "
                             f"expected one of {sorted(KERNEL_CODES)}")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    @property
    def code(self) -> int:
        return KERNEL_CODES[self.kind]


@dataclass(frozen=True)
class RssiPdf:
    """Density over dBm backed by the pooled samples it was fit on."""

    kernel: KernelSpec
    samples: np.ndarray  # dBm, float64
    norm: float = field(init=False)  # cached 1/(n*h)

    def __post_init__(self):
        object.__setattr__(self, "samples",
                           np.ascontiguousarray(self.samples, dtype=np.float64))
        object.__setattr__(self, "norm",
                           1.0 / (self.samples.size * self.kernel.bandwidth))

    @property
    def n(self) -> int:
        return self.samples.size

    def evaluate(self, v):
        return evaluate(self, v)


def fit(samples, kernel: KernelSpec = KernelSpec()) -> RssiPdf:
    """Fit a density to raw dBm samples."""
    arr = np.asarray(samples, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise NoSamplesError("cannot fit a density to zero samples")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples must be finite")
    return RssiPdf(kernel, arr)


def evaluate(pdf: RssiPdf, v):
    """Density at v (scalar or array), in 1/dBm."""
    probes = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if not np.all(np.isfinite(probes)):
        raise ValueError("evaluation point must be finite")
    out = kernels.kde_eval(pdf.samples, pdf.kernel.bandwidth, pdf.kernel.code,
                           probes)
    if np.isscalar(v) or np.ndim(v) == 0:
        return float(out[0])
    return out


def pooled_fit(record: FingerprintRecord, ap_id: str,
               kernel: KernelSpec = KernelSpec()) -> RssiPdf:
    """Fit on the union of every device's samples for one AP at one RP."""
    pooled = record.pooled_rssi(ap_id)
    if pooled.size == 0:
        raise NoSamplesError(
            f"RP {record.rp_id} has no samples for AP {ap_id!r}")
    return fit(pooled, kernel)


class PdfTable:
    """All per-(RP, AP) pooled densities of a database, laid out for the
    block kernels: per AP one flat concatenated sample array plus block
    starts over the RPs that have data for that AP.
    """

    def __init__(self, db, kernel: KernelSpec = KernelSpec()):
        self.kernel = kernel
        self.rp_ids = db.rp_ids
        self.ap_ids = list(db.env.ap_ids)
        index_of = {rp_id: i for i, rp_id in enumerate(self.rp_ids)}
        self.flat = {}
        self.starts = {}
        self.covered = {}    # ap_id -> int indices into rp order
        self.uncovered = {}
        for ap_id in self.ap_ids:
            chunks = []
            covered = []
            starts = [0]
            for rec in db:
                pooled = rec.pooled_rssi(ap_id)
                if pooled.size == 0:
                    continue
                chunks.append(pooled)
                covered.append(index_of[rec.rp_id])
                starts.append(starts[-1] + pooled.size)
            covered = np.asarray(covered, dtype=np.int64)
            self.flat[ap_id] = (np.concatenate(chunks) if chunks
                                else np.empty(0))
            self.starts[ap_id] = np.asarray(starts, dtype=np.int64)
            self.covered[ap_id] = covered
            mask = np.ones(len(self.rp_ids), dtype=bool)
            mask[covered] = False
            self.uncovered[ap_id] = np.nonzero(mask)[0]

    def log_accumulate(self, ap_id: str, value: float, floor: float,
                       out: np.ndarray) -> None:
        """out[i] += log(max(density_i(value), floor)) over all RPs; RPs
        with no samples for this AP contribute log(floor)."""
        covered = self.covered[ap_id]
        if covered.size:
            block = np.zeros(covered.size)
            kernels.kde_log_accumulate(self.flat[ap_id], self.starts[ap_id],
                                       self.kernel.bandwidth, self.kernel.code,
                                       value, floor, block)
            out[covered] += block
        out[self.uncovered[ap_id]] += math.log(floor)

    def densities(self, ap_id: str, value: float) -> np.ndarray:
        """Density of every RP's pdf at value; NaN where an RP has no data."""
        out = np.full(len(self.rp_ids), np.nan)
        covered = self.covered[ap_id]
        if covered.size:
            out[covered] = kernels.kde_eval_blocks(
                self.flat[ap_id], self.starts[ap_id],
                self.kernel.bandwidth, self.kernel.code, value)
        return out


def fit_all_pdfs(db, kernel: KernelSpec = KernelSpec()) -> PdfTable:
    return PdfTable(db, kernel)
