"""Channel-state-information features and the candidate refinement step.

A scan is one packet's worth of per-subcarrier amplitude and phase.
Consecutive scans stack into a time-frequency amplitude image; phase is
made usable by differencing adjacent subcarriers, which cancels the
common phase offset that changes with device orientation.  Candidate
reference points are compared to an observation with Pearson
correlation on both feature kinds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

NUM_SUBCARRIERS = 51
SCANS_PER_IMAGE = 20


class InsufficientCsiError(ValueError):
    """Fewer scans than an image needs; caller falls back to RSSI only."""


class ZeroVarianceError(ValueError):
    """Pearson correlation is undefined for a constant input."""


class NoCsiCoverageError(ValueError):
    """No usable CSI on any selected AP; caller falls back to the RSSI fix."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]; exact identity for in-range values."""
    if -math.pi < theta <= math.pi:
        return theta
    w = (math.pi - theta) % math.tau
    return math.pi - w


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    in_range = (theta > -math.pi) & (theta <= math.pi)
    wrapped = math.pi - np.mod(math.pi - theta, math.tau)
    return np.where(in_range, theta, wrapped)


@dataclass(frozen=True, eq=False)
class CsiScan:
    """One packet: per-subcarrier amplitude and phase from one AP."""

    amplitudes: np.ndarray  # (51,) linear units, >= 0
    phases: np.ndarray      # (51,) radians in (-pi, pi]
    ap_id: str
    timestamp: float        # seconds

    def __eq__(self, other):
        if not isinstance(other, CsiScan):
            return NotImplemented
        return (self.ap_id == other.ap_id
                and self.timestamp == other.timestamp
                and np.array_equal(self.amplitudes, other.amplitudes)
                and np.array_equal(self.phases, other.phases))

    def __post_init__(self):
        object.__setattr__(self, "amplitudes",
                           np.asarray(self.amplitudes, dtype=np.float64))
        object.__setattr__(self, "phases",
                           np.asarray(self.phases, dtype=np.float64))
        if self.amplitudes.shape != (NUM_SUBCARRIERS,):
            raise ValueError(f"expected {NUM_SUBCARRIERS} amplitudes, "
                             f"got shape {self.amplitudes.shape}")
        if self.phases.shape != (NUM_SUBCARRIERS,):
            raise ValueError(f"expected {NUM_SUBCARRIERS} phases, "
                             f"got shape {self.phases.shape}")
        if not np.all(np.isfinite(self.amplitudes)) or np.any(self.amplitudes < 0):
            raise ValueError("amplitudes must be finite and nonnegative")
        if not np.all(np.isfinite(self.phases)):
            raise ValueError("phases must be finite")


@dataclass(frozen=True, eq=False)
class CsiImage:
    """Time-frequency amplitude matrix: 20 scan rows x 51 subcarrier columns."""

    matrix: np.ndarray  # (20, 51)

    def __eq__(self, other):
        if not isinstance(other, CsiImage):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)

    def __post_init__(self):
        object.__setattr__(self, "matrix",
                           np.asarray(self.matrix, dtype=np.float64))
        if self.matrix.shape != (SCANS_PER_IMAGE, NUM_SUBCARRIERS):
            raise ValueError(f"expected {SCANS_PER_IMAGE}x{NUM_SUBCARRIERS} "
                             f"matrix, got {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)) or np.any(self.matrix < 0):
            raise ValueError("image entries must be finite and nonnegative")

    def flattened(self) -> np.ndarray:
        return self.matrix.reshape(-1)


@dataclass(frozen=True, eq=False)
class PhaseDiffVector:
    """Adjacent-subcarrier phase differences, each wrapped to (-pi, pi]."""

    values: np.ndarray  # (50,) radians

    def __eq__(self, other):
        if not isinstance(other, PhaseDiffVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __post_init__(self):
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=np.float64))
        if self.values.shape != (NUM_SUBCARRIERS - 1,):
            raise ValueError(f"expected {NUM_SUBCARRIERS - 1} phase "
                             f"differences, got shape {self.values.shape}")


def build_image(scans: Sequence[CsiScan]) -> CsiImage:
    """Stack the 20 most recent scans (time order) into an amplitude image."""
    if len(scans) < SCANS_PER_IMAGE:
        raise InsufficientCsiError(
            f"need {SCANS_PER_IMAGE} scans, got {len(scans)}")
    aps = {s.ap_id for s in scans}
    if len(aps) != 1:
        raise ValueError(f"scans must come from one AP, got {sorted(aps)}")
    ordered = sorted(scans, key=lambda s: s.timestamp)[-SCANS_PER_IMAGE:]
    return CsiImage(np.stack([s.amplitudes for s in ordered]))


def phase_difference(scan: CsiScan) -> PhaseDiffVector:
    """values[j] = wrap(phases[j+1] - phases[j])."""
    return PhaseDiffVector(wrap_angles(np.diff(scan.phases)))


def circular_mean_phase(vectors: Sequence[PhaseDiffVector]) -> PhaseDiffVector:
    """Element-wise circular mean of several phase-difference vectors."""
    if not vectors:
        raise ValueError("no phase-difference vectors to average")
    stacked = np.stack([v.values for v in vectors])
    mean = np.arctan2(np.sin(stacked).mean(axis=0), np.cos(stacked).mean(axis=0))
    return PhaseDiffVector(wrap_angles(mean))


def pearson(a, b) -> float:
    """Pearson correlation coefficient of two equal-length sequences."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("need at least two points")
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        raise ZeroVarianceError("constant input has no defined correlation")
    return float(da @ db) / denom


def _safe_pearson(a, b) -> float:
    try:
        return pearson(a, b)
    except ZeroVarianceError:
        return 0.0


def refine(candidates: Sequence[int],
           obs_csi: Mapping[str, tuple[CsiImage, PhaseDiffVector]],
           db,
           strongest_aps: int = 2,
           *,
           obs_rssi: Mapping[str, float],
           candidate_weights: Mapping[int, float] | None = None,
           amp_weight: float = 0.5,
           phase_weight: float = 0.5):
    """Pick the candidate RP whose stored CSI best matches the observation.

    Only the ``strongest_aps`` APs with the highest observed RSSI are
    used.  Per candidate and AP, similarity is amp_weight * pearson of
    flattened amplitude images plus phase_weight * pearson of the
    phase-difference vectors; the per-AP values are averaged.  APs the
    candidate has no stored CSI for are skipped; a candidate with no
    usable AP at all is eliminated.  Ties break on the candidate weight
    (e.g. the RSSI posterior), then on the lower rp id.

    Returns (rp_id, Location).  Raises NoCsiCoverageError when nothing
    can be scored, which callers treat as "fall back to the RSSI fix".
    """
    if not candidates:
        raise ValueError("no candidate reference points")
    heard = [(ap, r) for ap, r in obs_rssi.items() if r is not None]
    heard.sort(key=lambda item: (-item[1], item[0]))
    selected = [ap for ap, _ in heard[:strongest_aps] if ap in obs_csi]
    if not selected:
        raise NoCsiCoverageError("no observed CSI on any of the strongest APs")

    weights = candidate_weights or {}
    scored = []
    for rp_id in candidates:
        record = db.record(rp_id)
        per_ap = []
        for ap in selected:
            stored = record.csi_representative(ap)
            if stored is None:
                continue
            stored_image, stored_phase = stored
            obs_image, obs_phase = obs_csi[ap]
            sim = 0.0
            if amp_weight != 0.0:
                sim += amp_weight * _safe_pearson(obs_image.flattened(),
                                                  stored_image.reshape(-1))
            if phase_weight != 0.0:
                sim += phase_weight * _safe_pearson(obs_phase.values,
                                                    stored_phase)
            per_ap.append(sim)
        score = sum(per_ap) / len(per_ap) if per_ap else -math.inf
        scored.append((score, weights.get(rp_id, 0.0), rp_id))

    if all(math.isinf(score) and score < 0 for score, _, _ in scored):
        raise NoCsiCoverageError("no candidate has stored CSI on the selected APs")
    scored.sort(key=lambda item: (-item[0], -item[1], item[2]))
    best = scored[0][2]
    return best, db.record(best).location
