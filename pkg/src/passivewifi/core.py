"""Shared domain model: locations, fingerprints, the fingerprint database
and environment geometry.

Reference points (RPs) carry dense integer ids 0..M-1 in row-major grid
order so ties and file layouts are reproducible.  Timestamps are seconds
relative to the start of the collection session.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import csi

RSSI_DBM = "rssi_dbm"
CSI_DERIVED = "csi_derived"

RSSI_MIN_DBM = -100.0
RSSI_MAX_DBM = 0.0


class DomainError(ValueError):
    pass


class UnknownReferencePointError(DomainError):
    def __init__(self, rp_id):
        super().__init__(f"unknown reference point id {rp_id!r}")
        self.rp_id = rp_id


class EmptyDatabaseError(DomainError):
    pass


@dataclass(frozen=True, order=True)
class Location:
    x: float  # meters
    y: float  # meters

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DomainError(f"location must be finite, got ({self.x}, {self.y})")

    def distance_to(self, other: "Location") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class FingerprintVector:
    """Per-AP feature vector; None marks an AP that heard nothing."""

    features: tuple  # floats or None, one per AP in environment order
    feature_kind: str = RSSI_DBM

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if self.feature_kind not in (RSSI_DBM, CSI_DERIVED):
            raise DomainError(f"unknown feature kind {self.feature_kind!r}")
        for v in self.features:
            if v is None:
                continue
            if not math.isfinite(v):
                raise DomainError(f"non-finite feature {v!r}")
            if self.feature_kind == RSSI_DBM and not (RSSI_MIN_DBM <= v <= RSSI_MAX_DBM):
                raise DomainError(f"RSSI {v} dBm outside [{RSSI_MIN_DBM}, {RSSI_MAX_DBM}]")

    def __len__(self):
        return len(self.features)

    @property
    def observed_count(self) -> int:
        return sum(1 for v in self.features if v is not None)


@dataclass(frozen=True)
class AccessPoint:
    ap_id: str
    location: Location
    rts_capable: bool = False


@dataclass(frozen=True)
class Environment:
    """Single-floor 2-D geometry: bounding box, APs and the RP grid."""

    width: float   # meters
    height: float  # meters
    aps: tuple     # AccessPoint, ...
    rps: tuple     # (rp_id, Location), ...
    grid_spacing: float  # meters, average distance between adjacent RPs

    def __post_init__(self):
        object.__setattr__(self, "aps", tuple(self.aps))
        object.__setattr__(self, "rps", tuple(self.rps))
        if len(self.aps) < 1:
            raise DomainError("need at least one AP")
        if len(self.rps) < 1:
            raise DomainError("need at least one RP")
        if len({ap.ap_id for ap in self.aps}) != len(self.aps):
            raise DomainError("duplicate AP ids")
        locs = [(loc.x, loc.y) for _, loc in self.rps]
        if len(set(locs)) != len(locs):
            raise DomainError("RP locations must be unique")
        if len({rp_id for rp_id, _ in self.rps}) != len(self.rps):
            raise DomainError("RP ids must be unique")
        for _, loc in self.rps:
            if not self.contains(loc):
                raise DomainError(f"RP at ({loc.x}, {loc.y}) outside bounds")

    def contains(self, loc: Location) -> bool:
        return 0.0 <= loc.x <= self.width and 0.0 <= loc.y <= self.height

    @property
    def ap_ids(self) -> list:
        return [ap.ap_id for ap in self.aps]

    def ap(self, ap_id: str) -> AccessPoint:
        for ap in self.aps:
            if ap.ap_id == ap_id:
                return ap
        raise DomainError(f"unknown AP id {ap_id!r}")

    def rp_location(self, rp_id: int) -> Location:
        for rid, loc in self.rps:
            if rid == rp_id:
                return loc
        raise UnknownReferencePointError(rp_id)


def grid_environment(width: float, height: float, nx: int, ny: int,
                     aps: Sequence[AccessPoint],
                     margin: float = 0.5) -> Environment:
    """RP grid of nx x ny points inside the margins, ids in row-major order."""
    xs = np.linspace(margin, width - margin, nx)
    ys = np.linspace(margin, height - margin, ny)
    rps = []
    rp_id = 0
    for y in ys:
        for x in xs:
            rps.append((rp_id, Location(float(x), float(y))))
            rp_id += 1
    spacing_x = xs[1] - xs[0] if nx > 1 else width
    spacing_y = ys[1] - ys[0] if ny > 1 else height
    spacing = float((spacing_x + spacing_y) / 2.0)
    return Environment(width, height, tuple(aps), tuple(rps), spacing)


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear movement: (t, Location) waypoints."""

    waypoints: tuple            # ((t_seconds, Location), ...)
    speed_range: tuple = (0.6, 4.0)  # m/s

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if len(self.waypoints) < 1:
            raise DomainError("trajectory needs at least one waypoint")
        v_max = self.speed_range[1]
        for (t0, p0), (t1, p1) in zip(self.waypoints, self.waypoints[1:]):
            if t1 <= t0:
                raise DomainError("waypoint times must be strictly increasing")
            if p0.distance_to(p1) > v_max * (t1 - t0) * (1 + 1e-9):
                raise DomainError(
                    f"displacement {p0.distance_to(p1):.3f} m in {t1 - t0:.3f} s "
                    f"exceeds v_max={v_max} m/s")

    @property
    def start_time(self) -> float:
        return self.waypoints[0][0]

    @property
    def end_time(self) -> float:
        return self.waypoints[-1][0]

    def position_at(self, t: float) -> Location:
        """Linear interpolation; clamps to the first/last waypoint."""
        pts = self.waypoints
        if t <= pts[0][0]:
            return pts[0][1]
        if t >= pts[-1][0]:
            return pts[-1][1]
        for (t0, p0), (t1, p1) in zip(pts, pts[1:]):
            if t0 <= t <= t1:
                a = (t - t0) / (t1 - t0)
                return Location(p0.x + a * (p1.x - p0.x), p0.y + a * (p1.y - p0.y))
        raise AssertionError("unreachable")


@dataclass
class FingerprintRecord:
    """Everything stored for one RP.

    rssi_samples: ap_id -> device model -> [(timestamp, rssi_dbm), ...],
    time-sorted.  csi_scans are the persisted CSI source; images and
    phase-difference vectors are derived from them deterministically.
    """

    rp_id: int
    location: Location
    rssi_samples: dict = field(default_factory=dict)
    csi_scans: dict = field(default_factory=dict)   # ap_id -> [CsiScan, ...]
    csi_images: dict = field(default_factory=dict)  # ap_id -> [CsiImage, ...]
    csi_phase: dict = field(default_factory=dict)   # ap_id -> [PhaseDiffVector, ...]
    _csi_rep: dict = field(default_factory=dict, repr=False)

    def pooled_rssi(self, ap_id: str) -> np.ndarray:
        """All devices' samples for one AP, device order then time order."""
        per_device = self.rssi_samples.get(ap_id, {})
        values = []
        for device in sorted(per_device):
            values.extend(v for _, v in per_device[device])
        return np.asarray(values, dtype=np.float64)

    def sample_count(self, ap_id: str) -> int:
        return sum(len(v) for v in self.rssi_samples.get(ap_id, {}).values())

    def derive_csi_features(self):
        """Rebuild images, phase vectors and representatives from the scans."""
        self.csi_images = {}
        self.csi_phase = {}
        self._csi_rep = {}
        for ap_id, scans in self.csi_scans.items():
            ordered = sorted(scans, key=lambda s: s.timestamp)
            images = []
            for lo in range(0, len(ordered) - csi.SCANS_PER_IMAGE + 1,
                            csi.SCANS_PER_IMAGE):
                images.append(csi.build_image(ordered[lo:lo + csi.SCANS_PER_IMAGE]))
            phases = [csi.phase_difference(s) for s in ordered]
            if images:
                self.csi_images[ap_id] = images
            if phases:
                self.csi_phase[ap_id] = phases
            if images and phases:
                rep_image = np.mean(np.stack([im.matrix for im in images]), axis=0)
                rep_phase = csi.circular_mean_phase(phases).values
                self._csi_rep[ap_id] = (rep_image, rep_phase)

    def csi_representative(self, ap_id: str):
        """(mean amplitude image, circular-mean phase diff) or None."""
        return self._csi_rep.get(ap_id)


@dataclass(frozen=True)
class ObservationBatch:
    """One labeled collection session at a known RP for one device."""

    rp_id: int
    device: str
    rssi_rows: tuple = ()  # ((ap_id, timestamp, rssi_dbm), ...)
    csi_scans: tuple = ()  # (CsiScan, ...)


class FingerprintDatabase:
    """Immutable after construction; safe for concurrent reads."""

    def __init__(self, env: Environment, records: Mapping[int, FingerprintRecord]):
        self.env = env
        self._records = dict(sorted(records.items()))

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records.values())

    @property
    def rp_ids(self) -> list:
        return list(self._records)

    def record(self, rp_id: int) -> FingerprintRecord:
        try:
            return self._records[rp_id]
        except KeyError:
            raise UnknownReferencePointError(rp_id) from None


def build_database(env: Environment,
                   batches: Iterable[ObservationBatch]) -> FingerprintDatabase:
    """Merge labeled observation batches into one record per RP.

    Batches for the same RP (different devices or sessions) merge; RSSI
    sample sequences come out time-sorted per (AP, device).
    """
    known = {rp_id for rp_id, _ in env.rps}
    records: dict[int, FingerprintRecord] = {}
    saw_any = False
    for batch in batches:
        saw_any = True
        if batch.rp_id not in known:
            raise UnknownReferencePointError(batch.rp_id)
        rec = records.get(batch.rp_id)
        if rec is None:
            rec = FingerprintRecord(batch.rp_id, env.rp_location(batch.rp_id))
            records[batch.rp_id] = rec
        for ap_id, t, rssi in batch.rssi_rows:
            if ap_id not in env.ap_ids:
                raise DomainError(f"RSSI row references unknown AP {ap_id!r}")
            rec.rssi_samples.setdefault(ap_id, {}).setdefault(batch.device, []) \
                .append((float(t), float(rssi)))
        for scan in batch.csi_scans:
            if scan.ap_id not in env.ap_ids:
                raise DomainError(f"CSI scan references unknown AP {scan.ap_id!r}")
            rec.csi_scans.setdefault(scan.ap_id, []).append(scan)
    if not saw_any:
        raise EmptyDatabaseError("no observation batches")
    for rec in records.values():
        for per_device in rec.rssi_samples.values():
            for device in per_device:
                per_device[device].sort(key=lambda row: row[0])
        for ap_id in rec.csi_scans:
            rec.csi_scans[ap_id].sort(key=lambda s: s.timestamp)
        rec.derive_csi_features()
    return FingerprintDatabase(env, records)


def nearest_rp(db: FingerprintDatabase, loc: Location) -> int:
    """RP id closest to loc (Euclidean); ties break on the lower id."""
    if len(db) == 0:
        raise EmptyDatabaseError("cannot query an empty database")
    best_id = None
    best_d = math.inf
    for rec in db:
        d = rec.location.distance_to(loc)
        if d < best_d or (d == best_d and rec.rp_id < best_id):
            best_d = d
            best_id = rec.rp_id
    return best_id
