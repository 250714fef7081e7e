"""Frame-level radio simulator.

Synthesizes what APs would observe from a phone moving through an
environment: per-frame RSSI under log-distance path loss with a frozen
shadowing field and per-frame fading, per-data-frame CSI from a few-ray
channel with distance-scaled noise, and frame timing for active phones
(data frames), inactive phones (sparse probe requests with heavy-tailed
gaps) and CTS replies elicited by a periodic RTS poll.

Everything is driven by a numpy Generator, so a (scenario, seed) pair
reproduces its event stream exactly.  The shadowing field and the
reflected-ray geometry are keyed by a hash of (channel seed, AP, grid
cell) instead of consuming the run RNG, which keeps them identical
between training and testing runs.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import DomainError, Location, Trajectory
from .csi import NUM_SUBCARRIERS, CsiScan, wrap_angles

SPEED_OF_LIGHT = 299792458.0   # m/s
CENTER_FREQ_HZ = 2.437e9       # channel 6
SUBCARRIER_SPACING_HZ = 312.5e3
RTS_INTERVAL_S = 0.2
CSI_AMP_SCALE = 30.0           # arbitrary reporting unit

FRAME_KINDS = ("probe_request", "data", "cts", "ack")

# absolute subcarrier frequencies, centered on the carrier
_SUBCARRIER_HZ = CENTER_FREQ_HZ + SUBCARRIER_SPACING_HZ * (
    np.arange(NUM_SUBCARRIERS) - NUM_SUBCARRIERS // 2)


def _unit_hash(*key) -> float:
    """Deterministic uniform in [0, 1) from a tuple of printable keys."""
    raw = "|".join(map(str, key)).encode()
    h = hashlib.blake2b(raw, digest_size=8).digest()
    return (int.from_bytes(h, "little") >> 11) * (1.0 / (1 << 53))


def _gauss_hash(*key) -> float:
    u1 = max(_unit_hash(*key, "u1"), 1e-17)
    u2 = _unit_hash(*key, "u2")
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@lru_cache(maxsize=1 << 18)
def _shadow_unit(seed: int, ap_key: str, ix: int, iy: int) -> float:
    return _gauss_hash("shadow", seed, ap_key, ix, iy)


def _ap_key_loc(ap):
    """Accept an AccessPoint or a bare Location as the AP argument."""
    loc = getattr(ap, "location", ap)
    key = getattr(ap, "ap_id", None)
    if key is None:
        key = f"{loc.x!r},{loc.y!r}"
    return key, loc


@dataclass(frozen=True)
class PropagationModel:
    pl0: float = -40.0            # dBm at 1 m
    pathloss_exponent: float = 2.4
    shadowing_sigma: float = 3.0  # dB, frozen spatial field
    fast_fading_sigma: float = 2.0  # dB, i.i.d. per frame
    shadow_cell_m: float = 1.0    # shadow field resolution
    channel_seed: int = 0         # keys the frozen field and ray geometry
    sensitivity_dbm: float = -92.0  # AP drops frames below this
    csi_rays: int = 3             # reflected rays besides the direct path
    csi_noise_base: float = 0.004  # relative CSI noise at d = 0
    csi_noise_slope: float = 0.4   # relative CSI noise growth with d
    csi_noise_ref_m: float = 12.0

    def __post_init__(self):
        if not 1.5 <= self.pathloss_exponent <= 6.0:
            raise ValueError("pathloss_exponent must be in [1.5, 6]")
        for name in ("shadowing_sigma", "fast_fading_sigma",
                     "csi_noise_base", "csi_noise_slope"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.shadow_cell_m > 0:
            raise ValueError("shadow_cell_m must be positive")
        if self.csi_rays < 0:
            raise ValueError("csi_rays must be >= 0")

    def shadow_db(self, ap, loc: Location) -> float:
        if self.shadowing_sigma == 0.0:
            return 0.0
        ap_key, _ = _ap_key_loc(ap)
        ix = math.floor(loc.x / self.shadow_cell_m)
        iy = math.floor(loc.y / self.shadow_cell_m)
        return self.shadowing_sigma * _shadow_unit(self.channel_seed, ap_key,
                                                   ix, iy)


@dataclass(frozen=True)
class ArrivalMixture:
    """Heavy-tailed inter-frame gaps of an unpolled phone: a lognormal
    mixture of short bursts and long silences."""

    burst_weight: float = 0.25
    burst_median_s: float = 8.0
    burst_sigma: float = 0.7
    idle_median_s: float = 90.0
    idle_sigma: float = 0.6

    def __post_init__(self):
        if not 0.0 <= self.burst_weight <= 1.0:
            raise ValueError("burst_weight must be in [0, 1]")
        for name in ("burst_median_s", "burst_sigma", "idle_median_s",
                     "idle_sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def scaled(self, factor: float) -> "ArrivalMixture":
        """Same shape with both medians multiplied by factor."""
        return ArrivalMixture(self.burst_weight,
                              self.burst_median_s * factor, self.burst_sigma,
                              self.idle_median_s * factor, self.idle_sigma)

    def draw_gap(self, rng) -> float:
        if rng.random() < self.burst_weight:
            return float(rng.lognormal(math.log(self.burst_median_s),
                                       self.burst_sigma))
        return float(rng.lognormal(math.log(self.idle_median_s),
                                   self.idle_sigma))

    def draw_gaps(self, rng, n: int) -> np.ndarray:
        burst = rng.random(n) < self.burst_weight
        out = rng.lognormal(math.log(self.idle_median_s), self.idle_sigma, n)
        out[burst] = rng.lognormal(math.log(self.burst_median_s),
                                   self.burst_sigma, int(burst.sum()))
        return out

    def prob_leq(self, x: float) -> float:
        """Closed-form P(gap <= x)."""
        if x <= 0:
            return 0.0

        def phi(z):
            return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))

        lx = math.log(x)
        return (self.burst_weight
                * phi((lx - math.log(self.burst_median_s)) / self.burst_sigma)
                + (1.0 - self.burst_weight)
                * phi((lx - math.log(self.idle_median_s)) / self.idle_sigma))


_DEFAULT_ARRIVAL = ArrivalMixture()
# screen off stretches the silences well past 40 s typical gaps
_SCREEN_OFF_SCALE = 2.5


@dataclass(frozen=True)
class PhoneState:
    active: bool
    screen_on: bool = True


@dataclass(frozen=True)
class DeviceProfile:
    model_name: str
    tx_offset_mean: float = 0.0   # dB relative to the propagation model
    tx_offset_sigma: float = 2.0  # dB per-frame transmit jitter
    rssi_range: tuple = (-95.0, -5.0)  # reporting clamp, dBm
    inactive_arrival: tuple = (_DEFAULT_ARRIVAL,
                               _DEFAULT_ARRIVAL.scaled(_SCREEN_OFF_SCALE))
    cts_response_prob: float = 0.9   # chance a given RTS poll is answered
    data_frame_rate: float = 8.0     # frames/s while active
    rts_reply_per_minute_scale: float = 3.0  # CTS burst size multiplier

    def __post_init__(self):
        lo, hi = self.rssi_range
        if not lo < hi:
            raise ValueError("rssi_range min must be < max")
        if not 0.0 <= self.cts_response_prob <= 1.0:
            raise ValueError("cts_response_prob must be in [0, 1]")
        if self.tx_offset_sigma < 0 or self.data_frame_rate < 0 \
                or self.rts_reply_per_minute_scale < 0:
            raise ValueError("rates and sigmas must be >= 0")

    def arrival(self, screen_on: bool) -> ArrivalMixture:
        return self.inactive_arrival[0 if screen_on else 1]

    @property
    def cts_per_tick(self) -> float:
        """Mean CTS replies per RTS poll tick."""
        return self.cts_response_prob * self.rts_reply_per_minute_scale


# Relative transmit offsets and CTS productivity are set so that pooled
# RSSI ranges and per-minute reply counts sit near the measured spread of
# these handsets (Samsung ~1110/min, Nexus ~810, iPhone ~250, HTC ~110 at
# a 200 ms poll; Samsung/HTC ratio ~10).
DEVICE_PROFILES = {
    "samsung_s6": DeviceProfile("samsung_s6", tx_offset_mean=0.0,
                                tx_offset_sigma=2.0, cts_response_prob=0.95,
                                rts_reply_per_minute_scale=3.9,
                                data_frame_rate=40.0),
    "nexus_5": DeviceProfile("nexus_5", tx_offset_mean=1.0,
                             tx_offset_sigma=2.5, cts_response_prob=0.90,
                             rts_reply_per_minute_scale=3.0,
                             data_frame_rate=32.0),
    "iphone_x": DeviceProfile("iphone_x", tx_offset_mean=-5.0,
                              tx_offset_sigma=3.0, cts_response_prob=0.70,
                              rts_reply_per_minute_scale=1.2,
                              data_frame_rate=25.0),
    "htc_one_x": DeviceProfile("htc_one_x", tx_offset_mean=-2.0,
                               tx_offset_sigma=1.5, cts_response_prob=0.60,
                               rts_reply_per_minute_scale=0.6,
                               data_frame_rate=20.0),
}


def rssi_at(prop: PropagationModel, dev, ap, phone: Location, rng) -> float:
    """One frame's RSSI at an AP: path loss + frozen shadowing + device
    offset + per-frame jitter, clamped to the device's reporting range.

    dev may be None for a bare channel probe (no offset, no clamp).
    """
    _, ap_loc = _ap_key_loc(ap)
    d = max(ap_loc.distance_to(phone), 0.1)
    v = prop.pl0 - 10.0 * prop.pathloss_exponent * math.log10(d)
    v += prop.shadow_db(ap, phone)
    tx_sigma = dev.tx_offset_sigma if dev is not None else 0.0
    jitter = math.hypot(tx_sigma, prop.fast_fading_sigma)
    v += float(rng.normal(0.0, jitter))
    if dev is not None:
        v += dev.tx_offset_mean
        lo, hi = dev.rssi_range
        v = min(max(v, lo), hi)
    return float(v)


def _ray_set(prop: PropagationModel, ap, phone: Location):
    """Direct path plus hashed reflected rays for the phone's grid cell.

    Returns (amplitudes, delays_s, extra_phases).  The reflected-ray
    geometry is frozen per (channel seed, AP, cell) just like shadowing.
    """
    ap_key, ap_loc = _ap_key_loc(ap)
    d = max(ap_loc.distance_to(phone), 0.1)
    ix = math.floor(phone.x / prop.shadow_cell_m)
    iy = math.floor(phone.y / prop.shadow_cell_m)
    amps = [1.0 / d]
    delays = [d / SPEED_OF_LIGHT]
    phases = [0.0]
    for r in range(prop.csi_rays):
        # excess path of 10-120 m puts 0.5-6 ripple cycles across the
        # band; gain proportional to the direct ray keeps the ripple
        # pattern of a cell identical at any distance inside it
        extra = 10.0 + 110.0 * _unit_hash("ray_len", prop.channel_seed,
                                          ap_key, ix, iy, r)
        rho = 0.15 + 0.5 * _unit_hash("ray_gain", prop.channel_seed,
                                      ap_key, ix, iy, r)
        phi = 2.0 * math.pi * _unit_hash("ray_phi", prop.channel_seed,
                                         ap_key, ix, iy, r)
        amps.append(rho / (1.0 + extra / 60.0) / d)
        delays.append((d + extra) / SPEED_OF_LIGHT)
        phases.append(phi)
    return (np.asarray(amps), np.asarray(delays), np.asarray(phases))


def csi_noise_sigma(prop: PropagationModel, d: float) -> float:
    """Relative per-subcarrier noise level at distance d."""
    return prop.csi_noise_base + prop.csi_noise_slope * \
        (d / prop.csi_noise_ref_m) ** 1.5


def csi_at(prop: PropagationModel, ap, phone: Location, rng,
           timestamp: float = 0.0) -> CsiScan:
    """One data frame's CSI scan at an AP.

    The noiseless channel is a sum of a direct ray and a few frozen
    reflected rays, so nearby cells get visibly different ripple across
    the band; per-subcarrier complex noise grows with distance, which is
    what makes near-AP image stacks stable and far ones fluctuate.
    """
    ap_key, ap_loc = _ap_key_loc(ap)
    ap_id = getattr(ap, "ap_id", ap_key)
    d = max(ap_loc.distance_to(phone), 0.1)
    amps, delays, phis = _ray_set(prop, ap, phone)
    angles = (-2.0 * np.pi * np.outer(_SUBCARRIER_HZ, delays)) + phis
    h = (amps * np.exp(1j * angles)).sum(axis=1)
    sigma_rel = csi_noise_sigma(prop, d)
    if sigma_rel > 0.0:
        level = sigma_rel * float(np.mean(np.abs(h))) / math.sqrt(2.0)
        h = h + rng.normal(0.0, level, NUM_SUBCARRIERS) \
            + 1j * rng.normal(0.0, level, NUM_SUBCARRIERS)
        # unsynchronized receiver LO: a common phase offset per scan,
        # removed downstream by subcarrier phase differencing
        h = h * np.exp(1j * rng.uniform(-math.pi, math.pi))
    return CsiScan(np.abs(h) * CSI_AMP_SCALE, wrap_angles(np.angle(h)),
                   ap_id, timestamp)


def frame_stream(dev: DeviceProfile, state: PhoneState, rts_interval,
                 duration: float, rng, t0: float = 0.0) -> list:
    """Frame timeline of one phone over [t0, t0 + duration): a list of
    (time, kind) tuples sorted by time.

    rts_interval None means no RTS polling; otherwise each poll tick
    elicits a Poisson burst of CTS replies sized by the device profile.
    Active phones send data frames (sometimes trailed by an ack) on top
    of the background probe-request process.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    end = t0 + duration
    events = []

    mix = dev.arrival(state.screen_on)
    t = t0
    while True:
        t += mix.draw_gap(rng)
        if t >= end:
            break
        events.append((t, "probe_request"))

    if state.active and dev.data_frame_rate > 0:
        mean_gap = 1.0 / dev.data_frame_rate
        t = t0
        while True:
            t += rng.exponential(mean_gap)
            if t >= end:
                break
            events.append((t, "data"))
            if rng.random() < 0.3 and t + 0.001 < end:
                events.append((t + 0.001, "ack"))

    if rts_interval is not None:
        if not rts_interval > 0:
            raise ValueError("rts_interval must be positive")
        lam = dev.cts_per_tick
        tick = t0 + rts_interval
        while tick < end:
            for j in range(rng.poisson(lam)):
                reply = tick + 0.002 * (j + 1)
                if reply < end:
                    events.append((reply, "cts"))
            tick += rts_interval

    events.sort(key=lambda e: (e[0], e[1]))
    return events


def inter_frame_gaps(events) -> np.ndarray:
    """Gaps between consecutive frame times; accepts (t, kind) tuples or
    FrameEvents."""
    times = np.asarray([e.t if hasattr(e, "t") else e[0] for e in events])
    times.sort()
    return np.diff(times)


@dataclass(frozen=True)
class FrameEvent:
    t: float
    kind: str
    mac: str
    ap_observations: tuple  # ((ap_id, rssi_dbm, CsiScan or None), ...)

    def __post_init__(self):
        if self.kind not in FRAME_KINDS:
            raise ValueError(f"unknown frame kind {self.kind!r}")
        if not self.ap_observations:
            raise ValueError("a frame event needs at least one AP observation")
        if self.kind != "data":
            for _, _, scan in self.ap_observations:
                if scan is not None:
                    raise ValueError("CSI can only ride on data frames")

    @property
    def rssi_by_ap(self) -> dict:
        return {ap: rssi for ap, rssi, _ in self.ap_observations}

    @property
    def csi_by_ap(self) -> dict:
        return {ap: scan for ap, _, scan in self.ap_observations
                if scan is not None}


@dataclass(frozen=True)
class TrajectoryRun:
    trajectory: Trajectory
    device: DeviceProfile
    state: PhoneState
    rts_enabled: bool
    seed: int
    mac: str
    events: tuple  # FrameEvent, time-ordered

    def truth_at(self, t: float) -> Location:
        return self.trajectory.position_at(t)

    @property
    def t_start(self) -> float:
        return self.trajectory.waypoints[0][0]

    @property
    def t_end(self) -> float:
        return self.trajectory.waypoints[-1][0]


def device_mac(dev: DeviceProfile, seed: int) -> str:
    """Stable locally-administered MAC for a (device, seed) pair."""
    h = hashlib.blake2b(f"{dev.model_name}|{seed}".encode(),
                        digest_size=5).hexdigest()
    return "02:" + ":".join(h[i:i + 2] for i in range(0, 10, 2))


def run_trajectory(env, prop: PropagationModel, dev: DeviceProfile,
                   traj: Trajectory, state: PhoneState, rts: bool, seed: int,
                   rts_interval: float = RTS_INTERVAL_S, mac=None,
                   csi_on_data: bool = True,
                   csi_from_t: float = None) -> TrajectoryRun:
    """Simulate one phone walking a trajectory and return the merged,
    ground-truth-bearing event stream seen by all APs.

    csi_from_t skips CSI synthesis for data frames before that time;
    survey collection uses it because only a tail of scans is stored.
    """
    for _, loc in traj.waypoints:
        if not env.contains(loc):
            raise DomainError(f"trajectory exits bounds at {loc}")
    rng = np.random.default_rng(seed)
    if mac is None:
        mac = device_mac(dev, seed)
    t0 = traj.waypoints[0][0]
    duration = traj.waypoints[-1][0] - t0
    timeline = frame_stream(dev, state, rts_interval if rts else None,
                            duration, rng, t0=t0)
    events = []
    for t, kind in timeline:
        pos = traj.position_at(t)
        want_csi = (kind == "data" and csi_on_data
                    and (csi_from_t is None or t >= csi_from_t))
        obs = []
        for ap in env.aps:
            rssi = rssi_at(prop, dev, ap, pos, rng)
            scan = csi_at(prop, ap, pos, rng, timestamp=t) if want_csi \
                else None
            if rssi >= prop.sensitivity_dbm:
                obs.append((ap.ap_id, rssi, scan))
        if obs:
            events.append(FrameEvent(t, kind, mac, tuple(obs)))
    return TrajectoryRun(traj, dev, state, rts, seed, mac, tuple(events))


def dump_events(run: TrajectoryRun, directory) -> None:
    """Write events.txt (t,kind,mac,ap_id,rssi[,csi_ref]) and the csi.txt
    sidecar (csi_ref,subcarrier,amplitude,phase)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    fmt = lambda x: format(float(x), ".9g")  # noqa: E731
    rows = []
    csi_rows = []
    ref = 0
    for ev in run.events:
        for ap_id, rssi, scan in ev.ap_observations:
            base = f"{fmt(ev.t)},{ev.kind},{ev.mac},{ap_id},{fmt(rssi)}"
            if scan is None:
                rows.append(base)
            else:
                rows.append(base + f",{ref}")
                for sc in range(NUM_SUBCARRIERS):
                    csi_rows.append(f"{ref},{sc},{fmt(scan.amplitudes[sc])},"
                                    f"{fmt(scan.phases[sc])}")
                ref += 1
    (directory / "events.txt").write_text("\n".join(rows) + "\n")
    (directory / "csi.txt").write_text("\n".join(csi_rows) + "\n"
                                       if csi_rows else "")
