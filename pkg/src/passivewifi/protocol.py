"""AP-side phone tracking and localizer dispatch.

A Track watches one MAC address: frames are bucketed into fixed
windows, a localization trigger fires for every window that saw at
least one frame, and the phone is classified active or inactive by
whether a data frame arrived recently.  The Dispatcher turns triggers
into location fixes, routing inactive phones to the sequential RSSI
localizer (or the recurrent one) and active phones to the two-step
CSI refinement, with a clean fallback when CSI is short.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from . import csi as csimod
from . import ssp
from .core import Location

CLASSIFICATIONS = ("unknown", "inactive", "active")
DEFAULT_DELTA_T = 1.5      # s, within the 1-2 s update interval band
CLASSIFY_WINDOW_FACTOR = 2  # active iff a data frame in the last 2 * delta_t
CSI_CACHE_PER_AP = 30       # rolling scans kept per AP per track


@dataclass(frozen=True)
class RtsSchedule:
    interval: float = 0.2  # s between polls
    burst: int = 1         # RTS frames per poll tick

    def __post_init__(self):
        if not self.interval > 0:
            raise ValueError("interval must be positive")
        if self.burst < 1:
            raise ValueError("burst must be >= 1")


@dataclass
class TrackState:
    mac: str
    classification: str = "unknown"
    last_frame_t: float = float("-inf")
    frames_in_window: int = 0
    rts_enabled: bool = True
    prev_estimate: Location = None
    delta_t: float = DEFAULT_DELTA_T

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ValueError("delta_t must be positive")
        if self.classification not in CLASSIFICATIONS:
            raise ValueError(f"unknown classification {self.classification!r}")


@dataclass(frozen=True)
class LocalizationTrigger:
    """One window's worth of evidence for a track."""

    mac: str
    t_start: float
    t_end: float
    rssi_mean: dict          # ap_id -> mean dBm over the window
    frame_count: int
    data_frames: int
    classification: str      # at the window end
    csi_scans: dict          # ap_id -> tuple of recent CsiScan


def classify_times(data_frame_times, now: float, window_s: float) -> str:
    """Active iff at least one data frame landed in (now - window, now]."""
    for t in reversed(list(data_frame_times)):
        if t <= now - window_s:
            break
        if t <= now:
            return "active"
    return "inactive"


class Track:
    """State machine for one MAC; frames must arrive in time order."""

    def __init__(self, mac: str, t0: float, delta_t: float = DEFAULT_DELTA_T,
                 rts_enabled: bool = True):
        self.state = TrackState(mac, rts_enabled=rts_enabled, delta_t=delta_t)
        self.bucket_origin = t0
        self.transitions = [(t0, "unknown")]
        self.buckets_seen = 0
        self.data_times = deque(maxlen=256)
        self.csi_cache = {}
        self._rssi_sum = {}
        self._rssi_n = {}
        self._frames = 0
        self._data_frames = 0

    @property
    def mac(self) -> str:
        return self.state.mac

    @property
    def delta_t(self) -> float:
        return self.state.delta_t

    @property
    def bucket_start(self) -> float:
        # indexed, not accumulated: window edges must not drift over a
        # long stream, and an RTS tick landing exactly on an edge has to
        # compare the same way everywhere
        return self.bucket_origin + self.buckets_seen * self.state.delta_t

    def _set_classification(self, t: float, new: str) -> None:
        if new != self.state.classification:
            self.state.classification = new
            self.transitions.append((t, new))

    def classification_at(self, t: float) -> str:
        out = self.transitions[0][1]
        for when, cls in self.transitions:
            if when <= t:
                out = cls
            else:
                break
        return out

    def _flush_bucket(self, t_end: float):
        trigger = None
        if self._frames >= 1:
            cls = classify_times(self.data_times, t_end,
                                 CLASSIFY_WINDOW_FACTOR * self.delta_t)
            self._set_classification(t_end, cls)
            trigger = LocalizationTrigger(
                self.mac, self.bucket_start, t_end,
                {ap: self._rssi_sum[ap] / self._rssi_n[ap]
                 for ap in sorted(self._rssi_sum)},
                self._frames, self._data_frames,
                self.state.classification,
                {ap: tuple(scans) for ap, scans in self.csi_cache.items()})
        self.buckets_seen += 1
        self._rssi_sum = {}
        self._rssi_n = {}
        self._frames = 0
        self._data_frames = 0
        return trigger

    def advance_to(self, t: float) -> list:
        """Flush every bucket that ends at or before t; returns triggers."""
        triggers = []
        while True:
            end = self.bucket_origin \
                + (self.buckets_seen + 1) * self.state.delta_t
            if t < end:
                break
            trig = self._flush_bucket(end)
            if trig is not None:
                triggers.append(trig)
        return triggers

    def on_frame(self, event) -> list:
        """Feed one frame; returns triggers for any windows it closes.

        Frames from other MACs are ignored outright, so they can never
        mutate this track.
        """
        if event.mac != self.mac:
            return []
        triggers = self.advance_to(event.t)
        self.state.last_frame_t = event.t
        self._frames += 1
        self.state.frames_in_window = self._frames
        if event.kind == "data":
            self._data_frames += 1
            self.data_times.append(event.t)
            self._set_classification(event.t, "active")
        for ap_id, rssi, scan in event.ap_observations:
            self._rssi_sum[ap_id] = self._rssi_sum.get(ap_id, 0.0) + rssi
            self._rssi_n[ap_id] = self._rssi_n.get(ap_id, 0) + 1
            if scan is not None:
                self.csi_cache.setdefault(
                    ap_id, deque(maxlen=CSI_CACHE_PER_AP)).append(scan)
        return triggers


def rts_controller(track: Track, schedule: RtsSchedule, t_start: float,
                   t_end: float, rts_capable_aps) -> list:
    """RTS commands (t, ap_id) over [t_start, t_end], polling at the
    schedule interval while the track is not classified active.

    Only rts-capable APs poll; each emits `burst` commands per tick.
    """
    if not track.state.rts_enabled:
        return []
    commands = []
    k = 1
    while True:
        t = t_start + k * schedule.interval
        if t > t_end:
            break
        if track.classification_at(t) != "active":
            for ap_id in rts_capable_aps:
                commands.extend([(t, ap_id)] * schedule.burst)
        k += 1
    return commands


class Monitor:
    """Track table over an event stream; creates a track when a probe
    request reveals a new MAC and keeps a replay log."""

    def __init__(self, delta_t: float = DEFAULT_DELTA_T,
                 rts_enabled: bool = True):
        self.delta_t = delta_t
        self.rts_enabled = rts_enabled
        self.tracks = {}
        self.log = []

    def register(self, mac: str, t0: float) -> Track:
        """Pre-establish a track (phone already known from an earlier probe).

        Steady-state evaluation entry point: probe requests can be minutes
        apart, so short test runs start with the track in place.
        """
        track = self.tracks.get(mac)
        if track is None:
            track = Track(mac, t0, self.delta_t, self.rts_enabled)
            self.tracks[mac] = track
            self.log.append((t0, mac, "track_registered", ""))
        return track

    def on_frame(self, event) -> list:
        track = self.tracks.get(event.mac)
        if track is None:
            if event.kind != "probe_request":
                return []
            track = Track(event.mac, event.t, self.delta_t, self.rts_enabled)
            self.tracks[event.mac] = track
            self.log.append((event.t, event.mac, "track_created", ""))
        before = track.state.classification
        triggers = track.on_frame(event)
        for trig in triggers:
            self.log.append((trig.t_end, event.mac, "trigger",
                             f"frames={trig.frame_count}"))
        if track.state.classification != before:
            self.log.append((event.t, event.mac, "classification",
                             track.state.classification))
        return triggers

    def drain(self, t: float) -> list:
        """Flush all tracks' windows up to time t."""
        triggers = []
        for mac in sorted(self.tracks):
            for trig in self.tracks[mac].advance_to(t):
                self.log.append((trig.t_end, mac, "trigger",
                                 f"frames={trig.frame_count}"))
                triggers.append(trig)
        return triggers

    def dump_log(self, path) -> None:
        rows = [f"{format(t, '.9g')},{mac},{action},{detail}"
                for t, mac, action, detail in self.log]
        Path(path).write_text("\n".join(rows) + "\n" if rows else "")


@dataclass(frozen=True)
class LocalizerConfig:
    algorithm: str = "auto"   # auto | ssp | lstm | two_step
    window: ssp.SspWindow = ssp.SspWindow()
    top_k: int = ssp.TOP_K
    strongest_aps: int = 2
    amp_weight: float = 0.5
    phase_weight: float = 0.5

    def __post_init__(self):
        if self.algorithm not in ("auto", "ssp", "lstm", "two_step"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")


@dataclass(frozen=True)
class Fix:
    t: float
    estimate: Location      # None when no fix could be made
    method: str             # ssp | lstm | two_step | two_step_fallback | none
    classification: str
    rp_id: int = None       # refined RP for two_step hits


class Dispatcher:
    """Routes localization triggers to the configured localizer."""

    def __init__(self, db, table, config: LocalizerConfig = LocalizerConfig(),
                 lstm_model=None):
        self.db = db
        self.table = table
        self.config = config
        self.lstm_model = lstm_model
        self._windows = {}  # mac -> deque of fingerprint dicts for the rnn

    def _route(self, trigger) -> str:
        alg = self.config.algorithm
        if alg != "auto":
            return alg
        if trigger.classification == "active":
            return "two_step"
        return "lstm" if self.lstm_model is not None else "ssp"

    def dispatch(self, track: Track, trigger: LocalizationTrigger) -> Fix:
        if not trigger.rssi_mean:
            return Fix(trigger.t_end, None, "none", trigger.classification)
        post = ssp.posterior(self.db, self.table, trigger.rssi_mean,
                             prev=track.state.prev_estimate,
                             window=self.config.window)
        route = self._route(trigger)
        rp_id = None
        if route == "two_step":
            estimate, rp_id, method = self._two_step(trigger, post)
        elif route == "lstm":
            estimate, method = self._lstm(trigger, post)
        else:
            estimate, method = ssp.estimate(post, self.db,
                                            self.config.top_k), "ssp"
        track.state.prev_estimate = estimate
        return Fix(trigger.t_end, estimate, method, trigger.classification,
                   rp_id)

    def _two_step(self, trigger, post):
        candidates = ssp.top_k(post, self.config.top_k)
        obs_csi = {}
        for ap_id, scans in trigger.csi_scans.items():
            if len(scans) < csimod.SCANS_PER_IMAGE:
                continue
            image = csimod.build_image(scans)
            recent = sorted(scans, key=lambda s: s.timestamp)
            recent = recent[-csimod.SCANS_PER_IMAGE:]
            vectors = [csimod.phase_difference(s) for s in recent]
            obs_csi[ap_id] = (image, csimod.circular_mean_phase(vectors))
        if not obs_csi:
            return ssp.estimate(post, self.db, self.config.top_k), None, \
                "two_step_fallback"
        weights = {rp: w for rp, w in zip(post.rp_ids, post.probabilities)}
        try:
            rp_id, loc = csimod.refine(
                candidates, obs_csi, self.db, self.config.strongest_aps,
                obs_rssi=trigger.rssi_mean,
                candidate_weights=weights,
                amp_weight=self.config.amp_weight,
                phase_weight=self.config.phase_weight)
        except csimod.NoCsiCoverageError:
            return ssp.estimate(post, self.db, self.config.top_k), None, \
                "two_step_fallback"
        return loc, rp_id, "two_step"

    def _lstm(self, trigger, post):
        from . import rnn
        window = self._windows.setdefault(
            trigger.mac, deque(maxlen=self.lstm_model.config.memory_length))
        window.append(trigger.rssi_mean)
        if len(window) < self.lstm_model.config.memory_length:
            return ssp.estimate(post, self.db, self.config.top_k), "ssp"
        mat = rnn.fingerprint_window(list(window), self.table.ap_ids)
        locs = self.lstm_model.forward(mat)
        return Location(float(locs[-1, 0]), float(locs[-1, 1])), "lstm"
