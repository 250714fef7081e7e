"""Experiment harness: simulate training surveys, run localization tests,
summarize errors.

Everything here is deterministic given the scenario and the seeds, so any
reported number can be regenerated from the run manifest.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import airsim, csi, protocol, rnn, ssp
from .airsim import DEVICE_PROFILES, PhoneState
from .core import (DomainError, Environment, Location, ObservationBatch,
                   Trajectory, build_database)
from .kde import KernelSpec, fit_all_pdfs
from .scenario import Scenario

ALGORITHMS = ("ssp", "pmimo_lstm", "two_step")
_ROUTE = {"ssp": "ssp", "pmimo_lstm": "lstm", "two_step": "two_step"}
PHONE_STATES = ("inactive", "active")


@dataclass(frozen=True)
class RunSpec:
    """One evaluation condition: device, traffic state, algorithm, seeds."""

    scenario: Scenario
    device: str = "samsung_s6"
    phone_state: str = "inactive"
    algorithm: str = "ssp"
    rts: bool = True
    screen_on: bool = True
    seeds: tuple = None        # None: take the scenario's seed list
    delta_t: float = None      # None: take the scenario's update interval
    label: str = None

    def __post_init__(self):
        if self.device not in DEVICE_PROFILES:
            raise ValueError(f"unknown device profile {self.device!r}")
        if self.phone_state not in PHONE_STATES:
            raise ValueError(f"phone_state must be one of {PHONE_STATES}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        # CSI only rides on data frames, which only active phones send
        if self.algorithm == "two_step" and self.phone_state != "active":
            raise ValueError("two_step needs an active phone (CSI source)")
        if self.seeds is None:
            object.__setattr__(self, "seeds", tuple(self.scenario.seeds))
        else:
            object.__setattr__(self, "seeds", tuple(self.seeds))
        if self.delta_t is None:
            object.__setattr__(self, "delta_t", self.scenario.delta_t)
        elif not self.delta_t > 0:
            raise ValueError("delta_t must be positive")
        if self.label is None:
            bits = [self.algorithm, self.phone_state,
                    "rts" if self.rts else "norts"]
            object.__setattr__(self, "label", "-".join(bits))


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Localization error summary for one RunSpec over all its seeds."""

    label: str
    errors: np.ndarray          # meters, one entry per produced fix
    fixes: int
    windows: int                # localization windows that elapsed
    fix_rate: float             # fixes / windows
    mean: float
    std: float
    max: float
    cdf: tuple                  # ((error_m, fraction<=), ...) exact empirical
    per_seed: tuple             # ((seed, fixes, windows, mean_error), ...)
    method_counts: tuple = ()   # ((method, count), ...)
    flagged: bool = False       # True when the run produced no fix at all

    @classmethod
    def from_errors(cls, label, errors, windows, per_seed,
                    method_counts=()) -> "ErrorReport":
        errors = np.asarray(errors, dtype=np.float64)
        fixes = int(errors.size)
        if windows < 0:
            raise ValueError("window count cannot be negative")
        fix_rate = fixes / windows if windows else 0.0
        if fixes:
            mean = float(errors.mean())
            std = float(errors.std())
            mx = float(errors.max())
            cdf = empirical_cdf(errors)
        else:
            mean = std = mx = float("nan")
            cdf = ()
        return cls(label, errors, fixes, windows, fix_rate, mean, std, mx,
                   cdf, tuple(per_seed), tuple(method_counts),
                   flagged=fixes == 0)

    def quantile(self, q: float) -> float:
        """Smallest error e with CDF(e) >= q (empirical inverse)."""
        if not 0 < q <= 1:
            raise ValueError("q must be in (0, 1]")
        if not self.cdf:
            return float("nan")
        for err, frac in self.cdf:
            if frac >= q - 1e-12:
                return err
        return self.cdf[-1][0]


def empirical_cdf(errors) -> tuple:
    """Exact step CDF: (value, #{x <= value}/n) at each distinct value."""
    errors = np.sort(np.asarray(errors, dtype=np.float64))
    n = errors.size
    values, counts = np.unique(errors, return_counts=True)
    cum = np.cumsum(counts)
    return tuple((float(v), float(c) / n) for v, c in zip(values, cum))


# ---------------------------------------------------------------------------
# trajectories

def lawnmower_trajectory(env: Environment, speed: float = 1.0,
                         row_step: float = 2.0, margin: float = 0.5,
                         t0: float = 0.0) -> Trajectory:
    """Serpentine sweep of the floor at constant speed."""
    if not 0 < speed:
        raise DomainError("speed must be positive")
    xs = (margin, env.width - margin)
    y = margin
    points = []
    k = 0
    while y <= env.height - margin + 1e-9:
        row = xs if k % 2 == 0 else xs[::-1]
        points.append(Location(row[0], y))
        points.append(Location(row[1], y))
        y += row_step
        k += 1
    waypoints = [(t0, points[0])]
    t = t0
    for p0, p1 in zip(points, points[1:]):
        d = p0.distance_to(p1)
        if d == 0:
            continue
        t += d / speed
        waypoints.append((t, p1))
    return Trajectory(tuple(waypoints), speed_range=(speed, speed))


def random_trajectory(env: Environment, seed: int, duration: float,
                      speed_range=(0.6, 4.0), margin: float = 0.5,
                      t0: float = 0.0) -> Trajectory:
    """Random-waypoint walk lasting exactly `duration` seconds.

    Each leg picks a fresh waypoint and a speed from speed_range; the
    final leg is cut at the end time so runs are length-comparable.
    """
    if not duration > 0:
        raise DomainError("duration must be positive")
    rng = np.random.default_rng(seed)
    lo = np.array([margin, margin])
    hi = np.array([env.width - margin, env.height - margin])

    def draw_point():
        p = lo + rng.random(2) * (hi - lo)
        return Location(float(p[0]), float(p[1]))

    t_end = t0 + duration
    pos = draw_point()
    waypoints = [(t0, pos)]
    t = t0
    while t < t_end:
        nxt = draw_point()
        d = pos.distance_to(nxt)
        if d < 1e-6:
            continue
        v = rng.uniform(*speed_range)
        t_next = t + d / v
        if t_next >= t_end:
            a = (t_end - t) / (t_next - t)
            nxt = Location(pos.x + a * (nxt.x - pos.x),
                           pos.y + a * (nxt.y - pos.y))
            waypoints.append((t_end, nxt))
            break
        waypoints.append((t_next, nxt))
        pos, t = nxt, t_next
    return Trajectory(tuple(waypoints), speed_range=tuple(speed_range))


# ---------------------------------------------------------------------------
# training survey

def _survey_seed(base_seed: int, rp_id: int, session: int, dev_idx: int) -> int:
    return base_seed * 1_000_003 + (rp_id * 8 + session) * 8 + dev_idx


def collect_training(sc: Scenario, devices=None, dwell: float = None,
                     base_seed: int = 0, env: Environment = None):
    """Simulate the fingerprint survey: dwell at every RP with an active
    phone (data frames carry both RSSI and CSI), several sessions each.

    Stored CSI is thinned to sc.csi_keep scans per (RP, AP) split across
    sessions; RSSI keeps every frame.
    """
    if env is None:
        env = sc.environment()
    if devices is None:
        devices = sc.devices[:1]
    if dwell is not None:
        if not dwell > 0:
            raise ValueError("dwell must be positive")
        sc = dataclasses.replace(sc, dwell_s=float(dwell))
    keep_per_session = max(csi.SCANS_PER_IMAGE,
                           sc.csi_keep // max(sc.sessions, 1))
    batches = []
    for dev_idx, name in enumerate(devices):
        dev = DEVICE_PROFILES[name]
        # only the stored tail of scans needs CSI synthesis
        tail_s = 2.0 * keep_per_session / max(dev.data_frame_rate, 1.0)
        csi_from = max(0.0, sc.dwell_s - tail_s)
        for rp_id, loc in env.rps:
            for session in range(sc.sessions):
                seed = _survey_seed(base_seed, rp_id, session, dev_idx)
                traj = Trajectory(((0.0, loc), (sc.dwell_s, loc)),
                                  speed_range=sc.speed_range)
                run = airsim.run_trajectory(env, sc.propagation, dev, traj,
                                            PhoneState(active=True),
                                            rts=False, seed=seed,
                                            csi_from_t=csi_from)
                rows = []
                scans = {}
                for ev in run.events:
                    for ap_id, rssi_dbm, scan in ev.ap_observations:
                        rows.append((ap_id, ev.t, rssi_dbm))
                        if scan is not None:
                            scans.setdefault(ap_id, []).append(scan)
                kept = []
                for ap_id in sorted(scans):
                    kept.extend(scans[ap_id][-keep_per_session:])
                batches.append(ObservationBatch(rp_id, name, tuple(rows),
                                                tuple(kept)))
    return build_database(env, batches)


# ---------------------------------------------------------------------------
# test runs

def _count_windows(duration: float, delta_t: float) -> int:
    # buckets the track flushes in [0, duration]
    return int(math.floor(duration / delta_t + 1e-9))


def run_test(spec: RunSpec, db, table=None, lstm_model=None,
             kernel: KernelSpec = None,
             window: ssp.SspWindow = None) -> ErrorReport:
    """Run one evaluation condition over its seeds and report errors.

    Each seed walks a fresh random trajectory; the monitor has the track
    pre-registered (steady state: the phone was probe-detected before the
    measured interval starts).
    """
    sc = spec.scenario
    env = db.env
    if table is None:
        table = fit_all_pdfs(db, kernel or KernelSpec())
    dev = DEVICE_PROFILES[spec.device]
    active = spec.phone_state == "active"
    # the controller never polls an active track, so the phone-side CTS
    # process is only enabled for inactive runs
    rts = spec.rts and not active
    config = protocol.LocalizerConfig(algorithm=_ROUTE[spec.algorithm],
                                      window=window or ssp.SspWindow())
    errors = []
    per_seed = []
    methods = {}
    windows_total = 0
    for seed in spec.seeds:
        traj = random_trajectory(env, seed=seed, duration=sc.test_duration_s,
                                 speed_range=sc.speed_range)
        state = PhoneState(active=active, screen_on=spec.screen_on)
        run = airsim.run_trajectory(env, sc.propagation, dev, traj, state,
                                    rts=rts, seed=seed,
                                    rts_interval=sc.rts_interval)
        monitor = protocol.Monitor(spec.delta_t, rts_enabled=rts)
        monitor.register(run.mac, run.t_start)
        dispatcher = protocol.Dispatcher(db, table, config, lstm_model)
        fixes = []
        for ev in run.events:
            for trig in monitor.on_frame(ev):
                fixes.append(dispatcher.dispatch(monitor.tracks[ev.mac], trig))
        for trig in monitor.drain(run.t_end):
            fixes.append(dispatcher.dispatch(monitor.tracks[trig.mac], trig))
        n_windows = _count_windows(sc.test_duration_s, spec.delta_t)
        windows_total += n_windows
        seed_errors = []
        for fix in fixes:
            methods[fix.method] = methods.get(fix.method, 0) + 1
            if fix.estimate is None:
                continue
            truth = run.truth_at(fix.t)
            seed_errors.append(fix.estimate.distance_to(truth))
        errors.extend(seed_errors)
        per_seed.append((seed, len(seed_errors), n_windows,
                         float(np.mean(seed_errors)) if seed_errors
                         else float("nan")))
    return ErrorReport.from_errors(spec.label, errors, windows_total,
                                   per_seed, tuple(sorted(methods.items())))


# ---------------------------------------------------------------------------
# comparison and report formatting

def compare_table(reports) -> str:
    """Aligned comparison table, one row per report."""
    header = ("condition", "fixes", "fix_rate", "mean_m", "std_m",
              "p50_m", "p90_m", "max_m")
    rows = [header]
    for rep in reports:
        rows.append((rep.label, str(rep.fixes), f"{rep.fix_rate:.3f}",
                     f"{rep.mean:.3f}", f"{rep.std:.3f}",
                     f"{rep.quantile(0.5):.3f}", f"{rep.quantile(0.9):.3f}",
                     f"{rep.max:.3f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
             for r in rows]
    return "\n".join(lines)


def merged_cdf(reports):
    """Common error grid with one CDF column per report.

    Returns (grid, columns) where columns[i][j] = fraction of report i's
    errors <= grid[j].
    """
    grid = np.unique(np.concatenate(
        [np.asarray([v for v, _ in rep.cdf]) for rep in reports if rep.cdf]
        or [np.zeros(0)]))
    columns = []
    for rep in reports:
        if rep.cdf:
            vals = np.asarray([v for v, _ in rep.cdf])
            fracs = np.asarray([f for _, f in rep.cdf])
            idx = np.searchsorted(vals, grid, side="right") - 1
            col = np.where(idx >= 0, fracs[np.maximum(idx, 0)], 0.0)
        else:
            col = np.full(grid.shape, np.nan)
        columns.append(col)
    return grid, columns


def improvement(base: ErrorReport, other: ErrorReport) -> float:
    """Relative mean-error reduction of `other` over `base`, in [−inf, 1]."""
    if not base.fixes or not other.fixes:
        return float("nan")
    return 1.0 - other.mean / base.mean


# ---------------------------------------------------------------------------
# recurrent-model training data

def bucket_fingerprints(events, t0: float, delta_t: float, n: int) -> list:
    """Per-window mean RSSI dicts (ap_id -> dBm) over n windows from t0.

    Windows with no frames come out as empty dicts; the feature encoder
    maps missing APs to the not-heard value.
    """
    sums = [dict() for _ in range(n)]
    counts = [dict() for _ in range(n)]
    for ev in events:
        k = int((ev.t - t0) / delta_t)
        if not 0 <= k < n:
            continue
        for ap_id, rssi_dbm in ev.rssi_by_ap.items():
            sums[k][ap_id] = sums[k].get(ap_id, 0.0) + rssi_dbm
            counts[k][ap_id] = counts[k].get(ap_id, 0) + 1
    return [{ap: s / counts[k][ap] for ap, s in sums[k].items()}
            for k, _ in enumerate(sums)]


def lstm_training_set(sc: Scenario, db, device: str = "samsung_s6",
                      n_sequences: int = 200, seed: int = 0,
                      memory_length: int = None) -> rnn.TrainingSet:
    """Synthesize (window sequence, final position) pairs from simulated
    inactive walks with RTS polling on; targets are (x, y) in meters."""
    env = db.env
    dev = DEVICE_PROFILES[device]
    mem = memory_length if memory_length is not None \
        else rnn.LstmConfig().memory_length
    ap_ids = sorted(env.ap_ids)
    duration = mem * sc.delta_t
    sequences = []
    for i in range(n_sequences):
        run_seed = seed * 1_000_003 + 500_000 + i
        traj = random_trajectory(env, seed=run_seed, duration=duration,
                                 speed_range=sc.speed_range)
        run = airsim.run_trajectory(env, sc.propagation, dev, traj,
                                    PhoneState(active=False), rts=True,
                                    seed=run_seed,
                                    rts_interval=sc.rts_interval)
        obs = bucket_fingerprints(run.events, run.t_start, sc.delta_t, mem)
        xs = rnn.fingerprint_window(obs, ap_ids)
        # per-step supervision: the true position at every window end
        ys = np.empty((mem, rnn.OUTPUT_DIM))
        for k in range(mem):
            p = run.truth_at(run.t_start + (k + 1) * sc.delta_t)
            ys[k] = (p.x, p.y)
        sequences.append((xs, ys))
    return rnn.TrainingSet(tuple(sequences))
