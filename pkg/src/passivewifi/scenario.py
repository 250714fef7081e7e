"""Scenario configuration: geometry, radio model, devices, run knobs.

A scenario is everything an experiment needs besides seeds, stored as a
flat key = value text file so runs are reproducible from one artifact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .airsim import DEVICE_PROFILES, PropagationModel, RTS_INTERVAL_S
from .core import AccessPoint, Environment, Location, grid_environment
from .dbio import parse_keyvalues


def _corner_aps(width, height, inset, n_rts):
    corners = [
        ("ap1", inset, inset),
        ("ap2", width - inset, inset),
        ("ap3", inset, height - inset),
        ("ap4", width - inset, height - inset),
        ("ap5", width / 2.0, height / 2.0),
    ]
    return tuple(AccessPoint(name, Location(x, y), i < n_rts)
                 for i, (name, x, y) in enumerate(corners))


def _desk_aps(width, height, inset):
    # three polling corner APs plus a central one: the centre unit adds
    # RSSI gradient where the corner gradients are flattest
    return (AccessPoint("ap1", Location(inset, inset), True),
            AccessPoint("ap2", Location(width - inset, inset), True),
            AccessPoint("ap3", Location(inset, height - inset), True),
            AccessPoint("ap4", Location(width / 2.0, height / 2.0), False))


@dataclass(frozen=True)
class Scenario:
    name: str = "desk"
    width: float = 20.0
    height: float = 15.0
    grid_nx: int = 20
    grid_ny: int = 15
    margin: float = 0.5
    aps: tuple = field(default_factory=lambda: _desk_aps(20.0, 15.0, 0.5))
    propagation: PropagationModel = field(default_factory=PropagationModel)
    devices: tuple = ("samsung_s6", "nexus_5", "iphone_x", "htc_one_x")
    delta_t: float = 1.5          # s, fix update interval
    rts_interval: float = RTS_INTERVAL_S
    dwell_s: float = 12.0         # training dwell per RP per session
    sessions: int = 2             # independent training visits per RP
    csi_keep: int = 40            # stored CSI scans per (RP, AP), all sessions
    test_duration_s: float = 60.0
    speed_range: tuple = (0.6, 1.6)   # indoor walking pace
    seeds: tuple = tuple(range(1, 21))

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("scenario extent must be positive")
        if self.grid_nx < 1 or self.grid_ny < 1:
            raise ValueError("grid must have at least one RP per axis")
        for dev in self.devices:
            if dev not in DEVICE_PROFILES:
                raise ValueError(f"unknown device profile {dev!r}")
        if not self.delta_t > 0 or not self.dwell_s > 0:
            raise ValueError("delta_t and dwell_s must be positive")

    def environment(self) -> Environment:
        return grid_environment(self.width, self.height, self.grid_nx,
                                self.grid_ny, self.aps, margin=self.margin)

    def device(self, name: str):
        return DEVICE_PROFILES[name]


def default_scenario() -> Scenario:
    return Scenario()


def office_scenario() -> Scenario:
    """Larger office floor: 21 x 16 m, five APs, three of them polling."""
    return Scenario(name="office", width=21.0, height=16.0, grid_nx=21,
                    grid_ny=16, aps=_corner_aps(21.0, 16.0, 0.5, 3))


def home_scenario() -> Scenario:
    """Small flat: 15 x 8 m, four APs, two of them polling."""
    return Scenario(name="home", width=15.0, height=8.0, grid_nx=15,
                    grid_ny=8, aps=_corner_aps(15.0, 8.0, 0.5, 2)[:4])


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def save_scenario(sc: Scenario, path) -> None:
    p = sc.propagation
    lines = [
        f"name = {sc.name}",
        f"width = {_fmt(sc.width)}",
        f"height = {_fmt(sc.height)}",
        f"grid_nx = {sc.grid_nx}",
        f"grid_ny = {sc.grid_ny}",
        f"margin = {_fmt(sc.margin)}",
        f"ap_count = {len(sc.aps)}",
    ]
    for i, ap in enumerate(sc.aps):
        lines.append(f"ap.{i}.id = {ap.ap_id}")
        lines.append(f"ap.{i}.x = {_fmt(ap.location.x)}")
        lines.append(f"ap.{i}.y = {_fmt(ap.location.y)}")
        lines.append(f"ap.{i}.rts_capable = "
                     f"{'true' if ap.rts_capable else 'false'}")
    lines += [
        f"propagation.pl0 = {_fmt(p.pl0)}",
        f"propagation.pathloss_exponent = {_fmt(p.pathloss_exponent)}",
        f"propagation.shadowing_sigma = {_fmt(p.shadowing_sigma)}",
        f"propagation.fast_fading_sigma = {_fmt(p.fast_fading_sigma)}",
        f"propagation.shadow_cell_m = {_fmt(p.shadow_cell_m)}",
        f"propagation.channel_seed = {p.channel_seed}",
        f"propagation.sensitivity_dbm = {_fmt(p.sensitivity_dbm)}",
        f"propagation.csi_rays = {p.csi_rays}",
        f"propagation.csi_noise_base = {_fmt(p.csi_noise_base)}",
        f"propagation.csi_noise_slope = {_fmt(p.csi_noise_slope)}",
        f"propagation.csi_noise_ref_m = {_fmt(p.csi_noise_ref_m)}",
        f"devices = {','.join(sc.devices)}",
        f"delta_t = {_fmt(sc.delta_t)}",
        f"rts_interval = {_fmt(sc.rts_interval)}",
        f"dwell_s = {_fmt(sc.dwell_s)}",
        f"sessions = {sc.sessions}",
        f"csi_keep = {sc.csi_keep}",
        f"test_duration_s = {_fmt(sc.test_duration_s)}",
        f"speed_min = {_fmt(sc.speed_range[0])}",
        f"speed_max = {_fmt(sc.speed_range[1])}",
        f"seeds = {','.join(str(s) for s in sc.seeds)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_scenario(path) -> Scenario:
    kv = parse_keyvalues(Path(path).read_text())
    aps = []
    for i in range(int(kv["ap_count"])):
        aps.append(AccessPoint(
            kv[f"ap.{i}.id"],
            Location(float(kv[f"ap.{i}.x"]), float(kv[f"ap.{i}.y"])),
            kv[f"ap.{i}.rts_capable"] == "true"))
    prop = PropagationModel(
        pl0=float(kv["propagation.pl0"]),
        pathloss_exponent=float(kv["propagation.pathloss_exponent"]),
        shadowing_sigma=float(kv["propagation.shadowing_sigma"]),
        fast_fading_sigma=float(kv["propagation.fast_fading_sigma"]),
        shadow_cell_m=float(kv["propagation.shadow_cell_m"]),
        channel_seed=int(kv["propagation.channel_seed"]),
        sensitivity_dbm=float(kv["propagation.sensitivity_dbm"]),
        csi_rays=int(kv["propagation.csi_rays"]),
        csi_noise_base=float(kv["propagation.csi_noise_base"]),
        csi_noise_slope=float(kv["propagation.csi_noise_slope"]),
        csi_noise_ref_m=float(kv["propagation.csi_noise_ref_m"]),
    )
    return Scenario(
        name=kv["name"],
        width=float(kv["width"]),
        height=float(kv["height"]),
        grid_nx=int(kv["grid_nx"]),
        grid_ny=int(kv["grid_ny"]),
        margin=float(kv["margin"]),
        aps=tuple(aps),
        propagation=prop,
        devices=tuple(kv["devices"].split(",")),
        delta_t=float(kv["delta_t"]),
        rts_interval=float(kv["rts_interval"]),
        dwell_s=float(kv["dwell_s"]),
        sessions=int(kv["sessions"]),
        csi_keep=int(kv["csi_keep"]),
        test_duration_s=float(kv["test_duration_s"]),
        speed_range=(float(kv["speed_min"]), float(kv["speed_max"])),
        seeds=tuple(int(s) for s in kv["seeds"].split(",") if s),
    )
