"""Fingerprint database directory format.

One directory per database: ``env.txt`` holds the geometry as flat
``key = value`` lines, and each RP gets ``rp_<id>.txt`` with a header
line ``rp_id,x,y``, RSSI rows ``ap_id,device,timestamp,rssi`` and CSI
blocks introduced by ``#csi ap_id scan_index`` followed by 51 rows
``subcarrier,amplitude,phase_radians``.  Floats are printed with 9
significant digits; writing a loaded database reproduces the files
byte-for-byte.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .core import (AccessPoint, DomainError, Environment, FingerprintDatabase,
                   FingerprintRecord, Location)
from .csi import NUM_SUBCARRIERS, CsiScan

ENV_FILE = "env.txt"


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _record_filename(rp_id: int) -> str:
    return f"rp_{rp_id:05d}.txt"


def save_database(db: FingerprintDatabase, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / ENV_FILE).write_text(_env_text(db.env))
    for rec in db:
        (path / _record_filename(rec.rp_id)).write_text(_record_text(rec))


def load_database(path) -> FingerprintDatabase:
    path = Path(path)
    env_file = path / ENV_FILE
    if not env_file.exists():
        raise FileNotFoundError(f"no {ENV_FILE} in {path}")
    env = _parse_env(env_file.read_text())
    records = {}
    for name in sorted(os.listdir(path)):
        if not (name.startswith("rp_") and name.endswith(".txt")):
            continue
        rec = _parse_record((path / name).read_text(), env)
        records[rec.rp_id] = rec
    return FingerprintDatabase(env, records)


def _env_text(env: Environment) -> str:
    lines = [
        f"width = {_fmt(env.width)}",
        f"height = {_fmt(env.height)}",
        f"grid_spacing = {_fmt(env.grid_spacing)}",
        f"ap_count = {len(env.aps)}",
    ]
    for i, ap in enumerate(env.aps):
        lines.append(f"ap.{i}.id = {ap.ap_id}")
        lines.append(f"ap.{i}.x = {_fmt(ap.location.x)}")
        lines.append(f"ap.{i}.y = {_fmt(ap.location.y)}")
        lines.append(f"ap.{i}.rts_capable = {'true' if ap.rts_capable else 'false'}")
    lines.append(f"rp_count = {len(env.rps)}")
    for i, (rp_id, loc) in enumerate(env.rps):
        lines.append(f"rp.{i}.id = {rp_id}")
        lines.append(f"rp.{i}.x = {_fmt(loc.x)}")
        lines.append(f"rp.{i}.y = {_fmt(loc.y)}")
    return "\n".join(lines) + "\n"


def parse_keyvalues(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment, blanks skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DomainError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _parse_env(text: str) -> Environment:
    kv = parse_keyvalues(text)
    aps = []
    for i in range(int(kv["ap_count"])):
        aps.append(AccessPoint(
            kv[f"ap.{i}.id"],
            Location(float(kv[f"ap.{i}.x"]), float(kv[f"ap.{i}.y"])),
            kv[f"ap.{i}.rts_capable"] == "true",
        ))
    rps = []
    for i in range(int(kv["rp_count"])):
        rps.append((int(kv[f"rp.{i}.id"]),
                    Location(float(kv[f"rp.{i}.x"]), float(kv[f"rp.{i}.y"]))))
    return Environment(float(kv["width"]), float(kv["height"]),
                       tuple(aps), tuple(rps), float(kv["grid_spacing"]))


def _record_text(rec: FingerprintRecord) -> str:
    lines = [f"{rec.rp_id},{_fmt(rec.location.x)},{_fmt(rec.location.y)}"]
    for ap_id in sorted(rec.rssi_samples):
        per_device = rec.rssi_samples[ap_id]
        for device in sorted(per_device):
            for t, rssi in per_device[device]:
                lines.append(f"{ap_id},{device},{_fmt(t)},{_fmt(rssi)}")
    for ap_id in sorted(rec.csi_scans):
        for index, scan in enumerate(rec.csi_scans[ap_id]):
            lines.append(f"#csi {ap_id} {index}")
            for sc in range(NUM_SUBCARRIERS):
                lines.append(f"{sc},{_fmt(scan.amplitudes[sc])},"
                             f"{_fmt(scan.phases[sc])}")
    return "\n".join(lines) + "\n"


def _parse_record(text: str, env: Environment) -> FingerprintRecord:
    lines = text.splitlines()
    if not lines:
        raise DomainError("empty record file")
    rp_id_s, x_s, y_s = lines[0].split(",")
    rec = FingerprintRecord(int(rp_id_s), Location(float(x_s), float(y_s)))
    ap_ids = set(env.ap_ids)
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("#csi"):
            _, ap_id, index_s = line.split()
            if ap_id not in ap_ids:
                raise DomainError(f"CSI block references unknown AP {ap_id!r}")
            amplitudes = np.empty(NUM_SUBCARRIERS)
            phases = np.empty(NUM_SUBCARRIERS)
            for sc in range(NUM_SUBCARRIERS):
                sc_s, amp_s, ph_s = lines[i + 1 + sc].split(",")
                if int(sc_s) != sc:
                    raise DomainError(f"CSI block out of order at subcarrier {sc_s}")
                amplitudes[sc] = float(amp_s)
                phases[sc] = float(ph_s)
            rec.csi_scans.setdefault(ap_id, []).append(
                CsiScan(amplitudes, phases, ap_id, float(index_s)))
            i += 1 + NUM_SUBCARRIERS
            continue
        ap_id, device, t_s, rssi_s = line.split(",")
        if ap_id not in ap_ids:
            raise DomainError(f"RSSI row references unknown AP {ap_id!r}")
        rec.rssi_samples.setdefault(ap_id, {}).setdefault(device, []) \
            .append((float(t_s), float(rssi_s)))
        i += 1
    rec.derive_csi_features()
    return rec
