"""Command line front end.

Subcommands:
  simulate-db        run the fingerprint survey and write a database dir
  run                drive a localization test and write report files
  compare            merge run reports into a comparison table + CDF grid
  grad-check         finite-difference audit of the recurrent model
  calibrate-arrivals inter-frame gap quantiles for a device profile

Every output directory gets a manifest.json recording inputs, seeds and
library versions, so any report can be regenerated.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, airsim, dbio, evaluation, rnn
from .airsim import DEVICE_PROFILES, PhoneState
from .kde import fit_all_pdfs
from .scenario import Scenario, default_scenario, load_scenario, save_scenario


def _fmt(x) -> str:
    return format(float(x), ".9g")


def _load_scenario(args) -> Scenario:
    if getattr(args, "scenario", None):
        return load_scenario(args.scenario)
    return default_scenario()


def _parse_seeds(text):
    if not text:
        return None
    return tuple(int(s) for s in text.split(",") if s)


def _write_manifest(outdir: Path, command: str, args: dict) -> None:
    manifest = {
        "command": command,
        "arguments": args,
        "versions": {"passivewifi": __version__, "numpy": np.__version__,
                     "python": sys.version.split()[0]},
        "written_at_unix": int(time.time()),
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                     sort_keys=True) + "\n")


def _write_report(outdir: Path, report: evaluation.ErrorReport) -> None:
    (outdir / "errors.txt").write_text(
        "\n".join(_fmt(e) for e in report.errors) + "\n"
        if report.fixes else "")
    lines = [f"label,{report.label}",
             f"fixes,{report.fixes}",
             f"windows,{report.windows}",
             f"fix_rate,{_fmt(report.fix_rate)}",
             f"mean_m,{_fmt(report.mean)}",
             f"std_m,{_fmt(report.std)}",
             f"max_m,{_fmt(report.max)}",
             f"flagged,{'true' if report.flagged else 'false'}"]
    for seed, fixes, windows, mean in report.per_seed:
        lines.append(f"seed.{seed},{fixes},{windows},{_fmt(mean)}")
    for method, count in report.method_counts:
        lines.append(f"method.{method},{count}")
    (outdir / "report.txt").write_text("\n".join(lines) + "\n")
    (outdir / "cdf.txt").write_text(
        "error_m,fraction\n"
        + "".join(f"{_fmt(v)},{_fmt(f)}\n" for v, f in report.cdf))


def cmd_simulate_db(args) -> int:
    sc = _load_scenario(args)
    devices = tuple(args.devices.split(",")) if args.devices else None
    db = evaluation.collect_training(sc, devices=devices, dwell=args.dwell,
                                     base_seed=args.base_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dbio.save_database(db, out / "db")
    save_scenario(sc, out / "scenario.txt")
    _write_manifest(out, "simulate-db", {
        "scenario": args.scenario, "devices": devices or sc.devices[:1],
        "dwell": args.dwell if args.dwell else sc.dwell_s,
        "sessions": sc.sessions, "base_seed": args.base_seed,
    })
    n_rssi = sum(len(rows) for rec in db
                 for per_dev in rec.rssi_samples.values()
                 for rows in per_dev.values())
    print(f"wrote {len(db)} RPs, {n_rssi} RSSI rows to {out / 'db'}")
    return 0


def _train_lstm(sc, db, args, seeds):
    config = rnn.LstmConfig(memory_length=args.memory_length,
                            hidden_layers=2,
                            neurons_per_layer=args.train_neurons)
    data = evaluation.lstm_training_set(sc, db, device=args.device,
                                        n_sequences=args.train_sequences,
                                        seed=min(seeds),
                                        memory_length=config.memory_length)
    model, trace = rnn.train(config, data, epochs=args.train_epochs,
                             seed=min(seeds))
    return model, trace


def cmd_run(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.db:
        db = dbio.load_database(Path(args.db) / "db"
                                if (Path(args.db) / "db").is_dir()
                                else args.db)
        sc = _load_scenario(args)
    else:
        sc = _load_scenario(args)
        db = evaluation.collect_training(sc, base_seed=args.base_seed)
    seeds = _parse_seeds(args.seeds)
    spec = evaluation.RunSpec(sc, device=args.device,
                              phone_state=args.state,
                              algorithm=args.algorithm,
                              rts=not args.no_rts,
                              seeds=seeds,
                              delta_t=args.delta_t)
    table = fit_all_pdfs(db)
    lstm_model = None
    if args.algorithm == "pmimo_lstm":
        lstm_model, trace = _train_lstm(sc, db, args, spec.seeds)
        rnn.save_model(lstm_model, out / "lstm-checkpoint.txt")
        (out / "training-trace.txt").write_text(
            "".join(f"{i},{_fmt(v)}\n" for i, v in enumerate(trace)))
    report = evaluation.run_test(spec, db, table, lstm_model=lstm_model)
    _write_report(out, report)
    _write_manifest(out, "run", {
        "scenario": args.scenario, "db": args.db, "device": args.device,
        "state": args.state, "algorithm": args.algorithm,
        "rts": not args.no_rts, "seeds": list(spec.seeds),
        "delta_t": spec.delta_t,
    })
    print(evaluation.compare_table([report]))
    return 0


def cmd_compare(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    labels = []
    for item in args.runs:
        label, _, rundir = item.partition("=")
        if not rundir:
            label, rundir = Path(item).name, item
        kv = {}
        per_seed = []
        for line in (Path(rundir) / "report.txt").read_text().splitlines():
            key, _, rest = line.partition(",")
            if key.startswith("seed."):
                fixes, windows, mean = rest.split(",")
                per_seed.append((int(key[5:]), int(fixes), int(windows),
                                 float(mean)))
            else:
                kv[key] = rest
        errors_text = (Path(rundir) / "errors.txt").read_text().split()
        errors = np.asarray([float(e) for e in errors_text])
        reports.append(evaluation.ErrorReport.from_errors(
            label, errors, int(kv["windows"]), per_seed))
        labels.append(label)
    table = evaluation.compare_table(reports)
    (out / "compare.txt").write_text(table + "\n")
    grid, columns = evaluation.merged_cdf(reports)
    rows = ["error_m," + ",".join(labels)]
    for j, g in enumerate(grid):
        rows.append(_fmt(g) + "," + ",".join(_fmt(col[j]) for col in columns))
    (out / "cdf.txt").write_text("\n".join(rows) + "\n")
    _write_manifest(out, "compare", {"runs": list(args.runs)})
    print(table)
    return 0


def cmd_grad_check(args) -> int:
    config = rnn.LstmConfig(memory_length=args.t, hidden_layers=args.layers,
                            neurons_per_layer=args.hidden, dropout=0.0)
    rng = np.random.default_rng(args.seed + 1000)
    window = rng.uniform(0.0, 1.0, size=(args.t, args.inputs))
    target = rng.uniform(0.0, 10.0, size=(args.t, rnn.OUTPUT_DIM))
    model = rnn.LstmModel.initialized(config, args.inputs, seed=args.seed)
    worst, name = rnn.grad_check(model, window, target, step=args.step)
    ok = worst < args.threshold
    print(f"layers={args.layers} hidden={args.hidden} T={args.t} "
          f"seed={args.seed} step={_fmt(args.step)}")
    print(f"max relative error {worst:.3e} at {name}: "
          f"{'PASS' if ok else 'FAIL'} (threshold {_fmt(args.threshold)})")
    return 0 if ok else 1


def cmd_calibrate_arrivals(args) -> int:
    dev = DEVICE_PROFILES[args.device]
    state = PhoneState(active=False, screen_on=not args.screen_off)
    rng = np.random.default_rng(args.seed)
    gaps = []
    # long streams keep the stream-end censoring of long gaps negligible
    duration = 36000.0 if not args.rts else 600.0
    interval = args.rts_interval if args.rts else None
    while sum(len(g) for g in gaps) < args.gaps:
        stream = airsim.frame_stream(dev, state, interval, duration, rng)
        if len(stream) > 1:
            gaps.append(airsim.inter_frame_gaps(stream))
    all_gaps = np.concatenate(gaps)
    mode = f"RTS {_fmt(args.rts_interval)} s" if args.rts else "no RTS"
    print(f"{args.device}, screen {'off' if args.screen_off else 'on'}, "
          f"{mode}: {all_gaps.size} gaps")
    for bound in (1.0, 4.0, 30.0, 60.0):
        frac = float(np.mean(all_gaps <= bound))
        print(f"  P(gap <= {bound:g} s) = {frac:.4f}")
    per_min = len(all_gaps) / (len(gaps) * duration) * 60.0
    print(f"  frames/min ~ {per_min:.0f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="passivewifi",
        description="Passive WiFi indoor localization toolkit")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-db", help="simulate a fingerprint survey")
    p.add_argument("--scenario", help="scenario file (default: desk)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--devices", help="comma-separated device profiles")
    p.add_argument("--dwell", type=float, help="seconds per RP per session")
    p.add_argument("--base-seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate_db)

    p = sub.add_parser("run", help="run a localization test")
    p.add_argument("--scenario", help="scenario file (default: desk)")
    p.add_argument("--db", help="database directory from simulate-db")
    p.add_argument("--out", required=True)
    p.add_argument("--device", default="samsung_s6",
                   choices=sorted(DEVICE_PROFILES))
    p.add_argument("--state", default="inactive",
                   choices=evaluation.PHONE_STATES)
    p.add_argument("--algorithm", default="ssp",
                   choices=evaluation.ALGORITHMS)
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--delta-t", type=float, dest="delta_t")
    p.add_argument("--no-rts", action="store_true",
                   help="disable RTS polling of inactive phones")
    p.add_argument("--base-seed", type=int, default=0,
                   help="survey seed when no --db is given")
    p.add_argument("--train-sequences", type=int, default=200)
    p.add_argument("--train-epochs", type=int, default=30)
    p.add_argument("--train-neurons", type=int, default=32)
    p.add_argument("--memory-length", type=int, default=10)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="merge run reports")
    p.add_argument("--out", required=True)
    p.add_argument("runs", nargs="+", metavar="LABEL=RUNDIR",
                   help="run directories written by `run`")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("grad-check", help="finite-difference gradient audit")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--inputs", type=int, default=3)
    p.add_argument("--t", type=int, default=3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("calibrate-arrivals",
                       help="inter-frame gap quantiles for a device")
    p.add_argument("--device", default="samsung_s6",
                   choices=sorted(DEVICE_PROFILES))
    p.add_argument("--gaps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rts", action="store_true", default=True)
    p.add_argument("--no-rts", dest="rts", action="store_false")
    p.add_argument("--rts-interval", type=float, default=0.2)
    p.add_argument("--screen-off", action="store_true")
    p.set_defaults(func=cmd_calibrate_arrivals)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
