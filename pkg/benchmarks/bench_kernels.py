#!/usr/bin/env python3
"""Timing comparison of the compiled and numpy density kernels.

Shapes mirror the localization workload: one long probe grid (pdf dumps
and normalization checks) and many short per-RP sample blocks hit once
per observed frame (the posterior sweep). Parity between backends is
checked on every case before it is timed.
"""

import argparse
import time

import numpy as np

from passivewifi.kernels import (EPANECHNIKOV, GAUSSIAN, TOPHAT,
                                 available_backends)

KIND_CODES = {"gaussian": GAUSSIAN, "epanechnikov": EPANECHNIKOV,
              "tophat": TOPHAT}


def _best_of(fn, repeats, loops):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(loops):
            fn()
        best = min(best, (time.perf_counter() - t0) / loops)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=240,
                    help="samples per (RP, AP) block")
    ap.add_argument("--blocks", type=int, default=300, help="RP count")
    ap.add_argument("--probes", type=int, default=20001,
                    help="probe grid length for kde_eval")
    ap.add_argument("--kind", choices=sorted(KIND_CODES), default="gaussian")
    ap.add_argument("--repeats", type=int, default=5, help="best-of repeats")
    ap.add_argument("--loops", type=int, default=50, help="calls per repeat")
    args = ap.parse_args(argv)

    kind = KIND_CODES[args.kind]
    rng = np.random.default_rng(0)
    samples = rng.uniform(-90.0, -30.0, args.samples)
    probes = np.linspace(-150.0, 50.0, args.probes)
    flat = rng.uniform(-90.0, -30.0, args.blocks * args.samples)
    starts = np.arange(args.blocks + 1, dtype=np.int64) * args.samples
    h, probe, floor = 2.0, -55.0, 1e-12

    def run_eval(impl):
        return impl.kde_eval(samples, h, kind, probes)

    def run_blocks(impl):
        return impl.kde_eval_blocks(flat, starts, h, kind, probe)

    def run_logacc(impl):
        out = np.zeros(args.blocks)
        impl.kde_log_accumulate(flat, starts, h, kind, probe, floor, out)
        return out

    # the grid case is ~100x heavier per call, keep its loop count down
    cases = [
        (f"kde_eval {args.samples}x{args.probes}", run_eval,
         max(1, args.loops // 10)),
        (f"kde_eval_blocks {args.blocks}x{args.samples}", run_blocks,
         args.loops),
        (f"kde_log_accumulate {args.blocks}x{args.samples}", run_logacc,
         args.loops),
    ]

    backends = available_backends()
    print(f"kernel={args.kind}  backends: {', '.join(sorted(backends))}  "
          f"(best of {args.repeats} x {args.loops} calls)")
    width = max(len(label) for label, _, _ in cases)
    for label, call, loops in cases:
        times = {}
        results = {}
        for name, impl in backends.items():
            results[name] = np.asarray(call(impl), dtype=float)  # warm up
            times[name] = _best_of(lambda: call(impl), args.repeats, loops)
        row = "  ".join(f"{name} {times[name] * 1e3:8.3f} ms"
                        for name in sorted(times))
        if "c" in times and "python" in times:
            dev = float(np.max(np.abs(results["c"] - results["python"])))
            row += (f"  speedup {times['python'] / times['c']:5.1f}x"
                    f"  max dev {dev:.1e}")
        print(f"{label:<{width}}  {row}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
