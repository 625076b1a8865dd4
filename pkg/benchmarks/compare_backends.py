"""Time the jit and pure-python backends on identical runs and verify that
they produce bit-identical traces.

Representative results (this machine, 2026-08-16, numpy 2.2.6 / numba 0.66):

    n=4  load=0.5 slots=200000   python 5.02s   numba 0.068s    74x   equal
    n=8  load=0.9 slots=200000   python 8.63s   numba 0.176s    49x   equal
    n=4  load=0.6 slots=200000*  python 7.83s   numba 0.073s   107x   equal
    n=16 load=0.7 slots=100000   python 7.43s   numba 0.135s    55x   equal

    (* with 1% CCA errors both ways; the first numba call adds one-off jit
    compilation, amortized by cache=True across processes)

Usage:
    python3 benchmarks/compare_backends.py [--slots N] [--repeat K] [--quick]
"""

import argparse
import sys
import time

import numpy as np

from qzmac import ArrivalSpec, CcaModel, SimConfig, run
from qzmac.engine import resolve_backend


def build_configs(slots):
    return [
        ("n=4 load=0.5", SimConfig(n=4, arrivals=ArrivalSpec.symmetric(4, 0.5),
                                   horizon=slots, seed=1)),
        ("n=8 load=0.9", SimConfig(n=8, arrivals=ArrivalSpec.symmetric(8, 0.9),
                                   horizon=slots, seed=2)),
        ("n=4 load=0.6 cca-errors",
         SimConfig(n=4, arrivals=ArrivalSpec.symmetric(4, 0.6), horizon=slots,
                   seed=3, cca=CcaModel(p_false_busy=0.01, p_false_idle=0.01))),
        ("n=16 load=0.7", SimConfig(n=16, arrivals=ArrivalSpec.symmetric(16, 0.7),
                                    horizon=slots // 2, seed=4)),
    ]


def time_backend(cfg, backend, repeat):
    best, res = None, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = run(cfg, backend=backend)
        dt = time.perf_counter() - t0
        best = dt if best is None else min(best, dt)
    return best, res


def traces_equal(a, b):
    return all(np.array_equal(getattr(a.trace.arrays, c), getattr(b.trace.arrays, c))
               for c in a.trace.arrays.column_names())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=1,
                    help="timing repetitions per backend (best of K)")
    ap.add_argument("--quick", action="store_true",
                    help="shrink to 20000 slots for a smoke run")
    args = ap.parse_args(argv)
    slots = 20_000 if args.quick else args.slots

    if resolve_backend("auto") != "numba":
        print("numba backend unavailable; nothing to compare", file=sys.stderr)
        return 1

    # compile outside the timed region
    run(SimConfig(n=2, arrivals=ArrivalSpec.symmetric(2, 0.5), horizon=64,
                  seed=1), backend="numba")

    print(f"{'config':28s} {'python':>10s} {'numba':>10s} {'speedup':>8s}  equal")
    for name, cfg in build_configs(slots):
        tp, rp = time_backend(cfg, "python", args.repeat)
        tn, rn = time_backend(cfg, "numba", args.repeat)
        same = traces_equal(rp, rn) and rp.report.to_dict() == rn.report.to_dict()
        print(f"{name:28s} {tp:9.2f}s {tn:9.3f}s {tp / tn:7.0f}x  {same}")
        if not same:
            print("backend mismatch!", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
