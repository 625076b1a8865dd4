"""Command-line experiment runner.

Single runs and cartesian sweeps (protocols x loads x seeds) share one code
path: every run writes a deterministic summary JSON (and optionally an NDJSON
trace), sweeps also write an aggregate TSV. Output bytes depend only on the
arguments, so re-running the same invocation reproduces every file exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .channel import CcaModel, InterferenceModel
from .engine import SCHEDULERS, SimConfig, run
from .sync import SyncConfig
from .trace import write_ndjson
from .traffic import ArrivalSpec

SUMMARY_SCHEMA = "qzmac.summary/1"
SWEEP_SCHEMA = "qzmac.sweep/1"


def _csv_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok != ""]


def _csv_ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok != ""]


def _parse_drift(text: str) -> tuple[float, float]:
    """'lo:hi' or a single fixed value."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        return float(lo), float(hi)
    v = float(text)
    return v, v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qzmac",
        description="Slot-level MAC simulator: hybrid polling/contention "
                    "scheduler plus TDMA, p-CSMA, and oracle baselines.")
    ap.add_argument("--protocols", default="qzmac",
                    help="comma list out of: " + ",".join(SCHEDULERS))
    ap.add_argument("--n", type=int, default=4, help="number of stations")
    g = ap.add_mutually_exclusive_group()
    g.add_argument("--loads", help="comma list of total offered loads, split "
                                   "evenly over stations (e.g. 0.3,0.6,0.9)")
    g.add_argument("--lam", help="comma list of per-station arrival rates; "
                                 "'sat' marks a saturated station")
    g.add_argument("--saturated", action="store_true",
                   help="all stations always backlogged")
    ap.add_argument("--seeds", default="1", help="comma list of seeds")
    ap.add_argument("--horizon", type=int, default=100_000)
    ap.add_argument("--warmup", type=int, default=0)
    ap.add_argument("--poll-minislots", type=int, default=3)
    ap.add_argument("--contention-minislots", type=int, default=9)
    ap.add_argument("--slot-us", type=float, default=10_000.0)
    ap.add_argument("--pu0", type=int, default=0)
    ap.add_argument("--su0", type=int, default=1)
    ap.add_argument("--csma-p", type=float, default=None,
                    help="p-CSMA transmit probability (default 1/n)")
    ap.add_argument("--p-false-busy", type=float, default=0.0)
    ap.add_argument("--p-false-idle", type=float, default=0.0)
    ap.add_argument("--p-minislot-busy", type=float, default=0.0)
    ap.add_argument("--p-packet-loss", type=float, default=0.0)
    ap.add_argument("--eb-period", type=int, default=400,
                    help="beacon period in slots")
    ap.add_argument("--eb-loss", type=float, default=0.0,
                    help="per-station beacon loss probability")
    ap.add_argument("--drift-ppm", default="-40:40",
                    help="per-station drift, 'lo:hi' range or fixed value")
    ap.add_argument("--guard-us", type=float, default=1800.0,
                    help="alignment guard window in microseconds")
    ap.add_argument("--out", default="runs", help="output directory")
    ap.add_argument("--trace", action="store_true",
                    help="also write the per-slot NDJSON trace")
    ap.add_argument("--backend", choices=("auto", "numba", "python"),
                    default="auto")
    return ap


def _arrival_spec(args, load) -> ArrivalSpec:
    if args.saturated:
        return ArrivalSpec.all_saturated(args.n)
    if args.lam is not None:
        vals = []
        for tok in args.lam.split(","):
            tok = tok.strip()
            vals.append(None if tok == "sat" else float(tok))
        if len(vals) != args.n:
            raise ValueError(f"--lam needs {args.n} entries, got {len(vals)}")
        return ArrivalSpec.per_node(vals)
    return ArrivalSpec.symmetric(args.n, load)


def _load_tag(args, load) -> str:
    if args.saturated:
        return "sat"
    if args.lam is not None:
        return "custom"
    return f"{load:g}"


def _fmt(x) -> str:
    if x is None:
        return "nan"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        protocols = [p.strip() for p in args.protocols.split(",") if p.strip()]
        for p in protocols:
            if p not in SCHEDULERS:
                raise ValueError(f"unknown protocol {p!r}")
        seeds = _csv_ints(args.seeds)
        if args.loads is not None:
            loads = _csv_floats(args.loads)
        else:
            loads = [None]  # load comes from --lam/--saturated (or zero)
        drift = _parse_drift(args.drift_ppm)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    os.makedirs(args.out, exist_ok=True)
    rows = []
    try:
        for load in loads:
            arrivals = _arrival_spec(args, load)
            if arrivals.total_load >= 1.0:
                print(f"warning: offered load {arrivals.total_load:.3f} >= 1; "
                      "queues are unstable", file=sys.stderr)
            for protocol in protocols:
                for seed in seeds:
                    cfg = SimConfig(
                        n=args.n, scheduler=protocol, arrivals=arrivals,
                        horizon=args.horizon, warmup=args.warmup, seed=seed,
                        pu0=args.pu0, su0=args.su0,
                        poll_minislots=args.poll_minislots,
                        contention_minislots=args.contention_minislots,
                        slot_us=args.slot_us,
                        cca=CcaModel(p_false_busy=args.p_false_busy,
                                     p_false_idle=args.p_false_idle),
                        interference=InterferenceModel(
                            p_minislot_busy=args.p_minislot_busy,
                            p_packet_loss=args.p_packet_loss),
                        sync=SyncConfig(guard_us=args.guard_us,
                                        eb_period_slots=args.eb_period,
                                        slot_us=args.slot_us,
                                        drift_ppm_range=drift,
                                        eb_loss_p=args.eb_loss),
                        csma_p=args.csma_p,
                    )
                    result = run(cfg, backend=args.backend)
                    tag = _load_tag(args, load)
                    stem = f"{protocol}_n{args.n}_load{tag}_seed{seed}"
                    spath = os.path.join(args.out, stem + ".summary.json")
                    doc = {
                        "schema": SUMMARY_SCHEMA,
                        "config": cfg.to_dict(),
                        "summary": result.report.to_dict(),
                        "invariants": result.counters.to_dict(),
                    }
                    with open(spath, "w") as fh:
                        json.dump(doc, fh, sort_keys=True, indent=2)
                        fh.write("\n")
                    if args.trace:
                        write_ndjson(result.trace,
                                     os.path.join(args.out, stem + ".trace.ndjson"))
                    rep = result.report
                    rows.append((protocol, tag, seed, rep.mean_delay_slots,
                                 rep.throughput, rep.polled_share,
                                 rep.contention_share, rep.delivered_total,
                                 rep.collision_slots))
                    print(f"[{result.backend}] {stem}: "
                          f"mean_delay={_fmt(rep.mean_delay_slots)} "
                          f"throughput={_fmt(rep.throughput)} -> {spath}",
                          file=sys.stderr)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if len(rows) > 1:
        tsv = os.path.join(args.out, "sweep.tsv")
        with open(tsv, "w") as fh:
            fh.write(f"# schema: {SWEEP_SCHEMA}\n")
            fh.write("protocol\tload\tseed\tmean_delay_slots\tthroughput\t"
                     "polled_share\tcontention_share\tdelivered\tcollisions\n")
            for row in rows:
                fh.write("\t".join(_fmt(x) for x in row) + "\n")
        print(f"sweep table -> {tsv}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
