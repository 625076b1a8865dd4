"""Slot-level simulation engine.

Two interchangeable backends fill the same trace arrays:

* ``python`` — the reference implementation below: a readable slot loop that
  composes the protocol/channel/sync/traffic primitives. The scheduler is a
  sequential state machine, so the portable fallback is plain Python over
  numpy state rather than vectorized numpy.
* ``numba`` — fused nopython kernels in ``_kernels`` mirroring this loop
  statement for statement (same counter-addressed draws, same float op
  order), bit-identical to the python backend.

Backend choice: the ``backend=`` argument, else ``QZMAC_BACKEND``
(auto|numba|python), else auto. ``QZMAC_DISABLE_JIT`` or
``NUMBA_DISABLE_JIT`` force the python backend.

Every node keeps its own replica of the shared scheduler state (elapsed
vector and both roles) and updates it only from what it could observe on air:
its own sensing, the decodability of a lone frame, and the gateway's ACK.
With perfect sensing all replicas stay identical; with CCA errors they can
drift apart, which the engine detects and flags per slot. Unacknowledged
transmissions that started in the contention window count as no service for
everyone (a transmitter cannot distinguish a tie collision from noise loss
there), while an unacknowledged frame from a polling minislot still counts
as service (those minislots are collision-free by construction, and the
header stays decodable to listeners). Role handoffs are acknowledgement-gated
so that a station can never promote itself on evidence others may lack, and
service zeroes the elapsed entry outright, so replicas that do drift apart
resynchronize row by row as stations get served.
"""

from __future__ import annotations

import os
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baselines import oracle_select, pcsma_slot, tdma_slot_owner
from .channel import (DLV_CHANNEL, DLV_COLLISION, DLV_DELIVERED, DLV_NOTHING,
                      CcaModel, InterferenceModel)
from .metrics import MetricsReport, compute_report
from .protocol import (CONTENTION_MINISLOTS, OUT_COLLISION, OUT_IDLE, OUT_POLLED,
                       OUT_PU, OUT_SU, OUT_WIN, POLL_MINISLOTS, SLOT_US)
from .rng import Stream, stream_key, u01, value_at
from .sync import SyncConfig
from .traffic import ArrivalSpec, generate_arrivals
from .trace import RunCounters, Trace, TraceArrays

SCHEDULERS = ("qzmac", "tdma", "pcsma", "oracle")
MAX_NODES = 64  # transmitter sets travel as 64-bit masks


@dataclass
class SimConfig:
    n: int = 4
    scheduler: str = "qzmac"
    arrivals: Optional[ArrivalSpec] = None  # default: all-zero load
    horizon: int = 100_000
    warmup: int = 0
    seed: int = 1
    pu0: int = 0
    su0: int = 1
    poll_minislots: int = POLL_MINISLOTS
    contention_minislots: int = CONTENTION_MINISLOTS
    slot_us: float = SLOT_US
    cca: CcaModel = CcaModel()
    interference: InterferenceModel = InterferenceModel()
    sync: SyncConfig = SyncConfig()
    csma_p: Optional[float] = None  # None -> 1/n

    def __post_init__(self):
        if self.arrivals is None:
            self.arrivals = ArrivalSpec.symmetric(self.n, 0.0)

    def validate(self):
        if not 2 <= self.n <= MAX_NODES:
            raise ValueError(f"n must be in 2..{MAX_NODES}, got {self.n}")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not 0 <= self.warmup <= self.horizon:
            raise ValueError("warmup must be in [0, horizon]")
        if not (0 <= self.pu0 < self.n and 0 <= self.su0 < self.n):
            raise ValueError("pu0/su0 out of range")
        if self.pu0 == self.su0:
            raise ValueError("initial pu and su must differ")
        if self.poll_minislots < 1:
            raise ValueError("need at least one polling minislot")
        if self.contention_minislots < 1:
            raise ValueError("need at least one contention minislot")
        if self.arrivals.n != self.n:
            raise ValueError("arrival spec does not match n")
        self.arrivals.validate()
        self.cca.validate()
        self.interference.validate()
        self.sync.validate()
        p = self.effective_csma_p()
        if self.scheduler == "pcsma" and not 0.0 < p <= 1.0:
            raise ValueError(f"csma_p must be in (0,1], got {p}")

    def effective_csma_p(self) -> float:
        return self.csma_p if self.csma_p is not None else 1.0 / self.n

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "scheduler": self.scheduler,
            "arrivals": {
                "lam": list(self.arrivals.lam),
                "saturated": list(self.arrivals.saturated),
                "pattern": None if self.arrivals.pattern is None
                else [list(r) for r in self.arrivals.pattern],
            },
            "horizon": self.horizon,
            "warmup": self.warmup,
            "seed": self.seed,
            "pu0": self.pu0,
            "su0": self.su0,
            "poll_minislots": self.poll_minislots,
            "contention_minislots": self.contention_minislots,
            "slot_us": self.slot_us,
            "cca": {"p_false_busy": self.cca.p_false_busy,
                    "p_false_idle": self.cca.p_false_idle,
                    "cca_us": self.cca.cca_us},
            "interference": {"p_minislot_busy": self.interference.p_minislot_busy,
                             "p_packet_loss": self.interference.p_packet_loss},
            "sync": {"guard_us": self.sync.guard_us,
                     "eb_period_slots": self.sync.eb_period_slots,
                     "slot_us": self.sync.slot_us,
                     "drift_ppm_range": list(self.sync.drift_ppm_range),
                     "eb_loss_p": self.sync.eb_loss_p},
            "csma_p": self.csma_p,
        }


@dataclass
class RunResult:
    trace: Trace
    report: MetricsReport
    counters: RunCounters
    backend: str
    config: SimConfig


def stream_labels(n: int) -> dict[str, object]:
    """The run's named randomness streams. Draws are addressed positionally
    (see each backend), so a value depends only on (seed, label, position)."""
    return {
        "arrivals": [f"arr:{i}" for i in range(n)],     # position: slot
        "contention": [f"cnt:{i}" for i in range(n)],   # position: slot
        "cca": [f"cca:{i}" for i in range(n)],          # slot*stride + minislot
        "eb": [f"eb:{i}" for i in range(n)],            # position: beacon index
        "drift": [f"drift:{i}" for i in range(n)],      # position: 0
        "interference": "intf",                          # slot*stride + minislot
        "loss": "loss",                                  # position: slot
        "pcsma": "pcsma",                                # position: slot*n + node
    }


def _keys(cfg: SimConfig) -> dict:
    labels = stream_labels(cfg.n)
    key = lambda lbl: stream_key(cfg.seed, lbl)
    return {
        "arr": [key(l) for l in labels["arrivals"]],
        "cnt": [key(l) for l in labels["contention"]],
        "cca": [key(l) for l in labels["cca"]],
        "eb": [key(l) for l in labels["eb"]],
        "drift": [key(l) for l in labels["drift"]],
        "intf": key(labels["interference"]),
        "loss": key(labels["loss"]),
        "pcsma": key(labels["pcsma"]),
    }


def _drift_us_per_slot(cfg: SimConfig, keys: dict) -> list[float]:
    """Per-node drift, drawn once per run, as microseconds per slot."""
    lo, hi = cfg.sync.drift_ppm_range
    out = []
    for i in range(cfg.n):
        u = u01(value_at(keys["drift"][i], 0))
        ppm = lo + u * (hi - lo)
        out.append(ppm * 1e-6 * cfg.sync.slot_us)
    return out


def _phase_kind(start: int, t_p: int) -> int:
    """Outcome kind implied by a transmission's start minislot."""
    if start <= t_p:
        return (OUT_PU, OUT_POLLED, OUT_SU)[start - 1]
    return OUT_WIN


def resolve_backend(requested: Optional[str] = None) -> str:
    req = (requested or os.environ.get("QZMAC_BACKEND") or "auto").lower()
    if req not in ("auto", "numba", "python"):
        raise ValueError(f"unknown backend {req!r}")
    disabled = (os.environ.get("QZMAC_DISABLE_JIT", "") not in ("", "0")
                or os.environ.get("NUMBA_DISABLE_JIT", "") not in ("", "0"))
    if req == "python":
        return "python"
    if disabled:
        if req == "numba":
            warnings.warn("jit disabled by environment; using python backend")
        return "python"
    try:
        from . import _kernels  # noqa: F401  (import compiles lazily)
        have = _kernels.AVAILABLE
    except ImportError:
        have = False
    if have:
        return "numba"
    if req == "numba":
        raise RuntimeError("numba backend requested but numba is not importable")
    return "python"


def run(config: SimConfig, backend: Optional[str] = None) -> RunResult:
    """Simulate one run; returns trace, summary report, invariant counters."""
    config.validate()
    if config.arrivals.total_load >= 1.0 and config.arrivals.pattern is None:
        warnings.warn(f"offered load {config.arrivals.total_load:.3f} >= 1: "
                      "queues are unstable; continuing anyway")
    chosen = resolve_backend(backend)
    arrays = TraceArrays.allocate(config.n, config.horizon, config.warmup)
    counters = RunCounters()
    keys = _keys(config)
    drift = _drift_us_per_slot(config, keys)
    if chosen == "numba":
        from . import _kernels
        _kernels.fill(config, keys, drift, arrays, counters)
    else:
        _fill_python(config, keys, drift, arrays, counters)
    counters.max_abs_offset_us = float(arrays.maxoff.max()) if config.horizon else 0.0
    counters.divergence_slots = int(arrays.diverged.sum())
    report = compute_report(arrays, config.arrivals.saturated)
    return RunResult(trace=Trace(arrays), report=report, counters=counters,
                     backend=chosen, config=config)


# ---------------------------------------------------------------------------
# python backend


def _fill_python(cfg, keys, drift, arrays, counters):
    if cfg.scheduler == "qzmac":
        _qzmac_python(cfg, keys, drift, arrays, counters)
    elif cfg.scheduler == "tdma":
        _baseline_python(cfg, keys, arrays, counters, kind="tdma")
    elif cfg.scheduler == "oracle":
        _baseline_python(cfg, keys, arrays, counters, kind="oracle")
    else:
        _baseline_python(cfg, keys, arrays, counters, kind="pcsma")


def _qzmac_python(cfg, keys, drift, arrays, counters):
    n, horizon = cfg.n, cfg.horizon
    t_p, t_c = cfg.poll_minislots, cfg.contention_minislots
    stride = t_p + t_c + 1  # minislots plus the packet region
    p_fb, p_fi = cfg.cca.p_false_busy, cfg.cca.p_false_idle
    p_busy = cfg.interference.p_minislot_busy
    p_loss = cfg.interference.p_packet_loss
    guard = cfg.sync.guard_us
    eb_period = cfg.sync.eb_period_slots
    eb_loss = cfg.sync.eb_loss_p
    sat = cfg.arrivals.saturated
    arr_streams = [Stream(k) for k in keys["arr"]]

    # Per-node replicas of the shared scheduler state.
    rep_el = [list(range(n)) for _ in range(n)]
    rep_pu = [cfg.pu0] * n
    rep_su = [cfg.su0] * n
    queues = [deque() for _ in range(n)]
    pending = [0] * n
    off = [0.0] * n

    def cca_read(i, truth, t, ms0, aligned_i):
        # A misaligned radio samples in the wrong window: fair coin.
        if not aligned_i:
            return u01(value_at(keys["cca"][i], t * stride + ms0)) < 0.5
        if p_fb == 0.0 and p_fi == 0.0:
            return truth  # the error draw would be ignored; skip hashing
        u = u01(value_at(keys["cca"][i], t * stride + ms0))
        if truth:
            return not (u < p_fi)
        return u < p_fb

    def ext_busy(t, ms0):
        if p_busy <= 0.0:
            return False
        return u01(value_at(keys["intf"], t * stride + ms0)) < p_busy

    for t in range(horizon):
        # -- arrivals from the previous slot become eligible
        for i in range(n):
            if pending[i]:
                queues[i].append(t - 1)
                pending[i] = 0
        arr = generate_arrivals(cfg.arrivals, t, arr_streams)
        for i in range(n):
            arrays.arrivals[t, i] = arr[i]
            pending[i] = arr[i]

        # -- clocks advance; beacons resynchronize. A beacon corrects the
        # clock before the slot's minislots run, so offsets (like alignment)
        # are evaluated post-correction.
        for i in range(n):
            off[i] += drift[i]
        if t > 0 and t % eb_period == 0:
            b = t // eb_period
            for i in range(n):
                lost = eb_loss > 0.0 and u01(value_at(keys["eb"][i], b)) < eb_loss
                if not lost:
                    off[i] = 0.0
        mx = 0.0
        for i in range(n):
            a = -off[i] if off[i] < 0.0 else off[i]
            if a > mx:
                mx = a
        arrays.maxoff[t] = mx
        aligned = [(-off[i] if off[i] < 0.0 else off[i]) < guard for i in range(n)]
        mis_mask = 0
        for i in range(n):
            if not aligned[i]:
                mis_mask |= 1 << i
        arrays.mismask[t] = mis_mask

        nonempty = [sat[i] or len(queues[i]) > 0 for i in range(n)]
        pu_backlogged = nonempty[rep_pu[0]]

        # -- minislot machine
        is_tx = [False] * n
        tx_start = [0] * n
        obs_busy = [False] * n
        believed = [0] * n
        poll_ext = [False] * t_p
        any_tx = False

        for ms in range(1, t_p + 1):
            if ms <= 3:
                for i in range(n):
                    if is_tx[i] or obs_busy[i] or not nonempty[i]:
                        continue
                    if ms == 1:
                        target = rep_pu[i]
                    elif ms == 2:
                        # first-index argmax; a diverged replica may tie
                        target, best = 0, rep_el[i][0]
                        for k in range(1, n):
                            if rep_el[i][k] > best:
                                target, best = k, rep_el[i][k]
                    else:
                        target = rep_su[i]
                    if target == i:
                        is_tx[i] = True
                        tx_start[i] = ms
                        any_tx = True
            e = ext_busy(t, ms - 1)
            poll_ext[ms - 1] = e
            truth = e or any_tx
            for i in range(n):
                if is_tx[i] or obs_busy[i]:
                    continue
                if cca_read(i, truth, t, ms - 1, aligned[i]):
                    obs_busy[i] = True
                    believed[i] = ms

        contender = [False] * n
        r = [0] * n
        for i in range(n):
            if nonempty[i] and not is_tx[i] and not obs_busy[i]:
                contender[i] = True
                r[i] = 1 + value_at(keys["cnt"][i], t) % t_c
        for c in range(1, t_c + 1):
            for i in range(n):
                if contender[i] and r[i] == c and not obs_busy[i] and not is_tx[i]:
                    is_tx[i] = True
                    tx_start[i] = t_p + c
                    any_tx = True
            e = ext_busy(t, t_p + c - 1)
            truth = e or any_tx
            for i in range(n):
                if is_tx[i] or obs_busy[i]:
                    continue
                if contender[i] and r[i] != c + 1:
                    continue  # a contender senses only right before its start
                if cca_read(i, truth, t, t_p + c - 1, aligned[i]):
                    obs_busy[i] = True
                    believed[i] = t_p + c

        # -- slot resolution
        txs = [i for i in range(n) if is_tx[i]]
        ntx = len(txs)
        first = min((tx_start[i] for i in txs), default=-1)
        reg_ext = ext_busy(t, t_p + t_c)
        ack = False
        jtx = -1
        if ntx >= 2:
            delivery = DLV_COLLISION
        elif ntx == 1:
            jtx = txs[0]
            corrupted = p_loss > 0.0 and u01(value_at(keys["loss"], t)) < p_loss
            if not aligned[jtx] or reg_ext or corrupted:
                delivery = DLV_CHANNEL
            else:
                delivery = DLV_DELIVERED
                ack = True
        else:
            delivery = DLV_NOTHING

        if ntx == 0:
            out = OUT_IDLE
        elif ntx >= 2:
            out = OUT_COLLISION
        else:
            out = _phase_kind(first, t_p)

        # invariant probes against ground truth
        if ntx > 0:
            limit = min(first - 1, t_p)
            if any(poll_ext[:limit]):
                counters.phase_order_violations += 1
        if pu_backlogged and out != OUT_PU:
            counters.pu_work_violations += 1

        dep = -1
        if delivery == DLV_DELIVERED and not sat[jtx]:
            dep = queues[jtx].popleft()

        # -- per-node replica updates from on-air observations
        decodable = ntx == 1 and aligned[jtx]
        for i in range(n):
            srv = -1  # served station in i's view; -1 means no service
            kind = OUT_IDLE
            if not aligned[i]:
                pass  # garbage radio: nothing observable
            elif decodable:
                # A lone frame from an aligned radio keeps a readable header
                # and start timestamp even when the payload is lost, so every
                # aligned node books the same event regardless of what its
                # own energy detector said. Contention-region frames count
                # only when acknowledged: an unacknowledged winner cannot
                # rule out a tie, and listeners stay in lockstep with what
                # the winner itself can conclude.
                if ack or first <= t_p:
                    srv, kind = jtx, _phase_kind(first, t_p)
            elif is_tx[i]:
                # own frame lost in a garble; polling-window sends still count
                if tx_start[i] <= t_p:
                    srv, kind = i, _phase_kind(tx_start[i], t_p)
            elif obs_busy[i] and believed[i] <= t_p and believed[i] <= 3 \
                    and (ntx >= 1 or reg_ext):
                # garbled energy first heard in a polling minislot: charge
                # whichever station this replica expected there. A deferral
                # followed by a silent packet region was a false alarm and
                # books nothing.
                if believed[i] == 1:
                    srv, kind = rep_pu[i], OUT_PU
                elif believed[i] == 2:
                    srv, best = 0, rep_el[i][0]
                    for k in range(1, n):
                        if rep_el[i][k] > best:
                            srv, best = k, rep_el[i][k]
                    kind = OUT_POLLED
                else:
                    srv, kind = rep_su[i], OUT_SU
            el = rep_el[i]
            if srv >= 0:
                for k in range(n):
                    el[k] = 0 if k == srv else el[k] + 1
                if ack:  # roles move only on gateway-confirmed deliveries
                    if kind == OUT_POLLED:
                        rep_pu[i] = srv
                    elif kind == OUT_WIN:
                        rep_su[i] = srv
            else:
                for k in range(n):
                    el[k] += 1

        # -- replica invariants
        div = 0
        for i in range(1, n):
            if rep_pu[i] != rep_pu[0] or rep_su[i] != rep_su[0] \
                    or rep_el[i] != rep_el[0]:
                div = 1
                break
        el0 = rep_el[0]
        for i in range(n):
            for k in range(i + 1, n):
                if el0[i] == el0[k]:
                    counters.distinct_violations += 1
        best = max(el0)
        if sum(1 for e in el0 if e == best) != 1:
            counters.tie_violations += 1

        # -- trace row
        arrays.outcome[t] = out
        arrays.transmitter[t] = jtx
        arrays.draw[t] = r[jtx] if (out == OUT_WIN and contender[jtx]) else -1
        arrays.start[t] = first if ntx else -1
        arrays.ntx[t] = ntx
        mask = 0
        for i in txs:
            mask |= 1 << i
        arrays.txmask[t] = mask
        arrays.delivery[t] = delivery
        arrays.departed[t] = dep
        for i in range(n):
            arrays.elapsed[t, i] = el0[i]
            arrays.qlen[t, i] = -1 if sat[i] else len(queues[i])
        arrays.pu[t] = rep_pu[0]
        arrays.su[t] = rep_su[0]
        arrays.diverged[t] = div


def _baseline_python(cfg, keys, arrays, counters, kind):
    """TDMA / oracle / p-CSMA share one loop: whole-slot service, no
    minislots, no clock model, same arrival and delivery layers."""
    n, horizon = cfg.n, cfg.horizon
    p_busy = cfg.interference.p_minislot_busy
    p_loss = cfg.interference.p_packet_loss
    sat = cfg.arrivals.saturated
    arr_streams = [Stream(k) for k in keys["arr"]]
    pcsma_stream = Stream(keys["pcsma"])
    p = cfg.effective_csma_p()

    elapsed = list(range(n)) if kind == "oracle" else None
    queues = [deque() for _ in range(n)]
    pending = [0] * n

    for t in range(horizon):
        for i in range(n):
            if pending[i]:
                queues[i].append(t - 1)
                pending[i] = 0
        arr = generate_arrivals(cfg.arrivals, t, arr_streams)
        for i in range(n):
            arrays.arrivals[t, i] = arr[i]
            pending[i] = arr[i]
        nonempty = [sat[i] or len(queues[i]) > 0 for i in range(n)]

        txs: list[int] = []
        out = OUT_IDLE
        if kind == "tdma":
            owner = tdma_slot_owner(t, n)
            if nonempty[owner]:
                txs = [owner]
                out = OUT_POLLED
        elif kind == "oracle":
            pick = oracle_select(nonempty, elapsed)
            if pick is not None:
                txs = [pick]
                out = OUT_POLLED
        else:
            res = pcsma_slot(p, nonempty, pcsma_stream, t)
            if res.transmitter is not None:
                txs = [res.transmitter]
                out = OUT_WIN
            elif res.collided:
                txs = sorted(res.collided)
                out = OUT_COLLISION

        ntx = len(txs)
        reg_ext = p_busy > 0.0 and u01(value_at(keys["intf"], t)) < p_busy
        ack = False
        jtx = -1
        if ntx >= 2:
            delivery = DLV_COLLISION
        elif ntx == 1:
            jtx = txs[0]
            corrupted = p_loss > 0.0 and u01(value_at(keys["loss"], t)) < p_loss
            if reg_ext or corrupted:
                delivery = DLV_CHANNEL
            else:
                delivery = DLV_DELIVERED
                ack = True
        else:
            delivery = DLV_NOTHING

        dep = -1
        if ack and not sat[jtx]:
            dep = queues[jtx].popleft()
        if kind == "oracle":
            if ntx == 1:
                elapsed = [0 if i == jtx else e + 1 for i, e in enumerate(elapsed)]
            else:
                elapsed = [e + 1 for e in elapsed]

        arrays.outcome[t] = out
        arrays.transmitter[t] = jtx
        arrays.start[t] = -1
        arrays.ntx[t] = ntx
        mask = 0
        for i in txs:
            mask |= 1 << i
        arrays.txmask[t] = mask
        arrays.delivery[t] = delivery
        arrays.departed[t] = dep
        for i in range(n):
            arrays.elapsed[t, i] = elapsed[i] if elapsed is not None else -1
            arrays.qlen[t, i] = -1 if sat[i] else len(queues[i])
        arrays.pu[t] = -1
        arrays.su[t] = -1
