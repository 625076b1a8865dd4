"""Per-slot trace: struct-of-arrays storage with a record view and an NDJSON
round-trip. Both engine backends fill the same arrays, so bit-identity between
them is checkable array-by-array."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import Delivery
from .protocol import Outcome

TRACE_VERSION = 1


@dataclass(frozen=True)
class SlotRecord:
    """Everything observable about one slot.

    `elapsed`, `pu`, `su` are the post-slot values held by node 0's replica
    (all replicas agree whenever `diverged` is False; schedulers without that
    state carry None). `departed_arrival` is the arrival slot of the packet
    delivered this slot (None for none, and for saturated stations whose
    frames are synthetic). `queue_lens` uses -1 for saturated stations.
    """

    slot: int
    arrivals: tuple[int, ...]
    outcome: Outcome
    transmitter: Optional[int]
    draw: Optional[int]
    start_minislot: Optional[int]
    transmitters: tuple[int, ...]
    delivery: Delivery
    departed_arrival: Optional[int]
    delay: Optional[int]
    elapsed: Optional[tuple[int, ...]]
    pu: Optional[int]
    su: Optional[int]
    queue_lens: tuple[int, ...]
    diverged: bool
    misaligned: tuple[int, ...]
    max_offset_us: float
    in_warmup: bool


@dataclass
class TraceArrays:
    """Raw columns, one row per slot. Sentinels: -1 means "none" in
    transmitter/draw/start/departed/pu/su and "no such state" in elapsed."""

    n: int
    horizon: int
    warmup: int
    arrivals: np.ndarray
    outcome: np.ndarray
    transmitter: np.ndarray
    draw: np.ndarray
    start: np.ndarray
    ntx: np.ndarray
    txmask: np.ndarray
    delivery: np.ndarray
    departed: np.ndarray
    elapsed: np.ndarray
    pu: np.ndarray
    su: np.ndarray
    qlen: np.ndarray
    diverged: np.ndarray
    mismask: np.ndarray
    maxoff: np.ndarray

    @classmethod
    def allocate(cls, n: int, horizon: int, warmup: int) -> "TraceArrays":
        return cls(
            n=n, horizon=horizon, warmup=warmup,
            arrivals=np.zeros((horizon, n), dtype=np.uint8),
            outcome=np.zeros(horizon, dtype=np.int8),
            transmitter=np.full(horizon, -1, dtype=np.int16),
            draw=np.full(horizon, -1, dtype=np.int8),
            start=np.full(horizon, -1, dtype=np.int8),
            ntx=np.zeros(horizon, dtype=np.uint8),
            txmask=np.zeros(horizon, dtype=np.uint64),
            delivery=np.zeros(horizon, dtype=np.int8),
            departed=np.full(horizon, -1, dtype=np.int64),
            elapsed=np.zeros((horizon, n), dtype=np.int64),
            pu=np.full(horizon, -1, dtype=np.int16),
            su=np.full(horizon, -1, dtype=np.int16),
            qlen=np.zeros((horizon, n), dtype=np.int32),
            diverged=np.zeros(horizon, dtype=np.uint8),
            mismask=np.zeros(horizon, dtype=np.uint64),
            maxoff=np.zeros(horizon, dtype=np.float64),
        )

    def column_names(self) -> list[str]:
        return ["arrivals", "outcome", "transmitter", "draw", "start", "ntx",
                "txmask", "delivery", "departed", "elapsed", "pu", "su",
                "qlen", "diverged", "mismask", "maxoff"]


def _mask_to_nodes(mask: int, n: int) -> tuple[int, ...]:
    return tuple(i for i in range(n) if (mask >> i) & 1)


@dataclass
class Trace(Sequence):
    """Sequence[SlotRecord] view over TraceArrays."""

    arrays: TraceArrays

    def __len__(self) -> int:
        return self.arrays.horizon

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return [self.record(t) for t in range(*idx.indices(len(self)))]
        if idx < 0:
            idx += len(self)
        if not 0 <= idx < len(self):
            raise IndexError(idx)
        return self.record(idx)

    def record(self, t: int) -> SlotRecord:
        a = self.arrays
        n = a.n
        tx = int(a.transmitter[t])
        dep = int(a.departed[t])
        el_row = a.elapsed[t]
        has_elapsed = int(el_row[0]) >= 0
        delay = None
        if int(a.delivery[t]) == Delivery.DELIVERED and dep >= 0:
            delay = t - dep
        return SlotRecord(
            slot=t,
            arrivals=tuple(int(x) for x in a.arrivals[t]),
            outcome=Outcome(int(a.outcome[t])),
            transmitter=tx if tx >= 0 else None,
            draw=int(a.draw[t]) if a.draw[t] >= 0 else None,
            start_minislot=int(a.start[t]) if a.start[t] >= 0 else None,
            transmitters=_mask_to_nodes(int(a.txmask[t]), n),
            delivery=Delivery(int(a.delivery[t])),
            departed_arrival=dep if dep >= 0 else None,
            delay=delay,
            elapsed=tuple(int(x) for x in el_row) if has_elapsed else None,
            pu=int(a.pu[t]) if a.pu[t] >= 0 else None,
            su=int(a.su[t]) if a.su[t] >= 0 else None,
            queue_lens=tuple(int(x) for x in a.qlen[t]),
            diverged=bool(a.diverged[t]),
            misaligned=_mask_to_nodes(int(a.mismask[t]), n),
            max_offset_us=float(a.maxoff[t]),
            in_warmup=t < a.warmup,
        )


def record_to_json(rec: SlotRecord) -> str:
    """One NDJSON line; key order is fixed so replays are byte-identical."""
    doc = {
        "v": TRACE_VERSION,
        "slot": rec.slot,
        "arrivals": list(rec.arrivals),
        "outcome": rec.outcome.name,
        "transmitter": rec.transmitter,
        "draw": rec.draw,
        "start_minislot": rec.start_minislot,
        "transmitters": list(rec.transmitters),
        "delivery": rec.delivery.name,
        "departed_arrival": rec.departed_arrival,
        "delay": rec.delay,
        "elapsed": list(rec.elapsed) if rec.elapsed is not None else None,
        "pu": rec.pu,
        "su": rec.su,
        "queue_lens": list(rec.queue_lens),
        "diverged": rec.diverged,
        "misaligned": list(rec.misaligned),
        "max_offset_us": rec.max_offset_us,
        "in_warmup": rec.in_warmup,
    }
    return json.dumps(doc, separators=(",", ":"))


def record_from_json(line: str) -> SlotRecord:
    doc = json.loads(line)
    v = doc.get("v")
    if v != TRACE_VERSION:
        raise ValueError(f"unsupported trace record version: {v!r}")
    return SlotRecord(
        slot=doc["slot"],
        arrivals=tuple(doc["arrivals"]),
        outcome=Outcome[doc["outcome"]],
        transmitter=doc["transmitter"],
        draw=doc["draw"],
        start_minislot=doc["start_minislot"],
        transmitters=tuple(doc["transmitters"]),
        delivery=Delivery[doc["delivery"]],
        departed_arrival=doc["departed_arrival"],
        delay=doc["delay"],
        elapsed=tuple(doc["elapsed"]) if doc["elapsed"] is not None else None,
        pu=doc["pu"],
        su=doc["su"],
        queue_lens=tuple(doc["queue_lens"]),
        diverged=doc["diverged"],
        misaligned=tuple(doc["misaligned"]),
        max_offset_us=doc["max_offset_us"],
        in_warmup=doc["in_warmup"],
    )


def write_ndjson(trace: Sequence[SlotRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(record_to_json(rec))
            fh.write("\n")


def read_ndjson(path) -> list[SlotRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(record_from_json(line))
    return records


@dataclass
class RunCounters:
    """Engine-internal invariant counters the trace cannot carry (they check
    per-node replica state that is not serialized)."""

    distinct_violations: int = 0
    tie_violations: int = 0
    phase_order_violations: int = 0
    pu_work_violations: int = 0
    divergence_slots: int = 0
    max_abs_offset_us: float = 0.0

    def to_dict(self) -> dict:
        return {
            "distinct_violations": self.distinct_violations,
            "tie_violations": self.tie_violations,
            "phase_order_violations": self.phase_order_violations,
            "pu_work_violations": self.pu_work_violations,
            "divergence_slots": self.divergence_slots,
            "max_abs_offset_us": self.max_abs_offset_us,
        }
