"""Summary statistics over a run.

Everything here is recomputable from an emitted trace: `summarize` applied to
parsed NDJSON records must reproduce the summary block the engine emitted,
field for field. Delay percentiles use the nearest-rank definition on whole
slots. Statistics cover slots >= warmup; the queue-conservation identity and
max clock offset are whole-run diagnostics by nature and are computed over
every slot.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import Delivery
from .protocol import Outcome
from .trace import SlotRecord, TraceArrays

# Delivered-packet mode split: which outcomes count as polled service.
_POLLED_KINDS = (Outcome.PU_TX, Outcome.POLLED_TX, Outcome.SU_TX)
_CONTENTION_KINDS = (Outcome.CONTENTION_WIN,)


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate and per-node statistics for one run.

    Mode shares come in two flavours: `outcome_shares` is the fraction of
    measured slots resolved as each outcome; `polled_share` /
    `contention_share` split *delivered packets* by service mode (this is the
    load-adaptivity observable). Delays are in slots (arrival slot to service
    slot, so the minimum is 1); saturated stations deliver synthetic frames
    that count for throughput but produce no delay samples.
    """

    measured_slots: int
    arrivals_total: int
    delivered_total: int
    throughput: float
    mean_delay_slots: Optional[float]
    delay_p50: Optional[int]
    delay_p95: Optional[int]
    delay_p99: Optional[int]
    per_node_delivered: tuple[int, ...]
    per_node_throughput: tuple[float, ...]
    per_node_mean_delay: tuple[Optional[float], ...]
    outcome_counts: dict[str, int]
    outcome_shares: dict[str, float]
    delivery_counts: dict[str, int]
    polled_share: Optional[float]
    contention_share: Optional[float]
    collision_slots: int
    divergence_slots: int
    misaligned_node_slots: int
    max_abs_offset_us: float
    final_backlog: int
    conservation_ok: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _nearest_rank(sorted_counts: np.ndarray, total: int, q: float) -> Optional[int]:
    """Nearest-rank percentile from a delay histogram (index = delay)."""
    if total == 0:
        return None
    rank = max(1, int(np.ceil(q * total)))
    cdf = np.cumsum(sorted_counts)
    return int(np.searchsorted(cdf, rank, side="left"))


def compute_report(arrays: TraceArrays, saturated: Sequence[bool]) -> MetricsReport:
    n, horizon, warmup = arrays.n, arrays.horizon, arrays.warmup
    sat = np.asarray(list(saturated), dtype=bool)
    measured = slice(warmup, horizon)
    measured_slots = horizon - warmup

    outcome = arrays.outcome[measured]
    delivery = arrays.delivery[measured]
    transmitter = arrays.transmitter[measured]
    departed = arrays.departed[measured]

    outcome_counts = {o.name.lower(): int(np.count_nonzero(outcome == o))
                      for o in Outcome}
    outcome_shares = {k: (v / measured_slots if measured_slots else 0.0)
                      for k, v in outcome_counts.items()}
    delivery_counts = {d.name.lower(): int(np.count_nonzero(delivery == d))
                       for d in Delivery}

    delivered_mask = delivery == Delivery.DELIVERED
    delivered_total = int(np.count_nonzero(delivered_mask))
    per_node_delivered = np.bincount(transmitter[delivered_mask], minlength=n)
    throughput = delivered_total / measured_slots if measured_slots else 0.0
    per_node_throughput = per_node_delivered / measured_slots if measured_slots \
        else np.zeros(n)

    # Delay samples: delivered frames with a real arrival stamp.
    slots = np.arange(warmup, horizon, dtype=np.int64)
    delay_mask = delivered_mask & (departed >= 0)
    delays = slots[delay_mask] - departed[delay_mask]
    delay_nodes = transmitter[delay_mask]
    if delays.size:
        mean_delay = float(delays.mean())
        hist = np.bincount(delays)
        p50 = _nearest_rank(hist, delays.size, 0.50)
        p95 = _nearest_rank(hist, delays.size, 0.95)
        p99 = _nearest_rank(hist, delays.size, 0.99)
    else:
        mean_delay, p50, p95, p99 = None, None, None, None
    per_node_mean_delay: list[Optional[float]] = []
    for i in range(n):
        d_i = delays[delay_nodes == i]
        per_node_mean_delay.append(float(d_i.mean()) if d_i.size else None)

    # Mode split of delivered packets.
    polled_kinds = np.isin(outcome, [int(k) for k in _POLLED_KINDS])
    contention_kinds = np.isin(outcome, [int(k) for k in _CONTENTION_KINDS])
    polled_deliv = int(np.count_nonzero(delivered_mask & polled_kinds))
    contention_deliv = int(np.count_nonzero(delivered_mask & contention_kinds))
    polled_share = polled_deliv / delivered_total if delivered_total else None
    contention_share = contention_deliv / delivered_total if delivered_total else None

    # Whole-run conservation over Bernoulli stations: arrivals that had a
    # chance to be enqueued (everything before the final slot) are either
    # delivered or still queued at the horizon.
    bern = ~sat
    arr_full = arrays.arrivals[:, bern]
    enqueued = int(arr_full[:-1].sum()) if horizon > 1 else 0
    full_delivered_mask = arrays.delivery == Delivery.DELIVERED
    real_dep = full_delivered_mask & (arrays.departed >= 0)
    delivered_bern = int(np.count_nonzero(
        real_dep & bern[np.clip(arrays.transmitter, 0, n - 1)]))
    final_backlog = int(arrays.qlen[-1][bern].sum()) if horizon > 0 else 0
    conservation_ok = enqueued == delivered_bern + final_backlog

    misaligned_node_slots = int(np.bitwise_count(arrays.mismask[measured]).sum())

    return MetricsReport(
        measured_slots=measured_slots,
        arrivals_total=int(arrays.arrivals[measured][:, bern].sum()),
        delivered_total=delivered_total,
        throughput=throughput,
        mean_delay_slots=mean_delay,
        delay_p50=p50,
        delay_p95=p95,
        delay_p99=p99,
        per_node_delivered=tuple(int(x) for x in per_node_delivered),
        per_node_throughput=tuple(float(x) for x in per_node_throughput),
        per_node_mean_delay=tuple(per_node_mean_delay),
        outcome_counts=outcome_counts,
        outcome_shares=outcome_shares,
        delivery_counts=delivery_counts,
        polled_share=polled_share,
        contention_share=contention_share,
        collision_slots=outcome_counts[Outcome.CONTENTION_COLLISION.name.lower()],
        divergence_slots=int(arrays.diverged[measured].sum()),
        misaligned_node_slots=misaligned_node_slots,
        max_abs_offset_us=float(arrays.maxoff.max()) if horizon else 0.0,
        final_backlog=final_backlog,
        conservation_ok=conservation_ok,
    )


def summarize(records: Sequence[SlotRecord], warmup: int) -> MetricsReport:
    """Recompute the summary from per-slot records (e.g. a parsed trace file).

    Saturated stations are recognized by their -1 queue-length sentinel.
    """
    horizon = len(records)
    if horizon == 0:
        raise ValueError("cannot summarize an empty trace")
    n = len(records[0].queue_lens)
    arrays = TraceArrays.allocate(n, horizon, warmup)
    sat = [False] * n
    for rec in records:
        t = rec.slot
        arrays.arrivals[t] = rec.arrivals
        arrays.outcome[t] = int(rec.outcome)
        arrays.transmitter[t] = -1 if rec.transmitter is None else rec.transmitter
        arrays.draw[t] = -1 if rec.draw is None else rec.draw
        arrays.start[t] = -1 if rec.start_minislot is None else rec.start_minislot
        arrays.ntx[t] = len(rec.transmitters)
        arrays.txmask[t] = sum(1 << i for i in rec.transmitters)
        arrays.delivery[t] = int(rec.delivery)
        arrays.departed[t] = -1 if rec.departed_arrival is None else rec.departed_arrival
        arrays.elapsed[t] = rec.elapsed if rec.elapsed is not None else [-1] * n
        arrays.pu[t] = -1 if rec.pu is None else rec.pu
        arrays.su[t] = -1 if rec.su is None else rec.su
        arrays.qlen[t] = rec.queue_lens
        arrays.diverged[t] = rec.diverged
        arrays.mismask[t] = sum(1 << i for i in rec.misaligned)
        arrays.maxoff[t] = rec.max_offset_us
        for i, q in enumerate(rec.queue_lens):
            if q < 0:
                sat[i] = True
    return compute_report(arrays, sat)
