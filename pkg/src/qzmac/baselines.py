"""Comparison schedulers: 1-limited round-robin TDMA, slotted p-persistent
CSMA, and a centralized oracle with global queue knowledge. All three skip
the minislot structure entirely (whole-slot service) and share the delivery
layer with the main protocol."""

from __future__ import annotations

from typing import Optional, Sequence

from .protocol import Outcome, SlotOutcome, select_polled


def tdma_slot_owner(slot: int, n: int) -> int:
    """Round-robin ownership: slot t belongs to station t mod n."""
    if n < 1:
        raise ValueError("n must be positive")
    return slot % n


def oracle_select(backlogged: Sequence[bool], elapsed: Sequence[int]) -> Optional[int]:
    """Centralized pick: longest-elapsed backlogged station, None if all empty.

    Longest-elapsed is also the tie rule the decentralized polling uses, which
    keeps the oracle deterministic and comparable.
    """
    best, pick = -1, None
    for i, b in enumerate(backlogged):
        if b and elapsed[i] > best:
            best, pick = elapsed[i], i
    return pick


def pcsma_slot(p: float, backlogged: Sequence[bool], stream, slot: int) -> SlotOutcome:
    """One slotted p-CSMA slot: each backlogged station transmits with
    probability p, independently. Exactly one coin per station per slot is
    read (positionally), so entropy use is load-independent.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0,1], got {p}")
    n = len(backlogged)
    txs = [i for i in range(n)
           if backlogged[i] and stream.u01_at(slot * n + i) < p]
    if not txs:
        return SlotOutcome(Outcome.IDLE)
    if len(txs) == 1:
        return SlotOutcome(Outcome.CONTENTION_WIN, transmitter=txs[0])
    return SlotOutcome(Outcome.CONTENTION_COLLISION, collided=frozenset(txs))


__all__ = ["tdma_slot_owner", "oracle_select", "pcsma_slot", "select_polled"]
