"""Channel model: carrier sensing with error rates, interference, and the
per-slot delivery resolution shared by the protocol and the baselines."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Optional

from .protocol import CCA_US

DLV_NOTHING, DLV_DELIVERED, DLV_COLLISION, DLV_CHANNEL = range(4)


class Delivery(IntEnum):
    NOTHING = DLV_NOTHING
    DELIVERED = DLV_DELIVERED
    COLLISION_LOSS = DLV_COLLISION
    CHANNEL_LOSS = DLV_CHANNEL


@dataclass(frozen=True)
class CcaModel:
    """Clear-channel-assessment fidelity. false_busy: silent channel read as
    busy; false_idle: occupied channel read as idle."""

    p_false_busy: float = 0.0
    p_false_idle: float = 0.0
    cca_us: float = CCA_US

    def validate(self):
        for name in ("p_false_busy", "p_false_idle"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")


@dataclass(frozen=True)
class InterferenceModel:
    """External traffic: i.i.d. busy indicator per minislot (the packet region
    counts as one more), plus an independent corruption coin per lone frame."""

    p_minislot_busy: float = 0.0
    p_packet_loss: float = 0.0

    def validate(self):
        for name in ("p_minislot_busy", "p_packet_loss"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")


def sense(truth_busy: bool, cca: CcaModel, rng) -> bool:
    """One CCA reading of the true channel state; consumes one value."""
    u = rng.next_u01()
    if truth_busy:
        return not (u < cca.p_false_idle)
    return u < cca.p_false_busy


def sense_at(truth_busy: bool, cca: CcaModel, stream, counter: int) -> bool:
    """Positional twin of sense(): the reading at a fixed stream position."""
    u = stream.u01_at(counter)
    if truth_busy:
        return not (u < cca.p_false_idle)
    return u < cca.p_false_busy


def resolve_slot_transmissions(transmitters: Iterable[int],
                               interference: InterferenceModel,
                               rng) -> tuple[Delivery, Optional[int]]:
    """Fate of a slot's transmissions.

    Two or more simultaneous frames always collide. A lone frame is lost if
    external traffic occupies the packet region or the corruption coin fires,
    else delivered. Consumes exactly two values (region-busy, corruption) so
    entropy use does not depend on outcomes.
    """
    txs = sorted(set(transmitters))
    region_busy = rng.next_u01() < interference.p_minislot_busy
    corrupted = rng.next_u01() < interference.p_packet_loss
    if not txs:
        return Delivery.NOTHING, None
    if len(txs) > 1:
        return Delivery.COLLISION_LOSS, None
    j = txs[0]
    if region_busy or corrupted:
        return Delivery.CHANNEL_LOSS, j
    return Delivery.DELIVERED, j
