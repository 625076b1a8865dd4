"""Clock drift and beacon resynchronization.

Each node's oscillator drifts at a fixed rate (ppm) drawn once per run; the
absolute offset grows linearly between enhanced beacons and snaps back to
zero when a beacon is received. A node stays usable while its offset is
strictly inside the receive guard window.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .protocol import SLOT_US, TX_GUARD_US


@dataclass(frozen=True)
class SyncConfig:
    guard_us: float = TX_GUARD_US
    eb_period_slots: int = 400
    slot_us: float = SLOT_US
    drift_ppm_range: tuple[float, float] = (-40.0, 40.0)
    eb_loss_p: float = 0.0

    def validate(self):
        if self.eb_period_slots < 1:
            raise ValueError("eb_period_slots must be >= 1")
        if not 0.0 <= self.eb_loss_p <= 1.0:
            raise ValueError(f"eb_loss_p must be in [0,1], got {self.eb_loss_p}")
        lo, hi = self.drift_ppm_range
        if lo > hi:
            raise ValueError(f"bad drift range: {self.drift_ppm_range}")


@dataclass(frozen=True)
class ClockState:
    offset_us: float = 0.0
    drift_ppm: float = 0.0
    last_eb_asn: int = -1


def advance_clock(clock: ClockState, slots: int, slot_us: float = SLOT_US) -> ClockState:
    """Accumulate drift over `slots` slots of nominal length."""
    if slots < 0:
        raise ValueError("cannot advance by negative slots")
    return replace(clock,
                   offset_us=clock.offset_us + clock.drift_ppm * 1e-6 * slots * slot_us)


def receive_eb(clock: ClockState, asn: int) -> ClockState:
    """A received beacon realigns the node completely (idealized)."""
    if asn < clock.last_eb_asn:
        raise ValueError(f"beacon asn went backwards: {asn} < {clock.last_eb_asn}")
    return replace(clock, offset_us=0.0, last_eb_asn=asn)


def is_aligned(clock: ClockState, cfg: SyncConfig) -> bool:
    """Strictly inside the guard window."""
    return abs(clock.offset_us) < cfg.guard_us
