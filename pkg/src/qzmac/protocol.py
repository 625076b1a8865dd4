"""Core state machine of the hybrid polling/contention discipline.

Pure functions over small values; the engine composes these per slot and the
numba kernel mirrors them. Per-slot structure: up to three polling minislots
(incumbent, longest-elapsed station, last contention winner — each transmits
only if it is that role and backlogged and the slot has been silent so far),
then a contention window of `t_c` minislots where backlogged leftovers draw a
backoff r and the earliest unique starter wins the slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional, Sequence

# Defaults for the on-air timing model (2.4 GHz TSCH-style numbers).
POLL_MINISLOTS = 3
CONTENTION_MINISLOTS = 9
SLOT_US = 10_000
CCA_US = 128
MINISLOT_US = 2 * CCA_US
TX_GUARD_US = 1800.0  # receive window half-width: offsets beyond this lose frames

# Integer codes shared with the numba kernels (which cannot take enums).
OUT_IDLE, OUT_PU, OUT_POLLED, OUT_SU, OUT_WIN, OUT_COLLISION = range(6)
ACT_LISTEN, ACT_CCA, ACT_TRANSMIT = range(3)


class Outcome(IntEnum):
    """How a slot resolved, classified by the first transmission's minislot."""

    IDLE = OUT_IDLE
    PU_TX = OUT_PU
    POLLED_TX = OUT_POLLED
    SU_TX = OUT_SU
    CONTENTION_WIN = OUT_WIN
    CONTENTION_COLLISION = OUT_COLLISION


class Action(IntEnum):
    """What a node does in one minislot."""

    LISTEN = ACT_LISTEN
    PERFORM_CCA = ACT_CCA
    TRANSMIT_PACKET = ACT_TRANSMIT


@dataclass(frozen=True)
class RoleState:
    """The two rotating roles: incumbent (pu) and last contention winner (su)."""

    pu: int
    su: int


@dataclass(frozen=True)
class SlotOutcome:
    """Slot resolution: kind plus transmitter / winning draw where they exist.

    `collided` carries the tied stations for CONTENTION_COLLISION when the
    caller knows them (per-node replicas usually don't — they only hear the
    mess — so it may be empty even for a collision).
    """

    kind: Outcome
    transmitter: Optional[int] = None
    draw: Optional[int] = None
    collided: frozenset[int] = field(default_factory=frozenset)


@dataclass(frozen=True)
class NodeView:
    """What one node knows when deciding its minislot action: its own queue
    state and its local replica of the shared elapsed/role variables."""

    queue_nonempty: bool
    elapsed: Sequence[int]
    pu: int
    su: int


def init_protocol_state(n: int, pu0: int = 0, su0: int = 1):
    """Initial elapsed vector [0, 1, .., n-1] and roles. pu0 == su0 is rejected
    here (a fresh deployment assigns distinct roles); the two may legitimately
    coincide later when a winner is later polled."""
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    if not (0 <= pu0 < n and 0 <= su0 < n):
        raise ValueError(f"roles out of range: pu0={pu0} su0={su0} n={n}")
    if pu0 == su0:
        raise ValueError("initial pu and su must differ")
    return list(range(n)), RoleState(pu=pu0, su=su0)


def update_elapsed(elapsed: Sequence[int], transmitter: Optional[int] = None) -> list[int]:
    """Elapsed-slot bookkeeping: the served station resets to 0, everyone else
    ages by one; no served station (idle/collision) ages everyone."""
    if transmitter is None:
        return [e + 1 for e in elapsed]
    return [0 if i == transmitter else e + 1 for i, e in enumerate(elapsed)]


def select_polled(elapsed: Sequence[int]) -> int:
    """Station polled in the second minislot: the unique longest-elapsed one."""
    best = max(elapsed)
    idx = [i for i, e in enumerate(elapsed) if e == best]
    if len(idx) != 1:
        raise ValueError(f"elapsed vector has tied maximum: {list(elapsed)}")
    return idx[0]


def node_minislot_action(node: int, local: NodeView, phase: int,
                         observed_busy: bool) -> Action:
    """Decision rule for polling minislot `phase` (1=incumbent, 2=polled,
    3=winner). A node that has heard energy earlier in the slot only listens;
    the role owner transmits if backlogged; everyone else samples the channel."""
    if phase not in (1, 2, 3):
        raise ValueError(f"phase must be 1..3, got {phase}")
    if observed_busy:
        return Action.LISTEN
    if phase == 1:
        target = local.pu
    elif phase == 2:
        target = select_polled(local.elapsed)
    else:
        target = local.su
    if node == target and local.queue_nonempty:
        return Action.TRANSMIT_PACKET
    return Action.PERFORM_CCA


def draw_backoff(rng, t_c: int = CONTENTION_MINISLOTS) -> int:
    """One contention draw, uniform on 1..t_c; consumes exactly one value."""
    return 1 + rng.next_u64() % t_c


def contention_resolve(draws: dict[int, int]) -> SlotOutcome:
    """Resolve a contention window from the backlogged stations' draws, as if
    every earlier sensing were perfect: the minimum draw starts first; a unique
    minimum wins, a tied minimum collides, nobody backlogged is an idle slot."""
    if not draws:
        return SlotOutcome(Outcome.IDLE)
    lo = min(draws.values())
    tied = frozenset(i for i, r in draws.items() if r == lo)
    if len(tied) == 1:
        (winner,) = tied
        return SlotOutcome(Outcome.CONTENTION_WIN, transmitter=winner, draw=lo)
    return SlotOutcome(Outcome.CONTENTION_COLLISION, collided=tied)


def apply_slot_outcome(elapsed: Sequence[int], roles: RoleState,
                       outcome: SlotOutcome) -> tuple[list[int], RoleState]:
    """Post-slot update of the shared variables.

    The elapsed vector resets at whoever occupied the channel alone
    (regardless of delivery); roles move only on their own phase: the polled
    station becomes incumbent, a contention winner becomes su. Idle slots and
    collisions age everyone and leave roles alone.
    """
    kind = outcome.kind
    if kind in (Outcome.IDLE, Outcome.CONTENTION_COLLISION):
        return update_elapsed(elapsed, None), roles
    j = outcome.transmitter
    if j is None:
        raise ValueError(f"{kind.name} outcome needs a transmitter")
    new_elapsed = update_elapsed(elapsed, j)
    if kind == Outcome.POLLED_TX:
        return new_elapsed, replace(roles, pu=j)
    if kind == Outcome.CONTENTION_WIN:
        return new_elapsed, replace(roles, su=j)
    return new_elapsed, roles
