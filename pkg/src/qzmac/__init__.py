"""qzmac: slot-level simulator for a decentralized hybrid polling/contention
MAC, with round-robin TDMA, slotted p-CSMA, and centralized-oracle baselines."""

from .channel import CcaModel, Delivery, InterferenceModel, resolve_slot_transmissions, sense
from .engine import RunResult, SimConfig, resolve_backend, run
from .metrics import MetricsReport, summarize
from .protocol import (Action, Outcome, RoleState, SlotOutcome, apply_slot_outcome,
                       contention_resolve, draw_backoff, init_protocol_state,
                       node_minislot_action, select_polled, update_elapsed)
from .rng import Stream, StreamRegistry, derive_stream
from .sync import ClockState, SyncConfig, advance_clock, is_aligned, receive_eb
from .trace import SlotRecord, Trace, read_ndjson, write_ndjson
from .traffic import ArrivalSpec, generate_arrivals

__version__ = "0.1.0"

__all__ = [
    "Action", "ArrivalSpec", "CcaModel", "ClockState", "Delivery",
    "InterferenceModel", "MetricsReport", "Outcome", "RoleState", "RunResult",
    "SimConfig", "SlotOutcome", "SlotRecord", "Stream", "StreamRegistry",
    "SyncConfig", "Trace", "advance_clock", "apply_slot_outcome",
    "contention_resolve", "derive_stream", "draw_backoff", "generate_arrivals",
    "init_protocol_state", "is_aligned", "node_minislot_action", "read_ndjson",
    "receive_eb", "resolve_backend", "resolve_slot_transmissions", "run",
    "select_polled", "sense", "summarize", "update_elapsed", "write_ndjson",
]
