"""Arrival processes: Bernoulli per node per slot, saturated nodes, and
explicit slot-by-slot patterns for exhaustive small-instance checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence


@dataclass(frozen=True)
class ArrivalSpec:
    """Per-node arrival behaviour.

    lam[i] is the per-slot arrival probability of node i; saturated[i] makes
    node i always backlogged instead (its lam is ignored). An explicit
    `pattern` (pattern[t][i] in {0,1}) overrides the Bernoulli coins for the
    slots it covers — later slots have no arrivals. Arrivals during slot t
    join the queue for slot t+1.
    """

    lam: tuple[float, ...]
    saturated: tuple[bool, ...]
    pattern: Optional[tuple[tuple[int, ...], ...]] = None

    @property
    def n(self) -> int:
        return len(self.lam)

    @property
    def total_load(self) -> float:
        return sum(l for l, s in zip(self.lam, self.saturated) if not s)

    def validate(self):
        if len(self.saturated) != len(self.lam):
            raise ValueError("lam and saturated must have equal length")
        for l in self.lam:
            if not 0.0 <= l <= 1.0:
                raise ValueError(f"arrival probability out of [0,1]: {l}")
        if self.pattern is not None:
            for row in self.pattern:
                if len(row) != self.n:
                    raise ValueError("pattern rows must have one entry per node")
                if any(a not in (0, 1) for a in row):
                    raise ValueError("pattern entries must be 0 or 1")

    @classmethod
    def symmetric(cls, n: int, total_load: float) -> "ArrivalSpec":
        """Total load split evenly over n Bernoulli nodes."""
        return cls(lam=(total_load / n,) * n, saturated=(False,) * n)

    @classmethod
    def per_node(cls, lams: Sequence[Optional[float]]) -> "ArrivalSpec":
        """Explicit per-node rates; None marks a saturated node."""
        lam = tuple(0.0 if l is None else float(l) for l in lams)
        sat = tuple(l is None for l in lams)
        return cls(lam=lam, saturated=sat)

    @classmethod
    def all_saturated(cls, n: int) -> "ArrivalSpec":
        return cls(lam=(0.0,) * n, saturated=(True,) * n)

    @classmethod
    def from_pattern(cls, pattern: Sequence[Sequence[int]], n: int) -> "ArrivalSpec":
        return cls(lam=(0.0,) * n, saturated=(False,) * n,
                   pattern=tuple(tuple(int(a) for a in row) for row in pattern))


def generate_arrivals(spec: ArrivalSpec, slot: int, streams: Sequence) -> list[int]:
    """Arrival indicators for one slot; streams[i] is node i's arrival stream
    and the coin for slot t sits at position t (saturated nodes draw nothing)."""
    if spec.pattern is not None:
        if slot < len(spec.pattern):
            return list(spec.pattern[slot])
        return [0] * spec.n
    out = []
    for i in range(spec.n):
        if spec.saturated[i]:
            out.append(0)
        else:
            out.append(1 if streams[i].u01_at(slot) < spec.lam[i] else 0)
    return out
