"""Flows, response units, averaged importance, FIC and importance-based
flow splitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

from . import kernels

NS = 1_000_000_000

IMPORTANT = "important"
REGULAR = "regular"


@dataclass(frozen=True)
class ResponseUnit:
    importance: float
    size: int  # bytes
    rank_id: str | None = None

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"unit size must be positive, got {self.size}")
        if not math.isfinite(self.importance) or self.importance < 0:
            raise ValueError(f"unit importance must be finite and >= 0, got {self.importance}")


@dataclass(frozen=True)
class Flow:
    """A deadline flow.  Times are integer nanoseconds; ``deadline_ns`` is
    absolute."""

    id: str
    src: int
    dst: int
    begin_ns: int
    deadline_ns: int
    units: tuple[ResponseUnit, ...]
    label: str | None = None  # IMPORTANT / REGULAR for split children
    parent: str | None = None
    size: int = field(init=False)
    avg_importance: float = field(init=False)

    def __post_init__(self):
        if not self.units:
            raise ValueError(f"flow {self.id} has no response units")
        if self.deadline_ns <= self.begin_ns:
            raise ValueError(f"flow {self.id}: deadline must be after begin time")
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "size", sum(u.size for u in self.units))
        object.__setattr__(self, "avg_importance", average_importance(self.units))

    @property
    def begin(self) -> float:
        return self.begin_ns / NS

    @property
    def deadline(self) -> float:
        return self.deadline_ns / NS

    @property
    def total_importance(self) -> float:
        return math.fsum(u.importance for u in self.units)


class FlowState(str, Enum):
    PENDING = "pending"
    ACTIVE = "active"
    SUSPENDED = "suspended"
    COMPLETED = "completed"
    EXPIRED = "expired"


def average_importance(units: Sequence[ResponseUnit]) -> float:
    if not units:
        raise ValueError("average importance of an empty unit list")
    return math.fsum(u.importance for u in units) / len(units)


def fic(importance: float, remaining_bytes: float, remaining_time: float) -> float:
    """Flow importance contribution: importance per remaining byte per
    remaining second."""
    if remaining_bytes <= 0:
        raise ValueError("remaining size must be positive (flow already complete)")
    if remaining_time <= 0:
        raise ValueError("remaining time must be positive (deadline passed)")
    return importance / (remaining_bytes * remaining_time)


def minimal_rate(flow: Flow, now: float, remaining: float | None = None) -> float:
    """Bits/s needed to deliver ``remaining`` bytes (default: whole flow) by
    the deadline, starting at ``now`` seconds."""
    budget = flow.deadline - now
    if budget <= 0:
        raise ValueError(f"flow {flow.id}: deadline passed (now={now}, deadline={flow.deadline})")
    size = flow.size if remaining is None else remaining
    return size * 8 / budget


def split_flow(flow: Flow, clusters: int) -> list[Flow]:
    """Partition a flow's units into ``clusters`` children by exact 1-D
    k-means on unit importance.

    Children keep the parent's endpoints and times, are ordered by
    descending mean importance and keep the parent's unit order internally.
    The first child is labelled important, the rest regular.
    """
    if clusters < 1:
        raise ValueError("clusters must be >= 1")
    if len(flow.units) < clusters:
        raise ValueError(
            f"flow {flow.id} has {len(flow.units)} units, cannot form {clusters} clusters")
    if clusters == 1:
        return [flow]
    order = sorted(range(len(flow.units)), key=lambda i: -flow.units[i].importance)
    values = [flow.units[i].importance for i in order]
    starts = kernels.kmeans1d(values, clusters) + [len(order)]
    groups = [sorted(order[a:b]) for a, b in zip(starts, starts[1:])]
    children = []
    for j, idx in enumerate(groups):
        children.append(replace(
            flow,
            id=f"{flow.id}.{j}",
            units=tuple(flow.units[i] for i in idx),
            label=IMPORTANT if j == 0 else REGULAR,
            parent=flow.id,
        ))
    return children
