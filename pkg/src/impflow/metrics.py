"""Run metrics: goodput, delivered importance, deadline ratios and
precision@K over received response units."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .engine import SimulationTrace
from .flowmodel import IMPORTANT, REGULAR, Flow
from .workload import GroundTruth

CLASSES = ("all", IMPORTANT, REGULAR)


@dataclass
class FlowOutcome:
    flow_id: str
    label: str
    size: int
    importance: float
    deadline_ns: int
    completed_ns: int | None
    met: bool


@dataclass
class MetricsReport:
    goodput_bytes: int
    aggregated_importance: float
    deadline_ratio_overall: float
    deadline_ratio_important: float | None
    deadline_ratio_regular: float | None
    precision_at_k: dict[int, float] = field(default_factory=dict)
    outcomes: list[FlowOutcome] = field(default_factory=list)

    def row(self) -> dict:
        out = {
            "goodput_bytes": self.goodput_bytes,
            "aggregated_importance": _fmt(self.aggregated_importance),
            "deadline_ratio": _fmt(self.deadline_ratio_overall),
            "deadline_ratio_important": _fmt(self.deadline_ratio_important),
            "deadline_ratio_regular": _fmt(self.deadline_ratio_regular),
        }
        for k, v in sorted(self.precision_at_k.items()):
            out[f"precision_at_{k}"] = _fmt(v)
        return out

    def outcome_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["flow_id", "label", "size", "importance", "deadline_ns", "completed_ns", "met"])
        for o in self.outcomes:
            w.writerow([o.flow_id, o.label, o.size, _fmt(o.importance), o.deadline_ns,
                        "" if o.completed_ns is None else o.completed_ns, int(o.met)])
        return buf.getvalue()


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{x:.6f}" if isinstance(x, float) else str(x)


def met_flows(trace: SimulationTrace, workload: Sequence[Flow] | None = None) -> list[Flow]:
    """Flows (post-split children) delivered at or before their deadline."""
    workload = trace.flows if workload is None else workload
    done = trace.completion_times()
    return [f for f in workload if f.id in done and done[f.id] <= f.deadline_ns]


def goodput(trace: SimulationTrace, workload: Sequence[Flow] | None = None) -> int:
    return sum(f.size for f in met_flows(trace, workload))


def aggregated_importance(trace: SimulationTrace, workload: Sequence[Flow] | None = None) -> float:
    return math.fsum(u.importance for f in met_flows(trace, workload) for u in f.units)


def _class_of(f: Flow) -> str:
    return f.label or "all"


def deadline_ratio(trace: SimulationTrace, workload: Sequence[Flow] | None = None, cls: str = "all") -> float:
    workload = trace.flows if workload is None else workload
    if cls not in CLASSES:
        raise ValueError(f"class must be one of {CLASSES}")
    members = [f for f in workload if cls == "all" or f.label == cls]
    if not members:
        raise ValueError(f"no flows in class {cls!r}")
    met = {f.id for f in met_flows(trace, members)}
    return len(met) / len(members)


def received_units(trace: SimulationTrace, workload: Sequence[Flow] | None = None) -> list[str]:
    return [u.rank_id for f in met_flows(trace, workload) for u in f.units if u.rank_id]


def precision_at_k(received: Iterable[str], truth: GroundTruth, k: int, mode: str = "received") -> float:
    """Macro-averaged precision@K over the truth's queries.

    ``mode="received"`` divides hits by the number of received units of the
    query (empty -> 0); ``mode="k"`` divides by K.
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    if mode not in ("received", "k"):
        raise ValueError(f"unknown precision mode {mode!r}")
    if not truth.lists:
        raise ValueError("ground truth has no queries")
    received = list(dict.fromkeys(received))
    by_query: dict[str, list[str]] = {q: [] for q in truth.lists}
    for r in received:
        q = truth.query_of(r)
        targets = [q] if q is not None else list(truth.lists)
        for t in targets:
            by_query[t].append(r)
    scores = []
    for q, ranks in truth.lists.items():
        if len(ranks) < k:
            raise ValueError(f"K={k} exceeds the {len(ranks)}-item truth list of query {q!r}")
        top = set(ranks[:k])
        got = by_query[q]
        hits = sum(1 for r in got if r in top)
        if mode == "k":
            scores.append(hits / k)
        else:
            scores.append(hits / len(got) if got else 0.0)
    return sum(scores) / len(scores)


def report(trace: SimulationTrace, truth: GroundTruth | None = None, ks: Sequence[int] = (),
           mode: str = "received") -> MetricsReport:
    flows = trace.flows
    done = trace.completion_times()
    outcomes = []
    for f in flows:
        t = done.get(f.id)
        outcomes.append(FlowOutcome(f.id, f.label or "all", f.size, f.total_importance, f.deadline_ns,
                                    t, t is not None and t <= f.deadline_ns))
    labels = {f.label for f in flows}
    prec = {}
    if truth is not None and truth.lists:
        rec = received_units(trace)
        for k in ks:
            prec[k] = precision_at_k(rec, truth, k, mode)
    return MetricsReport(
        goodput_bytes=goodput(trace),
        aggregated_importance=aggregated_importance(trace),
        deadline_ratio_overall=deadline_ratio(trace) if flows else 0.0,
        deadline_ratio_important=deadline_ratio(trace, cls=IMPORTANT) if IMPORTANT in labels else None,
        deadline_ratio_regular=deadline_ratio(trace, cls=REGULAR) if REGULAR in labels else None,
        precision_at_k=prec,
        outcomes=outcomes,
    )
