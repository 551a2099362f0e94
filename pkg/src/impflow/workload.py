"""Synthetic scenarios and trace files.

Trace format (UTF-8, one record per line, ``#`` starts a comment)::

    FLOW <id> <src> <dst> <begin_us> <deadline_us>
    UNIT <flow_id> <rank_id> <size_bytes> <importance>
    TRUTH <query_id> <rank_id_1> <rank_id_2> ...

Deadlines are absolute.  A unit whose rank id looks like ``<query>:<rest>``
with ``<query>`` naming a TRUTH list belongs to that query; other units count
toward every query.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .flowmodel import Flow, ResponseUnit
from .topology import Topology

log = logging.getLogger(__name__)

SIZE_RANGES_KB = {"light": (2, 50), "medium": (50, 100), "heavy": (100, 150)}
DEADLINE_FLOOR_S = 0.005


@dataclass
class WorkloadSpec:
    load_regime: str = "heavy"
    deadline_mean: float = 0.020  # seconds
    importance_model: str = "bimodal"
    high: float = 10.0
    low: float = 1.0
    high_fraction: float = 0.5
    unit_size: int = 1000
    pattern: str = "partition_aggregate"
    seed: int = 0
    begin: float = 0.0  # seconds, common start of a partition-aggregate round
    n_flows: int = 100  # random_pairs only
    mean_interarrival: float = 0.0005  # seconds, random_pairs only

    def __post_init__(self):
        if self.load_regime not in SIZE_RANGES_KB:
            raise ValueError(f"load_regime must be one of {sorted(SIZE_RANGES_KB)}, got {self.load_regime!r}")
        if not self.deadline_mean > 0:
            raise ValueError(f"deadline_mean must be > 0, got {self.deadline_mean}")
        if not 0 <= self.high_fraction <= 1:
            raise ValueError(f"high_fraction must be in [0, 1], got {self.high_fraction}")
        if self.unit_size <= 0:
            raise ValueError("unit_size must be positive")
        if self.importance_model not in ("bimodal",):
            raise ValueError(f"unknown importance_model {self.importance_model!r}")
        if self.pattern not in ("partition_aggregate", "random_pairs"):
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if self.begin < 0 or self.n_flows < 0 or self.mean_interarrival < 0:
            raise ValueError("begin, n_flows and mean_interarrival must be >= 0")


@dataclass
class GroundTruth:
    lists: dict[str, list[str]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def query_of(self, rank_id: str | None) -> str | None:
        if rank_id and ":" in rank_id:
            q = rank_id.split(":", 1)[0]
            if q in self.lists:
                return q
        return None


class TraceError(ValueError):
    pass


def _draw_flow(rng, spec: WorkloadSpec, fid: str, src: int, dst: int, begin_ns: int) -> Flow:
    lo, hi = SIZE_RANGES_KB[spec.load_regime]
    kb = int(rng.integers(lo, hi + 1))
    deadline = max(DEADLINE_FLOOR_S, float(rng.exponential(spec.deadline_mean)))
    n_high = math.ceil(kb * spec.high_fraction)
    marks = rng.permutation(kb) < n_high
    units = tuple(ResponseUnit(spec.high if m else spec.low, spec.unit_size) for m in marks)
    return Flow(fid, src, dst, begin_ns, begin_ns + int(round(deadline * 1e9)), units)


def gen_partition_aggregate(spec: WorkloadSpec, topology: Topology) -> list[Flow]:
    """Every server but a random aggregator sends one flow to it at once."""
    servers = list(topology.servers)
    if len(servers) < 2:
        raise ValueError("partition-aggregate needs at least 2 servers")
    rng = np.random.default_rng(spec.seed)
    agg = int(rng.integers(len(servers)))
    begin = int(round(spec.begin * 1e9))
    flows = []
    for s in servers:
        if s != agg:
            flows.append(_draw_flow(rng, spec, f"f{s:04d}", s, agg, begin))
    return flows


def gen_synthetic(spec: WorkloadSpec, topology: Topology) -> list[Flow]:
    if spec.pattern == "partition_aggregate":
        return gen_partition_aggregate(spec, topology)
    n = topology.num_servers
    if n < 2:
        raise ValueError("need at least 2 servers")
    rng = np.random.default_rng(spec.seed)
    t = spec.begin
    flows = []
    for i in range(spec.n_flows):
        src = int(rng.integers(n))
        dst = int(rng.integers(n - 1))
        dst += dst >= src
        flows.append(_draw_flow(rng, spec, f"f{i:04d}", src, dst, int(round(t * 1e9))))
        t += float(rng.exponential(spec.mean_interarrival)) if spec.mean_interarrival else 0.0
    return flows


def gen_ranked_trace(topology: Topology, seed: int, load_regime: str = "heavy", deadline_mean: float = 0.020,
                     tail: float = 3.0, truth_len: int = 200, unit_size: int = 1000,
                     query: str = "q1") -> tuple[list[Flow], GroundTruth]:
    """Partition-aggregate round answering one query.

    Each worker returns units scored by a heavy-tailed similarity (Pareto
    with shape ``tail``), so a few units per flow are far more relevant than
    the rest.  The truth list is the ``truth_len`` best units overall.
    """
    if load_regime not in SIZE_RANGES_KB:
        raise ValueError(f"load_regime must be one of {sorted(SIZE_RANGES_KB)}")
    rng = np.random.default_rng(seed)
    servers = topology.num_servers
    if servers < 2:
        raise ValueError("need at least 2 servers")
    agg = int(rng.integers(servers))
    lo, hi = SIZE_RANGES_KB[load_regime]
    flows, pool = [], []
    for s in range(servers):
        if s == agg:
            continue
        count = int(rng.integers(lo, hi + 1))
        scores = rng.pareto(tail, count)
        units = tuple(ResponseUnit(round(float(x), 6), unit_size, f"{query}:s{s}u{i}")
                      for i, x in enumerate(scores))
        pool.extend(units)
        deadline = max(DEADLINE_FLOOR_S, float(rng.exponential(deadline_mean)))
        flows.append(Flow(f"f{s:04d}", s, agg, 0, int(round(deadline * 1e9)), units))
    ranked = sorted(pool, key=lambda u: (-u.importance, u.rank_id))
    return flows, GroundTruth({query: [u.rank_id for u in ranked[:truth_len]]})


def offered_load_bps(flows: list[Flow], deadline_mean: float) -> float:
    """Aggregate demand of one round: total bits over the mean deadline."""
    return sum(f.size for f in flows) * 8 / deadline_mean


# -- trace files ---------------------------------------------------------------

def _num(text: str, what: str, lineno: int) -> float:
    try:
        x = float(text)
    except ValueError:
        raise TraceError(f"line {lineno}: {what} is not a number: {text!r}") from None
    if not math.isfinite(x):
        raise TraceError(f"line {lineno}: {what} must be finite")
    return x


def _int(text: str, what: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise TraceError(f"line {lineno}: {what} is not an integer: {text!r}") from None


def parse_trace(text: str) -> tuple[list[Flow], GroundTruth]:
    heads: dict[str, tuple] = {}
    units: dict[str, list[ResponseUnit]] = {}
    truth = GroundTruth()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "FLOW":
            if len(parts) != 6:
                raise TraceError(f"line {lineno}: FLOW needs 5 fields, got {len(parts) - 1}")
            fid = parts[1]
            if fid in heads:
                raise TraceError(f"line {lineno}: duplicate flow id {fid!r}")
            src, dst = _int(parts[2], "src", lineno), _int(parts[3], "dst", lineno)
            begin = int(round(_num(parts[4], "begin_us", lineno) * 1000))
            deadline = int(round(_num(parts[5], "deadline_us", lineno) * 1000))
            if deadline <= begin:
                raise TraceError(f"line {lineno}: deadline must be after begin")
            heads[fid] = (src, dst, begin, deadline, lineno)
            units[fid] = []
        elif tag == "UNIT":
            if len(parts) != 5:
                raise TraceError(f"line {lineno}: UNIT needs 4 fields, got {len(parts) - 1}")
            fid = parts[1]
            if fid not in heads:
                raise TraceError(f"line {lineno}: UNIT for undeclared flow {fid!r}")
            size = _int(parts[3], "size_bytes", lineno)
            imp = _num(parts[4], "importance", lineno)
            try:
                units[fid].append(ResponseUnit(imp, size, None if parts[2] == "-" else parts[2]))
            except ValueError as e:
                raise TraceError(f"line {lineno}: {e}") from None
        elif tag == "TRUTH":
            if len(parts) < 2:
                raise TraceError(f"line {lineno}: TRUTH needs a query id")
            qid, ranks = parts[1], parts[2:]
            if qid in truth.lists:
                raise TraceError(f"line {lineno}: duplicate TRUTH list for query {qid!r}")
            if len(set(ranks)) != len(ranks):
                dup = next(r for i, r in enumerate(ranks) if r in ranks[:i])
                raise TraceError(f"line {lineno}: rank_id {dup!r} repeated in TRUTH list {qid!r}")
            truth.lists[qid] = ranks
        else:
            raise TraceError(f"line {lineno}: unknown record type {tag!r}")

    flows = []
    for fid, (src, dst, begin, deadline, lineno) in heads.items():
        if not units[fid]:
            raise TraceError(f"line {lineno}: flow {fid!r} has no UNIT lines")
        flows.append(Flow(fid, src, dst, begin, deadline, tuple(units[fid])))
    known = {u.rank_id for f in flows for u in f.units}
    for qid, ranks in truth.lists.items():
        missing = [r for r in ranks if r not in known]
        if missing:
            msg = f"TRUTH {qid}: {len(missing)} rank ids not carried by any flow (first: {missing[0]})"
            truth.warnings.append(msg)
            log.warning(msg)
    return flows, truth


def load_trace(path: str | os.PathLike) -> tuple[list[Flow], GroundTruth]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())


def _fmt_num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def dump_trace(flows: list[Flow], truth: GroundTruth | None = None) -> str:
    lines = []
    for f in flows:
        lines.append(f"FLOW {f.id} {f.src} {f.dst} {_fmt_num(f.begin_ns / 1000)} {_fmt_num(f.deadline_ns / 1000)}")
        for u in f.units:
            lines.append(f"UNIT {f.id} {u.rank_id or '-'} {u.size} {_fmt_num(u.importance)}")
    for qid, ranks in (truth.lists if truth else {}).items():
        lines.append(" ".join(["TRUTH", qid, *ranks]))
    return "".join(line + "\n" for line in lines)
