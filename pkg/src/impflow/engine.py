"""Deterministic fluid discrete-event simulation core.

Time is integer nanoseconds and rates are integer bits/s.  Flow progress is
tracked in bit-nanoseconds (bits * 1e9) so that ``rate * dt`` is exact and
completion instants are exact ceilings.  Between events every active flow
drains at its allocated per-path rates.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path as FsPath
from typing import Any, Iterable, Sequence

from .flowmodel import NS, Flow, FlowState, fic as fic_metric, split_flow
from .topology import Path, Topology, build_bcube, build_bcube_mixed, servers_on

log = logging.getLogger(__name__)
if os.environ.get("IMPFLOW_LOG"):
    logging.basicConfig(level=os.environ["IMPFLOW_LOG"].upper())

PROTOCOLS = ("importance", "fcfs_deadline", "fairshare")


class CapacityViolation(RuntimeError):
    """A link was asked to carry more than its capacity."""


class AuditError(AssertionError):
    """An engine invariant audit fired."""


class EventKind(IntEnum):
    FLOW_ARRIVAL = 0
    FLOW_COMPLETION = 1
    DEADLINE_EXPIRY = 2
    CONTROL_MESSAGE = 3
    RATE_RECOMPUTE = 4


@dataclass(order=True)
class Event:
    time: int
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(default=None, compare=False)


class EventQueue:
    """Min-heap ordered by (timestamp, sequence)."""

    def __init__(self):
        self._heap: list[Event] = []
        self._seq = itertools.count()
        self.clock = 0

    def schedule(self, event: Event) -> None:
        if event.time < self.clock:
            raise ValueError(f"event at {event.time} ns is before the clock ({self.clock} ns)")
        heapq.heappush(self._heap, event)

    def push(self, time: int, kind: EventKind, payload: Any = None) -> Event:
        event = Event(int(time), next(self._seq), kind, payload)
        self.schedule(event)
        return event

    def pop(self) -> Event:
        event = heapq.heappop(self._heap)
        self.clock = event.time
        return event

    def peek_time(self) -> int | None:
        return self._heap[0].time if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class LinkState:
    link_id: int
    capacity: int
    allocated: dict[str, int] = field(default_factory=dict)
    used: int = 0

    @property
    def residual(self) -> int:
        return self.capacity - self.used


def apply_allocation(link: LinkState, flow_id: str, rate: int) -> None:
    """Set ``flow_id``'s booked rate on ``link``; oversubscription is fatal."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    old = link.allocated.get(flow_id, 0)
    used = link.used - old + rate
    if used > link.capacity:
        raise CapacityViolation(
            f"link {link.link_id}: {used} bps booked exceeds capacity {link.capacity} bps"
            f" (flow {flow_id} asked for {rate})")
    if rate:
        link.allocated[flow_id] = rate
    else:
        link.allocated.pop(flow_id, None)
    link.used = used


@dataclass
class SimConfig:
    n: int = 5
    k: int = 2
    radices: tuple[int, ...] | None = None  # overrides n/k when set
    capacity_bps: int = 1_000_000_000
    rtt_min_us: float = 35.0
    rtt_max_us: float = 100.0
    processing_delay_us: float = 5.0
    seed: int = 0
    protocol: str = "importance"
    flow_splitting: bool = True
    clusters: int = 2
    rto_ms: float = 200.0
    epoch_ms: float = 1.0
    init_window_pkts: int = 10
    packet_bytes: int = 1000
    retry_spacing_ms: float = 1.0
    horizon_ms: float | None = None
    audit: bool = True

    def __post_init__(self):
        if self.radices is not None:
            self.radices = tuple(int(r) for r in self.radices)
        if self.capacity_bps <= 0:
            raise ValueError("capacity_bps must be positive")
        for name in ("rtt_min_us", "rtt_max_us", "processing_delay_us", "rto_ms", "retry_spacing_ms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.rtt_max_us < self.rtt_min_us:
            raise ValueError("rtt_max_us must be >= rtt_min_us")
        if self.epoch_ms <= 0:
            raise ValueError("epoch_ms must be positive")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.clusters < 1:
            raise ValueError("clusters must be >= 1")

    def build_topology(self) -> Topology:
        rtt = (self.rtt_min_us * 1e-6, self.rtt_max_us * 1e-6)
        if self.radices:
            return build_bcube_mixed(self.radices, self.capacity_bps, rtt)
        return build_bcube(self.n, self.k, self.capacity_bps, rtt)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["radices"] is not None:
            d["radices"] = list(d["radices"])
        return d


@dataclass(eq=False)
class FlowRuntime:
    flow: Flow
    paths: list[Path]
    delay_ns: int  # longest one-way propagation among the flow's paths
    state: FlowState = FlowState.PENDING
    remaining: int = 0  # bits * 1e9
    rates: list[int] = field(default_factory=list)
    base: list[int] = field(default_factory=list)  # committed (minimal) part
    last_update: int = 0
    version: int = 0
    sent_at: int | None = None
    completed_at: int | None = None
    blocked_until: int = 0
    servers: frozenset = frozenset()
    link_path: dict[int, int] = field(default_factory=dict)
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.remaining:
            self.remaining = self.flow.size * 8 * NS
        self.rates = [0] * len(self.paths)
        self.base = [0] * len(self.paths)
        self.servers = frozenset(servers_on(self.paths))
        self.link_path = {l: p for p, path in enumerate(self.paths) for l in path.links}

    @property
    def id(self) -> str:
        return self.flow.id

    @property
    def cutoff(self) -> int:
        """Last instant at which the source may finish sending."""
        return self.flow.deadline_ns - self.delay_ns

    @property
    def total_rate(self) -> int:
        return sum(self.rates)

    @property
    def remaining_size(self) -> float:
        return self.remaining / (8 * NS)

    @property
    def bytes_delivered(self) -> float:
        return self.flow.size - self.remaining_size

    def remaining_at(self, now: int) -> int:
        return max(0, self.remaining - self.total_rate * (now - self.last_update))

    def advance(self, now: int) -> bool:
        """Drain up to ``now`` at the current rates; True once empty."""
        dt = now - self.last_update
        if dt < 0:
            raise ValueError("negative time step")
        if dt:
            self.remaining = max(0, self.remaining - self.total_rate * dt)
            self.last_update = now
        return self.remaining == 0


@dataclass
class SimulationTrace:
    records: list[tuple[int, str, str, str]]
    flows: list[Flow]
    end_ns: int = 0
    audits: int = 0

    def lines(self) -> list[str]:
        return [f"{t} {kind} {fid} {detail}".rstrip() for t, kind, fid, detail in self.records]

    def to_text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path: str | os.PathLike) -> None:
        FsPath(path).write_text(self.to_text())

    @classmethod
    def parse(cls, text: str, flows: Sequence[Flow] = ()) -> "SimulationTrace":
        records = []
        for line in text.splitlines():
            if not line.strip():
                continue
            parts = line.split(" ", 3)
            parts += [""] * (4 - len(parts))
            records.append((int(parts[0]), parts[1], parts[2], parts[3]))
        end = records[-1][0] if records else 0
        return cls(records, list(flows), end)

    def completion_times(self) -> dict[str, int]:
        return {fid: t for t, kind, fid, _ in self.records if kind == "COMPLETE"}

    def met(self) -> dict[str, bool]:
        done = self.completion_times()
        return {f.id: f.id in done and done[f.id] <= f.deadline_ns for f in self.flows}


class Simulator:
    def __init__(self, config: SimConfig, topology: Topology | None = None):
        self.config = config
        self.topo = topology if topology is not None else config.build_topology()
        self.queue = EventQueue()
        self.links = [LinkState(i, l.capacity) for i, l in enumerate(self.topo.links)]
        self.flows: dict[str, FlowRuntime] = {}
        self.records: list[tuple[int, str, str, str]] = []
        self.processing_ns = int(round(config.processing_delay_us * 1000))
        self.retry_spacing_ns = int(round(config.retry_spacing_ms * 1e6))
        self._delay_cache: dict[tuple, int] = {}
        self._dirty_links: set[int] = set()
        self._dirty_flows: set[str] = set()
        self.transmitting: set[str] = set()
        self.audits = 0
        self.protocol = make_protocol(config.protocol, self)

    # -- time & tracing -------------------------------------------------
    @property
    def now(self) -> int:
        return self.queue.clock

    def trace(self, kind: str, flow_id: str = "-", detail: str = "") -> None:
        self.records.append((self.now, kind, flow_id, detail))

    def schedule(self, time: int, kind: EventKind, payload: Any = None) -> Event:
        return self.queue.push(time, kind, payload)

    # -- delays ---------------------------------------------------------
    def path_delay_ns(self, path: Path) -> int:
        key = path.links
        d = self._delay_cache.get(key)
        if d is None:
            d = int(round(self.topo.path_delay(path) * NS))
            self._delay_cache[key] = d
        return d

    def control_latency_ns(self, path: Path) -> int:
        """One-way control message latency along a path incl. per-node processing."""
        return self.path_delay_ns(path) + self.processing_ns * len(path.servers)

    def handshake_ns(self, paths: Iterable[Path]) -> int:
        return max(2 * self.control_latency_ns(p) for p in paths)

    # -- flow helpers ---------------------------------------------------
    def make_runtime(self, flow: Flow, paths: list[Path]) -> FlowRuntime:
        delay = max(self.path_delay_ns(p) for p in paths)
        fr = FlowRuntime(flow, paths, delay, last_update=self.now)
        self.flows[flow.id] = fr
        return fr

    def fic(self, fr: FlowRuntime, now: int | None = None) -> float:
        now = self.now if now is None else now
        rs = fr.remaining_at(now) / (8 * NS)
        rt = (fr.flow.deadline_ns - now) / NS
        if rs <= 0 or rt <= 0:
            return math.inf
        return fic_metric(fr.flow.avg_importance, rs, rt)

    def required_rate(self, fr: FlowRuntime, now: int | None = None) -> int | None:
        """Integer bits/s that finishes the flow exactly at its cutoff."""
        now = self.now if now is None else now
        budget = fr.cutoff - now
        if budget <= 0:
            return None
        rem = fr.remaining_at(now)
        return max(1, -(-rem // budget))

    def update_progress(self, fr: FlowRuntime, dt: int) -> None:
        """Drain ``dt`` ns of transmission; schedules completion when empty."""
        if dt < 0:
            raise ValueError("negative dt")
        if fr.state != FlowState.ACTIVE:
            raise ValueError(f"flow {fr.id} is not active")
        fr.remaining = max(0, fr.remaining - fr.total_rate * dt)
        fr.last_update = self.now
        self._reschedule(fr)

    def _reschedule(self, fr: FlowRuntime) -> None:
        fr.version += 1
        rate = fr.total_rate
        if fr.remaining == 0:
            self.schedule(self.now, EventKind.FLOW_COMPLETION, ("sent", fr.id, fr.version))
        elif rate > 0:
            t = self.now + -(-fr.remaining // rate)
            self.schedule(t, EventKind.FLOW_COMPLETION, ("sent", fr.id, fr.version))

    def set_rates(self, fr: FlowRuntime, rates: Sequence[int], base: Sequence[int] | None = None) -> None:
        self.set_many([(fr, rates, base)])

    def set_many(self, updates: Sequence[tuple[FlowRuntime, Sequence[int], Sequence[int] | None]]) -> None:
        """Change per-path rates of several flows; decreases are booked before
        increases so a feasible end state never trips the capacity check."""
        now = self.now
        changed = []
        for fr, rates, base in updates:
            fr.advance(now)
            if base is not None:
                fr.base = [int(b) for b in base]
            rates = [int(r) for r in rates]
            if rates != fr.rates:
                changed.append((fr, rates))
        for phase in (0, 1):
            for fr, rates in changed:
                for p, path in enumerate(fr.paths):
                    old, new = fr.rates[p], rates[p]
                    if (phase == 0 and new < old) or (phase == 1 and new > old):
                        for l in path.links:
                            apply_allocation(self.links[l], fr.id, new)
                            self._dirty_links.add(l)
        for fr, rates in changed:
            fr.rates = rates
            self._dirty_flows.add(fr.id)
            if fr.total_rate > 0:
                self.transmitting.add(fr.id)
            else:
                self.transmitting.discard(fr.id)
            self.trace("RATE", fr.id, " ".join(f"p{p}={r}" for p, r in enumerate(rates)))
            self._reschedule(fr)

    def stop(self, fr: FlowRuntime) -> list[int]:
        """Zero every path rate; returns the links that were freed."""
        freed = [l for p, path in enumerate(fr.paths) if fr.rates[p] for l in path.links]
        if any(fr.rates):
            self.set_rates(fr, [0] * len(fr.paths), [0] * len(fr.paths))
        else:
            fr.base = [0] * len(fr.paths)
            fr.advance(self.now)
        return freed

    def flows_on(self, link_id: int) -> list[FlowRuntime]:
        return [self.flows[f] for f in self.links[link_id].allocated]

    def notified_servers(self, fr: FlowRuntime) -> set[int]:
        """Servers on the flow's paths plus all their neighbors."""
        out = set(fr.servers)
        for s in fr.servers:
            out.update(self.topo.neighbors(s))
        return out

    # -- main loop ------------------------------------------------------
    def run(self, workload: Sequence[Flow]) -> SimulationTrace:
        workload = sorted(workload, key=lambda f: (f.begin_ns, f.id))
        for f in workload:
            if f.begin_ns < 0:
                raise ValueError(f"flow {f.id} begins before time 0")
            self.schedule(f.begin_ns, EventKind.FLOW_ARRIVAL, f)
        if self.config.horizon_ms is not None:
            horizon = int(round(self.config.horizon_ms * 1e6))
        elif workload:
            horizon = max(f.deadline_ns for f in workload) + 10_000_000
        else:
            horizon = 0
        simulated: list[Flow] = []
        while len(self.queue):
            if self.queue.peek_time() > horizon:
                break
            ev = self.queue.pop()
            if ev.kind == EventKind.FLOW_ARRIVAL:
                simulated.extend(self._arrive(ev.payload))
            elif ev.kind == EventKind.FLOW_COMPLETION:
                self._completion(ev.payload)
            elif ev.kind == EventKind.DEADLINE_EXPIRY:
                self._expire(ev.payload)
            elif ev.kind == EventKind.CONTROL_MESSAGE:
                self.protocol.on_control(ev.payload)
            elif ev.kind == EventKind.RATE_RECOMPUTE:
                self.protocol.on_epoch()
            if self.config.audit:
                self.audit()
        end = self.records[-1][0] if self.records else 0
        return SimulationTrace(list(self.records), simulated, end, self.audits)

    def _arrive(self, flow: Flow) -> list[Flow]:
        if self.config.flow_splitting and len(flow.units) >= max(2, self.config.clusters):
            children = split_flow(flow, self.config.clusters)
        else:
            children = [flow]
        runtimes = []
        for child in children:
            paths = self.protocol.paths_for(child)
            fr = self.make_runtime(child, paths)
            self.trace("ARRIVE", child.id,
                       f"src={child.src} dst={child.dst} bytes={child.size} deadline={child.deadline_ns}")
            self.schedule(max(fr.cutoff, self.now), EventKind.DEADLINE_EXPIRY, child.id)
            runtimes.append(fr)
        self.protocol.on_arrival(runtimes)
        return children

    def _completion(self, payload) -> None:
        phase, fid = payload[0], payload[1]
        fr = self.flows[fid]
        if phase == "delivered":
            self.trace("COMPLETE", fid, f"deadline={fr.flow.deadline_ns}")
            return
        if payload[2] != fr.version or fr.state in (FlowState.COMPLETED, FlowState.EXPIRED):
            return
        if not fr.advance(self.now):
            self._reschedule(fr)
            return
        self._finish_sending(fr)

    def _finish_sending(self, fr: FlowRuntime) -> None:
        freed = self.stop(fr)
        fr.sent_at = self.now
        ready = max(self.now, fr.blocked_until)
        self.trace("SEND_DONE", fr.id)
        if ready <= fr.cutoff:
            fr.state = FlowState.COMPLETED
            fr.completed_at = ready + fr.delay_ns
            self.schedule(fr.completed_at, EventKind.FLOW_COMPLETION, ("delivered", fr.id))
        else:
            # waiting on a retransmission that cannot land in time
            fr.state = FlowState.SUSPENDED
            fr.data["waiting"] = True
        self.protocol.on_release(fr, freed, "complete")

    def _expire(self, fid: str) -> None:
        fr = self.flows[fid]
        if fr.state in (FlowState.COMPLETED, FlowState.EXPIRED):
            return
        if fr.sent_at is None and fr.advance(self.now) and fr.total_rate > 0:
            self._finish_sending(fr)  # finishes exactly at the cutoff
            if fr.state == FlowState.COMPLETED:
                return
        freed = self.stop(fr)
        fr.state = FlowState.EXPIRED
        self.trace("EXPIRE", fid, f"remaining_bytes={fr.remaining_size:.3f}")
        self.protocol.on_release(fr, freed, "expire")

    # -- invariants -----------------------------------------------------
    def audit(self) -> None:
        """Capacity, path-conservation and deadline checks over everything
        touched since the previous audit."""
        self.audits += 1
        for l in self._dirty_links:
            ls = self.links[l]
            if ls.used != sum(ls.allocated.values()) or ls.used > ls.capacity:
                raise AuditError(f"link {l}: booked {ls.used} vs capacity {ls.capacity}")
        for fid in self._dirty_flows:
            fr = self.flows[fid]
            for p, path in enumerate(fr.paths):
                for l in path.links:
                    if self.links[l].allocated.get(fid, 0) != fr.rates[p]:
                        raise AuditError(f"flow {fid}: path {p} rate differs on link {l}")
        now = self.now
        for fid in self.transmitting:
            if now > self.flows[fid].flow.deadline_ns:
                raise AuditError(f"flow {fid} transmits after its deadline")
        self._dirty_links.clear()
        self._dirty_flows.clear()

    def audit_all(self) -> None:
        self._dirty_links = set(range(len(self.links)))
        self._dirty_flows = set(self.flows)
        self.audit()


def make_protocol(name: str, sim: Simulator):
    if name == "importance":
        from .protocol import ImportanceProtocol
        return ImportanceProtocol(sim)
    if name == "fcfs_deadline":
        from .baselines import FcfsProtocol
        return FcfsProtocol(sim)
    if name == "fairshare":
        from .baselines import FairShareProtocol
        return FairShareProtocol(sim)
    raise ValueError(f"unknown protocol {name!r}")


def run(config: SimConfig, workload: Sequence[Flow], topology: Topology | None = None) -> SimulationTrace:
    return Simulator(config, topology).run(workload)
