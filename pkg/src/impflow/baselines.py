"""Comparison transports.

``FcfsProtocol`` reserves each flow's minimal rate on one randomly chosen
disjoint path in arrival order and rejects flows that do not fit.  Leftover
capacity is shared max-min fairly on top of the reservations.

``FairShareProtocol`` opens one subflow per disjoint path.  Subflows ramp up
until their demand overruns a link, at which point the fastest subflow on that
link loses a packet, stalls for a retransmission timeout and comes back at
half its demand.  Deadlines play no part in its rate decisions.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .engine import EventKind, FlowRuntime, Simulator
from .flowmodel import FlowState
from .topology import Path


def _maxmin(sim: Simulator, entries, capacity, caps, weights=None):
    """Max-min fair rates for ``entries`` = [(flow runtime, path index)]."""
    ptr = [0]
    idx = []
    for fr, p in entries:
        idx.extend(fr.paths[p].links)
        ptr.append(len(idx))
    w = np.ones(len(entries)) if weights is None else weights
    return kernels.maxmin_fair(np.array(ptr), np.array(idx, dtype=np.int64),
                               np.asarray(capacity, dtype=np.float64),
                               np.asarray(caps, dtype=np.float64), w)


def _floor_rate(x: float) -> int:
    # stay a hair under the fluid optimum so integer rates never overbook
    return max(0, int(math.floor(x * (1 - 1e-9))) - 1) if x > 0 else 0


class FcfsProtocol:
    name = "fcfs_deadline"

    def __init__(self, sim: Simulator):
        self.sim = sim
        self.rng = np.random.default_rng(sim.config.seed)
        self.reserved = np.zeros(len(sim.links), dtype=np.int64)
        self.capacity = np.array([l.capacity for l in sim.links], dtype=np.int64)
        self.admitted: dict[str, FlowRuntime] = {}
        self.held: dict[str, int] = {}  # reservation per admitted flow
        self.rejected: set[str] = set()

    def paths_for(self, flow) -> list[Path]:
        paths = self.sim.topo.disjoint_paths(flow.src, flow.dst)
        return [paths[int(self.rng.integers(len(paths)))]]

    def on_arrival(self, runtimes: list[FlowRuntime]) -> None:
        # children request one after another, most important first
        for a, b in zip(runtimes, runtimes[1:]):
            a.data["next"] = b.id
        self.request(runtimes[0])

    def on_epoch(self) -> None:
        pass

    def request(self, fr: FlowRuntime) -> None:
        sim = self.sim
        r_min = sim.required_rate(fr)
        if r_min is None:
            self._chain(fr)
            return
        fr.data["outstanding"] = True
        sim.trace("RATE_REQUEST", fr.id, f"rate={r_min}")
        sim.schedule(sim.now + sim.handshake_ns(fr.paths), EventKind.CONTROL_MESSAGE, ("response", fr.id))

    def on_control(self, payload) -> None:
        kind, fid = payload
        fr = self.sim.flows[fid]
        if kind == "response":
            fr.data["outstanding"] = False
            self.respond(fr)
            self._chain(fr)
        elif kind == "retry":
            if fr.state == FlowState.SUSPENDED:
                self.request(fr)

    def _chain(self, fr: FlowRuntime) -> None:
        nxt = fr.data.pop("next", None)
        if nxt is not None:
            self.request(self.sim.flows[nxt])

    def respond(self, fr: FlowRuntime) -> None:
        sim = self.sim
        if fr.state not in (FlowState.PENDING, FlowState.SUSPENDED):
            return
        r_min = sim.required_rate(fr)
        if r_min is None:
            return
        links = list(fr.paths[0].links)
        free = int((self.capacity[links] - self.reserved[links]).min())
        if free < r_min:
            sim.trace("RATE_RESPONSE", fr.id, f"p0=0 free={free}")
            sim.trace("REJECT", fr.id, f"need={r_min}")
            fr.state = FlowState.SUSPENDED
            self.rejected.add(fr.id)
            return
        self.reserved[links] += r_min
        self.held[fr.id] = r_min
        self.rejected.discard(fr.id)
        fr.state = FlowState.ACTIVE
        fr.base = [r_min]
        self.admitted[fr.id] = fr
        sim.trace("RATE_RESPONSE", fr.id, f"p0={r_min}")
        sim.trace("ALLOCATION_NOTIFY", fr.id, f"p0={r_min}")
        sim.trace("START", fr.id)
        self.recompute()

    def recompute(self) -> None:
        """Reservations plus an equal max-min share of what is left."""
        sim = self.sim
        flows = [self.admitted[f] for f in sorted(self.admitted)]
        if not flows:
            return
        left = (self.capacity - self.reserved).astype(np.float64)
        extra = _maxmin(sim, [(fr, 0) for fr in flows], left, np.full(len(flows), np.inf))
        sim.set_many([(fr, [fr.base[0] + _floor_rate(x)], None) for fr, x in zip(flows, extra)])

    def on_release(self, fr: FlowRuntime, freed: list[int], reason: str) -> None:
        sim = self.sim
        if self.admitted.pop(fr.id, None) is not None:
            # the engine has already zeroed fr.base, so use our own record
            self.reserved[list(fr.paths[0].links)] -= self.held.pop(fr.id)
        self.rejected.discard(fr.id)
        if reason == "complete":
            sim.trace("COMPLETE_NOTIFY", fr.id)
            notified = sim.notified_servers(fr)
            for fid in sorted(self.rejected):
                other = sim.flows[fid]
                if other.data.get("retried") or other.servers.isdisjoint(notified):
                    continue
                other.data["retried"] = True
                sim.schedule(sim.now + sim.control_latency_ns(other.paths[0]),
                             EventKind.CONTROL_MESSAGE, ("retry", fid))
        self.recompute()


class FairShareProtocol:
    name = "fairshare"

    def __init__(self, sim: Simulator):
        self.sim = sim
        cfg = sim.config
        self.epoch_ns = int(round(cfg.epoch_ms * 1e6))
        self.rto_ns = int(round(cfg.rto_ms * 1e6))
        self.capacity = np.array([l.capacity for l in sim.links], dtype=np.float64)
        self.running: dict[str, FlowRuntime] = {}
        self.timer = False

    def paths_for(self, flow) -> list[Path]:
        return self.sim.topo.disjoint_paths(flow.src, flow.dst)

    def on_arrival(self, runtimes: list[FlowRuntime]) -> None:
        sim = self.sim
        self.start(runtimes[0])
        # the less important children open their connections one RTT later
        for fr in runtimes[1:]:
            sim.schedule(sim.now + sim.handshake_ns(fr.paths), EventKind.CONTROL_MESSAGE, ("start", fr.id))

    def rtt_ns(self, fr: FlowRuntime, p: int) -> int:
        return max(1000, 2 * self.sim.path_delay_ns(fr.paths[p]))

    def start(self, fr: FlowRuntime) -> None:
        sim = self.sim
        if fr.state != FlowState.PENDING:
            return
        pkt = sim.config.packet_bytes * 8
        cap = sim.config.capacity_bps
        fr.data["demand"] = [min(cap, sim.config.init_window_pkts * pkt * 1e9 / self.rtt_ns(fr, p))
                             for p in range(len(fr.paths))]
        fr.data["slow_start"] = [True] * len(fr.paths)
        fr.data["stall"] = [0] * len(fr.paths)
        fr.state = FlowState.ACTIVE
        self.running[fr.id] = fr
        sim.trace("START", fr.id, f"subflows={len(fr.paths)}")
        self.recompute()
        if not self.timer:
            self.timer = True
            sim.schedule(sim.now + self.epoch_ns, EventKind.RATE_RECOMPUTE)

    def on_control(self, payload) -> None:
        kind, fid = payload
        if kind == "start":
            self.start(self.sim.flows[fid])

    def _subflows(self):
        now = self.sim.now
        out = []
        for fid in sorted(self.running):
            fr = self.running[fid]
            for p in range(len(fr.paths)):
                if fr.data["stall"][p] <= now:
                    out.append((fr, p))
        return out

    def recompute(self) -> None:
        sim = self.sim
        subs = self._subflows()
        rates = {}
        if subs:
            demand = np.array([fr.data["demand"][p] for fr, p in subs])
            got = _maxmin(sim, subs, self.capacity, demand)
            for (fr, p), x in zip(subs, got):
                rates[(fr.id, p)] = _floor_rate(x)
        updates = []
        for fid in sorted(self.running):
            fr = self.running[fid]
            updates.append((fr, [rates.get((fid, p), 0) for p in range(len(fr.paths))], None))
        sim.set_many(updates)

    def on_epoch(self) -> None:
        sim = self.sim
        now = sim.now
        cfg = sim.config
        pkt = cfg.packet_bytes * 8
        subs = self._subflows()
        # per-link demand over the epoch that just ended
        load = np.zeros(len(sim.links))
        for fr, p in subs:
            load[list(fr.paths[p].links)] += fr.data["demand"][p]
        lost = set()
        for l in np.nonzero(load > self.capacity * (1 + 1e-9))[0]:
            cand = [(fr.rates[p], fr.data["demand"][p], fr.id, p) for fr, p in subs
                    if l in fr.paths[p].links and (fr.id, p) not in lost]
            if not cand:
                continue
            # fastest subflow on the link; ties go to the larger demand, then lower id
            cand.sort(key=lambda c: (-c[0], -c[1], c[2], c[3]))
            _, _, fid, p = cand[0]
            lost.add((fid, p))
        for fr, p in subs:
            d = fr.data["demand"]
            if (fr.id, p) in lost:
                fr.data["stall"][p] = now + self.rto_ns
                fr.data["slow_start"][p] = False
                d[p] = max(pkt * 1e9 / self.rtt_ns(fr, p), d[p] / 2)
                fr.blocked_until = max(fr.blocked_until, now + self.rto_ns)
                sim.trace("LOSS", fr.id, f"p{p} stall_until={now + self.rto_ns}")
            elif fr.data["slow_start"][p]:
                d[p] = min(cfg.capacity_bps, d[p] * 2.0 ** (self.epoch_ns / self.rtt_ns(fr, p)))
            else:
                rtt = self.rtt_ns(fr, p)
                d[p] = min(cfg.capacity_bps, d[p] + pkt * 1e9 / rtt * (self.epoch_ns / rtt))
        self.recompute()
        if self.running:
            sim.schedule(now + self.epoch_ns, EventKind.RATE_RECOMPUTE)
        else:
            self.timer = False

    def on_release(self, fr: FlowRuntime, freed: list[int], reason: str) -> None:
        if self.running.pop(fr.id, None) is not None:
            self.recompute()
