"""Importance-aware, deadline-aware rate allocation.

A new flow asks each node on each of its disjoint paths for a share of its
minimal rate.  Nodes grant from residual capacity, first by trimming other
flows' surplus above their committed rate and then, in ascending FIC order,
by marking lower-FIC flows for suspension while the request's FIC budget
exceeds theirs.  The source admits the flow only if the path grants add up to
its minimal rate, and then splits that rate across paths in proportion to the
grants.  Completions free capacity that is handed out by FIC and trigger
recovery attempts for suspended flows nearby.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .engine import EventKind, FlowRuntime, Simulator
from .flowmodel import FlowState
from .topology import Path


@dataclass
class RateRequest:
    flow_id: str
    desired: int  # bits/s on this path
    fic: float
    path: Path | None = None
    share: Fraction = Fraction(1)
    origin: int | None = None

    def __post_init__(self):
        if self.desired < 0:
            raise ValueError("desired rate must be >= 0")
        if not self.fic >= 0:
            raise ValueError("request FIC must be >= 0")


@dataclass
class SuspensionRecord:
    flow_id: str
    witness: int  # node that holds the record
    source: int
    deadline_ns: int
    fic: float
    remaining_bytes: float
    preemptor: str


@dataclass
class PathAllocation:
    path: Path
    granted: int
    bottleneck: int | None  # server whose stage gave the smallest grant


@dataclass
class FlowView:
    """A flow as seen from one link: its booked rate, the part above its
    committed minimum, and its FIC."""

    flow_id: str
    rate: int
    extra: int
    fic: float
    deadline_ns: int
    path: int = 0


@dataclass
class LinkView:
    link_id: int
    residual: int
    flows: list[FlowView] = field(default_factory=list)


@dataclass
class Plan:
    """Scratch state threaded through one request's evaluation."""

    budget: float
    victims: dict[str, tuple[float, int | None]] = field(default_factory=dict)
    reclaimed: dict[tuple[str, int], int] = field(default_factory=dict)


# -- pure helpers ------------------------------------------------------------

def split_demand(demand, estimates: Sequence) -> list[Fraction]:
    """Per-path request shares proportional to estimated residuals."""
    est = [Fraction(e) for e in estimates]
    total = sum(est)
    if total <= 0:
        return [Fraction(demand) / len(est)] * len(est)
    return [Fraction(demand) * e / total for e in est]


def final_rates(demand, grants: Sequence) -> list[Fraction]:
    """Per-path rates proportional to the reported bottleneck grants."""
    g = [Fraction(x) for x in grants]
    total = sum(g)
    if total < Fraction(demand):
        raise ValueError("grants do not cover the demand")
    return [Fraction(demand) * x / total for x in g]


def apportion(total: int, weights: Sequence[int]) -> list[int]:
    """Integer split of ``total`` proportional to integer ``weights``
    (largest remainder, ties to the lower index)."""
    weights = [max(0, int(w)) for w in weights]
    wsum = sum(weights)
    if wsum == 0:
        weights = [1] * len(weights)
        wsum = len(weights)
    parts, rems = [], []
    for w in weights:
        q, r = divmod(total * w, wsum)
        parts.append(q)
        rems.append(r)
    left = total - sum(parts)
    for i in sorted(range(len(weights)), key=lambda i: (-rems[i], i))[:left]:
        parts[i] += 1
    return parts


def admission_check(new_fic: float, victim_fics: Sequence[float]) -> bool:
    """Preempting ``victim_fics`` for the new flow must raise admitted FIC mass."""
    if not victim_fics:
        return True
    return new_fic > math.fsum(victim_fics)


def victim_order(views: Sequence[FlowView]) -> list[FlowView]:
    """Ascending FIC; among equals the later deadline, then the higher id,
    goes first."""
    by_id = sorted(views, key=lambda v: v.flow_id, reverse=True)
    return sorted(by_id, key=lambda v: (v.fic, -v.deadline_ns))


def distribute_spare(residual: int, fics: Sequence[float], caps: Sequence[float] | None = None) -> list[int]:
    """Split ``residual`` in proportion to FIC, respecting per-flow caps;
    whatever a capped flow cannot take is refilled to the others."""
    n = len(fics)
    caps = [math.inf] * n if caps is None else list(caps)
    inc = [0] * n
    left = max(0, int(residual))
    active = [i for i in range(n) if fics[i] > 0 and math.isfinite(fics[i]) and caps[i] > 0]
    while active and left > 0:
        w = math.fsum(fics[i] for i in active)
        capped = [i for i in active if caps[i] - inc[i] <= left * fics[i] / w]
        if capped:
            for i in capped:
                give = min(int(caps[i] - inc[i]), left)
                inc[i] += give
                left -= give
            active = [i for i in active if i not in capped]
            continue
        given = 0
        for i in active:
            give = min(int(left * fics[i] / w), left - given)
            inc[i] += give
            given += give
        left -= given
        break
    total = sum(inc)
    if total > residual:  # float floor overshoot guard
        for i in sorted(range(n), key=lambda i: -inc[i]):
            cut = min(inc[i], total - residual)
            inc[i] -= cut
            total -= cut
            if total <= residual:
                break
    return inc


def allocate_on_link(view: LinkView, desired: int, fic: float, plan: Plan) -> int:
    """One link stage of the node allocation; records victims and surplus
    trims in ``plan`` and returns the grant."""
    live = []
    freed = 0
    for fv in view.flows:
        if fv.flow_id in plan.victims:
            freed += fv.rate
            continue
        took = plan.reclaimed.get((fv.flow_id, fv.path), 0)
        freed += took
        live.append((fv, fv.rate - took, fv.extra - took))
    residual = view.residual + freed
    if residual >= desired:
        spare = residual - desired
        total = fic + math.fsum(fv.fic for fv, _, _ in live if math.isfinite(fv.fic))
        return desired + (int(spare * fic / total) if spare > 0 and total > 0 else 0)

    short = desired - residual
    order = victim_order([fv for fv, _, _ in live])
    current = {fv.flow_id: (rate, extra) for fv, rate, extra in live}
    for fv in order:
        if short <= 0:
            break
        rate, extra = current[fv.flow_id]
        if extra > 0:
            take = min(extra, short)
            key = (fv.flow_id, fv.path)
            plan.reclaimed[key] = plan.reclaimed.get(key, 0) + take
            current[fv.flow_id] = (rate - take, extra - take)
            short -= take
    if short <= 0:
        return desired

    r = short
    for fv in order:
        if not admission_check(plan.budget, [fv.fic]):
            break
        plan.victims[fv.flow_id] = (fv.fic, None)
        plan.budget -= fv.fic
        r -= current[fv.flow_id][0]
        if r <= 0:
            break
    return desired - max(r, 0)


def allocate_rate_on_node(req: RateRequest, stages: Sequence[LinkView], plan: Plan | None = None,
                          node: int | None = None) -> int:
    """Grant for one node: the smaller of its outgoing-link and switch-stage
    grants."""
    plan = Plan(req.fic) if plan is None else plan
    grant = None
    for view in stages:
        before = set(plan.victims)
        g = allocate_on_link(view, req.desired, req.fic, plan)
        for fid in set(plan.victims) - before:
            plan.victims[fid] = (plan.victims[fid][0], node)
        grant = g if grant is None else min(grant, g)
    return 0 if grant is None else grant


# -- protocol ----------------------------------------------------------------

class ImportanceProtocol:
    name = "importance"

    def __init__(self, sim: Simulator):
        self.sim = sim
        self.suspensions: dict[str, SuspensionRecord] = {}
        self.victims_of: dict[str, list[str]] = {}
        self.suspended: set[str] = set()

    def paths_for(self, flow) -> list[Path]:
        return self.sim.topo.disjoint_paths(flow.src, flow.dst)

    def on_arrival(self, runtimes: list[FlowRuntime]) -> None:
        for fr in runtimes:
            self.request(fr)

    def on_epoch(self) -> None:
        pass

    # -- request / response ---------------------------------------------
    def request(self, fr: FlowRuntime) -> None:
        sim = self.sim
        r_min = sim.required_rate(fr)
        if r_min is None:
            return
        est = [sim.links[p.links[0]].residual for p in fr.paths]
        fr.data["estimates"] = est
        fr.data["outstanding"] = True
        fr.data["last_try"] = sim.now
        desired = apportion(r_min, est)
        sim.trace("RATE_REQUEST", fr.id, f"rate={r_min} " + _fmt(desired))
        sim.schedule(sim.now + sim.handshake_ns(fr.paths), EventKind.CONTROL_MESSAGE, ("response", fr.id))

    def on_control(self, payload) -> None:
        kind, fid = payload
        fr = self.sim.flows[fid]
        if kind == "response":
            fr.data["outstanding"] = False
            self.respond(fr)
        elif kind in ("hint", "retry"):
            fr.data.pop("scheduled", None)
            if fr.state == FlowState.SUSPENDED and not fr.data.get("outstanding"):
                self.request(fr)

    def link_view(self, link_id: int, fics: dict[str, float]) -> LinkView:
        sim = self.sim
        ls = sim.links[link_id]
        views = []
        for fid, rate in ls.allocated.items():
            other = sim.flows[fid]
            q = other.link_path[link_id]
            if fid not in fics:
                fics[fid] = sim.fic(other)
            views.append(FlowView(fid, rate, max(0, rate - other.base[q]), fics[fid],
                                  other.flow.deadline_ns, q))
        return LinkView(link_id, ls.residual, views)

    def evaluate_path(self, fr: FlowRuntime, p: int, desired: int, fic: float, plan: Plan,
                      fics: dict[str, float]) -> PathAllocation:
        path = fr.paths[p]
        req = RateRequest(fr.id, desired, fic, path, origin=fr.flow.src)
        best, where = None, None
        for j in range(0, len(path.links), 2):
            node = path.nodes[j]
            stages = [self.link_view(l, fics) for l in path.links[j:j + 2]]
            g = allocate_rate_on_node(req, stages, plan, node)
            if best is None or g < best:
                best, where = g, node
        return PathAllocation(path, best or 0, where)

    def respond(self, fr: FlowRuntime) -> None:
        sim = self.sim
        if fr.state not in (FlowState.PENDING, FlowState.SUSPENDED):
            return
        r_min = sim.required_rate(fr)
        if r_min is None:
            return
        fic = sim.fic(fr)
        desired = apportion(r_min, fr.data.get("estimates") or [1] * len(fr.paths))
        plan = Plan(fic)
        fics: dict[str, float] = {}
        allocs = [self.evaluate_path(fr, p, desired[p], fic, plan, fics) for p in range(len(fr.paths))]
        grants = [a.granted for a in allocs]
        sim.trace("RATE_RESPONSE", fr.id, _fmt(grants))
        if sum(grants) < r_min:
            self._suspend(fr, None, None)
            return
        self._commit(fr, apportion(r_min, grants), plan, fic)

    def _commit(self, fr: FlowRuntime, final: list[int], plan: Plan, fic: float) -> None:
        sim = self.sim
        for p, path in enumerate(fr.paths):
            need = final[p]
            if not need:
                continue
            for l in path.links:
                ls = sim.links[l]
                short = need - ls.residual
                if short <= 0:
                    continue
                fics: dict[str, float] = {}
                view = self.link_view(l, fics)
                for fv in victim_order([v for v in view.flows if v.flow_id not in plan.victims]):
                    if short <= 0:
                        break
                    if fv.extra > 0:
                        take = min(fv.extra, short)
                        other = sim.flows[fv.flow_id]
                        rates = list(other.rates)
                        rates[fv.path] -= take
                        sim.set_rates(other, rates)
                        short -= take
                for fv in victim_order([v for v in view.flows if v.flow_id in plan.victims]):
                    if short <= 0:
                        break
                    other = sim.flows[fv.flow_id]
                    if other.state != FlowState.ACTIVE:
                        continue
                    short -= ls.allocated.get(fv.flow_id, 0)
                    self._suspend(other, fr, plan.victims[fv.flow_id][1])
                if short > 0:
                    raise AssertionError(f"commit for {fr.id} short by {short} bps on link {l}")

        extra = []
        others: dict[str, float] = {}
        for p, path in enumerate(fr.paths):
            add = None
            for l in path.links:
                ls = sim.links[l]
                res = ls.residual - final[p]
                wsum = fic
                for fid in ls.allocated:
                    if fid not in others:
                        others[fid] = sim.fic(sim.flows[fid])
                    if math.isfinite(others[fid]):
                        wsum += others[fid]
                share = int(max(res, 0) * fic / wsum) if wsum > 0 else 0
                add = share if add is None else min(add, share)
            extra.append(add or 0)
        rates = [f + e for f, e in zip(final, extra)]
        resumed = fr.data.get("admitted", False)
        fr.data["admitted"] = True
        fr.state = FlowState.ACTIVE
        self.suspended.discard(fr.id)
        self.suspensions.pop(fr.id, None)
        sim.trace("ALLOCATION_NOTIFY", fr.id, _fmt(final))
        sim.trace("RESUME" if resumed else "START", fr.id)
        sim.set_rates(fr, rates, final)

    def _suspend(self, fr: FlowRuntime, by: FlowRuntime | None, witness: int | None) -> None:
        sim = self.sim
        sim.stop(fr)
        fr.state = FlowState.SUSPENDED
        self.suspended.add(fr.id)
        if by is None:
            sim.trace("SUSPEND", fr.id, "at=source")
            return
        rec = SuspensionRecord(fr.id, witness if witness is not None else fr.flow.src, fr.flow.src,
                               fr.flow.deadline_ns, sim.fic(fr), fr.remaining_size, by.id)
        self.suspensions[fr.id] = rec
        self.victims_of.setdefault(by.id, []).append(fr.id)
        sim.trace("SUSPEND_NOTIFY", fr.id, f"witness={rec.witness} by={by.id}")
        sim.trace("SUSPEND", fr.id, f"by={by.id}")

    # -- completion / expiry ----------------------------------------------
    def on_release(self, fr: FlowRuntime, freed: list[int], reason: str) -> None:
        sim = self.sim
        now = sim.now
        self.suspended.discard(fr.id)
        self.suspensions.pop(fr.id, None)
        for vid in self.victims_of.pop(fr.id, []):
            v = sim.flows[vid]
            if v.state != FlowState.SUSPENDED or v.data.get("outstanding"):
                continue
            sim.trace("RECOVER_HINT", vid, f"from={self.suspensions[vid].witness}" if vid in self.suspensions else "")
            sim.schedule(now + sim.control_latency_ns(v.paths[0]), EventKind.CONTROL_MESSAGE, ("hint", vid))
        if reason == "complete":
            sim.trace("COMPLETE_NOTIFY", fr.id)
        notified = sim.notified_servers(fr)
        for sid in sorted(self.suspended):
            s = sim.flows[sid]
            if s.state != FlowState.SUSPENDED or s.data.get("outstanding") or s.data.get("scheduled"):
                continue
            if s.servers.isdisjoint(notified):
                continue
            t = max(now + sim.control_latency_ns(s.paths[0]),
                    s.data.get("last_try", -sim.retry_spacing_ns) + sim.retry_spacing_ns)
            s.data["scheduled"] = True
            sim.schedule(t, EventKind.CONTROL_MESSAGE, ("retry", sid))
        for l in sorted(set(freed)):
            self._spread(l)

    def _spread(self, link_id: int) -> None:
        sim = self.sim
        ls = sim.links[link_id]
        if ls.residual <= 0 or not ls.allocated:
            return
        fids = sorted(ls.allocated)
        runtimes = [sim.flows[f] for f in fids]
        fics = [sim.fic(fr) for fr in runtimes]
        caps = []
        for fr in runtimes:
            q = fr.link_path[link_id]
            caps.append(min((sim.links[m].residual for m in fr.paths[q].links if m != link_id), default=math.inf))
        inc = distribute_spare(ls.residual, fics, caps)
        for fr, add in zip(runtimes, inc):
            if add <= 0:
                continue
            q = fr.link_path[link_id]
            room = min(sim.links[m].residual for m in fr.paths[q].links)
            add = min(add, room)
            if add > 0:
                rates = list(fr.rates)
                rates[q] += add
                sim.set_rates(fr, rates)


def _fmt(values: Sequence[int]) -> str:
    return " ".join(f"p{p}={v}" for p, v in enumerate(values))
