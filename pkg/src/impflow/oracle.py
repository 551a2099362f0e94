"""Exact solvers for small instances.

``solve_global`` picks the maximum-weight set of single-unit flows that can
all meet their deadlines, each routed whole on one of its candidate paths
(``routing="unsplittable"``) or spread over them (``routing="splittable"``).
With a common begin time and deadline the splittable optimum bounds any
schedule the simulator can produce, since averaging a schedule's per-link
rates over the flow lifetime yields a feasible fractional routing.

``solve_local_knapsack`` is the per-source relaxation where every path is a
knapsack whose size is the smallest residual capacity along it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .engine import SimulationTrace
from .flowmodel import Flow, ResponseUnit
from .topology import Path, Topology, build_bcube

MAX_FLOWS = 10
MAX_PATHS = 4


class OracleGuardError(ValueError):
    """Instance too large for exhaustive search."""


@dataclass
class TinyInstance:
    topology: Topology
    flows: list[Flow]
    delay_s: float = 0.0  # optional deadline slack reserved for propagation

    def __post_init__(self):
        for f in self.flows:
            if f.deadline - f.begin - self.delay_s <= 0:
                raise ValueError(f"flow {f.id}: no time left after delay")

    @property
    def demands(self) -> list[float]:
        return [f.size * 8 / (f.deadline - f.begin - self.delay_s) for f in self.flows]

    @property
    def weights(self) -> list[float]:
        return [f.total_importance for f in self.flows]

    def candidate_paths(self) -> list[list[Path]]:
        return [self.topology.disjoint_paths(f.src, f.dst) for f in self.flows]


@dataclass
class KnapsackSetInstance:
    capacities: list[float]  # W per knapsack
    values: list[float]
    weights: list[float]
    choices: list[list[int]]  # knapsacks each item may go into


@dataclass
class OracleSolution:
    selected: tuple[str, ...]
    assignment: dict = field(default_factory=dict)  # id -> path index, or id -> per-path rates
    objective: float = 0.0
    mask: int = 0


def _guard(n_items: int, n_choices: Sequence[int]) -> None:
    if n_items > MAX_FLOWS:
        raise OracleGuardError(f"{n_items} flows exceeds the exhaustive-search limit of {MAX_FLOWS}; "
                               "use a smaller instance")
    if n_choices and max(n_choices) > MAX_PATHS:
        raise OracleGuardError(f"{max(n_choices)} candidate paths exceeds the limit of {MAX_PATHS}; "
                               "use a smaller topology")


def _search(demands, weights, cand_edges: list[list[list[int]]], capacity):
    path_ptr, edge_ptr, edges = [0], [0], []
    for paths in cand_edges:
        for es in paths:
            edges.extend(es)
            edge_ptr.append(len(edges))
        path_ptr.append(len(edge_ptr) - 1)
    return kernels.unsplittable_search(
        np.asarray(demands, dtype=np.float64), np.asarray(weights, dtype=np.float64),
        np.asarray(path_ptr, dtype=np.int64), np.asarray(edge_ptr, dtype=np.int64),
        np.asarray(edges, dtype=np.int64), np.asarray(capacity, dtype=np.float64))


def solve_global(instance: TinyInstance, routing: str = "unsplittable") -> OracleSolution:
    flows = instance.flows
    cands = instance.candidate_paths()
    _guard(len(flows), [len(c) for c in cands])
    demands, weights = instance.demands, instance.weights
    capacity = [l.capacity for l in instance.topology.links]
    if routing == "unsplittable":
        mask, choice, value = _search(demands, weights, [[list(p.links) for p in c] for c in cands], capacity)
        selected = tuple(f.id for i, f in enumerate(flows) if mask >> i & 1)
        assignment = {flows[i].id: choice[i] for i in range(len(flows)) if mask >> i & 1}
        return OracleSolution(selected, assignment, float(value), int(mask))
    if routing == "splittable":
        return _solve_splittable(flows, cands, demands, weights, capacity)
    raise ValueError(f"routing must be 'unsplittable' or 'splittable', got {routing!r}")


def _lp_route(members, cands, demands, capacity):
    """Per-path rates routing every member's demand, or None."""
    var = [(i, q) for i in members for q in range(len(cands[i]))]
    if not var:
        return {}
    scale = max(capacity)
    used_links = sorted({l for i, q in var for l in cands[i][q].links})
    row = {l: r for r, l in enumerate(used_links)}
    a_ub = np.zeros((len(used_links), len(var)))
    for v, (i, q) in enumerate(var):
        for l in cands[i][q].links:
            a_ub[row[l], v] = 1.0
    b_ub = np.array([capacity[l] for l in used_links]) / scale
    a_eq = np.zeros((len(members), len(var)))
    for v, (i, q) in enumerate(var):
        a_eq[members.index(i), v] = 1.0
    b_eq = np.array([demands[i] for i in members]) / scale
    res = linprog(np.zeros(len(var)), A_ub=a_ub, b_ub=b_ub * (1 + 1e-9), A_eq=a_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    out: dict[int, list[float]] = {i: [0.0] * len(cands[i]) for i in members}
    for v, (i, q) in enumerate(var):
        out[i][q] = float(res.x[v]) * scale
    return out


def _solve_splittable(flows, cands, demands, weights, capacity) -> OracleSolution:
    n = len(flows)
    wmask = [0.0] * (1 << n)
    for mask in range(1, 1 << n):
        low = mask & -mask
        wmask[mask] = wmask[mask ^ low] + weights[low.bit_length() - 1]
    infeasible: list[int] = []
    for mask in sorted(range(1, 1 << n), key=lambda m: (-wmask[m], m)):
        if wmask[mask] <= 0:
            break
        if any(bad & mask == bad for bad in infeasible):
            continue
        members = [i for i in range(n) if mask >> i & 1]
        routed = _lp_route(members, cands, demands, capacity)
        if routed is None:
            infeasible.append(mask)
            continue
        selected = tuple(flows[i].id for i in members)
        return OracleSolution(selected, {flows[i].id: routed[i] for i in members}, wmask[mask], mask)
    return OracleSolution((), {}, 0.0, 0)


def solve_local_knapsack(instance: KnapsackSetInstance) -> OracleSolution:
    n = len(instance.values)
    _guard(n, [len(c) for c in instance.choices])
    mask, choice, value = _search(instance.weights, instance.values,
                                  [[[k] for k in c] for c in instance.choices], instance.capacities)
    selected = tuple(str(i) for i in range(n) if mask >> i & 1)
    assignment = {str(i): instance.choices[i][choice[i]] for i in range(n) if mask >> i & 1}
    return OracleSolution(selected, assignment, float(value), int(mask))


def knapsack_from_instance(instance: TinyInstance, residual: Sequence[float] | None = None) -> KnapsackSetInstance:
    """Each distinct candidate path becomes a knapsack sized by its tightest link."""
    residual = [l.capacity for l in instance.topology.links] if residual is None else list(residual)
    keys: dict[tuple, int] = {}
    caps, choices = [], []
    for paths in instance.candidate_paths():
        row = []
        for p in paths:
            if p.links not in keys:
                keys[p.links] = len(caps)
                caps.append(min(residual[l] for l in p.links))
            row.append(keys[p.links])
        choices.append(row)
    return KnapsackSetInstance(caps, instance.weights, instance.demands, choices)


def feasibility(flow: Flow, trace: SimulationTrace) -> bool:
    """True iff the flow was fully delivered no later than its deadline."""
    t = trace.completion_times().get(flow.id)
    return t is not None and t <= flow.deadline_ns


def random_tiny_instance(seed: int, n_flows: int | None = None, capacity: int = 50_000_000,
                         deadline_s: float = 0.010, n: int = 2, k: int = 1,
                         size_kb: tuple[int, int] = (10, 60)) -> TinyInstance:
    """Single-unit flows with a common begin time and deadline on BCube(n, k)."""
    rng = np.random.default_rng(seed)
    topo = build_bcube(n, k, capacity)
    m = int(rng.integers(2, 9)) if n_flows is None else n_flows
    servers = topo.num_servers
    flows = []
    for i in range(m):
        src = int(rng.integers(servers))
        dst = int(rng.integers(servers - 1))
        dst += dst >= src
        size = int(rng.integers(size_kb[0], size_kb[1] + 1)) * 1000
        weight = float(rng.integers(1, 11))
        flows.append(Flow(f"t{i}", src, dst, 0, int(round(deadline_s * 1e9)),
                          (ResponseUnit(weight, size, f"t{i}"),)))
    return TinyInstance(topo, flows)
