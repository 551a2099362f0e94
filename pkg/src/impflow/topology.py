"""BCube server-centric topologies, neighbor sets and link-disjoint paths.

A BCube(n, k) has ``n**(k+1)`` servers addressed by ``k+1`` base-``n`` digits
and ``(k+1) * n**k`` switches.  The level-``l`` switch that serves server
``a`` connects every server agreeing with ``a`` on all digits except digit
``l``.  :func:`build_bcube_mixed` allows a different port count per level
(e.g. the 2x4 toy network used in worked examples).

Node numbering: servers first, in big-endian coordinate order; then switches
ordered by ``(level, index)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

SERVER = "server"
SWITCH = "switch"

DEFAULT_CAPACITY = 1_000_000_000  # bits/s
DEFAULT_RTT_RANGE = (35e-6, 100e-6)  # seconds, shortest vs longest path


@dataclass(frozen=True)
class NodeId:
    kind: str
    coords: tuple[int, ...]
    level: int | None = None  # switches only

    def __str__(self) -> str:
        digits = "".join(str(c) for c in self.coords)
        if self.kind == SERVER:
            return f"s{digits}"
        return f"w{self.level}.{digits}"


@dataclass(frozen=True)
class Link:
    src: int
    dst: int
    capacity: int
    propagation_delay: float  # seconds


@dataclass(frozen=True)
class Path:
    """Alternating server/switch node sequence plus the directed link ids."""

    nodes: tuple[int, ...]
    links: tuple[int, ...]

    @property
    def hop_count(self) -> int:
        return len(self.links) // 2

    @property
    def servers(self) -> tuple[int, ...]:
        return self.nodes[::2]

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True, eq=False)
class Topology:
    radices: tuple[int, ...]  # port count per level, level 0 first
    nodes: tuple[NodeId, ...]
    links: tuple[Link, ...]
    host_delay: float = 0.0  # fixed one-way end-host share of the RTT
    _adj: dict = field(default_factory=dict, repr=False)
    _link_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        adj: dict[int, list[int]] = {i: [] for i in range(len(self.nodes))}
        index = {}
        for lid, link in enumerate(self.links):
            adj[link.src].append(link.dst)
            index[(link.src, link.dst)] = lid
        for v in adj.values():
            v.sort()
        self._adj.update({k: tuple(v) for k, v in adj.items()})
        self._link_index.update(index)

    # -- parameters -----------------------------------------------------
    @property
    def levels(self) -> int:
        return len(self.radices)

    @property
    def n(self) -> int:
        return self.radices[0]

    @property
    def k(self) -> int:
        return len(self.radices) - 1

    @property
    def num_servers(self) -> int:
        out = 1
        for r in self.radices:
            out *= r
        return out

    @property
    def servers(self) -> range:
        return range(self.num_servers)

    @property
    def switches(self) -> range:
        return range(self.num_servers, len(self.nodes))

    def is_server(self, node: int) -> bool:
        return 0 <= node < self.num_servers

    def adjacent(self, node: int) -> tuple[int, ...]:
        return self._adj[node]

    def link_id(self, u: int, v: int) -> int:
        return self._link_index[(u, v)]

    def degree(self, node: int) -> int:
        return len(self._adj[node])

    # -- addressing -----------------------------------------------------
    def coords(self, server: int) -> tuple[int, ...]:
        """Digits indexed by level (``coords[0]`` is the level-0 digit)."""
        return self.nodes[server].coords

    def server_at(self, coords: Sequence[int]) -> int:
        idx = 0
        for level in range(self.levels - 1, -1, -1):
            idx = idx * self.radices[level] + coords[level]
        return idx

    def switch_between(self, a: int, b: int) -> int:
        """The switch joining two servers that differ in exactly one digit."""
        ca, cb = self.coords(a), self.coords(b)
        diff = [l for l in range(self.levels) if ca[l] != cb[l]]
        if len(diff) != 1:
            raise ValueError(f"servers {a} and {b} do not share a switch")
        return self._switch_for(ca, diff[0])

    def _switch_for(self, coords: Sequence[int], level: int) -> int:
        base = self.num_servers
        per_level = [self.num_servers // r for r in self.radices]
        offset = base + sum(per_level[:level])
        rest = [c for l, c in enumerate(coords) if l != level]
        rest_radix = [r for l, r in enumerate(self.radices) if l != level]
        idx = 0
        for l in range(len(rest) - 1, -1, -1):
            idx = idx * rest_radix[l] + rest[l]
        return offset + idx

    # -- queries --------------------------------------------------------
    def neighbors(self, server: int) -> frozenset[int]:
        return neighbors(self, server)

    def disjoint_paths(self, src: int, dst: int) -> list[Path]:
        return disjoint_paths(self, src, dst)

    def path_from_servers(self, servers: Sequence[int]) -> Path:
        nodes = [servers[0]]
        for a, b in zip(servers, servers[1:]):
            nodes.append(self.switch_between(a, b))
            nodes.append(b)
        links = tuple(self.link_id(u, v) for u, v in zip(nodes, nodes[1:]))
        return Path(tuple(nodes), links)

    def path_delay(self, path: Path) -> float:
        """One-way propagation delay of a path, seconds."""
        return self.host_delay + sum(self.links[l].propagation_delay for l in path.links)

    def with_capacities(self, overrides: Mapping[tuple[int, int], int]) -> "Topology":
        """Copy with per-directed-link capacity overrides keyed by (u, v)."""
        links = list(self.links)
        for (u, v), cap in overrides.items():
            lid = self.link_id(u, v)
            old = links[lid]
            if cap <= 0:
                raise ValueError("capacity must be positive")
            links[lid] = Link(old.src, old.dst, int(cap), old.propagation_delay)
        return Topology(self.radices, self.nodes, tuple(links), self.host_delay)

    def dump(self) -> str:
        lines = []
        for i, node in enumerate(self.nodes):
            nbrs = " ".join(str(j) for j in self._adj[i])
            lines.append(f"{i} {node.kind} {nbrs}".rstrip())
        return "\n".join(lines) + "\n"


def build_bcube(n: int, k: int, capacity: int = DEFAULT_CAPACITY,
                rtt_range: tuple[float, float] = DEFAULT_RTT_RANGE) -> Topology:
    """BCube(n, k): ``n**(k+1)`` servers each attached to ``k+1`` switches."""
    if not isinstance(n, int) or not isinstance(k, int) or n < 2 or k < 0:
        raise ValueError(f"invalid BCube parameters n={n!r}, k={k!r} (need n >= 2, k >= 0)")
    return build_bcube_mixed((n,) * (k + 1), capacity, rtt_range)


def build_bcube_mixed(radices: Sequence[int], capacity: int = DEFAULT_CAPACITY,
                      rtt_range: tuple[float, float] = DEFAULT_RTT_RANGE) -> Topology:
    radices = tuple(int(r) for r in radices)
    if not radices or any(r < 2 for r in radices):
        raise ValueError(f"every level needs at least 2 ports, got {radices}")
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    levels = len(radices)
    nodes: list[NodeId] = []
    # big-endian: the highest level digit varies slowest
    for digits in itertools.product(*[range(r) for r in reversed(radices)]):
        nodes.append(NodeId(SERVER, tuple(reversed(digits))))
    for level in range(levels):
        rest = [r for l, r in enumerate(radices) if l != level]
        for digits in itertools.product(*[range(r) for r in reversed(rest)]):
            nodes.append(NodeId(SWITCH, tuple(reversed(digits)), level))

    per_link, host = _delay_model(levels, rtt_range)
    proto = Topology(radices, tuple(nodes), ())
    links = []
    for s in range(proto.num_servers):
        c = proto.coords(s)
        for level in range(levels):
            w = proto._switch_for(c, level)
            links.append(Link(s, w, int(capacity), per_link))
            links.append(Link(w, s, int(capacity), per_link))
    links.sort(key=lambda l: (l.src, l.dst))
    return Topology(radices, tuple(nodes), tuple(links), host)


def _delay_model(levels: int, rtt_range: tuple[float, float]) -> tuple[float, float]:
    """Per-link and per-path fixed one-way delays so that the RTT spans
    ``rtt_range`` from 1-hop paths up to the longest (detour) paths."""
    lo, hi = rtt_range
    if lo < 0 or hi < lo:
        raise ValueError("rtt range must satisfy 0 <= lo <= hi")
    longest = levels + 1 if levels > 1 else 1
    if longest == 1:
        return lo / 4, 0.0
    slope = (hi - lo) / (longest - 1)  # RTT added per server hop
    per_link = slope / 4  # two links per hop, two directions per RTT
    host = (lo - slope) / 2
    if host < 0:
        per_link, host = lo / 4, 0.0
    return per_link, host


def neighbors(t: Topology, s: int) -> frozenset[int]:
    """Servers sharing at least one switch with ``s``."""
    _check_server(t, s)
    out = set()
    for w in t.adjacent(s):
        out.update(t.adjacent(w))
    out.discard(s)
    return frozenset(out)


def disjoint_paths(t: Topology, src: int, dst: int) -> list[Path]:
    """``k+1`` link-disjoint paths by digit correction.

    For each level ``i`` (from the top down) the path corrects digits
    starting at level ``i`` and cycling downwards.  When ``src`` and ``dst``
    already agree at level ``i`` the path first detours through the level-``i``
    neighbor with the next digit value, yielding a second-shortest path.
    Result order: hop count, then node sequence.
    """
    _check_server(t, src)
    _check_server(t, dst)
    if src == dst:
        raise ValueError("source and destination must differ")
    return list(_disjoint_paths_cached(t, src, dst))


def _check_server(t: Topology, s: int) -> None:
    if not isinstance(s, int) or not 0 <= s < len(t.nodes):
        raise KeyError(f"unknown node {s!r}")
    if not t.is_server(s):
        raise ValueError(f"node {s} is a switch, not a server")


@lru_cache(maxsize=65536)
def _disjoint_paths_cached(t: Topology, src: int, dst: int) -> tuple[Path, ...]:
    a = list(t.coords(src))
    b = list(t.coords(dst))
    levels = t.levels
    paths = []
    for i in range(levels - 1, -1, -1):
        if a[i] != b[i]:
            seq = _dc_route(a, b, i, levels)
        else:
            c = list(a)
            c[i] = (a[i] + 1) % t.radices[i]
            seq = [tuple(a)] + _dc_route(c, b, (i - 1) % levels, levels)
        paths.append(t.path_from_servers([t.server_at(x) for x in seq]))
    paths.sort(key=lambda p: (p.hop_count, p.nodes))
    return tuple(paths)


def _dc_route(a: Sequence[int], b: Sequence[int], start: int, levels: int) -> list[tuple[int, ...]]:
    cur = list(a)
    seq = [tuple(cur)]
    for step in range(levels):
        j = (start - step) % levels
        if cur[j] != b[j]:
            cur[j] = b[j]
            seq.append(tuple(cur))
    return seq


def servers_on(paths: Iterable[Path]) -> set[int]:
    out: set[int] = set()
    for p in paths:
        out.update(p.servers)
    return out
