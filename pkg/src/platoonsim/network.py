"""Directed road-network model with zone geometry and benchmark topologies.

Each edge is split into a cruising zone (d2, traversed first) and a
coordinating zone (d1, the final stretch before the head vertex, where
the junction controller assigns reference speeds).  Availability is a
step timeline rather than a mutable flag so replays are deterministic.
"""

from __future__ import annotations

import bisect
import heapq
from dataclasses import dataclass, field


class NoRouteError(RuntimeError):
    """No path exists to the requested destination over available edges."""


@dataclass(frozen=True)
class Vertex:
    id: int
    is_junction: bool = False


@dataclass
class Edge:
    id: int
    frm: int
    to: int
    length: float
    d1: float
    lanes: int = 1
    # availability step timeline: sorted (t, available) events; empty = always on
    _timeline: list[tuple[float, bool]] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if self.length <= 0 or self.d1 <= 0:
            raise ValueError(f"edge {self.id}: length and d1 must be positive")
        if self.d1 >= self.d2:
            raise ValueError(
                f"edge {self.id}: coordinating zone d1={self.d1} must be "
                f"shorter than cruising zone d2={self.d2}"
            )
        if self.lanes < 1:
            raise ValueError(f"edge {self.id}: lanes must be >= 1")
        if self.frm == self.to:
            raise ValueError(f"edge {self.id}: self-loops are not allowed")

    @property
    def d2(self) -> float:
        return self.length - self.d1

    def is_available(self, t: float) -> bool:
        """Availability at time t per the step timeline (default True)."""
        idx = bisect.bisect_right(self._timeline, (t, True)) - 1
        if idx < 0:
            return True
        return self._timeline[idx][1]


class RoadNetwork:
    """Immutable after construction except the append-only availability timelines."""

    def __init__(
        self,
        edges: list[Edge],
        origins: set[int],
        destinations: set[int],
    ) -> None:
        self.edges: dict[int, Edge] = {e.id: e for e in edges}
        if len(self.edges) != len(edges):
            raise ValueError("duplicate edge ids")
        vertex_ids = sorted({e.frm for e in edges} | {e.to for e in edges})
        incident: dict[int, int] = {v: 0 for v in vertex_ids}
        for e in edges:
            incident[e.frm] += 1
            incident[e.to] += 1
        self.vertices: dict[int, Vertex] = {
            v: Vertex(v, is_junction=incident[v] > 2) for v in vertex_ids
        }
        self.origins = set(origins)
        self.destinations = set(destinations)
        for v in self.origins | self.destinations:
            if v not in self.vertices:
                raise ValueError(f"origin/destination vertex {v} not in network")
        # adjacency: vertex -> [(neighbor, edge_id)] sorted by neighbor id
        self.out_edges: dict[int, list[tuple[int, int]]] = {v: [] for v in vertex_ids}
        self.in_edges: dict[int, list[tuple[int, int]]] = {v: [] for v in vertex_ids}
        for e in edges:
            self.out_edges[e.frm].append((e.to, e.id))
            self.in_edges[e.to].append((e.frm, e.id))
        for v in vertex_ids:
            self.out_edges[v].sort()
            self.in_edges[v].sort()
        for o in self.origins:
            for d in self.destinations:
                shortest_path(self, o, d, self.free_flow_weights(1.0))

    def edge_between(self, frm: int, to: int) -> Edge:
        for nbr, eid in self.out_edges[frm]:
            if nbr == to:
                return self.edges[eid]
        raise KeyError(f"no edge {frm}->{to}")

    def free_flow_weights(self, v0: float) -> dict[int, float]:
        return {eid: e.length / v0 for eid, e in self.edges.items()}


def set_edge_availability(
    network: RoadNetwork, edge_id: int, available: bool, t: float
) -> RoadNetwork:
    """Append an availability step at time t; queries at t' >= t see it."""
    if edge_id not in network.edges:
        raise KeyError(f"unknown edge {edge_id}")
    timeline = network.edges[edge_id]._timeline
    bisect.insort(timeline, (t, available))
    return network


def shortest_path(
    network: RoadNetwork,
    origin: int,
    destination: int,
    edge_weights: dict[int, float],
    t: float | None = None,
) -> tuple[list[int], float]:
    """Minimum-weight path as (vertex list, total weight).

    Ties break toward the lexicographically smallest vertex sequence
    (equivalently: lowest next-vertex id at each divergence).  When t is
    given, unavailable edges at time t are excluded.  Raises NoRouteError
    if the destination cannot be reached.
    """
    if origin not in network.vertices or destination not in network.vertices:
        raise KeyError("origin or destination not in network")
    # heap of (cost, path); tuple order makes ties resolve lexicographically
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (origin,))]
    done: set[int] = set()
    while heap:
        cost, path = heapq.heappop(heap)
        v = path[-1]
        if v in done:
            continue
        done.add(v)
        if v == destination:
            return list(path), cost
        for nbr, eid in network.out_edges[v]:
            if nbr in done:
                continue
            if t is not None and not network.edges[eid].is_available(t):
                continue
            heapq.heappush(heap, (cost + edge_weights[eid], path + (nbr,)))
    raise NoRouteError(f"no path {origin} -> {destination}")


# Nguyen-Dupuis arc list; edge ids follow list order (1-based), so the
# resilience scenario's "edge 18" is the (12, 8) arc.
NGUYEN_DUPUIS_ARCS: tuple[tuple[int, int], ...] = (
    (1, 5), (1, 12), (4, 5), (4, 9), (5, 6), (5, 9), (6, 7), (6, 10),
    (7, 8), (7, 11), (8, 2), (9, 10), (9, 13), (10, 11), (11, 2), (11, 3),
    (12, 6), (12, 8), (13, 3),
)


def build_nguyen_dupuis(
    edge_length: float = 2000.0, d1: float = 500.0, lanes: int = 1
) -> RoadNetwork:
    """The 13-vertex / 19-edge benchmark; origins {1, 4}, destinations {2, 3}."""
    if not 0 < d1 < edge_length:
        raise ValueError("require 0 < d1 < edge_length")
    edges = [
        Edge(i + 1, frm, to, edge_length, d1, lanes)
        for i, (frm, to) in enumerate(NGUYEN_DUPUIS_ARCS)
    ]
    return RoadNetwork(edges, origins={1, 4}, destinations={2, 3})


def build_cascade(
    n_junctions: int,
    mainline_d2: float,
    d1: float,
    lanes: int = 1,
    ramp_length: float | None = None,
) -> RoadNetwork:
    """Mainline of n junctions, one on-ramp per junction, one terminal sink.

    Vertices: junctions 1..N, destination N+1, mainline entry N+2, ramps
    N+3..N+2+N.  Mainline edges (entry->J1, J_i->J_{i+1}, J_N->dest) get
    ids 1..N+1 in order, ramp edges follow.  Inter-junction and terminal
    edges have length d1 + mainline_d2; approach edges (entry and ramps)
    default to 2.5 * d1.
    """
    if n_junctions < 1:
        raise ValueError("need at least one junction")
    if d1 <= 0 or mainline_d2 <= d1:
        raise ValueError("require 0 < d1 < mainline_d2")
    if ramp_length is None:
        ramp_length = 2.5 * d1
    if ramp_length <= 2 * d1:
        raise ValueError("ramp_length must exceed 2*d1 so that d1 < d2 holds")
    dest = n_junctions + 1
    entry = n_junctions + 2
    edges = []
    eid = 1
    main_len = d1 + mainline_d2
    edges.append(Edge(eid, entry, 1, ramp_length, d1, lanes))
    eid += 1
    for j in range(1, n_junctions):
        edges.append(Edge(eid, j, j + 1, main_len, d1, lanes))
        eid += 1
    edges.append(Edge(eid, n_junctions, dest, main_len, d1, lanes))
    eid += 1
    origins = {entry}
    for j in range(1, n_junctions + 1):
        ramp = n_junctions + 2 + j
        edges.append(Edge(eid, ramp, j, ramp_length, d1, lanes))
        eid += 1
        origins.add(ramp)
    return RoadNetwork(edges, origins=origins, destinations={dest})


def build_custom(
    arcs: list[tuple[int, int, float, float]],
    origins: set[int],
    destinations: set[int],
    lanes: int = 1,
) -> RoadNetwork:
    """Network from an explicit arc list [(from, to, length_m, d1_m), ...]."""
    edges = [
        Edge(i + 1, frm, to, length, d1, lanes)
        for i, (frm, to, length, d1) in enumerate(arcs)
    ]
    return RoadNetwork(edges, origins=set(origins), destinations=set(destinations))
