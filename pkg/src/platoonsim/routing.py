"""Per-vertex travel-time tables with asynchronous updates and greedy routing.

T(i, d, j) estimates the remaining travel time from vertex i to
destination d when leaving through neighbor j.  Entries are initialized
to free-flow shortest-path times and then tracked toward realized times
with the update T <- T + chi * (U + min_z T(j, d, z) - T), where U is a
measured segment time reported when a vehicle reaches the next detector.
"""

from __future__ import annotations

import heapq
from typing import Callable, Iterable

from .dynamics import FuelModel, fuel_rate
from .network import NoRouteError, RoadNetwork

INF = float("inf")
AvailabilityFn = Callable[[int], bool]


class TravelTimeTable:
    """Estimates for every (vertex, destination, neighbor) triple."""

    def __init__(self, network: RoadNetwork, destinations: Iterable[int], chi: float = 1.0) -> None:
        if not 0.0 < chi <= 1.0:
            raise ValueError("chi must be in (0, 1]")
        self.chi = chi
        self.network = network
        self.destinations = sorted(set(destinations))
        # (i, d, j) -> seconds; populated by init_tables
        self.t: dict[tuple[int, int, int], float] = {}

    def get(self, i: int, d: int, j: int) -> float:
        if i == d:
            return 0.0
        return self.t[(i, d, j)]

    def min_downstream(self, j: int, d: int) -> float:
        """min_z T(j, d, z); zero at the destination itself."""
        if j == d:
            return 0.0
        vals = [self.t[(j, d, z)] for z, _ in self.network.out_edges[j]]
        return min(vals) if vals else INF

    def update(self, i: int, d: int, j: int, u_realized: float,
               downstream_min: float, chi: float | None = None) -> float:
        """Relaxation toward (U + downstream estimate); returns the new value."""
        key = (i, d, j)
        if key not in self.t:
            raise KeyError(f"no table entry for {key}")
        if u_realized < 0:
            raise ValueError("realized segment time must be nonnegative")
        rate = self.chi if chi is None else chi
        old = self.t[key]
        new = old + rate * (u_realized + downstream_min - old)
        self.t[key] = new
        return new

    def snapshot_rows(self) -> list[tuple[int, int, int, float]]:
        return sorted((i, d, j, v) for (i, d, j), v in self.t.items())


def _backward_dijkstra(network: RoadNetwork, dest: int, v0: float) -> dict[int, float]:
    """Free-flow time from every vertex to dest (inf if unreachable)."""
    dist = {v: INF for v in network.vertices}
    dist[dest] = 0.0
    heap = [(0.0, dest)]
    while heap:
        cost, v = heapq.heappop(heap)
        if cost > dist[v]:
            continue
        for frm, eid in network.in_edges[v]:
            alt = cost + network.edges[eid].length / v0
            if alt < dist[frm]:
                dist[frm] = alt
                heapq.heappush(heap, (alt, frm))
    return dist


def init_tables(network: RoadNetwork, v0: float, chi: float = 1.0,
                destinations: Iterable[int] | None = None) -> TravelTimeTable:
    """Tables seeded with free-flow times: len(i,j)/v0 + shortest time j->d."""
    dests = list(destinations) if destinations is not None else sorted(network.destinations)
    table = TravelTimeTable(network, dests, chi)
    for d in dests:
        back = _backward_dijkstra(network, d, v0)
        for i in network.vertices:
            for j, eid in network.out_edges[i]:
                hop = network.edges[eid].length / v0
                table.t[(i, d, j)] = hop + back[j] if back[j] < INF else INF
    return table


def best_neighbor(table: TravelTimeTable, i: int, d: int,
                  availability: AvailabilityFn | None = None) -> tuple[int, float]:
    """Neighbor with minimum T(i, d, j) over available edges; ties -> lowest id."""
    best: tuple[int, float] | None = None
    for j, eid in table.network.out_edges[i]:
        if availability is not None and not availability(eid):
            continue
        t = table.t[(i, d, j)]
        if t == INF:
            continue
        if best is None or t < best[1]:
            best = (j, t)
    if best is None:
        raise NoRouteError(f"no finite, available neighbor from {i} toward {d}")
    return best


def predict_path(table: TravelTimeTable, i: int, d: int,
                 availability: AvailabilityFn | None = None) -> list[int]:
    """Greedy best-neighbor chain from i to d; aborts on cycles or dead ends."""
    path = [i]
    seen = {i}
    limit = len(table.network.vertices)
    v = i
    for _ in range(limit):
        if v == d:
            return path
        j, _t = best_neighbor(table, v, d, availability)
        if j in seen:
            raise NoRouteError(f"greedy routing cycles at {j} en route {i}->{d}")
        path.append(j)
        seen.add(j)
        v = j
    if v == d:
        return path
    raise NoRouteError(f"greedy routing exceeded {limit} hops en route {i}->{d}")


def split_vertex(path_k: list[int], path_prev: list[int]) -> int:
    """Last vertex of the longest common prefix of two paths.

    Equals the shared start vertex when the first edges already differ,
    and the shared destination when the paths coincide.
    """
    if not path_k or not path_prev or path_k[0] != path_prev[0]:
        raise ValueError("paths must start at the same vertex")
    s = path_k[0]
    for a, b in zip(path_k[1:], path_prev[1:]):
        if a != b:
            break
        s = a
    return s


def cruising_distance_single(t_remaining: float, vbar: float, fm: FuelModel) -> float:
    """Fuel-proxy distance estimate r(vbar) * T / phi in meters."""
    if t_remaining < 0:
        raise ValueError("remaining time must be nonnegative")
    return fuel_rate(vbar, fm) * t_remaining / fm.phi


def cruising_distance_common(
    t_i: float,
    t_s: float,
    vbar_i: float,
    vbar_s: float,
    fm: FuelModel,
    counters: dict[str, int] | None = None,
) -> float:
    """Common-path cruising distance (r(v_i)*T_i - r(v_s)*T_s) / phi.

    Noisy tables can transiently produce a negative value; it is clamped
    to 0 and counted under 'negative_common_distance' when a counters
    dict is supplied.
    """
    if t_s < 0 or t_i < 0:
        raise ValueError("travel times must be nonnegative")
    d = (fuel_rate(vbar_i, fm) * t_i - fuel_rate(vbar_s, fm) * t_s) / fm.phi
    if d < 0:
        if counters is not None:
            counters["negative_common_distance"] = counters.get("negative_common_distance", 0) + 1
        return 0.0
    return d
