"""Deterministic discrete-event mesoscopic simulator.

Vehicle lifecycle on each edge: enter at the tail vertex, cruise d2 at a
speed fixed from the edge's effective density at entry, hit the detector
at the start of the coordinating zone d1 (where the head vertex's
controller assigns a time reduction and the next edge), then traverse d1
at the reference speed and pass the junction.  Merges complete at the
junction: a follower assigned u = h passes exactly when its leader did
and inherits the leader's cruise speed downstream, paying (1 - eta) fuel
on cruising zones while it remains a follower.

Events are dispatched in strictly increasing (time, sequence) order;
identical (config, seed) runs are bit-identical.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from .arrivals import HeadwayHistory, PoissonSource, make_rng, sample_interarrival
from .config import ScenarioConfig
from .dynamics import (
    effective_density,
    equilibrium_speed,
    reference_speed,
    trip_segment_cost,
)
from .metrics import MetricsReport, TripRow
from .network import NoRouteError, set_edge_availability, shortest_path
from .routing import (
    best_neighbor,
    cruising_distance_common,
    cruising_distance_single,
    init_tables,
    predict_path,
    split_vertex,
)
from .threshold_policy import PolicyParams, evaluate_policy, solve_threshold_constrained
from .value_approx import PolyCostModel

CAV = "cav"
BACKGROUND = "background"

ALONE = "alone"
LEADER = "leader"
FOLLOWER = "follower"

# reference speeds may not exceed this multiple of v0 (acceleration authority)
VREF_CAP_FACTOR = 1.5


def predicted_headway(x: float, u_prev: float, counters: dict | None = None) -> float:
    """h = x + u_prev, clamped at 0 when the leader decelerated past us."""
    if x <= 0:
        raise ValueError("inter-arrival time must be positive")
    h = x + u_prev
    if h < 0:
        if counters is not None:
            counters["headway_clamped"] = counters.get("headway_clamped", 0) + 1
        return 0.0
    return h


@dataclass
class EdgeTrace:
    edge_id: int
    t_entry: float
    v_cruise: float
    t_zone: float | None = None
    v_coord: float | None = None
    t_exit: float | None = None
    follower: bool = False
    cost: float = 0.0
    fuel: float = 0.0


class Vehicle:
    __slots__ = (
        "id", "vclass", "origin", "destination", "spawn_time", "current_edge",
        "edge_entry_time", "zone_time", "v_cruise", "v_coord", "committed_next",
        "u_realized", "merge_intent", "merge_leader", "ahead", "role",
        "cost_usd", "fuel_l", "traces", "route", "merges", "merge_infeasible",
        "arrived", "arrive_time", "last_detector_vertex", "last_detector_time",
        "va_pending",
    )

    def __init__(self, vid: int, vclass: str, origin: int, destination: int,
                 spawn_time: float):
        self.id = vid
        self.vclass = vclass
        self.origin = origin
        self.destination = destination
        self.spawn_time = spawn_time
        self.current_edge = None
        self.edge_entry_time = 0.0
        self.zone_time = 0.0
        self.v_cruise = 0.0
        self.v_coord = 0.0
        self.committed_next: int | None = None
        self.u_realized = 0.0
        self.merge_intent = False
        self.merge_leader: "Vehicle | None" = None
        self.ahead: "Vehicle | None" = None
        self.role = ALONE
        self.cost_usd = 0.0
        self.fuel_l = 0.0
        self.traces: list[EdgeTrace] = []
        self.route: list[int] = []
        self.merges = 0
        self.merge_infeasible = 0
        self.arrived = False
        self.arrive_time = math.nan
        self.last_detector_vertex: int | None = None
        self.last_detector_time = 0.0
        # value-approx feedback: (controller vertex, h, merged, cost snapshot)
        self.va_pending: tuple[int, float, bool, float] | None = None


class JunctionController:
    __slots__ = ("vertex", "history", "poly", "last")

    def __init__(self, vertex: int, psi: float, m_steps: int,
                 poly: PolyCostModel | None = None):
        self.vertex = vertex
        self.history = HeadwayHistory(psi, m_steps)
        self.poly = poly
        # last CAV arrival: (vehicle, detector time, u_realized, committed edge id)
        self.last: tuple[Vehicle, float, float, int | None] | None = None


class Simulation:
    def __init__(self, cfg: ScenarioConfig, seed: int | None = None,
                 policy: str | None = None):
        self.cfg = cfg
        self.seed = cfg.sim.seed if seed is None else seed
        self.policy = cfg.policy.type if policy is None else policy
        self.network = cfg.build_network()
        for ev in cfg.sim.availability:
            if ev.t_off_s < ev.t_on_s:
                set_edge_availability(self.network, ev.edge, False, ev.t_off_s)
                set_edge_availability(self.network, ev.edge, True, ev.t_on_s)

        self.w = cfg.cost_weights()
        self.fm = cfg.fuel_model()
        self.pp = cfg.platoon_params()
        self.gm = cfg.greenshield_model()
        self.v0 = cfg.idm.v0
        self.v_floor = cfg.sim.v_floor_mps
        self.gamma = cfg.policy.gamma
        self.free_weights = self.network.free_flow_weights(self.v0)

        self.table = None
        if self.policy == "threshold-network":
            self.table = init_tables(self.network, self.v0, cfg.policy.chi)

        self.controllers: dict[int, JunctionController] = {}
        for vtx in sorted(self.network.vertices):
            if self.network.out_edges[vtx]:
                poly = None
                if self.policy == "value-approx":
                    va = cfg.policy.value_approx
                    poly = PolyCostModel(va.degree_n, va.window_l, va.window_y)
                self.controllers[vtx] = JunctionController(
                    vtx, cfg.policy.psi, cfg.policy.M, poly)

        self.occupancy = {eid: {ALONE: 0, LEADER: 0, FOLLOWER: 0, BACKGROUND: 0}
                          for eid in self.network.edges}
        self.counters: dict[str, int] = {}
        self.merge_pass_deltas: list[float] = []
        self.policy_rows: list[tuple[float, int, float, float, float]] = []
        self.trips: list[TripRow] = []
        self.all_traces: list[tuple[str, list[EdgeTrace]]] = []
        self.threshold_cache: dict[tuple[float, float, float], tuple[float, float, str]] = {}
        self._warm_start: dict[float, tuple[str, float, float]] = {}
        self.static_route_cache: dict[tuple[int, int], list[int]] = {}

        self.heap: list = []
        self.seq = 0
        self.now = 0.0
        self.n_spawned = {CAV: 0, BACKGROUND: 0}
        self.n_arrived = 0
        self.sources: list[PoissonSource] = []
        self.source_class: list[str] = []
        self.rngs = []
        self.spawn_remaining: list[int] = []
        self._build_sources()

    # ------------------------------------------------------------------
    # setup

    def _build_sources(self) -> None:
        zeta = self.cfg.demand.penetration
        n_od = len(self.cfg.demand.od)
        for idx, od in enumerate(self.cfg.demand.od):
            if od.n_cavs > 0:
                self.sources.append(PoissonSource(
                    od.rate_veh_per_hr / 3600.0, od.origin, od.destination,
                    od.n_cavs, stream=idx))
                self.source_class.append(CAV)
                self.spawn_remaining.append(od.n_cavs)
        for idx, od in enumerate(self.cfg.demand.od):
            n_bg = int(round(od.n_cavs * (1.0 - zeta) / zeta))
            if n_bg > 0:
                self.sources.append(PoissonSource(
                    od.rate_veh_per_hr / 3600.0 * (1.0 - zeta) / zeta,
                    od.origin, od.destination, n_bg, stream=n_od + idx))
                self.source_class.append(BACKGROUND)
                self.spawn_remaining.append(n_bg)
        self.rngs = [make_rng(self.seed, s.stream) for s in self.sources]

    def _push(self, t: float, kind: str, payload) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, self.seq, kind, payload))

    # ------------------------------------------------------------------
    # helpers

    def _count(self, name: str, inc: int = 1) -> None:
        self.counters[name] = self.counters.get(name, 0) + inc

    def _available(self, eid: int, t: float) -> bool:
        return self.network.edges[eid].is_available(t)

    def _static_route(self, frm: int, dest: int, t: float) -> list[int]:
        """Free-flow shortest path over currently available edges (cached)."""
        key = (frm, dest)
        path = self.static_route_cache.get(key)
        if path is not None and self._path_available(path, t):
            return path
        path, _ = shortest_path(self.network, frm, dest, self.free_weights, t=t)
        self.static_route_cache[key] = path
        return path

    def _path_available(self, path: list[int], t: float) -> bool:
        for a, b in zip(path, path[1:]):
            if not self.network.edge_between(a, b).is_available(t):
                return False
        return True

    def _density_excluding(self, edge, vehicle: Vehicle | None) -> float:
        occ = self.occupancy[edge.id]
        n_alone, n_lead = occ[ALONE], occ[LEADER]
        n_foll, n_bg = occ[FOLLOWER], occ[BACKGROUND]
        if vehicle is not None and vehicle.current_edge is edge:
            if vehicle.vclass == BACKGROUND:
                n_bg -= 1
            elif vehicle.role == ALONE:
                n_alone -= 1
            elif vehicle.role == LEADER:
                n_lead -= 1
            else:
                n_foll -= 1
        return effective_density(n_alone, n_lead, n_foll, n_bg,
                                 edge.length, edge.lanes, self.pp)

    def _equilibrium_here(self, edge, vehicle: Vehicle) -> float:
        return equilibrium_speed(self._density_excluding(edge, vehicle), self.gm)

    def _solve_cached(self, lam_hat: float, d_hat: float, d1: float) -> tuple[float, float, str]:
        lam_q = max(round(lam_hat / 1e-4) * 1e-4, 1e-4)
        d_q = round(d_hat / 100.0) * 100.0
        if d_q <= 0.0:
            return (-d1 / self.v0 - 1.0, 0.0, "no_merge")
        key = (lam_q, d_q, d1)
        hit = self.threshold_cache.get(key)
        if hit is None:
            p = PolicyParams(w=self.w, fm=self.fm, d1=d1, d2=d_q, v0=self.v0,
                             gamma=self.gamma, lam=lam_q)
            warm = self._warm_start.get(d1)
            # 1e-6 on the equation residuals is far below any behavioral
            # sensitivity of (theta, c); the reference-tolerance solves are
            # exercised by the policy test suite, not the event loop
            hit = solve_threshold_constrained(
                p, tol=1e-6,
                x0=(warm[1], warm[2]) if warm and warm[0] == "exact" else None,
                clamped_theta_warm=warm[1] if warm and warm[0] == "clamped_c" else None,
                prefer_clamped=bool(warm and warm[0] == "clamped_c"),
            )
            self._warm_start[d1] = (hit[2], hit[0], hit[1])
            if hit[2] == "clamped_c":
                self._count("policy_saturated")
            elif hit[2] == "no_merge":
                self._count("policy_no_merge")
            self.threshold_cache[key] = hit
        return hit

    def _merge_feasible(self, h: float, edge, cap: float) -> bool:
        if h > 0.9 * edge.d1 / self.v0:
            return False
        return reference_speed(h, edge.d1, self.v0) <= cap + 1e-12

    # ------------------------------------------------------------------
    # run loop

    def run(self) -> MetricsReport:
        for idx, src in enumerate(self.sources):
            self._push(sample_interarrival(src, self.rngs[idx]), "spawn", idx)
        max_time = self.cfg.sim.max_time_s
        truncated = False
        while self.heap:
            t, _seq, kind, payload = heapq.heappop(self.heap)
            if t > max_time:
                truncated = True
                break
            self.now = t
            if kind == "spawn":
                self._on_spawn(t, payload)
            elif kind == "zone":
                self._on_zone(t, payload)
            else:
                self._on_pass(t, payload)
        return self._report(truncated)

    # ------------------------------------------------------------------
    # event handlers

    def _on_spawn(self, t: float, src_idx: int) -> None:
        src = self.sources[src_idx]
        vclass = self.source_class[src_idx]
        vid = self.n_spawned[CAV] + self.n_spawned[BACKGROUND] + 1
        v = Vehicle(vid, vclass, src.origin, src.destination, t)
        self.n_spawned[vclass] += 1
        v.last_detector_vertex = src.origin
        v.last_detector_time = t

        next_edge = self._route_from_vertex(v, src.origin, t)
        if next_edge is None:
            self._strand(v)
        else:
            self._enter_edge(v, next_edge, t)

        self.spawn_remaining[src_idx] -= 1
        if self.spawn_remaining[src_idx] > 0:
            self._push(t + sample_interarrival(src, self.rngs[src_idx]), "spawn", src_idx)

    def _route_from_vertex(self, v: Vehicle, vtx: int, t: float):
        """Next edge out of vtx for this vehicle, or None if stuck."""
        if v.vclass == CAV and self.policy == "threshold-network":
            try:
                j, _ = best_neighbor(self.table, vtx, v.destination,
                                     lambda eid: self._available(eid, t))
                return self.network.edge_between(vtx, j)
            except NoRouteError:
                self._count("no_route_fallbacks")
        try:
            path = self._static_route(vtx, v.destination, t)
        except NoRouteError:
            return None
        return self.network.edge_between(path[0], path[1])

    def _enter_edge(self, v: Vehicle, edge, t: float) -> None:
        v.current_edge = edge
        v.edge_entry_time = t
        v.route.append(edge.id)
        linked = (v.ahead is not None and not v.ahead.arrived
                  and v.ahead.current_edge is edge)
        if linked:
            v.role = FOLLOWER
            v.v_cruise = v.ahead.v_cruise
            if v.ahead.role == ALONE:
                self.occupancy[edge.id][ALONE] -= 1
                self.occupancy[edge.id][LEADER] += 1
                v.ahead.role = LEADER
        else:
            v.ahead = None
            v.role = ALONE if v.vclass == CAV else BACKGROUND
            v.v_cruise = max(self.v_floor,
                             min(self.v0,
                                 equilibrium_speed(self._density_excluding(edge, None), self.gm)))
        self.occupancy[edge.id][v.role if v.vclass == CAV else BACKGROUND] += 1
        v.traces.append(EdgeTrace(edge.id, t, v.v_cruise, follower=v.role == FOLLOWER))
        self._push(t + edge.d2 / v.v_cruise, "zone", v)

    def _on_zone(self, t: float, v: Vehicle) -> None:
        edge = v.current_edge
        trace = v.traces[-1]
        dt2 = t - v.edge_entry_time
        cost, fuel = trip_segment_cost(dt2, v.v_cruise, v.role == FOLLOWER, self.fm, self.w)
        v.cost_usd += cost
        v.fuel_l += fuel
        trace.t_zone = t
        trace.cost += cost
        trace.fuel += fuel
        v.zone_time = t

        if v.vclass == BACKGROUND:
            v_e = equilibrium_speed(self._density_excluding(edge, v), self.gm)
            v.v_coord = max(self.v_floor, min(self.v0, v_e))
            v.u_realized = edge.d1 / self.v0 - edge.d1 / v.v_coord
            nxt = self._next_static_edge(v, edge.to, t)
            v.committed_next = nxt.id if nxt is not None else None
        else:
            self._cav_decision(v, edge, edge.to, t)

        trace.v_coord = v.v_coord
        self._push(t + edge.d1 / v.v_coord, "pass", v)

    # ------------------------------------------------------------------
    # CAV decision logic

    def _cav_decision(self, v: Vehicle, edge, j: int, t: float) -> None:
        ctrl = self.controllers.get(j)
        dest = v.destination

        # arrival bookkeeping at the detector (CAV arrivals only); a clamped
        # headway means the paired leader passes the junction after us, so no
        # physical merge is possible
        h = None
        merge_allowed = False
        leader_rec = ctrl.last if ctrl is not None else None
        if leader_rec is not None:
            x_raw = t - leader_rec[1]
            ctrl.history.push(max(x_raw, self.pp.h0))
            h_raw = max(x_raw, 1e-9) + leader_rec[2]
            merge_allowed = h_raw >= 0.0
            h = predicted_headway(max(x_raw, 1e-9), leader_rec[2], self.counters)

        # asynchronous travel-time update for the previous detector vertex
        if self.table is not None and v.last_detector_vertex is not None:
            key_i = v.last_detector_vertex
            if (key_i, dest, j) in self.table.t:
                self.table.update(key_i, dest, j, t - v.last_detector_time,
                                  self.table.min_downstream(j, dest))

        # merges are a controlled maneuver: the coordinating-zone reference
        # speed is controller authority, bounded by acceleration capability
        # only; non-merge traversal stays bound by prevailing traffic
        v_e = self._equilibrium_here(edge, v)
        cap = VREF_CAP_FACTOR * self.v0
        u, merge, leader = 0.0, False, None
        next_edge = None
        if j != dest:
            if self.policy == "baseline":
                next_edge = self._next_static_edge(v, j, t)
            elif self.policy == "policy-a":
                next_edge = self._next_static_edge(v, j, t)
                u, merge = self._policy_a(v, edge, j, t, h, leader_rec, next_edge, ctrl,
                                          cap, merge_allowed)
            elif self.policy == "value-approx":
                next_edge = self._next_static_edge(v, j, t)
                u, merge = self._policy_value_approx(v, edge, j, t, h, leader_rec,
                                                     next_edge, ctrl, cap, merge_allowed)
            else:
                next_edge = self._route_from_vertex(v, j, t)
                if next_edge is not None:
                    u, merge = self._policy_threshold_network(
                        v, edge, j, t, h, leader_rec, next_edge, ctrl, cap, merge_allowed)
        if merge:
            leader = leader_rec[0]

        # apply the action over the coordinating zone; non-merge traversal
        # cannot outrun the prevailing traffic
        if merge:
            v.v_coord = reference_speed(u, edge.d1, self.v0)
            v.merges += 1
        else:
            u = min(max(u, -edge.d1 / self.v0 + 1e-9), 0.9 * edge.d1 / self.v0)
            v_ref = reference_speed(u, edge.d1, self.v0)
            v.v_coord = max(self.v_floor, min(v_ref, self.v0, v_e))
        v.u_realized = edge.d1 / self.v0 - edge.d1 / v.v_coord
        v.merge_intent = merge
        v.merge_leader = leader
        v.committed_next = next_edge.id if next_edge is not None else None

        if ctrl is not None:
            ctrl.last = (v, t, v.u_realized, v.committed_next)
        v.last_detector_vertex = j
        v.last_detector_time = t

    def _policy_a(self, v, edge, j, t, h, leader_rec, next_edge, ctrl, cap,
                  merge_allowed):
        """Static routing; threshold merging with only acceleration allowed."""
        if leader_rec is None or h is None or next_edge is None:
            self._count("cold_starts")
            return 0.0, False
        leader, _lt, _lu, leader_committed = leader_rec
        lam_hat = ctrl.history.estimate()
        if leader_committed is None or leader_committed != next_edge.id:
            self._count("no_common_path")
            return 0.0, False
        path_k = self._static_path_from(j, v.destination, t)
        path_prev = self._static_path_from(j, leader.destination, t)
        if path_k is None or path_prev is None:
            self._count("no_common_path")
            return 0.0, False
        nu_s = split_vertex(path_k, path_prev)
        if nu_s == j:
            self._count("no_common_path")
            return 0.0, False
        t_j = self._path_length(path_k) / self.v0
        t_s = t_j - self._path_length(path_k, stop_at=nu_s) / self.v0
        d_hat = cruising_distance_common(t_j, t_s, self.v0, self.v0, self.fm, self.counters)
        theta, c, _kind = self._solve_cached(lam_hat, d_hat, edge.d1)
        c = max(c, 0.0)  # only acceleration is allowed
        self.policy_rows.append((t, j, lam_hat, theta, c))
        u = evaluate_policy(theta, c, h)
        if u == h:
            if merge_allowed and self._merge_feasible(h, edge, cap):
                return h, True
            v.merge_infeasible += 1
            self._count("merge_infeasible")
            return 0.0, False
        return max(u, 0.0), False

    def _policy_value_approx(self, v, edge, j, t, h, leader_rec, next_edge, ctrl,
                             cap, merge_allowed):
        """Greedy action from the per-junction polynomial cost model."""
        self._feed_value_approx(v, j, h)
        if leader_rec is None or h is None or next_edge is None or ctrl.poly is None:
            self._count("cold_starts")
            v.va_pending = (j, h if h is not None else 0.0, False, v.cost_usd)
            return 0.0, False
        _leader, _lt, _lu, leader_committed = leader_rec
        merge = ctrl.poly.decide(h)
        if leader_committed is None or leader_committed != next_edge.id:
            merge = False
        if merge and not merge_allowed:
            merge = False
        if merge and not self._merge_feasible(h, edge, cap):
            v.merge_infeasible += 1
            self._count("merge_infeasible")
            merge = False
        v.va_pending = (j, h, merge, v.cost_usd)
        return (h, True) if merge else (0.0, False)

    def _feed_value_approx(self, v: Vehicle, j: int, h_here: float | None) -> None:
        """Report realized (span cost + downstream estimate) to the upstream model."""
        if v.va_pending is None:
            return
        prev_vtx, h_prev, merged_prev, cost_snapshot = v.va_pending
        span = v.cost_usd - cost_snapshot
        downstream = 0.0
        ctrl_j = self.controllers.get(j)
        if j != v.destination and ctrl_j is not None and ctrl_j.poly is not None:
            estimates = []
            try:
                estimates.append(ctrl_j.poly.estimate_nomerge_cost())
            except ValueError:
                pass
            if h_here is not None:
                try:
                    estimates.append(ctrl_j.poly.estimate_merge_cost(h_here))
                except ValueError:
                    pass
            if estimates:
                downstream = min(estimates)
        prev_ctrl = self.controllers.get(prev_vtx)
        if prev_ctrl is not None and prev_ctrl.poly is not None:
            prev_ctrl.poly.record_outcome(h_prev, merged_prev, span + downstream)
        v.va_pending = None

    def _policy_threshold_network(self, v, edge, j, t, h, leader_rec, next_edge,
                                  ctrl, cap, merge_allowed):
        """Adaptive routing first, then the threshold policy with estimated
        arrival rate and cruising distance (common-path when the previous
        arrival shares the next stretch)."""
        if leader_rec is None or h is None:
            self._count("cold_starts")
            return 0.0, False
        leader, _lt, _lu, leader_committed = leader_rec
        lam_hat = ctrl.history.estimate()
        avail = lambda eid: self._available(eid, t)
        try:
            path_k = predict_path(self.table, j, v.destination, avail)
        except NoRouteError:
            self._count("no_route_fallbacks")
            return 0.0, False
        t_j = self.table.min_downstream(j, v.destination)

        nu_s = j
        if (leader_committed is not None and leader_committed == next_edge.id
                and not leader.arrived):
            head = self.network.edges[leader_committed].to
            try:
                path_prev = [j] + predict_path(self.table, head, leader.destination, avail)
                nu_s = split_vertex(path_k, path_prev)
            except NoRouteError:
                nu_s = j

        if nu_s == j:
            self._count("no_common_path")
            d_hat = cruising_distance_single(t_j, self._vbar(path_k, t_j), self.fm)
            theta, c, _kind = self._solve_cached(lam_hat, d_hat, edge.d1)
            self.policy_rows.append((t, j, lam_hat, theta, c))
            return c, False

        t_s = self.table.min_downstream(nu_s, v.destination)
        idx = path_k.index(nu_s)
        d_hat = cruising_distance_common(
            t_j, t_s, self._vbar(path_k, t_j), self._vbar(path_k[idx:], t_s),
            self.fm, self.counters)
        theta, c, _kind = self._solve_cached(lam_hat, d_hat, edge.d1)
        self.policy_rows.append((t, j, lam_hat, theta, c))
        u = evaluate_policy(theta, c, h)
        if u == h:
            if merge_allowed and self._merge_feasible(h, edge, cap):
                return h, True
            v.merge_infeasible += 1
            self._count("merge_infeasible")
        return c, False

    def _vbar(self, path: list[int], t_remaining: float) -> float:
        """Average-speed estimate over a predicted path, clamped to [1, v0]."""
        if t_remaining <= 0 or len(path) < 2:
            return self.v0
        return max(1.0, min(self.v0, self._path_length(path) / t_remaining))

    def _path_length(self, path: list[int], stop_at: int | None = None) -> float:
        total = 0.0
        for a, b in zip(path, path[1:]):
            total += self.network.edge_between(a, b).length
            if stop_at is not None and b == stop_at:
                break
        return total

    def _static_path_from(self, frm: int, dest: int, t: float) -> list[int] | None:
        if frm == dest:
            return [dest]
        try:
            return self._static_route(frm, dest, t)
        except NoRouteError:
            return None

    def _next_static_edge(self, v: Vehicle, j: int, t: float):
        if j == v.destination:
            return None
        try:
            path = self._static_route(j, v.destination, t)
        except NoRouteError:
            return None
        return self.network.edge_between(path[0], path[1])

    # ------------------------------------------------------------------

    def _on_pass(self, t: float, v: Vehicle) -> None:
        edge = v.current_edge
        j = edge.to
        trace = v.traces[-1]
        dt1 = t - v.zone_time
        cost, fuel = trip_segment_cost(dt1, v.v_coord, False, self.fm, self.w)
        v.cost_usd += cost
        v.fuel_l += fuel
        trace.t_exit = t
        trace.cost += cost
        trace.fuel += fuel
        self.occupancy[edge.id][v.role if v.vclass == CAV else BACKGROUND] -= 1
        v.current_edge = None

        if j == v.destination:
            if self.policy == "value-approx":
                self._feed_value_approx(v, j, None)
            self._finalize(v, t)
            return

        # platoon link onto the next edge: only an executed merge attaches
        v.ahead = v.merge_leader if (v.vclass == CAV and v.merge_intent) else None
        if v.ahead is not None and v.ahead.traces:
            lead_trace = v.ahead.traces[-1]
            if lead_trace.edge_id == v.committed_next:
                self.merge_pass_deltas.append(t - lead_trace.t_entry)
        v.merge_leader = None

        next_edge = None
        if v.committed_next is not None and self._available(v.committed_next, t):
            next_edge = self.network.edges[v.committed_next]
        else:
            if v.committed_next is not None:
                self._count("reroutes_on_unavailable")
            next_edge = self._route_from_vertex(v, j, t)
        if next_edge is None:
            self._strand(v)
            return
        if next_edge.id != v.committed_next:
            v.ahead = None
            v.merge_intent = False
        self._enter_edge(v, next_edge, t)

    def _finalize(self, v: Vehicle, t: float) -> None:
        v.arrived = True
        v.arrive_time = t
        self.n_arrived += 1
        self.trips.append(TripRow(
            v.id, v.vclass, v.origin, v.destination, v.spawn_time, t,
            t - v.spawn_time, v.fuel_l, v.cost_usd, v.merges, v.merge_infeasible,
            "-".join(str(e) for e in v.route),
        ))
        self.all_traces.append((v.vclass, v.traces))

    def _strand(self, v: Vehicle) -> None:
        """No available outgoing edge now or later: drop with an error flag."""
        self._count("stranded")
        self.all_traces.append((v.vclass, v.traces))

    # ------------------------------------------------------------------
    # reporting

    def _report(self, truncated: bool) -> MetricsReport:
        report = MetricsReport()
        report.trips = self.trips
        report.policy_rows = self.policy_rows
        report.counters = dict(sorted(self.counters.items()))
        sim_end = self.cfg.sim.max_time_s if truncated else self.now
        report.edge_bins = self._bin_edges(sim_end)
        if self.table is not None:
            report.table_rows = self.table.snapshot_rows()

        cav_trips = [tr for tr in self.trips if tr.vclass == CAV]
        bg_trips = [tr for tr in self.trips if tr.vclass == BACKGROUND]

        def mean(xs: list[float]) -> float:
            return sum(xs) / len(xs) if xs else math.nan

        n_spawned = self.n_spawned[CAV] + self.n_spawned[BACKGROUND]
        all_arrived = self.n_arrived == n_spawned and not truncated
        report.summary = {
            "network_type": self.cfg.network.type,
            "policy": self.policy,
            "seed": self.seed,
            "k_c_veh_per_km_ln": self.cfg.greenshield.k_c_veh_per_km_ln,
            "penetration": self.cfg.demand.penetration,
            "n_cavs_spawned": self.n_spawned[CAV],
            "n_background_spawned": self.n_spawned[BACKGROUND],
            "n_arrived": self.n_arrived,
            "all_arrived": all_arrived,
            "sim_end_s": sim_end,
            "mean_cav_cost_usd": mean([tr.cost_usd for tr in cav_trips]),
            "mean_cav_time_s": mean([tr.time_s for tr in cav_trips]),
            "mean_cav_fuel_l": mean([tr.fuel_l for tr in cav_trips]),
            "mean_background_cost_usd": mean([tr.cost_usd for tr in bg_trips]),
            "merges_total": sum(tr.merges for tr in cav_trips),
            "merge_infeasible_total": self.counters.get("merge_infeasible", 0),
            "no_route_fallbacks": self.counters.get("no_route_fallbacks", 0),
            "no_common_path": self.counters.get("no_common_path", 0),
            "negative_common_distance": self.counters.get("negative_common_distance", 0),
            "policy_saturated": self.counters.get("policy_saturated", 0),
            "policy_no_merge": self.counters.get("policy_no_merge", 0),
            "cold_starts": self.counters.get("cold_starts", 0),
            "headway_clamped": self.counters.get("headway_clamped", 0),
            "reroutes_on_unavailable": self.counters.get("reroutes_on_unavailable", 0),
            "solver_failures": self.counters.get("solver_failures", 0),
            "stranded": self.counters.get("stranded", 0),
            "error_flag": truncated or self.counters.get("stranded", 0) > 0,
            "baseline_ratio": None,
        }
        return report

    def _bin_edges(self, t_end: float):
        bin_s = self.cfg.sim.bin_s
        n_bins = max(1, math.ceil(t_end / bin_s)) if t_end > 0 else 1
        edge_ids = sorted(self.network.edges)
        entries: dict[tuple[int, int], int] = {}
        speeds: dict[tuple[int, int], list[float]] = {}
        presence: dict[tuple[int, int], float] = {}
        for _vclass, traces in self.all_traces:
            for tr in traces:
                b0 = int(tr.t_entry // bin_s)
                if b0 >= n_bins:
                    continue
                entries[(b0, tr.edge_id)] = entries.get((b0, tr.edge_id), 0) + 1
                exit_t = tr.t_exit if tr.t_exit is not None else t_end
                if tr.t_exit is not None and tr.t_exit > tr.t_entry:
                    v_mean = self.network.edges[tr.edge_id].length / (tr.t_exit - tr.t_entry)
                    speeds.setdefault((b0, tr.edge_id), []).append(v_mean)
                b = b0
                while b < n_bins:
                    overlap = min(exit_t, (b + 1) * bin_s) - max(tr.t_entry, b * bin_s)
                    if overlap <= 0:
                        break
                    presence[(b, tr.edge_id)] = presence.get((b, tr.edge_id), 0.0) + overlap
                    b += 1
        rows = []
        for b in range(n_bins):
            for e in edge_ids:
                edge = self.network.edges[e]
                sp = speeds.get((b, e))
                mean_speed = sum(sp) / len(sp) if sp else None
                density = presence.get((b, e), 0.0) / (bin_s * edge.length * edge.lanes)
                flow = entries.get((b, e), 0) / bin_s
                rows.append((b * bin_s, e, mean_speed, density, flow))
        return rows


def run_scenario(cfg: ScenarioConfig, seed: int | None = None,
                 policy: str | None = None) -> MetricsReport:
    """Build and run one simulation; deterministic for fixed (config, seed)."""
    return Simulation(cfg, seed=seed, policy=policy).run()
