"""Run results: per-trip rows, binned edge series, policy series, summary.

CSV schemas are fixed (column order matters; units in headers).  Floats
are written with repr so reruns under the same seed produce
byte-identical files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

TRIPS_HEADER = [
    "vehicle_id", "class", "origin", "destination", "spawn_s", "arrive_s",
    "time_s", "fuel_l", "cost_usd", "merges", "merge_infeasible", "route",
]
EDGES_HEADER = [
    "bin_start_s", "edge_id", "mean_speed_mps", "density_veh_per_m", "flow_veh_per_s",
]
POLICY_HEADER = ["t_s", "vertex", "lambda_hat", "theta_s", "c_s"]

SUMMARY_FIELDS = [
    "network_type", "policy", "seed", "k_c_veh_per_km_ln", "penetration",
    "n_cavs_spawned", "n_background_spawned", "n_arrived", "all_arrived",
    "sim_end_s", "mean_cav_cost_usd", "mean_cav_time_s", "mean_cav_fuel_l",
    "mean_background_cost_usd", "merges_total", "merge_infeasible_total",
    "no_route_fallbacks", "no_common_path", "negative_common_distance",
    "policy_saturated", "policy_no_merge", "cold_starts", "headway_clamped",
    "reroutes_on_unavailable", "solver_failures", "stranded", "error_flag",
    "baseline_ratio",
]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    if x is None:
        return ""
    return str(x)


@dataclass
class TripRow:
    vehicle_id: int
    vclass: str
    origin: int
    destination: int
    spawn_s: float
    arrive_s: float
    time_s: float
    fuel_l: float
    cost_usd: float
    merges: int
    merge_infeasible: int
    route: str  # dash-joined edge ids


@dataclass
class MetricsReport:
    trips: list[TripRow] = field(default_factory=list)
    # (bin_start, edge_id, mean_speed or None, density, flow)
    edge_bins: list[tuple[float, int, float | None, float, float]] = field(default_factory=list)
    # (t, vertex, lambda_hat, theta, c)
    policy_rows: list[tuple[float, int, float, float, float]] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)
    table_rows: list[tuple[int, int, int, float]] = field(default_factory=list)

    def mean_cav_cost(self) -> float:
        costs = [t.cost_usd for t in self.trips if t.vclass == "cav"]
        return sum(costs) / len(costs) if costs else float("nan")

    # -- CSV emission -----------------------------------------------------

    def write_csvs(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}

        paths["trips"] = out / "trips.csv"
        with open(paths["trips"], "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(TRIPS_HEADER)
            for t in self.trips:
                w.writerow([
                    t.vehicle_id, t.vclass, t.origin, t.destination,
                    _fmt(t.spawn_s), _fmt(t.arrive_s), _fmt(t.time_s),
                    _fmt(t.fuel_l), _fmt(t.cost_usd), t.merges,
                    t.merge_infeasible, t.route,
                ])

        paths["edges"] = out / "edges.csv"
        with open(paths["edges"], "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(EDGES_HEADER)
            for row in self.edge_bins:
                w.writerow([_fmt(row[0]), row[1], _fmt(row[2]), _fmt(row[3]), _fmt(row[4])])

        paths["policy"] = out / "policy.csv"
        with open(paths["policy"], "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(POLICY_HEADER)
            for row in self.policy_rows:
                w.writerow([_fmt(row[0]), row[1], _fmt(row[2]), _fmt(row[3]), _fmt(row[4])])

        paths["summary"] = out / "summary.csv"
        with open(paths["summary"], "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(SUMMARY_FIELDS)
            w.writerow([_fmt(self.summary.get(k)) for k in SUMMARY_FIELDS])
        return paths

    def write_tables_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["vertex", "destination", "neighbor", "t_s"])
            for i, d, j, t in self.table_rows:
                w.writerow([i, d, j, _fmt(t)])
