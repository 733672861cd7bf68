"""Experiment harness CLI.

Subcommands:
  solve-policy   print (theta, c, Z, residuals) for given lambda / D2
  run            one scenario -> trips/edges/policy/summary CSVs
  sweep          factorial (value x policy x seed) -> sweep.csv
  resilience     run with an edge-disconnection window

Exit codes: 0 success, 1 usage/config error, 2 solver non-convergence.
The default output directory is $PLATOONSIM_OUT (else ./out).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import os
import sys
from pathlib import Path

from .config import (
    AvailabilityEvent,
    ConfigError,
    POLICIES,
    ScenarioConfig,
    SWEEP_VARIABLES,
    load_config,
)
from .dynamics import CostWeights, FuelModel
from .engine import run_scenario
from .metrics import MetricsReport
from .threshold_policy import (
    InfeasiblePolicyError,
    PolicyParams,
    ThresholdSolverError,
    solve_threshold,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _default_out() -> str:
    return os.environ.get("PLATOONSIM_OUT", "out")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="platoonsim", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve-policy", help="solve the threshold equation system")
    sp.add_argument("--lambda-veh-per-hr", type=float, required=True, dest="lam")
    sp.add_argument("--d2-km", type=float, required=True)
    sp.add_argument("--d1-m", type=float, default=1000.0)
    sp.add_argument("--v0", type=float, default=24.0)
    sp.add_argument("--gamma", type=float, default=0.9)
    sp.add_argument("--eta", type=float, default=0.1)
    sp.add_argument("--phi-l-per-100km", type=float, default=32.2)
    sp.add_argument("--alpha", type=float, default=3.51e-7)
    sp.add_argument("--w1-usd-per-hr", type=float, default=25.8)
    sp.add_argument("--w2-usd-per-l", type=float, default=0.868)
    sp.add_argument("--tol", type=float, default=1e-9)

    rp = sub.add_parser("run", help="run one scenario")
    rp.add_argument("--config", required=True)
    rp.add_argument("--seed", type=int, default=None)
    rp.add_argument("--policy", choices=POLICIES, default=None)
    rp.add_argument("--out", default=None)

    wp = sub.add_parser("sweep", help="factorial experiment sweep")
    wp.add_argument("--config", required=True)
    wp.add_argument("--variable", choices=SWEEP_VARIABLES, default=None)
    wp.add_argument("--values", default=None, help="comma-separated values")
    wp.add_argument("--policies", default=None, help="comma-separated policies")
    wp.add_argument("--seeds", default=None, help="comma-separated seeds")
    wp.add_argument("--out", default=None)
    wp.add_argument("--jobs", type=int, default=1)

    xp = sub.add_parser("resilience", help="run with an edge disconnection window")
    xp.add_argument("--config", required=True)
    xp.add_argument("--edge", type=int, required=True)
    xp.add_argument("--t-off", type=float, required=True)
    xp.add_argument("--t-on", type=float, required=True)
    xp.add_argument("--seed", type=int, default=None)
    xp.add_argument("--out", default=None)
    return p


def _cmd_solve_policy(args) -> int:
    p = PolicyParams(
        w=CostWeights(w1=args.w1_usd_per_hr / 3600.0, w2=args.w2_usd_per_l),
        fm=FuelModel(phi=args.phi_l_per_100km / 1e5, alpha=args.alpha, eta=args.eta),
        d1=args.d1_m,
        d2=args.d2_km * 1000.0,
        v0=args.v0,
        gamma=args.gamma,
        lam=args.lam / 3600.0,
    )
    writer = csv.writer(sys.stdout)
    writer.writerow(["theta_s", "c_s", "z_usd", "r1", "r2", "r3", "iterations"])
    try:
        sol = solve_threshold(p, tol=args.tol)
    except (ThresholdSolverError, InfeasiblePolicyError) as exc:
        if isinstance(exc, ThresholdSolverError):
            writer.writerow([repr(exc.theta), repr(exc.c), "",
                             *[repr(r) for r in exc.residuals], ""])
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    writer.writerow([repr(sol.theta), repr(sol.c), repr(sol.z),
                     *[repr(r) for r in sol.residuals], sol.iterations])
    return 0


def _load(args) -> ScenarioConfig:
    try:
        return load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        sys.exit(1)


def _write_report(report: MetricsReport, out_dir: str) -> None:
    paths = report.write_csvs(out_dir)
    for name in ("trips", "edges", "policy", "summary"):
        print(f"wrote {paths[name]}")


def _cmd_run(args) -> int:
    cfg = _load(args)
    report = run_scenario(cfg, seed=args.seed, policy=args.policy)
    _write_report(report, args.out or _default_out())
    return 0


def _apply_sweep_value(cfg: ScenarioConfig, variable: str, value: float) -> None:
    if variable == "critical_density":
        cfg.greenshield.k_c_veh_per_km_ln = value
    else:
        for od in cfg.demand.od:
            od.rate_veh_per_hr = value


def _sweep_cell(payload):
    cfg_dict, variable, value, policy, seed = payload
    from .config import parse_config

    cfg = parse_config(cfg_dict)
    _apply_sweep_value(cfg, variable, value)
    try:
        report = run_scenario(cfg, seed=seed, policy=policy)
        return (value, policy, seed, report.mean_cav_cost(), False)
    except Exception as exc:  # flagged row; the sweep continues
        sys.stderr.write(f"sweep cell ({value}, {policy}, {seed}) failed: {exc}\n")
        return (value, policy, seed, float("nan"), True)


def run_sweep(cfg: ScenarioConfig, variable: str, values: list[float],
              policies: list[str], seeds: list[int], jobs: int = 1):
    """Full factorial sweep; rows sorted by (value, policy, seed).

    Each cell is an isolated run; the baseline ratio column is filled
    whenever the same (value, seed) includes a baseline run.
    """
    cfg_dict = cfg.to_dict()
    cells = [(cfg_dict, variable, v, p, s) for v in values for p in policies for s in seeds]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    results.sort(key=lambda r: (r[0], r[1], r[2]))
    base = {(v, s): cost for v, p, s, cost, failed in results
            if p == "baseline" and not failed}
    rows = []
    for v, p, s, cost, failed in results:
        ratio = cost / base[(v, s)] if (v, s) in base and not failed else None
        rows.append((v, p, s, cost, ratio, failed))
    return rows


def write_sweep_csv(rows, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["value", "policy", "seed", "mean_cav_cost_usd", "baseline_ratio", "failed"])
        for v, p, s, cost, ratio, failed in rows:
            w.writerow([repr(float(v)), p, s, repr(cost),
                        "" if ratio is None else repr(ratio), int(failed)])


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    sweep = cfg.sweep
    variable = args.variable or (sweep.variable if sweep else None)
    values = ([float(x) for x in args.values.split(",")] if args.values
              else (sweep.values if sweep else []))
    policies = (args.policies.split(",") if args.policies
                else (sweep.policies if sweep else []))
    seeds = ([int(x) for x in args.seeds.split(",")] if args.seeds
             else (sweep.seeds if sweep else [cfg.sim.seed]))
    if variable is None or not values or not policies:
        print("sweep requires a variable, at least one value and one policy",
              file=sys.stderr)
        return 1
    for p in policies:
        if p not in POLICIES:
            print(f"unknown policy {p!r}", file=sys.stderr)
            return 1
    rows = run_sweep(cfg, variable, values, policies, seeds, jobs=args.jobs)
    out = Path(args.out or _default_out()) / "sweep.csv"
    write_sweep_csv(rows, out)
    print(f"wrote {out}")
    return 0


def _cmd_resilience(args) -> int:
    cfg = _load(args)
    if args.edge not in cfg.build_network().edges:
        print(f"unknown edge {args.edge}", file=sys.stderr)
        return 1
    if not (0 <= args.t_off <= args.t_on <= cfg.sim.max_time_s):
        print("require 0 <= t_off <= t_on <= sim.max_time_s", file=sys.stderr)
        return 1
    cfg.policy.type = "threshold-network"
    if args.t_off < args.t_on:
        cfg.sim.availability.append(AvailabilityEvent(args.edge, args.t_off, args.t_on))
    report = run_scenario(cfg, seed=args.seed)
    out_dir = args.out or _default_out()
    _write_report(report, out_dir)
    with open(Path(out_dir) / "events.log", "w") as f:
        f.write(f"edge {args.edge} off at {args.t_off!r} s, on at {args.t_on!r} s\n")
        for key, val in sorted(report.counters.items()):
            f.write(f"{key}: {val}\n")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve-policy":
        return _cmd_solve_policy(args)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "sweep":
        return _cmd_sweep(args)
    return _cmd_resilience(args)


if __name__ == "__main__":
    sys.exit(main())
