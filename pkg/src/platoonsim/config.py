"""Scenario configuration: YAML schema, strict validation, unit conversion.

Config files use human units (veh/hr, km, L/100km, $/hr); everything is
converted to SI on load.  Unknown keys are hard errors so experiment
typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import yaml

from .dynamics import CostWeights, FuelModel, GreenshieldModel, IdmParams, PlatoonParams
from .network import RoadNetwork, build_cascade, build_custom, build_nguyen_dupuis

POLICIES = ("baseline", "policy-a", "value-approx", "threshold-network")
NETWORK_TYPES = ("nguyen-dupuis", "cascade", "custom")
SWEEP_VARIABLES = ("critical_density", "od_rate")


class ConfigError(ValueError):
    """Invalid or unknown scenario configuration content."""


@dataclass
class CustomNetworkConfig:
    arcs: list[list[float]] = field(default_factory=list)
    origins: list[int] = field(default_factory=list)
    destinations: list[int] = field(default_factory=list)


@dataclass
class NetworkConfig:
    type: str = "nguyen-dupuis"
    edge_length_m: float = 2000.0
    d1_m: float = 500.0
    lanes: int = 1
    n_junctions: int = 2
    mainline_d2_m: float = 30000.0
    ramp_length_m: float | None = None
    custom: CustomNetworkConfig = field(default_factory=CustomNetworkConfig)


@dataclass
class OdDemand:
    origin: int
    destination: int
    rate_veh_per_hr: float
    n_cavs: int


@dataclass
class DemandConfig:
    od: list[OdDemand] = field(default_factory=list)
    penetration: float = 0.1


@dataclass
class CostsConfig:
    w1_usd_per_hr: float = 25.8
    w2_usd_per_l: float = 0.868
    phi_l_per_100km: float = 32.2
    eta: float = 0.1
    alpha: float = 3.51e-7


@dataclass
class PlatoonConfig:
    tau_l_s: float = 7.5
    tau_f_s: float = 0.5
    tau_c_s: float = 5.0
    t_s_s: float = 30.0
    h0_s: float = 0.5


@dataclass
class IdmConfig:
    v0: float = 24.0
    s0: float = 2.0
    t_hw: float = 1.5
    a: float = 1.4
    b: float = 2.0
    delta: float = 4.0


@dataclass
class ValueApproxConfig:
    degree_n: int = 3
    window_l: int = 30
    window_y: int = 20


@dataclass
class PolicyConfig:
    type: str = "threshold-network"
    gamma: float = 0.9
    psi: float = 0.9
    M: int = 50
    chi: float = 1.0
    value_approx: ValueApproxConfig = field(default_factory=ValueApproxConfig)


@dataclass
class GreenshieldConfig:
    k_c_veh_per_km_ln: float = 50.0


@dataclass
class AvailabilityEvent:
    edge: int
    t_off_s: float
    t_on_s: float


@dataclass
class SimConfig:
    seed: int = 1
    max_time_s: float = 40000.0
    bin_s: float = 100.0
    v_floor_mps: float = 1.0
    availability: list[AvailabilityEvent] = field(default_factory=list)


@dataclass
class SweepConfig:
    variable: str = "critical_density"
    values: list[float] = field(default_factory=list)
    policies: list[str] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)


@dataclass
class ScenarioConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    demand: DemandConfig = field(default_factory=DemandConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    costs: CostsConfig = field(default_factory=CostsConfig)
    platoon: PlatoonConfig = field(default_factory=PlatoonConfig)
    idm: IdmConfig = field(default_factory=IdmConfig)
    greenshield: GreenshieldConfig = field(default_factory=GreenshieldConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    sweep: SweepConfig | None = None

    # -- SI accessors ----------------------------------------------------

    def cost_weights(self) -> CostWeights:
        return CostWeights(w1=self.costs.w1_usd_per_hr / 3600.0, w2=self.costs.w2_usd_per_l)

    def fuel_model(self) -> FuelModel:
        return FuelModel(
            phi=self.costs.phi_l_per_100km / 1e5,
            alpha=self.costs.alpha,
            eta=self.costs.eta,
        )

    def platoon_params(self) -> PlatoonParams:
        p = self.platoon
        return PlatoonParams(tau_l=p.tau_l_s, tau_f=p.tau_f_s, tau_c=p.tau_c_s,
                             t_s=p.t_s_s, h0=p.h0_s)

    def idm_params(self) -> IdmParams:
        i = self.idm
        return IdmParams(v0=i.v0, s0=i.s0, t_hw=i.t_hw, a=i.a, b=i.b, delta=i.delta)

    def greenshield_model(self) -> GreenshieldModel:
        k_c = self.greenshield.k_c_veh_per_km_ln / 1000.0  # veh/m/lane
        return GreenshieldModel.from_critical_density(self.idm.v0, k_c)

    def build_network(self) -> RoadNetwork:
        n = self.network
        if n.type == "nguyen-dupuis":
            return build_nguyen_dupuis(n.edge_length_m, n.d1_m, n.lanes)
        if n.type == "cascade":
            return build_cascade(n.n_junctions, n.mainline_d2_m, n.d1_m, n.lanes,
                                 n.ramp_length_m)
        if n.type == "custom":
            arcs = [(int(a[0]), int(a[1]), float(a[2]), float(a[3])) for a in n.custom.arcs]
            return build_custom(arcs, set(n.custom.origins), set(n.custom.destinations),
                                n.lanes)
        raise ConfigError(f"unknown network.type {n.type!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.sweep is None:
            d.pop("sweep")
        if self.network.ramp_length_m is None:
            d["network"].pop("ramp_length_m")
        return d


# ---------------------------------------------------------------------------
# strict parsing

def _check_keys(raw: dict, allowed: set[str], path: str) -> None:
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} under '{path}'")


def _get(raw: dict, key: str, default, path: str, typ=None):
    val = raw.get(key, default)
    if typ is not None and val is not None and not isinstance(val, typ):
        # bool is an int subclass; reject it where numbers are expected
        if typ is not bool and isinstance(val, bool):
            raise ConfigError(f"'{path}.{key}' must be {typ}, got bool")
        try:
            val = typ(val)
        except (TypeError, ValueError):
            raise ConfigError(f"'{path}.{key}' must be {typ}, got {val!r}") from None
    return val


def parse_config(raw: dict) -> ScenarioConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be a mapping")
    _check_keys(raw, {"network", "demand", "policy", "costs", "platoon", "idm",
                      "greenshield", "sim", "sweep"}, "<root>")
    cfg = ScenarioConfig()

    net = raw.get("network", {}) or {}
    _check_keys(net, {"type", "edge_length_m", "d1_m", "lanes", "n_junctions",
                      "mainline_d2_m", "ramp_length_m", "custom"}, "network")
    n = cfg.network
    n.type = _get(net, "type", n.type, "network", str)
    if n.type not in NETWORK_TYPES:
        raise ConfigError(f"network.type must be one of {NETWORK_TYPES}")
    n.edge_length_m = _get(net, "edge_length_m", n.edge_length_m, "network", float)
    n.d1_m = _get(net, "d1_m", n.d1_m, "network", float)
    n.lanes = _get(net, "lanes", n.lanes, "network", int)
    n.n_junctions = _get(net, "n_junctions", n.n_junctions, "network", int)
    n.mainline_d2_m = _get(net, "mainline_d2_m", n.mainline_d2_m, "network", float)
    n.ramp_length_m = _get(net, "ramp_length_m", None, "network", float)
    custom = net.get("custom", {}) or {}
    _check_keys(custom, {"arcs", "origins", "destinations"}, "network.custom")
    n.custom = CustomNetworkConfig(
        arcs=custom.get("arcs", []),
        origins=[int(v) for v in custom.get("origins", [])],
        destinations=[int(v) for v in custom.get("destinations", [])],
    )
    if n.type == "custom" and not n.custom.arcs:
        raise ConfigError("network.custom.arcs required for network.type=custom")

    dem = raw.get("demand", {}) or {}
    _check_keys(dem, {"od", "penetration"}, "demand")
    cfg.demand.penetration = _get(dem, "penetration", cfg.demand.penetration, "demand", float)
    if not 0.0 < cfg.demand.penetration <= 1.0:
        raise ConfigError("demand.penetration must be in (0, 1]")
    ods = []
    for i, od in enumerate(dem.get("od", []) or []):
        path = f"demand.od[{i}]"
        _check_keys(od, {"origin", "destination", "rate_veh_per_hr", "n_cavs"}, path)
        for req in ("origin", "destination", "rate_veh_per_hr", "n_cavs"):
            if req not in od:
                raise ConfigError(f"'{path}.{req}' is required")
        rate = float(od["rate_veh_per_hr"])
        if rate <= 0:
            raise ConfigError(f"'{path}.rate_veh_per_hr' must be positive")
        n_cavs = int(od["n_cavs"])
        if n_cavs < 0:
            raise ConfigError(f"'{path}.n_cavs' must be nonnegative")
        ods.append(OdDemand(int(od["origin"]), int(od["destination"]), rate, n_cavs))
    cfg.demand.od = ods

    pol = raw.get("policy", {}) or {}
    _check_keys(pol, {"type", "gamma", "psi", "M", "chi", "value_approx"}, "policy")
    p = cfg.policy
    p.type = _get(pol, "type", p.type, "policy", str)
    if p.type not in POLICIES:
        raise ConfigError(f"policy.type must be one of {POLICIES}")
    p.gamma = _get(pol, "gamma", p.gamma, "policy", float)
    p.psi = _get(pol, "psi", p.psi, "policy", float)
    p.M = _get(pol, "M", p.M, "policy", int)
    p.chi = _get(pol, "chi", p.chi, "policy", float)
    for name, val in (("gamma", p.gamma), ("psi", p.psi)):
        if not 0.0 < val < 1.0:
            raise ConfigError(f"policy.{name} must be in (0, 1)")
    if not 0.0 < p.chi <= 1.0:
        raise ConfigError("policy.chi must be in (0, 1]")
    va = pol.get("value_approx", {}) or {}
    _check_keys(va, {"degree_n", "window_l", "window_y"}, "policy.value_approx")
    p.value_approx = ValueApproxConfig(
        degree_n=_get(va, "degree_n", 3, "policy.value_approx", int),
        window_l=_get(va, "window_l", 30, "policy.value_approx", int),
        window_y=_get(va, "window_y", 20, "policy.value_approx", int),
    )

    costs = raw.get("costs", {}) or {}
    _check_keys(costs, {"w1_usd_per_hr", "w2_usd_per_l", "phi_l_per_100km", "eta", "alpha"},
                "costs")
    c = cfg.costs
    c.w1_usd_per_hr = _get(costs, "w1_usd_per_hr", c.w1_usd_per_hr, "costs", float)
    c.w2_usd_per_l = _get(costs, "w2_usd_per_l", c.w2_usd_per_l, "costs", float)
    c.phi_l_per_100km = _get(costs, "phi_l_per_100km", c.phi_l_per_100km, "costs", float)
    c.eta = _get(costs, "eta", c.eta, "costs", float)
    c.alpha = _get(costs, "alpha", c.alpha, "costs", float)

    plat = raw.get("platoon", {}) or {}
    _check_keys(plat, {"tau_l_s", "tau_f_s", "tau_c_s", "t_s_s", "h0_s"}, "platoon")
    pl = cfg.platoon
    pl.tau_l_s = _get(plat, "tau_l_s", pl.tau_l_s, "platoon", float)
    pl.tau_f_s = _get(plat, "tau_f_s", pl.tau_f_s, "platoon", float)
    pl.tau_c_s = _get(plat, "tau_c_s", pl.tau_c_s, "platoon", float)
    pl.t_s_s = _get(plat, "t_s_s", pl.t_s_s, "platoon", float)
    pl.h0_s = _get(plat, "h0_s", pl.h0_s, "platoon", float)

    idm = raw.get("idm", {}) or {}
    _check_keys(idm, {"v0", "s0", "t_hw", "a", "b", "delta"}, "idm")
    im = cfg.idm
    im.v0 = _get(idm, "v0", im.v0, "idm", float)
    im.s0 = _get(idm, "s0", im.s0, "idm", float)
    im.t_hw = _get(idm, "t_hw", im.t_hw, "idm", float)
    im.a = _get(idm, "a", im.a, "idm", float)
    im.b = _get(idm, "b", im.b, "idm", float)
    im.delta = _get(idm, "delta", im.delta, "idm", float)

    gs = raw.get("greenshield", {}) or {}
    _check_keys(gs, {"k_c_veh_per_km_ln"}, "greenshield")
    cfg.greenshield.k_c_veh_per_km_ln = _get(
        gs, "k_c_veh_per_km_ln", cfg.greenshield.k_c_veh_per_km_ln, "greenshield", float)
    if cfg.greenshield.k_c_veh_per_km_ln <= 0:
        raise ConfigError("greenshield.k_c_veh_per_km_ln must be positive")

    sim = raw.get("sim", {}) or {}
    _check_keys(sim, {"seed", "max_time_s", "bin_s", "v_floor_mps", "availability"}, "sim")
    s = cfg.sim
    s.seed = _get(sim, "seed", s.seed, "sim", int)
    s.max_time_s = _get(sim, "max_time_s", s.max_time_s, "sim", float)
    s.bin_s = _get(sim, "bin_s", s.bin_s, "sim", float)
    s.v_floor_mps = _get(sim, "v_floor_mps", s.v_floor_mps, "sim", float)
    events = []
    for i, ev in enumerate(sim.get("availability", []) or []):
        path = f"sim.availability[{i}]"
        _check_keys(ev, {"edge", "t_off_s", "t_on_s"}, path)
        t_off = float(ev.get("t_off_s", 0.0))
        t_on = float(ev.get("t_on_s", 0.0))
        if t_off > t_on:
            raise ConfigError(f"'{path}': t_off_s must be <= t_on_s")
        events.append(AvailabilityEvent(int(ev["edge"]), t_off, t_on))
    s.availability = events

    sweep = raw.get("sweep")
    if sweep is not None:
        _check_keys(sweep, {"variable", "values", "policies", "seeds"}, "sweep")
        variable = _get(sweep, "variable", "critical_density", "sweep", str)
        if variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep.variable must be one of {SWEEP_VARIABLES}")
        cfg.sweep = SweepConfig(
            variable=variable,
            values=[float(v) for v in sweep.get("values", [])],
            policies=[str(v) for v in sweep.get("policies", [])],
            seeds=[int(v) for v in sweep.get("seeds", [])],
        )
        for pol_name in cfg.sweep.policies:
            if pol_name not in POLICIES:
                raise ConfigError(f"sweep.policies contains unknown policy {pol_name!r}")

    _validate_cross_refs(cfg)
    return cfg


def _validate_cross_refs(cfg: ScenarioConfig) -> None:
    try:
        network = cfg.build_network()
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"network construction failed: {exc}") from exc
    for i, od in enumerate(cfg.demand.od):
        if od.origin not in network.vertices:
            raise ConfigError(f"demand.od[{i}].origin {od.origin} not in network")
        if od.destination not in network.vertices:
            raise ConfigError(f"demand.od[{i}].destination {od.destination} not in network")
    for i, ev in enumerate(cfg.sim.availability):
        if ev.edge not in network.edges:
            raise ConfigError(f"sim.availability[{i}].edge {ev.edge} not in network")


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path) as f:
        raw = yaml.safe_load(f)
    return parse_config(raw)


def dump_config(cfg: ScenarioConfig, path: str | Path | None = None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=True)
    if path is not None:
        Path(path).write_text(text)
    return text


def default_nguyen_dupuis_config(
    n_cavs: int = 200, rate_veh_per_hr: float = 216.0
) -> ScenarioConfig:
    """Desk-scale network scenario: all four O-D pairs, Table-style defaults."""
    cfg = ScenarioConfig()
    cfg.demand.od = [
        OdDemand(o, d, rate_veh_per_hr, n_cavs)
        for o in (1, 4)
        for d in (2, 3)
    ]
    return cfg
