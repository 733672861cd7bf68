"""Mesoscopic platooning-coordination simulator and policy library."""

from .dynamics import (
    CostWeights,
    FuelModel,
    GreenshieldModel,
    IdmParams,
    PlatoonParams,
    delta_f1,
    effective_density,
    equilibrium_speed,
    fuel_rate,
    idm_acceleration,
    reference_speed,
    trip_segment_cost,
)
from .network import (
    Edge,
    NoRouteError,
    RoadNetwork,
    Vertex,
    build_cascade,
    build_nguyen_dupuis,
    shortest_path,
)
from .arrivals import HeadwayHistory, PoissonSource, make_rng, sample_interarrival
from .threshold_policy import (
    PolicyParams,
    ThresholdSolution,
    ThresholdSolverError,
    evaluate_policy,
    merging_reward,
    relative_cost,
    solve_threshold,
    solve_threshold_constrained,
    value_iteration_oracle,
)
from .value_approx import PolyCostModel, fit_polynomial
from .routing import (
    TravelTimeTable,
    cruising_distance_common,
    cruising_distance_single,
    init_tables,
    split_vertex,
)
from .config import ConfigError, ScenarioConfig, load_config
from .engine import Simulation, run_scenario

__all__ = [
    "CostWeights",
    "FuelModel",
    "GreenshieldModel",
    "IdmParams",
    "PlatoonParams",
    "delta_f1",
    "effective_density",
    "equilibrium_speed",
    "fuel_rate",
    "idm_acceleration",
    "reference_speed",
    "trip_segment_cost",
    "Edge",
    "NoRouteError",
    "RoadNetwork",
    "Vertex",
    "build_cascade",
    "build_nguyen_dupuis",
    "shortest_path",
    "HeadwayHistory",
    "PoissonSource",
    "make_rng",
    "sample_interarrival",
    "PolicyParams",
    "ThresholdSolution",
    "ThresholdSolverError",
    "evaluate_policy",
    "merging_reward",
    "relative_cost",
    "solve_threshold",
    "solve_threshold_constrained",
    "value_iteration_oracle",
    "PolyCostModel",
    "fit_polynomial",
    "TravelTimeTable",
    "cruising_distance_common",
    "cruising_distance_single",
    "init_tables",
    "split_vertex",
    "ConfigError",
    "ScenarioConfig",
    "load_config",
    "Simulation",
    "run_scenario",
]
