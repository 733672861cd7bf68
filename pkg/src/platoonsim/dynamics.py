"""Vehicle- and flow-level physics.

Pure functions over immutable parameter records: IDM acceleration,
Greenshield equilibrium speed, the empirical cubic fuel-rate curve, trip
segment costs, the time-reduction / reference-speed conversion, and the
headway-weighted effective density used for mesoscopic congestion.

All quantities are SI internally (m, s, L, $); human units only appear
at config load time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class InfeasibleTimeReductionError(ValueError):
    """Requested time reduction is at/beyond the kinematic pole d1/v0."""


@dataclass(frozen=True)
class IdmParams:
    """Intelligent Driver Model parameters (microscopic validation mode)."""

    v0: float = 24.0     # desired speed, m/s
    s0: float = 2.0      # minimum gap, m
    t_hw: float = 1.5    # desired time headway, s
    a: float = 1.4       # maximum acceleration, m/s^2
    b: float = 2.0       # comfortable deceleration, m/s^2
    delta: float = 4.0   # velocity exponent

    def __post_init__(self) -> None:
        for name in ("v0", "s0", "t_hw", "a", "b", "delta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IdmParams.{name} must be positive")
        if self.delta < 1:
            raise ValueError("IdmParams.delta must be >= 1")


@dataclass(frozen=True)
class FuelModel:
    """Cubic fuel-rate curve r(v) = a3*v^3 + a1*v plus platooning knobs.

    phi is the nominal fuel efficiency in L/m (32.2 L/100km by default),
    alpha the speed-adaptation fuel coefficient, eta the follower fuel
    saving fraction.  alpha defaults to a3 so that fuel over a fixed
    distance D at constant speed v has speed-dependent part alpha*D*v^2,
    consistent with the rate curve.
    """

    a3: float = 3.51e-7    # L*s^2/m^3
    a1: float = 4.07e-4    # L/m
    phi: float = 3.22e-4   # L/m
    alpha: float = 3.51e-7  # L*s^2/m^3
    eta: float = 0.1       # fraction in (0, 1)

    def __post_init__(self) -> None:
        for name in ("a3", "a1", "phi", "alpha"):
            if getattr(self, name) <= 0:
                raise ValueError(f"FuelModel.{name} must be positive")
        if not 0.0 < self.eta < 1.0:
            raise ValueError("FuelModel.eta must be in (0, 1)")


@dataclass(frozen=True)
class GreenshieldModel:
    """Linear speed-density relation v_e = v0 * (1 - k/k_j), k_c = k_j/2."""

    v0: float = 24.0
    k_j: float = 0.1       # jam density, veh/m/lane

    def __post_init__(self) -> None:
        if self.v0 <= 0 or self.k_j <= 0:
            raise ValueError("GreenshieldModel: v0 and k_j must be positive")

    @property
    def k_c(self) -> float:
        return self.k_j / 2.0

    @classmethod
    def from_critical_density(cls, v0: float, k_c: float) -> "GreenshieldModel":
        return cls(v0=v0, k_j=2.0 * k_c)


@dataclass(frozen=True)
class PlatoonParams:
    """Platoon formation headways and the follower occupancy weight."""

    tau_l: float = 7.5    # leader desired headway, s
    tau_f: float = 0.5    # intra-platoon headway, s
    tau_c: float = 5.0    # catch-up trigger headway, s
    t_s: float = 30.0     # split timer, s
    h0: float = 0.5       # intra-platoon headway in arrival bookkeeping, s

    def __post_init__(self) -> None:
        if not (0 < self.tau_f < self.tau_c < self.tau_l):
            raise ValueError("PlatoonParams requires 0 < tau_f < tau_c < tau_l")
        if self.t_s <= 0 or self.h0 <= 0:
            raise ValueError("PlatoonParams: t_s and h0 must be positive")

    @property
    def omega(self) -> float:
        """Follower road-occupancy weight; headway-proportional."""
        return self.tau_f / self.tau_l


@dataclass(frozen=True)
class CostWeights:
    """Value of time ($/s) and fuel price ($/L)."""

    w1: float = 25.8 / 3600.0
    w2: float = 0.868

    def __post_init__(self) -> None:
        if self.w1 <= 0 or self.w2 <= 0:
            raise ValueError("CostWeights must be positive")


def fuel_rate(v: float, fm: FuelModel = FuelModel()) -> float:
    """Fuel consumption rate in L/s at speed v (m/s)."""
    if v < 0:
        raise ValueError(f"speed must be nonnegative, got {v}")
    return fm.a3 * v**3 + fm.a1 * v


def equilibrium_speed(k_e: float, model: GreenshieldModel) -> float:
    """Greenshield equilibrium speed at density k_e (veh/m/lane), clamped at 0."""
    if k_e < 0:
        raise ValueError(f"density must be nonnegative, got {k_e}")
    return model.v0 * (1.0 - min(k_e, model.k_j) / model.k_j)


def idm_acceleration(v: float, gap: float | None, dv: float, p: IdmParams) -> float:
    """IDM acceleration; gap is the spacing to the leader (None if free road).

    dv is the closing speed v - v_leader; ignored when there is no leader.
    """
    if v < 0:
        raise ValueError("speed must be nonnegative")
    free = p.a * (1.0 - (v / p.v0) ** p.delta)
    if gap is None:
        return free
    if gap <= 0:
        raise ValueError(f"gap must be positive with a leader, got {gap}")
    s_star = p.s0 + v * p.t_hw + v * dv / (2.0 * math.sqrt(p.a * p.b))
    return free - p.a * (s_star / gap) ** 2


def reference_speed(u: float, d1: float, v0: float) -> float:
    """Speed that shortens the d1 traversal by u seconds: d1/(d1/v0 - u)."""
    t = d1 / v0 - u
    if t <= 0:
        raise InfeasibleTimeReductionError(
            f"time reduction {u} s >= free-flow zone time {d1 / v0} s"
        )
    return d1 / t


def delta_f1(u: float, d1: float, v0: float, alpha: float) -> float:
    """Extra fuel (L) burned over d1 for speed adaptation by u seconds."""
    v = reference_speed(u, d1, v0)
    return alpha * d1 * v**2 - alpha * d1 * v0**2


def trip_segment_cost(
    dt: float,
    v: float,
    merged_follower: bool,
    fm: FuelModel,
    w: CostWeights,
) -> tuple[float, float]:
    """(cost $, fuel L) for dt seconds at constant speed v.

    Merged followers burn (1 - eta) of the nominal fuel.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    fuel = (1.0 - fm.eta * bool(merged_follower)) * fuel_rate(v, fm) * dt
    return w.w1 * dt + w.w2 * fuel, fuel


def effective_density(
    n_alone: int,
    n_leaders: int,
    n_followers: int,
    n_background: int,
    length: float,
    lanes: int,
    pp: PlatoonParams,
) -> float:
    """Occupancy-weighted density (veh/m/lane); followers count omega each."""
    if min(n_alone, n_leaders, n_followers, n_background) < 0:
        raise ValueError("vehicle counts must be nonnegative")
    if length <= 0 or lanes <= 0:
        raise ValueError("length and lanes must be positive")
    weighted = n_alone + n_leaders + n_background + pp.omega * n_followers
    return weighted / (length * lanes)
