"""Single-edge microscopic validation: IDM catch-up and split timing.

Used by regression tests only; the simulator itself is mesoscopic.  A
follower whose time headway drops below tau_c enters catch-up mode
(raised desired speed, intra-platoon headway target) and closes in until
its headway is at most tau_f.  A platoon member whose headway stays
above tau_f for longer than t_s is split off.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dynamics import IdmParams, PlatoonParams, idm_acceleration


@dataclass
class CatchUpResult:
    caught_up: bool
    t_catch: float          # first time the headway is <= tau_f
    min_headway: float


def simulate_catch_up(
    idm: IdmParams,
    pp: PlatoonParams,
    initial_headway: float | None = None,
    catch_up_speed_factor: float = 1.2,
    dt: float = 0.05,
    t_max: float = 600.0,
) -> CatchUpResult:
    """Integrate a follower chasing a constant-speed leader.

    The leader cruises at idm.v0; the follower starts initial_headway
    seconds behind (default tau_c) at v0 and, while in catch-up mode,
    tracks a desired speed of catch_up_speed_factor * v0 with the
    intra-platoon headway target tau_f.
    """
    if initial_headway is None:
        initial_headway = pp.tau_c
    # the catch-up headway target sits below tau_f: with t_hw = tau_f the IDM
    # equilibrium time headway is tau_f + s0/v, which never crosses tau_f
    catch_params = IdmParams(
        v0=catch_up_speed_factor * idm.v0,
        s0=idm.s0,
        t_hw=0.5 * pp.tau_f,
        a=idm.a,
        b=idm.b,
        delta=idm.delta,
    )
    x_lead = initial_headway * idm.v0
    x = 0.0
    v = idm.v0
    t = 0.0
    min_headway = initial_headway
    while t < t_max:
        gap = x_lead - x
        headway = gap / max(v, 1e-9)
        min_headway = min(min_headway, headway)
        if headway <= pp.tau_f:
            return CatchUpResult(True, t, min_headway)
        acc = idm_acceleration(v, gap, v - idm.v0, catch_params)
        v = max(0.0, v + acc * dt)
        x += v * dt
        x_lead += idm.v0 * dt
        t += dt
    return CatchUpResult(False, t_max, min_headway)


def first_split_time(
    samples: list[tuple[float, float]], tau_f: float, t_s: float
) -> float | None:
    """First time a headway has stayed above tau_f for t_s seconds.

    samples are (time, headway) in increasing time order; returns None if
    the split timer never expires.
    """
    timer_start: float | None = None
    for t, h in samples:
        if h > tau_f:
            if timer_start is None:
                timer_start = t
            elif t - timer_start >= t_s:
                return t
        else:
            timer_start = None
    return None
