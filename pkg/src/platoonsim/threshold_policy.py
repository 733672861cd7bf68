"""Renewal-MDP threshold policy for merge coordination under Poisson arrivals.

The merge reward for a time reduction u (u < d1/v0) is

    G(u) = w1*u + w2*(alpha*d1*v0^2 - alpha*d1*v(u)^2 + eta*phi*d2),
    v(u) = d1 / (d1/v0 - u),

the net saving of merging relative to cruising through the coordinating
zone at v0 without a platoon.  The optimal policy is threshold shaped:
merge (u = h) when the predicted headway h <= theta, otherwise apply the
constant anticipatory time reduction c.  (theta, c) and the value
constant Z solve a three-equation system; equation 2 fixes
Z = G(theta)/(1 - gamma) and is eliminated analytically, leaving a 2-D
root-finding problem handled by a bracketing scan plus damped Newton.

A discretized value-iteration oracle over the per-arrival discounted MDP
(headway state, exponential inter-arrival mixing) independently verifies
the threshold shape and the solved (theta, c).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import CostWeights, FuelModel, InfeasibleTimeReductionError, delta_f1

# actions are restricted to u in [u_min, UCAP_FRACTION * d1/v0]; the lower
# bound keeps reference speeds at or above v0/2
UCAP_FRACTION = 0.9


class ThresholdSolverError(RuntimeError):
    """No root found; carries the best iterate and its residuals."""

    def __init__(self, message: str, theta: float, c: float, residuals: tuple[float, float, float]):
        super().__init__(message)
        self.theta = theta
        self.c = c
        self.residuals = residuals


class InfeasiblePolicyError(RuntimeError):
    """Solved threshold is not kinematically reachable (theta >= d1/v0)."""


class NonThresholdPolicyError(RuntimeError):
    """Oracle found a merge-optimal set that is not a prefix interval."""


@dataclass(frozen=True)
class PolicyParams:
    """Evaluation context binding costs, fuel, geometry and arrival process."""

    w: CostWeights
    fm: FuelModel
    d1: float
    d2: float
    v0: float
    gamma: float
    lam: float

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.d1 <= 0 or self.d2 < 0 or self.v0 <= 0:
            raise ValueError("d1, v0 must be positive and d2 nonnegative")

    @property
    def rho(self) -> float:
        return self.lam * (1.0 - self.gamma)

    @property
    def u_min(self) -> float:
        return -self.d1 / self.v0

    @property
    def u_cap(self) -> float:
        return UCAP_FRACTION * self.d1 / self.v0

    @property
    def u_star(self) -> float:
        """Argmax of G (root of G'): slight deceleration maximizing the reward."""
        v_star = (self.w.w1 / (2.0 * self.w.w2 * self.fm.alpha)) ** (1.0 / 3.0)
        return self.d1 / self.v0 - self.d1 / v_star


@dataclass(frozen=True)
class ThresholdSolution:
    theta: float
    c: float
    z: float
    residuals: tuple[float, float, float]
    iterations: int


def merging_reward(u: float, p: PolicyParams) -> tuple[float, float]:
    """(G(u), dG/du); raises when u is at/beyond the kinematic pole."""
    t = p.d1 / p.v0 - u
    if t <= 0:
        raise InfeasibleTimeReductionError(f"u={u} not below d1/v0={p.d1 / p.v0}")
    v = p.d1 / t
    g = p.w.w1 * u + p.w.w2 * (
        p.fm.alpha * p.d1 * p.v0**2 - p.fm.alpha * p.d1 * v**2 + p.fm.eta * p.fm.phi * p.d2
    )
    gp = p.w.w1 - 2.0 * p.w.w2 * p.fm.alpha * v**3
    return g, gp


def relative_cost(u: float, merged: bool, p: PolicyParams) -> float:
    """-w1*u + w2*(dF1(u) - eta*phi*d2*1{merged}); equals -G(u) on merges."""
    rc = -p.w.w1 * u + p.w.w2 * delta_f1(u, p.d1, p.v0, p.fm.alpha)
    if merged:
        rc -= p.w.w2 * p.fm.eta * p.fm.phi * p.d2
    return rc


def evaluate_policy(theta: float, c: float, h: float) -> float:
    """u = h (merge) when h <= theta, else the constant reduction c."""
    return h if h <= theta else c


# ---------------------------------------------------------------------------
# quadrature

def _adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_subdiv: int = 10_000) -> float:
    """Adaptive Simpson with absolute tolerance and a subdivision cap."""
    if a == b:
        return 0.0
    sign = 1.0
    if a > b:
        a, b, sign = b, a, -1.0
    count = [0]

    def rec(x0, f0, x2, f2, x1, f1, whole, tol):
        xl, xr = 0.5 * (x0 + x1), 0.5 * (x1 + x2)
        fl, fr = f(xl), f(xr)
        left = (x1 - x0) * (f0 + 4.0 * fl + f1) / 6.0
        right = (x2 - x1) * (f1 + 4.0 * fr + f2) / 6.0
        err = left + right - whole
        count[0] += 1
        if abs(err) <= 15.0 * tol or count[0] >= max_subdiv:
            return left + right + err / 15.0
        half = 0.5 * tol
        return rec(x0, f0, x1, f1, xl, fl, left, half) + rec(x1, f1, x2, f2, xr, fr, right, half)

    m = 0.5 * (a + b)
    fa, fm_, fb = f(a), f(m), f(b)
    whole = (b - a) * (fa + 4.0 * fm_ + fb) / 6.0
    return sign * rec(a, fa, b, fb, m, fm_, whole, tol)


def integral_term(p: PolicyParams, c: float, theta: float, tol: float = 1e-10) -> float:
    """int_c^theta e^{-lam(1-gamma)t} (G'(t) - lam*G(t)) dt by adaptive Simpson."""
    rho, lam, w1, d1 = p.rho, p.lam, p.w.w1, p.d1
    b = p.w.w2 * p.fm.alpha * d1
    k = p.w.w2 * (p.fm.alpha * d1 * p.v0**2 + p.fm.eta * p.fm.phi * p.d2)
    t0 = d1 / p.v0
    exp = math.exp

    def f(t: float) -> float:
        v = d1 / (t0 - t)
        v2 = v * v
        return exp(-rho * t) * (w1 - 2.0 * b * v2 * v / d1 - lam * (w1 * t + k - b * v2))

    return _adaptive_simpson(f, c, theta, tol)


# ---------------------------------------------------------------------------
# equation system

def _residuals(p: PolicyParams, theta: float, c: float,
               quad_tol: float = 1e-10) -> tuple[float, float, float]:
    g_theta, _ = merging_reward(theta, p)
    g_c, gp_c = merging_reward(c, p)
    g0, _ = merging_reward(0.0, p)
    z = g_theta / (1.0 - p.gamma)
    rho = p.rho
    integral = integral_term(p, c, theta, quad_tol)
    r1 = z - math.exp(rho * theta) * (integral + (z + g0) * math.exp(-rho * c))
    r2 = g_theta + p.gamma * z - z  # zero by construction of z
    r3 = gp_c - p.lam * g_c + rho * (z + g0)
    return r1, r2, r3


def _theta_given_c(p: PolicyParams, c: float) -> float | None:
    """Theta implied by equations 2+3 for a trial c.

    Equation 3 fixes Z = (lam*G(c) - G'(c))/rho - G(0); equation 2 then
    requires G(theta) = (1-gamma)*Z, solved by bisection on the strictly
    decreasing branch of G over [u_star, u_cap].  None when the target
    reward level is outside G's range on that branch.
    """
    g_c, gp_c = merging_reward(c, p)
    g0, _ = merging_reward(0.0, p)
    z = (p.lam * g_c - gp_c) / p.rho - g0
    target = (1.0 - p.gamma) * z
    lo = max(p.u_star, p.u_min) + 1e-9
    hi = p.u_cap
    if lo >= hi:
        return None
    g_lo, _ = merging_reward(lo, p)
    g_hi, _ = merging_reward(hi, p)
    if not (g_hi <= target <= g_lo):
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g_mid, _ = merging_reward(mid, p)
        if g_mid >= target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    return 0.5 * (lo + hi)


def _bracket_theta_fixed_c(p: PolicyParams, c: float, n_scan: int = 48,
                           quad_tol: float = 1e-8,
                           theta_warm: float | None = None):
    """Root of residual 1 over theta at a fixed c.

    With a warm theta, a secant iteration usually lands in a handful of
    evaluations; otherwise (or on failure) a sign-change scan + bisection.
    """
    lo = max(p.u_star, p.u_min) + 1e-6
    if lo >= p.u_cap:
        return None

    def bisect(a: float, ra: float, b: float) -> float:
        for _ in range(80):
            mid = 0.5 * (a + b)
            rm = _residuals(p, mid, c, quad_tol)[0]
            if ra * rm <= 0.0:
                b = mid
            else:
                a, ra = mid, rm
            if b - a < 1e-12:
                break
        return 0.5 * (a + b)

    if theta_warm is not None and lo < theta_warm < p.u_cap:
        t_mid = theta_warm
        r_mid = _residuals(p, t_mid, c, quad_tol)[0]
        for width in (0.05, 0.2, 1.0, 4.0):
            a = max(lo, t_mid - width)
            b = min(p.u_cap, t_mid + width)
            ra = _residuals(p, a, c, quad_tol)[0]
            if ra * r_mid <= 0.0:
                return bisect(a, ra, t_mid)
            rb = _residuals(p, b, c, quad_tol)[0]
            if r_mid * rb <= 0.0:
                return bisect(t_mid, r_mid, b)

    thetas = np.linspace(lo, p.u_cap, n_scan)
    prev = None
    for th in thetas:
        r1 = _residuals(p, th, c, quad_tol)[0]
        if prev is not None and prev[1] * r1 <= 0.0:
            a, ra = prev
            b = th
            for _ in range(80):
                mid = 0.5 * (a + b)
                rm = _residuals(p, mid, c, quad_tol)[0]
                if ra * rm <= 0.0:
                    b = mid
                else:
                    a, ra = mid, rm
                if b - a < 1e-12:
                    break
            return 0.5 * (a + b)
        prev = (th, r1)
    return None


def _seed_by_c_scan(p: PolicyParams, n_scan: int = 48, quad_tol: float = 1e-8):
    """1-D scan in c: theta(c) from equations 2+3, sign change of residual 1."""
    lo = p.u_min + 1e-9
    hi = min(p.u_star, p.u_cap) - 1e-6
    if hi <= lo:
        return None, None, None
    cs = np.linspace(lo, hi, n_scan)
    prev = None
    best = None  # (|r1|, theta, c)
    for c in cs:
        th = _theta_given_c(p, c)
        if th is None:
            prev = None
            continue
        r1 = _residuals(p, th, c, quad_tol)[0]
        if best is None or abs(r1) < best[0]:
            best = (abs(r1), th, c)
        if prev is not None and prev[1] * r1 <= 0.0:
            a, ra = prev
            b = c
            for _ in range(60):
                mid = 0.5 * (a + b)
                tm = _theta_given_c(p, mid)
                if tm is None:
                    break
                rm = _residuals(p, tm, mid, quad_tol)[0]
                if ra * rm <= 0.0:
                    b = mid
                else:
                    a, ra = mid, rm
                if b - a < 1e-11:
                    break
            c_seed = 0.5 * (a + b)
            th_seed = _theta_given_c(p, c_seed)
            if th_seed is not None:
                return th_seed, c_seed, best
        prev = (c, r1)
    return None, None, best


def _newton_polish(p: PolicyParams, theta0: float, c0: float, tol: float):
    """Damped Newton on (residual 1, residual 3); returns (x, r, iters, ok)."""
    x = np.array([theta0, c0], dtype=float)
    r = np.array(_residuals(p, x[0], x[1]))[[0, 2]]
    lo, hi = p.u_min + 1e-9, p.u_cap
    iterations = 0
    for iterations in range(1, 41):
        if float(np.max(np.abs(r))) < tol:
            return x, r, iterations, True
        jac = np.empty((2, 2))
        for j in range(2):
            dx = 1e-7 * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += dx
            rp = np.array(_residuals(p, xp[0], xp[1]))[[0, 2]]
            jac[:, j] = (rp - r) / dx
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return x, r, iterations, False
        norm0 = float(np.max(np.abs(r)))
        t = 1.0
        improved = False
        for _ in range(30):
            xn = np.clip(x + t * step, lo, hi)
            rn = np.array(_residuals(p, xn[0], xn[1]))[[0, 2]]
            if float(np.max(np.abs(rn))) < norm0:
                improved = True
                break
            t *= 0.5
        if not improved:
            return x, r, iterations, float(np.max(np.abs(r))) < tol
        x, r = xn, rn
    return x, r, iterations, float(np.max(np.abs(r))) < tol


def solve_threshold(p: PolicyParams, tol: float = 1e-9,
                    x0: tuple[float, float] | None = None) -> ThresholdSolution:
    """Solve the three-equation system for (theta, c, Z).

    Equation 2 is eliminated analytically (Z = G(theta)/(1-gamma)).  The
    remaining system is seeded by a 1-D scan: equation 3 maps a trial c
    to Z, equation 2 maps Z back to theta on G's decreasing branch, and
    residual 1 flips sign at the root.  Damped Newton with a numeric
    Jacobian then polishes (theta, c) to tolerance.  An optional warm
    start x0 = (theta, c) skips the scan when Newton converges from it.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")

    iterations = 0
    x = None
    if x0 is not None:
        lo, hi = p.u_min + 1e-6, p.u_cap - 1e-9
        th_w = min(max(x0[0], lo), hi)
        c_w = min(max(x0[1], lo), min(p.u_star, hi))
        x, r, iterations, ok = _newton_polish(p, th_w, c_w, tol)
        if not ok:
            x = None

    if x is None:
        theta0, c0, best = _seed_by_c_scan(p)
        if theta0 is None:
            if best is None:
                raise ThresholdSolverError(
                    "equations 2+3 admit no feasible (theta, c) pairing",
                    math.nan, math.nan, (math.nan, math.nan, math.nan),
                )
            _, bt, bc = best
            raise ThresholdSolverError(
                "residual 1 has no sign change over the feasible c range",
                bt, bc, _residuals(p, bt, bc),
            )
        x, r, iterations, ok = _newton_polish(p, theta0, c0, tol)
        if not ok:
            raise ThresholdSolverError(
                "Newton iteration did not reach tolerance",
                float(x[0]), float(x[1]),
                _residuals(p, float(x[0]), float(x[1])),
            )

    theta, c = float(x[0]), float(x[1])
    residuals = _residuals(p, theta, c)
    if max(abs(residuals[0]), abs(residuals[2])) > tol:
        raise ThresholdSolverError(
            "Newton iteration did not reach tolerance", theta, c, residuals
        )
    if theta >= p.d1 / p.v0:
        raise InfeasiblePolicyError(f"theta={theta} >= d1/v0={p.d1 / p.v0}")
    g_theta, _ = merging_reward(theta, p)
    z = g_theta / (1.0 - p.gamma)
    return ThresholdSolution(theta, c, z, residuals, iterations)


def solve_threshold_constrained(
    p: PolicyParams, tol: float = 1e-9,
    x0: tuple[float, float] | None = None,
    clamped_theta_warm: float | None = None,
    prefer_clamped: bool = False,
) -> tuple[float, float, str]:
    """(theta, c, kind) with graceful handling of boundary regimes.

    kind is 'exact' for an interior system root, 'clamped_c' when the
    anticipatory deceleration hits the kinematic floor u_min (the theta
    equation is then re-solved with c fixed at the floor, matching the
    constrained-action optimum), or 'no_merge' when the platoon benefit
    is too small to support any merge threshold.  prefer_clamped tries a
    warm-started clamped solve before the interior system; the regimes
    join continuously at c = u_min, so a stale preference only shifts
    the solution by the regime-boundary gap.
    """
    c_floor = p.u_min + 1e-9

    def clamped_theta() -> float | None:
        theta0 = _bracket_theta_fixed_c(p, c_floor, theta_warm=clamped_theta_warm)
        if theta0 is None:
            return None
        # a clamped threshold is only meaningful while merging at it still
        # pays; spurious residual-1 roots with G(theta) <= 0 arise when the
        # platoon benefit is tiny
        if merging_reward(theta0, p)[0] <= 0.0:
            return None
        return theta0

    if prefer_clamped:
        theta0 = clamped_theta()
        if theta0 is not None:
            return theta0, c_floor, "clamped_c"

    try:
        sol = solve_threshold(p, tol, x0=x0)
        return sol.theta, sol.c, "exact"
    except (ThresholdSolverError, InfeasiblePolicyError):
        pass

    if not prefer_clamped:
        theta0 = clamped_theta()
        if theta0 is not None:
            return theta0, c_floor, "clamped_c"
    # no threshold supports merging (e.g. d2 ~ 0): never merge, keep v0
    return p.u_min - 1.0, 0.0, "no_merge"


# ---------------------------------------------------------------------------
# value-iteration oracle

@dataclass(frozen=True)
class OracleResult:
    theta: float
    c: float
    grid: np.ndarray
    values: np.ndarray
    iterations: int


def value_iteration_oracle(
    p: PolicyParams,
    h_max: float | None = None,
    dh: float = 0.05,
    u_grid: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 5000,
) -> OracleResult:
    """Brute-force check of the threshold policy on a discretized headway MDP.

    State: predicted headway h on a grid over [u_min, h_max].  Actions:
    merge (u = h, feasible while h <= u_cap) or a non-merge time
    reduction from u_grid.  Stage reward is G(h) for merges and
    G(u) - G(0) otherwise; the next headway is x' + u with
    x' ~ Exp(lam), truncated at h_max where the value is pinned to the
    non-merge constant (tail mass < e^-20 at the default h_max = 20/lam).
    The expectation over x' is evaluated exactly for a piecewise-linear
    value function, cell by cell.

    Returns the largest merge-optimal headway theta*, the best non-merge
    action c*, and the converged value table.  Raises
    NonThresholdPolicyError if the merge-optimal set is not a prefix
    interval of the grid.
    """
    if dh <= 0:
        raise ValueError("dh must be positive")
    if h_max is None:
        h_max = 20.0 / p.lam
    if u_grid is None:
        u_grid = np.linspace(p.u_min, p.u_cap, 2001)
    u_grid = np.asarray(u_grid, dtype=float)
    if u_grid.min() < p.u_min - 1e-12 or u_grid.max() > p.d1 / p.v0:
        raise ValueError("u_grid must lie within (u_min, d1/v0)")

    n = int(round((h_max - p.u_min) / dh)) + 1
    grid = p.u_min + dh * np.arange(n)
    g0, _ = merging_reward(0.0, p)

    def g_vec(u: np.ndarray) -> np.ndarray:
        v = p.d1 / (p.d1 / p.v0 - u)
        return p.w.w1 * u + p.w.w2 * (
            p.fm.alpha * p.d1 * (p.v0**2 - v**2) + p.fm.eta * p.fm.phi * p.d2
        )

    feasible = grid <= p.u_cap + 1e-12
    g_merge = np.full(n, -np.inf)
    g_merge[feasible] = g_vec(grid[feasible])
    g_act = g_vec(u_grid)

    # exact exponential mass over one grid cell against a linear interpolant:
    # int_0^dh lam e^{-lam x} dx pieces for the left/right nodes
    e = math.exp(-p.lam * dh)
    i0 = 1.0 - e
    i1 = (1.0 - e) / (p.lam * dh) - e

    values = np.zeros(n)
    v_merge = np.full(n, -np.inf)
    nonmerge_val = 0.0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        a = ((i0 - i1) * values[:-1] + i1 * values[1:]).tolist()
        w = [0.0] * n
        w[-1] = values[-1]
        acc = values[-1]
        for i in range(n - 2, -1, -1):
            acc = a[i] + e * acc
            w[i] = acc
        w = np.asarray(w)
        w_actions = np.interp(u_grid, grid, w)
        nonmerge_val = float(np.max(g_act - g0 + p.gamma * w_actions))
        v_merge = g_merge + p.gamma * w
        new_values = np.maximum(v_merge, nonmerge_val)
        delta = float(np.max(np.abs(new_values - values)))
        values = new_values
        if delta < tol:
            break

    merge_mask = v_merge >= nonmerge_val
    idx = np.flatnonzero(merge_mask)
    if idx.size == 0:
        raise NonThresholdPolicyError("merging is never optimal on the grid")
    if not merge_mask[: idx[-1] + 1].all():
        raise NonThresholdPolicyError("merge-optimal set is not a prefix interval")
    theta = float(grid[idx[-1]])
    c = float(u_grid[int(np.argmax(g_act - g0 + p.gamma * np.interp(u_grid, grid, w)))])
    return OracleResult(theta, c, grid, values, iterations)
