"""Value-space approximation of the merge cost-to-go.

The merge branch is a degree-n polynomial in the predicted headway,
refit by least squares over a sliding window of the last l+1 merge
outcomes; the no-merge branch is a running average over the last y+1
no-merge outcomes.  Greedy action selection picks the smaller estimated
cost-to-go, with a forced-alternation bootstrap while either window is
still cold.

Headways are centered and scaled before building the Vandermonde matrix
(raw powers of h are badly conditioned); the solved coefficients are
mapped back so the public coefficients apply to raw headways.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np


class RegressionConditioningError(RuntimeError):
    """Design matrix is rank deficient; caller keeps the previous fit."""


def fit_polynomial(samples: list[tuple[float, float]], n: int) -> np.ndarray:
    """Least-squares polynomial coefficients (ascending, raw-headway space).

    Requires at least n+1 samples with n+1 distinct headways.  Solved via
    orthogonal decomposition (numpy lstsq) on standardized inputs, which
    minimizes the same squared residual as the normal equations.
    """
    if n < 0:
        raise ValueError("degree must be nonnegative")
    if len(samples) < n + 1:
        raise RegressionConditioningError(
            f"need at least {n + 1} samples for degree {n}, got {len(samples)}"
        )
    h = np.array([s[0] for s in samples], dtype=float)
    y = np.array([s[1] for s in samples], dtype=float)
    if len(np.unique(h)) < n + 1:
        raise RegressionConditioningError("fewer distinct headways than coefficients")
    mu = h.mean()
    sd = h.std()
    if sd == 0.0:
        sd = 1.0
    z = (h - mu) / sd
    design = np.vander(z, n + 1, increasing=True)
    beta_z, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < n + 1:
        raise RegressionConditioningError("rank-deficient design matrix")
    # map q(z) back to p(h) with z = (h - mu)/sd
    q = np.polynomial.Polynomial(beta_z)
    p = q(np.polynomial.Polynomial([-mu / sd, 1.0 / sd]))
    coef = p.coef
    if len(coef) < n + 1:
        coef = np.pad(coef, (0, n + 1 - len(coef)))
    return coef


class PolyCostModel:
    """Per-junction cost-to-go estimator for merge / no-merge actions."""

    def __init__(self, degree: int = 3, window_l: int = 30, window_y: int = 20) -> None:
        if window_l + 1 <= degree:
            raise ValueError("window_l + 1 must exceed the polynomial degree")
        self.degree = degree
        self.merge_window: deque[tuple[float, float]] = deque(maxlen=window_l + 1)
        self.nomerge_window: deque[float] = deque(maxlen=window_y + 1)
        self.beta: np.ndarray | None = None
        self.sigma2: float = 0.0
        self._arrivals = 0

    # -- estimation -----------------------------------------------------

    def estimate_merge_cost(self, h: float) -> float:
        if self.beta is None:
            raise ValueError("merge estimator not fitted yet")
        return float(np.polynomial.polynomial.polyval(h, self.beta))

    def estimate_nomerge_cost(self) -> float:
        if not self.nomerge_window:
            raise ValueError("no no-merge outcomes recorded yet")
        return sum(self.nomerge_window) / len(self.nomerge_window)

    # -- decision -------------------------------------------------------

    def decide(self, h: float) -> bool:
        """True = merge.  Bootstrap alternates actions until both windows exist."""
        self._arrivals += 1
        if self._arrivals <= 2 * (self.degree + 1):
            return self._arrivals % 2 == 1
        if self.beta is None:
            return True
        if not self.nomerge_window:
            return False
        return self.estimate_merge_cost(h) <= self.estimate_nomerge_cost()

    # -- learning -------------------------------------------------------

    def record_outcome(self, h: float, merged: bool, realized_cost: float) -> None:
        """Append a realized cost-to-go sample under the action actually taken."""
        if not math.isfinite(realized_cost) or not math.isfinite(h):
            raise ValueError("realized cost and headway must be finite")
        if merged:
            self.merge_window.append((h, realized_cost))
            if len(self.merge_window) >= self.degree + 1:
                try:
                    samples = list(self.merge_window)
                    self.beta = fit_polynomial(samples, self.degree)
                    resid = [
                        c - self.estimate_merge_cost(hh) for hh, c in samples
                    ]
                    dof = max(1, len(samples) - (self.degree + 1))
                    self.sigma2 = sum(r * r for r in resid) / dof
                except RegressionConditioningError:
                    pass  # keep previous beta
        else:
            self.nomerge_window.append(realized_cost)
