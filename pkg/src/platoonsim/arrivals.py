"""Stochastic demand generation and the discounted arrival-rate estimator.

PRNG: one numpy PCG64 stream per source, seeded from (root seed, stream
id) so arrival sequences are reproducible across runs and platforms.
Exponential variates are drawn by inverse CDF rather than the generator's
built-in method to keep the sampling algorithm explicit and stable.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PoissonSource:
    """One O-D demand stream with exponential inter-arrivals."""

    rate: float                 # veh/s
    origin: int
    destination: int
    n_total: int | None = None  # None = unbounded
    stream: int = 0             # per-source PRNG stream id

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise ValueError("PoissonSource.rate must be positive")
        if self.n_total is not None and self.n_total < 0:
            raise ValueError("PoissonSource.n_total must be nonnegative")


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent, reproducible generator for (seed, stream)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, stream))))


def sample_interarrival(source: PoissonSource, rng: np.random.Generator) -> float:
    """Exponential inter-arrival time with mean 1/rate, via inverse CDF."""
    u = rng.random()
    return -math.log1p(-u) / source.rate


class HeadwayHistory:
    """Ring buffer of the last M inter-arrival times with discount psi.

    The estimated arrival rate is [(1-psi) * sum_m psi^m * x_{k-m}]^{-1}
    over the M most recent headways (most recent first).  Before M
    headways are seen, the partial sum is rescaled by
    (1-psi^M)/(1-psi^k) so that a constant stream yields the same
    estimate from the first sample on.
    """

    def __init__(self, psi: float = 0.9, M: int = 50) -> None:
        if not 0.0 < psi < 1.0:
            raise ValueError("psi must be in (0, 1)")
        if M < 1:
            raise ValueError("M must be >= 1")
        self.psi = psi
        self.M = M
        self._buf: deque[float] = deque(maxlen=M)  # most recent last

    def __len__(self) -> int:
        return len(self._buf)

    def push(self, x: float) -> None:
        if not x > 0:
            raise ValueError(f"headway must be positive, got {x}")
        self._buf.append(x)

    def estimate(self) -> float:
        """Estimated arrival rate in veh/s."""
        k = len(self._buf)
        if k == 0:
            raise ValueError("cannot estimate from an empty history")
        psi = self.psi
        s = 0.0
        w = 1.0
        for x in reversed(self._buf):
            s += w * x
            w *= psi
        denom = (1.0 - psi) * s * (1.0 - psi**self.M) / (1.0 - psi**k)
        if denom <= 0:
            raise ValueError("degenerate headway history")
        return 1.0 / denom
