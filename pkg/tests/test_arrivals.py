import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from platoonsim.arrivals import HeadwayHistory, PoissonSource, make_rng, sample_interarrival


class TestSampling:
    def test_sample_mean(self):
        src = PoissonSource(rate=0.06, origin=1, destination=2)
        rng = make_rng(123, 0)
        xs = [sample_interarrival(src, rng) for _ in range(100_000)]
        assert np.mean(xs) == pytest.approx(1.0 / 0.06, rel=0.02)

    def test_determinism(self):
        src = PoissonSource(rate=0.06, origin=1, destination=2, stream=3)
        a = [sample_interarrival(src, make_rng(9, 3)) for _ in range(1)]
        xs1 = []
        rng = make_rng(9, 3)
        xs1 = [sample_interarrival(src, rng) for _ in range(1000)]
        rng = make_rng(9, 3)
        xs2 = [sample_interarrival(src, rng) for _ in range(1000)]
        assert xs1 == xs2

    def test_streams_differ(self):
        src = PoissonSource(rate=0.06, origin=1, destination=2)
        assert sample_interarrival(src, make_rng(9, 0)) != sample_interarrival(src, make_rng(9, 1))

    def test_rate_scaling(self):
        n = 50_000
        rng = make_rng(5, 0)
        mean1 = np.mean([sample_interarrival(PoissonSource(0.05, 1, 2), rng) for _ in range(n)])
        rng = make_rng(5, 0)
        mean2 = np.mean([sample_interarrival(PoissonSource(0.10, 1, 2), rng) for _ in range(n)])
        assert mean2 == pytest.approx(mean1 / 2.0, rel=0.02)

    def test_rate_validation(self):
        with pytest.raises(ValueError):
            PoissonSource(rate=0.0, origin=1, destination=2)


class TestArrivalRateEstimator:
    def test_constant_headways_closed_form(self):
        hist = HeadwayHistory(psi=0.9, M=50)
        for _ in range(50):
            hist.push(10.0)
        expected = 1.0 / (10.0 * (1.0 - 0.9**50))
        assert hist.estimate() == pytest.approx(expected, abs=1e-12)

    def test_partial_window_matches_constant_stream(self):
        # the partial normalization makes early estimates equal the full-window
        # constant-stream value from the very first sample
        hist = HeadwayHistory(psi=0.9, M=50)
        hist.push(10.0)
        expected = 1.0 / (10.0 * (1.0 - 0.9**50))
        assert hist.estimate() == pytest.approx(expected, abs=1e-12)

    def test_single_step_window(self):
        for psi in (0.1, 0.5, 0.9):
            hist = HeadwayHistory(psi=psi, M=1)
            hist.push(7.0)
            assert hist.estimate() == pytest.approx(1.0 / ((1.0 - psi) * 7.0), abs=1e-12)

    def test_matches_bruteforce_sum(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            psi = rng.uniform(0.2, 0.95)
            m_steps = int(rng.integers(1, 40))
            hist = HeadwayHistory(psi=psi, M=m_steps)
            xs = rng.uniform(0.5, 30.0, size=int(rng.integers(1, 60)))
            for x in xs:
                hist.push(float(x))
            window = list(xs[-m_steps:])[::-1]  # most recent first
            s = sum((1.0 - psi) * psi**m * x for m, x in enumerate(window))
            k = len(window)
            s *= (1.0 - psi**m_steps) / (1.0 - psi**k)
            assert hist.estimate() == pytest.approx(1.0 / s, rel=1e-12)

    @given(st.floats(min_value=0.1, max_value=10.0))
    @settings(max_examples=30)
    def test_homogeneity(self, scale):
        base = [3.0, 7.0, 5.0, 11.0]
        h1 = HeadwayHistory(psi=0.8, M=10)
        h2 = HeadwayHistory(psi=0.8, M=10)
        for x in base:
            h1.push(x)
            h2.push(x * scale)
        assert h2.estimate() == pytest.approx(h1.estimate() / scale, rel=1e-9)

    def test_long_run_median_near_truth(self):
        lam = 0.05
        rng = make_rng(21, 0)
        src = PoissonSource(lam, 1, 2)
        hist = HeadwayHistory(psi=0.9, M=50)
        estimates = []
        for _ in range(10_000):
            hist.push(sample_interarrival(src, rng))
            estimates.append(hist.estimate())
        target = lam / (1.0 - 0.9**50)
        assert np.median(estimates[100:]) == pytest.approx(target, rel=0.15)

    def test_empty_history_rejected(self):
        with pytest.raises(ValueError):
            HeadwayHistory().estimate()

    def test_nonpositive_headway_rejected(self):
        hist = HeadwayHistory()
        with pytest.raises(ValueError):
            hist.push(0.0)

    def test_window_capped_at_m(self):
        hist = HeadwayHistory(psi=0.9, M=5)
        for i in range(20):
            hist.push(1.0 + i)
        assert len(hist) == 5
