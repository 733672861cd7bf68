import numpy as np
import pytest

from platoonsim.value_approx import PolyCostModel, RegressionConditioningError, fit_polynomial


def poly_eval(coef, h):
    return sum(c * h**k for k, c in enumerate(coef))


class TestFitPolynomial:
    def test_planted_line(self):
        samples = [(h, 2.0 + 3.0 * h) for h in (0.0, 1.0, 2.5, 4.0)]
        coef = fit_polynomial(samples, 1)
        assert coef[0] == pytest.approx(2.0, abs=1e-9)
        assert coef[1] == pytest.approx(3.0, abs=1e-9)

    def test_planted_cubic(self):
        true = (1.0, -1.0, 0.0, 0.5)
        hs = [0.5 * i for i in range(10)]
        samples = [(h, poly_eval(true, h)) for h in hs]
        coef = fit_polynomial(samples, 3)
        for got, want in zip(coef, true):
            if want == 0.0:
                assert abs(got) < 1e-6
            else:
                assert got == pytest.approx(want, rel=1e-6)

    def test_too_few_samples(self):
        samples = [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]
        with pytest.raises(RegressionConditioningError):
            fit_polynomial(samples, 3)

    def test_duplicate_headways_rejected(self):
        samples = [(1.0, 2.0)] * 6
        with pytest.raises(RegressionConditioningError):
            fit_polynomial(samples, 2)

    def test_local_optimality(self):
        rng = np.random.default_rng(3)
        hs = rng.uniform(0, 10, size=20)
        ys = 2.0 - 0.3 * hs + 0.05 * hs**3 + rng.normal(0, 0.1, size=20)
        samples = list(zip(hs.tolist(), ys.tolist()))
        coef = fit_polynomial(samples, 3)

        def rss(c):
            return sum((y - poly_eval(c, h)) ** 2 for h, y in samples)

        base = rss(coef)
        for _ in range(20):
            delta = rng.normal(0, 1e-3, size=4)
            assert rss(coef + delta) >= base - 1e-12


class TestEstimators:
    def fitted_model(self, beta, nomerge=None):
        m = PolyCostModel(degree=len(beta) - 1)
        m.beta = np.array(beta, dtype=float)
        m._arrivals = 10_000  # past bootstrap
        if nomerge is not None:
            m.nomerge_window.extend(nomerge)
        return m

    def test_merge_estimate_linear(self):
        m = self.fitted_model([2.0, 3.0])
        assert m.estimate_merge_cost(1.0) == pytest.approx(5.0)

    def test_merge_estimate_constant(self):
        m = self.fitted_model([7.0, 0.0, 0.0, 0.0])
        for h in (0.0, 3.3, 12.0):
            assert m.estimate_merge_cost(h) == pytest.approx(7.0)

    def test_unfitted_rejected(self):
        m = PolyCostModel()
        with pytest.raises(ValueError):
            m.estimate_merge_cost(1.0)

    def test_nomerge_mean(self):
        m = self.fitted_model([0.0], nomerge=[4.0])
        assert m.estimate_nomerge_cost() == pytest.approx(4.0)
        m = self.fitted_model([0.0], nomerge=[1.0, 2.0, 3.0])
        assert m.estimate_nomerge_cost() == pytest.approx(2.0)

    def test_nomerge_mean_matches_bruteforce(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            vals = rng.uniform(-5, 5, size=int(rng.integers(1, 21))).tolist()
            m = self.fitted_model([0.0], nomerge=vals)
            assert m.estimate_nomerge_cost() == pytest.approx(sum(vals) / len(vals), abs=1e-12)

    def test_empty_nomerge_rejected(self):
        m = PolyCostModel()
        with pytest.raises(ValueError):
            m.estimate_nomerge_cost()


class TestDecide:
    def decided(self, merge_cost, nomerge_cost, h=1.0):
        m = PolyCostModel(degree=0)
        m.beta = np.array([merge_cost])
        m.nomerge_window.append(nomerge_cost)
        m._arrivals = 10_000
        return m.decide(h)

    def test_prefers_cheaper_merge(self):
        assert self.decided(3.0, 5.0) is True

    def test_prefers_cheaper_nomerge(self):
        assert self.decided(5.0, 3.0) is False

    def test_tie_merges(self):
        assert self.decided(4.0, 4.0) is True

    def test_bootstrap_alternates(self):
        m = PolyCostModel(degree=3)
        first8 = [m.decide(1.0) for _ in range(8)]
        assert first8 == [True, False] * 4


class TestRecordOutcome:
    def test_windows_are_fifo_capped(self):
        m = PolyCostModel(degree=1, window_l=4, window_y=2)
        for i in range(20):
            m.record_outcome(float(i), True, float(i))
            m.record_outcome(float(i), False, float(i))
        assert len(m.merge_window) == 5
        assert len(m.nomerge_window) == 3
        assert m.merge_window[0][0] == 15.0  # oldest evicted

    def test_nonfinite_rejected(self):
        m = PolyCostModel()
        with pytest.raises(ValueError):
            m.record_outcome(1.0, True, float("nan"))

    def test_cold_start_keeps_merge_unfitted(self):
        m = PolyCostModel(degree=3)
        for i in range(10):
            m.record_outcome(float(i), False, 1.0)
        assert m.beta is None

    def test_closed_loop_planted_world(self):
        # true merge cost a fixed cubic of h, no-merge cost constant; after the
        # bootstrap, greedy decisions should match the planted argmin
        true = (0.5, -0.4, 0.0, 0.01)
        nomerge_cost = 1.2
        m = PolyCostModel(degree=3, window_l=30, window_y=20)
        rng = np.random.default_rng(17)
        errors = 0
        n = 600
        for k in range(n):
            h = float(rng.uniform(0.0, 8.0))
            action = m.decide(h)
            cost = poly_eval(true, h) if action else nomerge_cost
            m.record_outcome(h, action, cost)
            if k >= n - 200:
                best = poly_eval(true, h) <= nomerge_cost
                errors += int(action != best)
        assert errors / 200 < 0.05
