import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qedadmit import finite, revenue, sim
from qedadmit.errors import DomainError
from qedadmit.finite import ADMIT_ALL, Profile, SystemParams, Threshold
from qedadmit.revenue import FiniteRevenue
from qedadmit.sim import SimConfig


def idle_indicator():
    # s = 1: state k = 0 maps to x = -1
    return FiniteRevenue(revenue.custom(lambda x: 1.0 if x <= -0.5 else 0.0, lambda x: 0.0,
                                        check=False))


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(horizon=0.0), dict(horizon=math.inf),
                                    dict(horizon=10.0, warmup=10.0), dict(horizon=10.0, warmup=-1.0),
                                    dict(horizon=10.0, batches=9), dict(horizon=10.0, batches=12.5),
                                    dict(horizon=10.0, seed=-1), dict(horizon=10.0, seed=2 ** 64)])
    def test_rejects(self, kw):
        with pytest.raises(DomainError):
            SimConfig(**kw)

    def test_batch_length(self):
        assert SimConfig(horizon=110.0, warmup=10.0, batches=20).batch_length == 5.0


class TestRevenue:
    def test_mm1_idle(self):
        params = SystemParams(1, 0.5)
        res = sim.simulate_revenue(params, ADMIT_ALL, idle_indicator(),
                                   SimConfig(horizon=2e5, warmup=1e3, seed=7))
        mean, half = res
        assert abs(mean - 0.5) <= half
        assert half < 0.01

    def test_threshold_against_analytic(self, exp51):
        params = SystemParams(8, 0.01)
        rev = FiniteRevenue(exp51)
        exact = finite.revenue_rate(params, Threshold(3), rev)
        mean, half = sim.simulate_revenue(params, Threshold(3), rev,
                                          SimConfig(horizon=1e5, warmup=1e3, seed=3))
        assert abs(mean - exact) <= half

    def test_coverage_small(self, exp51):
        params = SystemParams(8, 0.01)
        rev = FiniteRevenue(exp51)
        exact = finite.revenue_rate(params, Threshold(3), rev)
        hits = 0
        for seed in range(20):
            mean, half = sim.simulate_revenue(params, Threshold(3), rev,
                                              SimConfig(horizon=2e4, warmup=200, seed=seed))
            hits += abs(mean - exact) <= half
        # binomial(20, 0.95) puts mass < 1e-3 below 15
        assert hits >= 15

    def test_determinism(self, exp51):
        params = SystemParams(8, 0.01)
        cfg = SimConfig(horizon=5e3, warmup=50, seed=42)
        a = sim.simulate_revenue(params, Threshold(3), FiniteRevenue(exp51), cfg)
        b = sim.simulate_revenue(params, Threshold(3), FiniteRevenue(exp51), cfg)
        assert a.mean == b.mean and a.ci95_halfwidth == b.ci95_halfwidth
        assert np.array_equal(a.batch_means, b.batch_means)
        c = sim.simulate_revenue(params, Threshold(3), FiniteRevenue(exp51),
                                 SimConfig(horizon=5e3, warmup=50, seed=43))
        assert c.mean != a.mean

    def test_profile_policy(self, exp51):
        params = SystemParams(16, 0.5)
        pol = Profile(lambda x: np.exp(-x))
        rev = FiniteRevenue(exp51)
        exact = finite.revenue_rate(params, pol, rev)
        mean, half = sim.simulate_revenue(params, pol, rev, SimConfig(horizon=5e4, warmup=500, seed=1))
        assert abs(mean - exact) <= 2 * half


class TestOccupancy:
    def test_mm1_geometric(self):
        h = sim.simulate_occupancy_hist(SystemParams(1, 0.5), ADMIT_ALL,
                                        SimConfig(horizon=1e6, warmup=1e3, seed=11))
        assert h.tv_distance <= 0.01
        assert_allclose(h.probs.sum(), 1.0, rtol=1e-12)
        assert_allclose(h.probs[:4], 0.5 ** np.arange(1, 5), atol=0.01)

    @pytest.mark.parametrize("s,tau", [(1, 0), (4, 2), (8, 3), (8, -1)])
    def test_threshold_support(self, s, tau):
        h = sim.simulate_occupancy_hist(SystemParams(s, -0.5), Threshold(tau),
                                        SimConfig(horizon=2e4, seed=5))
        assert h.probs.size - 1 <= s + tau + 1
        if tau >= 0:
            assert h.probs.size - 1 == s + tau + 1

    def test_against_exact(self):
        params = SystemParams(8, 0.01)
        h = sim.simulate_occupancy_hist(params, Threshold(3), SimConfig(horizon=1e5, warmup=1e3, seed=2))
        assert h.tv_distance <= 0.01

    def test_admission_accounting(self):
        params = SystemParams(16, 0.5)
        pol = Profile(lambda x: np.exp(-x))
        h = sim.simulate_occupancy_hist(params, pol, SimConfig(horizon=1e5, warmup=1e3, seed=9))
        p = finite.admission_vector(params, pol, h.probs.size - 1)
        top = slice(params.s, None)
        expect = float(np.dot(h.probs[top], p[top]) / h.probs[top].sum())
        assert_allclose(h.admitted_fraction, expect, atol=0.01)
        assert 0 < h.admitted_fraction < 1

    def test_loss_system_admits_nothing(self):
        h = sim.simulate_occupancy_hist(SystemParams(4, 0.0), Threshold(-1),
                                        SimConfig(horizon=5e3, seed=0))
        assert h.admitted_fraction == 0.0
        assert h.probs.size - 1 <= 4
