import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import gammaln

from qedadmit import finite, limit, revenue, solver
from qedadmit.errors import DivergenceError, DomainError, WindowWarning
from qedadmit.finite import (ADMIT_ALL, Profile, SystemParams, Threshold, capacity_policy)
from qedadmit.revenue import FiniteRevenue

from conftest import constant_profile


def params_with_rho(s, rho):
    return SystemParams(s, (1.0 - rho) * math.sqrt(s))


def generator_oracle(params, policy, k_max):
    """Stationary law by solving ``pi Q = 0`` on ``0..k_max`` with a dense solver."""
    s, lam = params.s, params.lam
    n = k_max + 1
    Q = np.zeros((n, n))
    for k in range(n):
        if k + 1 < n:
            p = 1.0 if k < s else float(policy.step_probability(s, np.array([k - s]))[0])
            Q[k, k + 1] = lam * p
        if k > 0:
            Q[k, k - 1] = min(k, s)
        Q[k, k] = -Q[k].sum()
    A = np.vstack([Q.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    return np.linalg.lstsq(A, b, rcond=None)[0]


class TestSystemParams:
    def test_derived(self):
        p = SystemParams(16, 0.5)
        assert p.lam == 14.0 and p.rho == 0.875

    @pytest.mark.parametrize("s,g", [(0, 0.1), (4, 2.0), (4, 3.0), (2.5, 0.1), (4, math.nan)])
    def test_invalid(self, s, g):
        with pytest.raises(DomainError):
            SystemParams(s, g)


class TestPolicies:
    def test_threshold(self):
        pol = Threshold(2)
        assert_allclose(pol.cumulative(5, np.arange(5)), [1, 1, 1, 0, 0])
        assert pol.support(5) == 3
        with pytest.raises(DomainError):
            Threshold(-2)

    def test_capacity(self):
        assert capacity_policy(3) == Threshold(2)
        assert capacity_policy(0) == Threshold(-1)
        with pytest.raises(DomainError):
            capacity_policy(-1)

    def test_threshold_matches_indicator_profile(self):
        s, eta = 49, 1.3
        tau = math.floor(eta * math.sqrt(s))
        prof = Profile(lambda x: (np.asarray(x) <= eta).astype(float), support_x=eta)
        n = np.arange(30)
        assert_allclose(prof.cumulative(s, n), Threshold(tau).cumulative(s, n))

    def test_step_probability(self):
        prof = Profile(lambda x: np.exp(-np.asarray(x)))
        p = prof.step_probability(4, np.arange(6))
        assert_allclose(p[0], 1.0)
        assert_allclose(p[1:], math.exp(-0.5))

    def test_profile_range(self):
        with pytest.raises(DomainError):
            Profile(lambda x: 2.0 + 0 * np.asarray(x)).cumulative(4, np.arange(3))


class TestErlangB:
    @pytest.mark.parametrize("s,a,expected", [(1, 1.0, 0.5), (2, 1.0, 0.2), (0, 3.0, 1.0)])
    def test_examples(self, s, a, expected):
        assert_allclose(finite.erlang_b(s, a), expected, rtol=1e-15)

    @pytest.mark.parametrize("s,a", [(5, 3.2), (40, 38.0), (150, 140.0)])
    def test_direct_sum(self, s, a):
        k = np.arange(s + 1)
        lw = k * math.log(a) - gammaln(k + 1)
        w = np.exp(lw - lw.max())
        assert_allclose(finite.erlang_b(s, a), w[-1] / w.sum(), rtol=1e-12)

    def test_invalid(self):
        with pytest.raises(DomainError):
            finite.erlang_b(2, 0.0)


class TestFSeries:
    def test_geometric(self):
        assert_allclose(finite.f_series(params_with_rho(1, 0.5), Threshold(3)), 0.9375, rtol=1e-15)
        assert_allclose(finite.f_series(params_with_rho(1, 0.9), Threshold(0)), 0.9, rtol=1e-15)

    def test_overloaded_threshold_is_finite(self):
        p = SystemParams(9, -1.0)
        assert_allclose(finite.f_series(p, Threshold(4)), sum(p.rho ** (n + 1) for n in range(5)))

    def test_profile_against_long_sum(self):
        p = SystemParams(100, 0.5)
        n = np.arange(1_000_000)
        oracle = np.sum(np.exp(-n / 10.0) * p.rho ** (n + 1))
        val = finite.f_series(p, Profile(lambda x: np.exp(-np.asarray(x))))
        assert_allclose(val, oracle, rtol=1e-13)

    def test_divergence(self):
        with pytest.raises(DivergenceError):
            finite.f_series(SystemParams(4, 0.0), ADMIT_ALL)
        with pytest.raises(DivergenceError):
            finite.f_series(SystemParams(4, -0.5), ADMIT_ALL)

    def test_erlang_identity(self):
        # pi(s) = 1 / (1/B_s + F_s)
        p = SystemParams(30, 0.4)
        pol = Threshold(7)
        dist = finite.stationary_distribution(p, pol)
        expect = 1.0 / (1.0 / finite.erlang_b(p.s, p.lam) + finite.f_series(p, pol))
        assert_allclose(dist.probs[p.s], expect, rtol=1e-12)


class TestStationary:
    def test_mm1(self):
        dist = finite.stationary_distribution(params_with_rho(1, 0.5), ADMIT_ALL)
        k = dist.k
        assert_allclose(dist.probs, 0.5 ** k * 0.5, rtol=1e-12, atol=1e-300)
        assert dist.tail_bound < 1e-15

    def test_four_state_oracle(self):
        p = params_with_rho(2, 0.5)
        dist = finite.stationary_distribution(p, Threshold(0))
        assert len(dist) == 4
        assert_allclose(dist.probs, generator_oracle(p, Threshold(0), 3), rtol=1e-12)

    @pytest.mark.parametrize("s,g,pol", [
        (5, 0.3, Threshold(4)), (40, -1.0, Threshold(12)), (64, 0.01, capacity_policy(8)),
        (20, 0.7, Profile(lambda x: np.exp(-np.asarray(x)))), (1, 0.2, ADMIT_ALL)])
    def test_balance_and_normalization(self, s, g, pol):
        p = SystemParams(s, g)
        dist = finite.stationary_distribution(p, pol)
        pi = dist.probs
        assert_allclose(pi.sum(), 1.0, rtol=1e-12)
        assert np.all(pi >= 0)
        adm = finite.admission_vector(p, pol, dist.k_trunc)
        k = dist.k[:-1]
        lhs = p.lam * adm[:-1] * pi[:-1]
        rhs = np.minimum(k + 1, s) * pi[1:]
        mask = lhs > 1e-300
        assert_allclose(lhs[mask], rhs[mask], rtol=1e-12)

    def test_dense_oracle(self):
        p = SystemParams(12, 0.8)
        pol = Threshold(5)
        dist = finite.stationary_distribution(p, pol)
        assert_allclose(dist.probs, generator_oracle(p, pol, dist.k_trunc), rtol=1e-10)

    def test_threshold_support(self):
        p = SystemParams(10, 0.2)
        dist = finite.stationary_distribution(p, Threshold(3))
        assert dist.k_trunc == 10 + 3 + 1 and dist.tail_bound == 0.0

    def test_large_s(self):
        p = SystemParams(100_000, 0.5)
        dist = finite.stationary_distribution(p, capacity_policy(300))
        assert_allclose(dist.probs.sum(), 1.0, rtol=1e-12)
        assert np.all(np.isfinite(dist.probs))


class TestRevenueRate:
    def test_constant(self):
        rev = FiniteRevenue(constant_profile())
        for pol in (Threshold(2), ADMIT_ALL):
            assert_allclose(finite.revenue_rate(SystemParams(6, 0.5), pol, rev), 1.0, rtol=1e-14)

    def test_idle_probability(self):
        dist = finite.stationary_distribution(params_with_rho(1, 0.5), ADMIT_ALL)
        assert_allclose(dist.probs[0], 0.5, rtol=1e-14)

    def test_curve_matches_direct(self, exp51):
        p = SystemParams(25, 0.3)
        rev = FiniteRevenue(exp51)
        curve = finite.threshold_revenue_curve(p, rev, 20)
        direct = [finite.threshold_revenue(p, t, rev) for t in range(21)]
        assert_allclose(curve, direct, rtol=1e-13)

    def test_limit_at_eta_one(self, exp51):
        p = SystemParams(256, 0.01)
        val = finite.threshold_revenue(p, 16, FiniteRevenue(exp51))
        assert abs(val - limit.limit_revenue_threshold(exp51, 0.01, 1.0)) <= 5e-3

    def test_error_shrinks_with_s(self, exp51):
        lim = limit.limit_revenue_threshold(exp51, 0.01, 1.0)
        errs = [abs(finite.threshold_revenue(SystemParams(s, 0.01), math.floor(math.sqrt(s)),
                                             FiniteRevenue(exp51)) - lim) for s in (8, 32, 128, 256)]
        # the floor in the threshold adds a term that oscillates with the
        # fractional part of sqrt(s), so the decrease is only up to O(1/sqrt s)
        assert errs[-1] < errs[1] < errs[0]
        assert max(e * math.sqrt(s) for e, s in zip(errs, (8, 32, 128, 256))) <= 0.1


class TestOptimalTau:
    def test_s64(self, exp51):
        opt = finite.optimal_tau(SystemParams(64, 0.01), FiniteRevenue(exp51))
        assert opt.tau == 8 == math.floor(1.00985 * 8)
        tau, r = opt
        assert r == opt.revenue and not opt.at_window

    def test_brute_force(self, exp11):
        p = SystemParams(30, -0.5)
        rev = FiniteRevenue(exp11)
        vals = [finite.threshold_revenue(p, t, rev) for t in range(40)]
        opt = finite.optimal_tau(p, rev, 39)
        assert opt.tau == int(np.argmax(vals))

    def test_degenerate(self, flat_left):
        opt = finite.optimal_tau(SystemParams(36, 0.5), FiniteRevenue(flat_left), 30)
        assert opt.tau == 0

    def test_s10_gap(self, exp51):
        p = SystemParams(10, 0.01)
        rev = FiniteRevenue(exp51)
        eta = solver.solve(exp51, 0.01).eta_star
        opt = finite.optimal_tau(p, rev, 40)
        rq = opt.values[math.floor(eta * math.sqrt(10))]
        assert (opt.revenue - rq) / opt.revenue <= 1e-2

    def test_window_warning(self, exp51):
        with pytest.warns(WindowWarning):
            opt = finite.optimal_tau(SystemParams(64, 0.01), FiniteRevenue(exp51), 3)
        assert opt.at_window and opt.tau == 3
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert finite.optimal_tau(SystemParams(64, 0.01), FiniteRevenue(exp51), 3,
                                      warn=False).at_window

    def test_default_window(self):
        assert finite.default_tau_max(64) == 80
        assert finite.default_tau_max(64, 1.9) == math.ceil(4 * 1.9 * 8)
        assert finite.default_tau_max(64, 0.5) == 32


class TestCustomerReward:
    def test_linear_structure(self):
        s, a, b = 4, 2.0, 1.0
        prof = revenue.polynomial_penalty(a, 1.0, b, 1.0)
        rev = FiniteRevenue(prof, n_s=lambda s: a * s, q_s=lambda s: math.sqrt(s))
        k = np.arange(3 * s)
        assert_allclose(rev.values(s, k), a * np.minimum(k, s) - b * np.maximum(k - s, 0),
                        atol=1e-13)
        table = finite.reward_from_revenue(rev, s, 3 * s)
        for kk in (s - 1, s, s + 1):
            assert_allclose(table[kk], a - b * max(0.0, (kk - s + 1) / s), atol=1e-13)

    def test_constant(self):
        rev = FiniteRevenue(constant_profile(), q_s=3.0)
        table = finite.reward_from_revenue(rev, 5, 10)
        assert_allclose(table, 3.0 / np.minimum(np.arange(11) + 1, 5), rtol=1e-15)

    def test_k_zero(self, exp51):
        rev = FiniteRevenue(exp51)
        assert finite.reward_from_revenue(rev, 9, 4)[0] == rev.values(9, 1)

    @pytest.mark.parametrize("s,g,tau", [(8, 0.01, 3), (20, -0.7, 5), (64, 1.2, 0), (3, 0.5, 9)])
    def test_identity(self, exp51, s, g, tau):
        p = SystemParams(s, g)
        pol = capacity_policy(tau)
        rev = FiniteRevenue(exp51)
        dist = finite.stationary_distribution(p, pol)
        R = finite.revenue_rate(p, pol, rev, dist)
        exact = finite.reward_from_revenue(rev, s, dist.k_trunc, lam=p.lam)
        assert abs(finite.customer_reward_rate(p, pol, exact, dist) - R) <= 1e-12 * abs(R)
        # the plain conversion misses exactly the revenue earned while empty
        plain = finite.reward_from_revenue(rev, s, dist.k_trunc)
        H = finite.customer_reward_rate(p, pol, plain, dist)
        assert_allclose(H, R - rev.values(s, 0) * dist.probs[0], rtol=1e-12)

    def test_identity_exact_when_empty_revenue_is_zero(self):
        p = SystemParams(16, 0.3)
        pol = capacity_policy(6)
        prof = revenue.polynomial_penalty(2.0, 1.0, 1.0, 1.0)
        rev = FiniteRevenue(prof, n_s=lambda s: 2.0 * s, q_s=lambda s: math.sqrt(s))
        assert rev.values(16, 0) == 0.0
        dist = finite.stationary_distribution(p, pol)
        R = finite.revenue_rate(p, pol, rev, dist)
        H = finite.customer_reward_rate(p, pol, finite.reward_from_revenue(rev, 16, dist.k_trunc))
        assert abs(H - R) <= 1e-12 * abs(R)

    def test_mm1_busy(self):
        p = params_with_rho(1, 0.5)
        dist = finite.stationary_distribution(p, ADMIT_ALL)
        H = finite.customer_reward_rate(p, ADMIT_ALL, np.ones(len(dist)), dist)
        assert_allclose(H, 0.5, rtol=1e-12)
        assert_allclose(H, 1.0 - dist.probs[0], rtol=1e-12)

    def test_four_state(self, exp51):
        p = params_with_rho(2, 0.5)
        pol = Threshold(0)
        rev = FiniteRevenue(exp51)
        pi = generator_oracle(p, pol, 3)
        R = float(np.dot(rev.values(2, np.arange(4)), pi))
        table = finite.reward_from_revenue(rev, 2, 3, lam=p.lam)
        assert_allclose(finite.customer_reward_rate(p, pol, table), R, rtol=1e-12)

    def test_short_table(self, exp51):
        p = SystemParams(4, 0.1)
        with pytest.raises(DomainError):
            finite.customer_reward_rate(p, Threshold(2), np.ones(3))


class TestLatticeSums:
    def test_left_unit_is_inverse_erlang(self):
        for s, g in ((10, 0.3), (200, -1.0)):
            lam = SystemParams(s, g).lam
            assert_allclose(finite.lattice_sum_left(lambda x: np.ones_like(x), s, g),
                            1.0 / finite.erlang_b(s, lam), rtol=1e-12)

    def test_right_geometric(self):
        s, g = 100, 1.0
        rho = SystemParams(s, g).rho
        val = finite.lattice_sum_right(lambda x: np.ones_like(x), s, g)
        assert_allclose(val, rho / (1 - rho), rtol=1e-12)
        M = 7
        assert_allclose(finite.lattice_sum_right(lambda x: np.ones_like(x), s, g, eta=0.75),
                        rho * (1 - rho ** M) / (1 - rho), rtol=1e-13)
