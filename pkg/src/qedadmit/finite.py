"""Exact analysis of the finite-s birth-death chain with admission control.

State ``k`` is the number of customers present. Arrivals come at rate
``lam``; each of ``s`` servers works at unit rate. When all servers are busy
and ``n = k - s`` customers wait, an arrival is admitted with probability
``p_s(n)``. Policies are described through the cumulative products
``P_n = p_s(0) p_s(1) ... p_s(n)``.

Weights are handled in log space so that ``s`` can reach ``1e5``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .errors import DivergenceError, DomainError, WindowWarning
from .revenue import FiniteRevenue

# stop summing once a term drops below this fraction of the running total
_TRUNC_REL = 1e-16
_MAX_TERMS = 5_000_000
# log-growth beyond which a waiting-room series is declared divergent
_LOG_BLOWUP = 600.0


@dataclass(frozen=True)
class SystemParams:
    """Servers ``s`` and slack ``gamma`` with ``lam = s - gamma sqrt(s)``."""

    s: int
    gamma: float

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise DomainError("s must be a positive integer")
        if not math.isfinite(self.gamma):
            raise DomainError("gamma must be finite")
        if not self.gamma < math.sqrt(self.s):
            raise DomainError(f"need gamma < sqrt(s) for a positive arrival rate (s={self.s}, gamma={self.gamma})")

    @property
    def lam(self) -> float:
        return self.s - self.gamma * math.sqrt(self.s)

    @property
    def rho(self) -> float:
        return 1.0 - self.gamma / math.sqrt(self.s)


class AdmissionPolicy:
    """Base class; subclasses supply cumulative products ``P_n``."""

    def support(self, s: int) -> Optional[int]:
        """Number of waiting-room states with ``P_n > 0``, or ``None`` if unbounded."""
        raise NotImplementedError

    def cumulative(self, s: int, n) -> np.ndarray:
        """``P_n`` for an integer array ``n >= 0``."""
        raise NotImplementedError

    def step_probability(self, s: int, n) -> np.ndarray:
        """Per-step admission probability ``p_s(n) = P_n / P_{n-1}``."""
        n = np.asarray(n, dtype=int)
        cur = self.cumulative(s, n)
        prev = np.where(n > 0, self.cumulative(s, np.maximum(n - 1, 0)), 1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(prev > 0, cur / np.where(prev > 0, prev, 1.0), 0.0)
        return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class Threshold(AdmissionPolicy):
    """Admit while at most ``tau`` customers wait: ``p_s(n) = 1{n <= tau}``.

    The occupancy never exceeds ``s + tau + 1``. ``tau = -1`` blocks every
    arrival that finds all servers busy (the pure loss system).
    """

    tau: int

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < -1:
            raise DomainError("tau must be an integer >= -1")

    def support(self, s):
        return int(self.tau) + 1

    def cumulative(self, s, n):
        return (np.asarray(n) <= self.tau).astype(float)


def capacity_policy(tau: int) -> Threshold:
    """Policy whose occupancy is capped at ``s + tau``.

    This is the policy behind the threshold revenue ``R_{T,s}(tau)``.
    """
    if int(tau) != tau or tau < 0:
        raise DomainError("tau must be a nonnegative integer")
    return Threshold(int(tau) - 1)


@dataclass(frozen=True)
class Profile(AdmissionPolicy):
    """Admission through an asymptotic profile: ``P_n = f(n / sqrt(s))``.

    Parameters
    ----------
    f : callable
        Nonincreasing on ``[0, inf)`` with ``f(0) = 1``; should accept arrays.
    support : float, optional
        Point beyond which ``f`` vanishes, when known.
    """

    f: Callable
    support_x: Optional[float] = None

    def support(self, s):
        if self.support_x is None:
            return None
        # P_n > 0 needs n / sqrt(s) below the support edge
        return int(math.ceil(self.support_x * math.sqrt(s)))

    def cumulative(self, s, n):
        x = np.asarray(n, dtype=float) / math.sqrt(s)
        try:
            vals = np.asarray(self.f(x), dtype=float)
            if vals.shape != x.shape:
                raise ValueError
        except (TypeError, ValueError):
            vals = np.array([float(self.f(v)) for v in x.ravel()]).reshape(x.shape)
        if np.any(vals < -1e-15) or np.any(vals > 1 + 1e-15):
            raise DomainError("admission profile must take values in [0, 1]")
        return np.clip(vals, 0.0, 1.0)


ADMIT_ALL = Profile(lambda x: np.ones_like(np.asarray(x, dtype=float)))


def erlang_b(s: int, a: float) -> float:
    """Erlang loss probability with ``s`` servers and offered load ``a``.

    Uses the stable recursion ``B_k = a B_{k-1} / (k + a B_{k-1})``.
    """
    if s < 0 or int(s) != s:
        raise DomainError("s must be a nonnegative integer")
    if not a > 0:
        raise DomainError("offered load must be positive")
    b = 1.0
    for k in range(1, int(s) + 1):
        b = a * b / (k + a * b)
    return b


def _waiting_log_terms(params: SystemParams, policy: AdmissionPolicy):
    """Return ``log(P_n rho^{n+1})`` for ``n = 0..N-1`` and a tail bound.

    The tail bound is relative to the sum of the returned terms.
    """
    s, rho = params.s, params.rho
    log_rho = math.log(rho)
    n_sup = policy.support(s)
    if n_sup is not None:
        n = np.arange(n_sup)
        with np.errstate(divide="ignore"):
            lt = np.log(policy.cumulative(s, n)) + (n + 1) * log_rho
        return lt, 0.0

    chunk = max(4096, int(16 * math.sqrt(s)))
    parts = []
    start = 0
    running_max = -math.inf
    total = 0.0
    while start < _MAX_TERMS:
        n = np.arange(start, start + chunk)
        with np.errstate(divide="ignore"):
            lt = np.log(policy.cumulative(s, n)) + (n + 1) * log_rho
        parts.append(lt)
        cmax = float(np.max(lt))
        if cmax > running_max:
            total = total * math.exp(running_max - cmax) if running_max > -math.inf else 0.0
            running_max = cmax
        total += float(np.sum(np.exp(lt - running_max)))
        last = float(lt[-1])
        # terms are dominated by a geometric tail once rho < 1; otherwise
        # the products must have died out
        ratio = rho if rho < 1 else math.exp(last - float(lt[-2]))
        if ratio >= 1 and last - float(parts[0][0]) > _LOG_BLOWUP:
            raise DivergenceError("waiting-room series grows without bound; stability fails")
        tail_rel = (math.exp(last - running_max) / total) if last > -math.inf else 0.0
        if last == -math.inf or (tail_rel < _TRUNC_REL and ratio < 1):
            bound = 0.0 if last == -math.inf else tail_rel * ratio / (1 - ratio)
            return np.concatenate(parts), bound
        start += chunk
    raise DivergenceError("waiting-room series does not converge; stability fails")


def f_series(params: SystemParams, policy: AdmissionPolicy) -> float:
    """``F_s = sum_n P_n rho^{n+1}``.

    Raises
    ------
    DivergenceError
        If ``rho >= 1`` and the policy never stops admitting.
    """
    lt, _ = _waiting_log_terms(params, policy)
    if lt.size == 0:
        return 0.0
    m = float(np.max(lt))
    if m == -math.inf:
        return 0.0
    return float(math.exp(m) * np.sum(np.exp(lt - m)))


@dataclass(frozen=True)
class StationaryDistribution:
    """Stationary law on ``0..k_trunc``.

    Attributes
    ----------
    probs : ndarray
        ``pi_s(k)`` for ``k = 0..k_trunc``.
    k_trunc : int
    tail_bound : float
        Bound on the probability mass dropped past ``k_trunc``; zero for
        policies with bounded support.
    """

    probs: np.ndarray
    k_trunc: int
    tail_bound: float = 0.0
    params: Optional[SystemParams] = field(default=None, compare=False)

    @property
    def k(self) -> np.ndarray:
        return np.arange(self.k_trunc + 1)

    def __len__(self):
        return self.k_trunc + 1


def _log_weights(params: SystemParams, policy: AdmissionPolicy):
    s, lam = params.s, params.lam
    k = np.arange(s + 1)
    low = k * math.log(lam) - gammaln(k + 1)
    wait, tail = _waiting_log_terms(params, policy)
    return np.concatenate([low, low[-1] + wait]), tail


def stationary_distribution(params: SystemParams, policy: AdmissionPolicy) -> StationaryDistribution:
    """Stationary distribution of the controlled chain.

    ``pi(k)`` is proportional to ``lam^k / k!`` up to ``k = s`` and to
    ``lam^s/s! P_{k-s-1} rho^{k-s}`` above it.
    """
    lw, tail = _log_weights(params, policy)
    # trim trailing zero-probability states
    finite = np.nonzero(np.isfinite(lw))[0]
    lw = lw[: finite[-1] + 1]
    m = float(np.max(lw))
    w = np.exp(lw - m)
    probs = w / w.sum()
    return StationaryDistribution(probs, len(probs) - 1, tail, params)


def admission_vector(params: SystemParams, policy: AdmissionPolicy, k_trunc: int) -> np.ndarray:
    """Admission probability in each state ``k = 0..k_trunc``; 1 below ``s``."""
    k = np.arange(k_trunc + 1)
    out = np.ones(k_trunc + 1)
    top = k >= params.s
    if top.any():
        out[top] = policy.step_probability(params.s, k[top] - params.s)
    return out


def revenue_rate(params: SystemParams, policy: AdmissionPolicy, rev: FiniteRevenue,
                 dist: Optional[StationaryDistribution] = None) -> float:
    """Long-run revenue rate ``R_s = sum_k r_s(k) pi_s(k)``."""
    if dist is None:
        dist = stationary_distribution(params, policy)
    r = rev.values(params.s, dist.k)
    return float(np.dot(r, dist.probs))


def threshold_revenue_curve(params: SystemParams, rev: FiniteRevenue, tau_max: int) -> np.ndarray:
    """``R_{T,s}(tau)`` for ``tau = 0..tau_max`` (occupancy capped at ``s + tau``).

    All capped chains share the same unnormalized weights, so each value is a
    ratio of partial sums.
    """
    if tau_max < 0:
        raise DomainError("tau_max must be nonnegative")
    s, lam, rho = params.s, params.lam, params.rho
    k = np.arange(s + tau_max + 1)
    lw = np.where(k <= s, k * math.log(lam) - gammaln(k + 1),
                  s * math.log(lam) - gammaln(s + 1) + (k - s) * math.log(rho))
    w = np.exp(lw - lw.max())
    r = rev.values(s, k)
    num = np.cumsum(r * w)[s:]
    den = np.cumsum(w)[s:]
    return num / den


def threshold_revenue(params: SystemParams, tau: int, rev: FiniteRevenue) -> float:
    """``R_{T,s}(tau)``: revenue rate when occupancy is capped at ``s + tau``."""
    return revenue_rate(params, capacity_policy(tau), rev)


@dataclass(frozen=True)
class OptimalTau:
    """Exhaustive search result; unpacks as ``(tau, revenue)``."""

    tau: int
    revenue: float
    at_window: bool
    values: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.tau, self.revenue))


def default_tau_max(s: int, eta_max: Optional[float] = None) -> int:
    if eta_max is None or not math.isfinite(eta_max):
        return int(math.ceil(10 * math.sqrt(s)))
    return int(math.ceil(4 * max(1.0, eta_max) * math.sqrt(s)))


def optimal_tau(params: SystemParams, rev: FiniteRevenue, tau_max: Optional[int] = None,
                warn: bool = True) -> OptimalTau:
    """Best threshold by exhaustive search over ``0..tau_max``.

    Ties go to the smallest ``tau``. When the maximizer sits on ``tau_max`` a
    :class:`WindowWarning` is emitted and ``at_window`` is set.
    """
    if tau_max is None:
        eta_max = None
        try:
            from .solver import bounds
            eta_max = bounds(rev.profile, params.gamma).eta_max
        except Exception:
            eta_max = None
        tau_max = default_tau_max(params.s, eta_max)
    vals = threshold_revenue_curve(params, rev, int(tau_max))
    best = int(np.argmax(vals))
    hit = best == tau_max and tau_max > 0
    if hit and warn:
        warnings.warn(f"optimum at window edge tau_max={tau_max}", WindowWarning, stacklevel=2)
    return OptimalTau(best, float(vals[best]), hit, vals)


def reward_from_revenue(rev: FiniteRevenue, s: int, k_max: int,
                        lam: Optional[float] = None) -> np.ndarray:
    """Customer rewards ``r_s(k+1) / min(k+1, s)`` for ``k = 0..k_max``.

    The conversion telescopes to ``R_s - r_s(0) pi_s(0)``: revenue earned
    while the system is empty is not tied to any admission. Passing the
    arrival rate ``lam`` folds that term into the reward of state 0 as
    ``r_s(0)/lam``, which makes the two rates agree for every ``r_s``.
    """
    k = np.arange(k_max + 1)
    out = rev.values(s, k + 1) / np.minimum(k + 1, s)
    if lam is not None:
        out[0] += float(rev.values(s, 0)) / lam
    return out


def customer_reward_rate(params: SystemParams, policy: AdmissionPolicy, rewards,
                         dist: Optional[StationaryDistribution] = None) -> float:
    """``lam * sum_k rhat_s(k) p(k) pi_s(k)`` with ``p = 1`` below ``s``."""
    if dist is None:
        dist = stationary_distribution(params, policy)
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size < len(dist):
        raise DomainError(f"reward table covers {rewards.size} states, need {len(dist)}")
    p = admission_vector(params, policy, dist.k_trunc)
    return float(params.lam * np.sum(rewards[: len(dist)] * p * dist.probs))


# ---------------------------------------------------------------------------
# lattice sums used by the finite-size expansions

def lattice_sum_left(r: Callable, s: int, gamma: float) -> float:
    """``sum_{k=0}^{s} r((k-s)/sqrt(s)) s! / (k! lam^{s-k})``.

    ``r`` is evaluated on ``x <= 0`` (including ``r(0)``). With ``r = 1`` this
    is the reciprocal of the Erlang loss probability.
    """
    params = SystemParams(s, gamma)
    k = np.arange(s + 1)
    lw = gammaln(s + 1) - gammaln(k + 1) - (s - k) * math.log(params.lam)
    vals = np.asarray(r((k - s) / math.sqrt(s)), dtype=float)
    return float(np.sum(vals * np.exp(lw)))


def lattice_sum_right(r_right: Callable, s: int, gamma: float,
                      eta: Optional[float] = None,
                      f: Optional[Callable] = None) -> float:
    """``sum_{m>=1} r(m/sqrt(s)) f(m/sqrt(s)) rho^m``.

    With ``eta`` given the sum runs over ``m = 1..floor(eta sqrt(s))`` and
    ``f`` is ignored. Otherwise the series is summed until its terms fall
    below ``1e-17`` of the total.
    """
    params = SystemParams(s, gamma)
    rho = params.rho
    root = math.sqrt(s)
    if eta is not None:
        M = int(math.floor(eta * root))
        m = np.arange(1, M + 1)
        return float(np.sum(np.asarray(r_right(m / root)) * rho ** m))
    if f is None:
        f = (lambda x: np.ones_like(x))
    total = 0.0
    chunk = max(4096, int(16 * root))
    start = 1
    while start < _MAX_TERMS:
        m = np.arange(start, start + chunk)
        x = m / root
        terms = np.asarray(r_right(x)) * np.asarray(f(x)) * np.exp(m * math.log(rho))
        total += float(np.sum(terms))
        if abs(terms[-1]) <= 1e-17 * max(abs(total), 1e-300) and rho < 1:
            return total
        if not np.any(terms):
            return total
        start += chunk
    raise DivergenceError("right lattice sum does not converge")
