"""Discrete-event simulation of the controlled many-server queue.

Event-driven: from state ``k`` the next event comes after an exponential
time with rate ``lam + min(k, s)``. It is an arrival with probability
``lam / (lam + min(k, s))``; an arrival that finds ``n = k - s >= 0``
waiting is admitted with probability ``p_s(n)``. Revenue ``r_s(Q(t))`` is
integrated exactly between events.

Random numbers come from numpy's PCG64. One stream feeds the warm-up
and one more feeds each batch; they are spawned from
``SeedSequence(seed)``, so results are bit-identical for a fixed seed.
The long-run mean and its 95% interval use batch means with a Student-t
quantile.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy import stats

from .errors import DomainError
from .finite import (AdmissionPolicy, SystemParams, admission_vector,
                     stationary_distribution)
from .revenue import FiniteRevenue

# extra waiting-room states kept beyond the analytic truncation for
# policies with unbounded support
_TAIL_MARGIN = 64


@dataclass(frozen=True)
class SimConfig:
    """Run length, warm-up, number of batches and seed."""

    horizon: float
    warmup: float = 0.0
    batches: int = 20
    seed: int = 0

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise DomainError("horizon must be positive and finite")
        if not (0 <= self.warmup < self.horizon):
            raise DomainError("need 0 <= warmup < horizon")
        if int(self.batches) != self.batches or self.batches < 10:
            raise DomainError("need at least 10 batches")
        if int(self.seed) != self.seed or not (0 <= self.seed < 2 ** 64):
            raise DomainError("seed must be a 64-bit nonnegative integer")

    @property
    def batch_length(self) -> float:
        return (self.horizon - self.warmup) / self.batches


@njit(cache=True)
def _advance(k, t, t_end, lam, s, r_tab, p_tab, expo, unif, pos, occ, counts):
    """Run events until ``t_end`` or the random chunk runs out.

    ``counts`` accumulates [revenue integral, arrivals finding all servers
    busy, admitted among those]. Returns (k, t, pos, reached_end).
    """
    n = expo.shape[0]
    n_wait_max = p_tab.shape[0]
    while pos < n:
        busy = k if k < s else s
        rate = lam + busy
        dt = expo[pos] / rate
        if t + dt >= t_end:
            # memoryless clock: the unused remainder is discarded
            span = t_end - t
            counts[0] += r_tab[k] * span
            occ[k] += span
            return k, t_end, pos + 1, True
        counts[0] += r_tab[k] * dt
        occ[k] += dt
        t += dt
        v = unif[pos] * rate
        pos += 1
        if v < lam:
            if k < s:
                k += 1
            else:
                counts[1] += 1.0
                w = k - s
                pa = p_tab[w] if w < n_wait_max else 0.0
                # v/lam is again uniform on [0, 1) given an arrival
                if v / lam < pa:
                    k += 1
                    counts[2] += 1.0
        else:
            k -= 1
    return k, t, pos, False


def _tables(params: SystemParams, policy: AdmissionPolicy, rev: Optional[FiniteRevenue]):
    support = policy.support(params.s)
    if support is None:
        dist = stationary_distribution(params, policy)
        support = max(dist.k_trunc - params.s, 0) + _TAIL_MARGIN
    k_max = params.s + support
    p_full = admission_vector(params, policy, k_max)
    p_tab = np.ascontiguousarray(p_full[params.s:params.s + support], dtype=np.float64)
    if rev is None:
        r_tab = np.zeros(k_max + 1)
    else:
        r_tab = np.ascontiguousarray(rev.values(params.s, np.arange(k_max + 1)), dtype=np.float64)
    return r_tab, p_tab


def _run_segment(k, t, t_end, params, r_tab, p_tab, rng, occ, counts):
    lam, s = params.lam, params.s
    # expected events plus slack; refilled if short
    chunk = int((lam + s) * (t_end - t) * 1.05) + 1024
    while True:
        expo = rng.standard_exponential(chunk)
        unif = rng.random(chunk)
        k, t, _, done = _advance(k, t, t_end, lam, s, r_tab, p_tab, expo, unif, 0, occ, counts)
        if done:
            return k, t
        chunk = max(1024, chunk // 4)


@dataclass(frozen=True)
class SimResult:
    """Simulation estimate; unpacks as ``(mean, ci95_halfwidth)``."""

    mean: float
    ci95_halfwidth: float
    batch_means: np.ndarray
    occupancy: np.ndarray
    arrivals_full: float
    admitted_full: float

    def __iter__(self):
        return iter((self.mean, self.ci95_halfwidth))

    @property
    def admitted_fraction(self) -> float:
        """Admitted share of arrivals that found all servers busy."""
        return self.admitted_full / self.arrivals_full if self.arrivals_full else float("nan")


def _simulate(params: SystemParams, policy: AdmissionPolicy, rev: Optional[FiniteRevenue],
              cfg: SimConfig) -> SimResult:
    r_tab, p_tab = _tables(params, policy, rev)
    children = np.random.SeedSequence(int(cfg.seed)).spawn(cfg.batches + 1)
    occ = np.zeros(r_tab.shape[0])
    counts = np.zeros(3)
    k = min(params.s, r_tab.shape[0] - 1)
    t = 0.0
    if cfg.warmup > 0:
        scratch = np.zeros_like(occ)
        k, t = _run_segment(k, t, cfg.warmup, params, r_tab, p_tab,
                            np.random.Generator(np.random.PCG64(children[0])), scratch, np.zeros(3))
    means = np.empty(cfg.batches)
    length = cfg.batch_length
    for b in range(cfg.batches):
        rng = np.random.Generator(np.random.PCG64(children[b + 1]))
        before = counts[0]
        t_end = cfg.warmup + (b + 1) * length if b < cfg.batches - 1 else cfg.horizon
        seg = t_end - t
        k, t = _run_segment(k, t, t_end, params, r_tab, p_tab, rng, occ, counts)
        means[b] = (counts[0] - before) / seg
    n = cfg.batches
    mean = float(np.mean(means))
    half = float(stats.t.ppf(0.975, n - 1) * np.std(means, ddof=1) / math.sqrt(n))
    return SimResult(mean, half, means, occ, float(counts[1]), float(counts[2]))


def simulate_revenue(params: SystemParams, policy: AdmissionPolicy, rev: FiniteRevenue,
                     cfg: SimConfig) -> SimResult:
    """Time-average revenue over ``[warmup, horizon]`` with a 95% batch-means interval."""
    return _simulate(params, policy, rev, cfg)


@dataclass(frozen=True)
class OccupancyHistogram:
    probs: np.ndarray
    tv_distance: float
    admitted_fraction: float


def simulate_occupancy_hist(params: SystemParams, policy: AdmissionPolicy,
                            cfg: SimConfig) -> OccupancyHistogram:
    """Fraction of time spent in each state, with total-variation distance to the exact law."""
    res = _simulate(params, policy, None, cfg)
    hist = res.occupancy / res.occupancy.sum()
    exact = stationary_distribution(params, policy).probs
    n = max(hist.size, exact.size)
    a = np.zeros(n)
    b = np.zeros(n)
    a[:hist.size] = hist
    b[:exact.size] = exact
    last = int(np.nonzero(hist)[0][-1]) + 1 if np.any(hist) else 0
    return OccupancyHistogram(hist[:last], 0.5 * float(np.abs(a - b).sum()),
                              res.admitted_fraction)
