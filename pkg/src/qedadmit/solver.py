"""The threshold equation ``r(eta) = R_T(eta)`` and its approximations.

``solve`` is the general bisection solver. The remaining functions are
closed forms (Lambert W, square roots, power series), bounds, and
asymptotic approximations valid for particular profile families or slack
regimes. Each returns ``eta*``; closed forms are cross-checked against
``solve`` in the test suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import specfun
from .errors import (BranchError, CuspError, DomainError, NoSignChangeError,
                     NonConvergenceError, UnsupportedError)
from .limit import limit_constants, limit_revenue_threshold
from .revenue import ExpLeft, ExpRight, LinearRight, RevenueProfile
from .specfun import DEFAULT_QUAD, QuadratureConfig, c_weight, lambert_w

_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
_MAX_DOUBLING = 1e6


@dataclass(frozen=True)
class ThresholdResult:
    """Solution of the threshold equation.

    Attributes
    ----------
    eta_star : float
    method : str
        ``Degenerate0``, ``Bisection``, ``LambertLinear``,
        ``LambertExpGammaEqMinusDelta``, ``SqrtAlpha`` or ``Series``.
    bracket : tuple of float
        Interval known to contain the root.
    residual : float
        ``r(eta*) - R_T(eta*)``.
    iterations : int
    """

    eta_star: float
    method: str
    bracket: tuple
    residual: float
    iterations: int = 0
    branch: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class BoundsResult:
    """``eta_min < eta* <= eta_max`` with ``R_lower = R_T(0)``."""

    eta_min: float
    eta_max: float
    R_lower: float
    R_upper: float


def _residual(profile, gamma, eta, cfg, k) -> float:
    return float(profile.r_right(eta)) - limit_revenue_threshold(profile, gamma, eta, cfg, k)


def threshold_residual(profile: RevenueProfile, gamma: float, eta: float,
                       cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """``r(eta) - R_T(eta)``; positive means admitting one more is profitable."""
    return _residual(profile, gamma, eta, cfg, limit_constants(profile, gamma, cfg))


def solve(profile: RevenueProfile, gamma: float, cfg: QuadratureConfig = DEFAULT_QUAD,
          xtol: float = 1e-12) -> ThresholdResult:
    """Root of ``h(eta) = r_R(eta) - R_T(eta)`` by bisection.

    Returns ``eta* = 0`` (method ``Degenerate0``) when ``r(0) <= R_T(0)``.
    The upper end of the bracket is ``eta_max`` when ``r_R`` can be
    inverted, otherwise it is found by doubling.

    Raises
    ------
    NoSignChangeError
        If doubling passes ``1e6`` without a sign change.
    """
    gamma = float(gamma)
    k = limit_constants(profile, gamma, cfg)
    r0 = profile.r0
    if r0 <= k.R_T0:
        return ThresholdResult(0.0, "Degenerate0", (0.0, 0.0), r0 - k.R_T0, 0)

    def h(eta):
        return _residual(profile, gamma, eta, cfg, k)

    hi = None
    if k.R_T0 > profile.right.infimum:
        try:
            hi = profile.right_inverse(k.R_T0)
        except UnsupportedError:
            hi = None
    if hi is None or not hi > 0:
        hi = 1.0
    iters = 0
    lo = 0.0
    h_hi = h(hi)
    while h_hi > 0:
        lo = hi
        hi *= 2.0
        iters += 1
        if hi > _MAX_DOUBLING:
            raise NoSignChangeError("r(eta) - R_T(eta) stays positive; no finite threshold")
        h_hi = h(hi)
    if h_hi == 0.0:
        return ThresholdResult(hi, "Bisection", (hi, hi), 0.0, iters)
    while hi - lo > xtol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        hm = h(mid)
        iters += 1
        if hm > 0:
            lo = mid
        elif hm < 0:
            hi = mid
        else:
            lo = hi = mid
            break
        if iters > 400:
            break
    eta = 0.5 * (lo + hi)
    return ThresholdResult(eta, "Bisection", (lo, hi), h(eta), iters)


def bounds(profile: RevenueProfile, gamma: float,
           cfg: QuadratureConfig = DEFAULT_QUAD) -> BoundsResult:
    """Bracketing bounds for ``eta*`` from the inverse of ``r_R``.

    ``eta_max = r_R^{-1}(R_T(0))`` and ``eta_min = r_R^{-1}(R_upper)`` with
    ``R_upper = (A + r(0) c(eta_max)) / (B + c(eta_max))``.
    """
    k = limit_constants(profile, gamma, cfg)
    r0 = profile.r0
    if k.R_T0 >= r0:
        return BoundsResult(0.0, 0.0, k.R_T0, k.R_T0)
    eta_max = profile.right_inverse(k.R_T0)
    cm = float(c_weight(gamma, eta_max))
    r_up = (k.A + r0 * cm) / (k.B + cm)
    eta_min = profile.right_inverse(r_up)
    return BoundsResult(eta_min, eta_max, k.R_T0, r_up)


# ---------------------------------------------------------------------------
# asymptotics in the slack

def asym_gamma_neg(profile: RevenueProfile, gamma: float) -> float:
    """``-(1/gamma) ln(1 - r_L'(0-)/r_R'(0+))``, accurate as ``gamma -> -inf``.

    Raises
    ------
    CuspError
        Unless ``r_R'(0+) < 0 < r_L'(0-)``.
    """
    if not gamma < 0:
        raise DomainError("needs gamma < 0")
    left, right = profile.boundary_slopes()
    if not (right < 0 < left):
        if left == 0 and right < 0:
            return 0.0
        raise CuspError(f"slopes ({left}, {right}) do not form a cusp at 0")
    return -math.log(1.0 - left / right) / gamma


def asym_gamma_pos(profile: RevenueProfile, gamma: float, refined: bool = True) -> float:
    """Large-slack approximation ``r_R^{-1}(r_L(-gamma))``.

    For the exponential family the refined form ``(b/d) gamma - b^2/(2d)``
    is returned unless ``refined`` is false.
    """
    if not gamma > 0:
        raise DomainError("needs gamma > 0")
    if refined and isinstance(profile.left, ExpLeft) and isinstance(profile.right, ExpRight):
        b, d = profile.left.b, profile.right.d
        return (b / d) * gamma - b * b / (2 * d)
    target = float(profile.r_left(-gamma))
    if target <= profile.right.infimum:
        return profile.support
    return profile.right_inverse(target)


# ---------------------------------------------------------------------------
# linear right half: Lambert W forms

def _lambert_candidates(shift: float, scale: float, z: float):
    """Values ``shift + W_k(z)/scale`` over the admissible real branches."""
    out = []
    for branch in (0, -1):
        try:
            w = lambert_w(branch, z)
        except DomainError:
            continue
        out.append((branch, shift + w / scale))
    return out


def _pick(cands, resid, lo, hi, previous=None):
    good = []
    for branch, eta in cands:
        if not math.isfinite(eta) or eta < lo - 1e-12 or eta > hi + 1e-9:
            continue
        eta = min(max(eta, lo), hi)
        good.append((branch, eta, resid(eta)))
    if not good:
        raise BranchError("no Lambert W branch yields an admissible threshold")
    if previous is not None and len(good) > 1:
        close = [g for g in good if abs(g[2]) < 1e-8]
        if close:
            return min(close, key=lambda g: abs(g[1] - previous))
    return min(good, key=lambda g: abs(g[2]))


def _linear_d(profile: RevenueProfile) -> float:
    if not isinstance(profile.right, LinearRight):
        raise UnsupportedError("needs the linear right half (1 - x/d)")
    return profile.right.d


def linear_closed_form(profile: RevenueProfile, gamma: float,
                       cfg: QuadratureConfig = DEFAULT_QUAD,
                       previous: Optional[float] = None) -> ThresholdResult:
    """Lambert W solution for ``r_R = (1 - x/d)`` on ``[0, d]``.

    ``eta* = r0 + W(gamma e^{-gamma r0} / a0) / gamma`` with
    ``a0 = -gamma^2 (B + 1/gamma)`` and
    ``r0 = (d (B - A) + 1/gamma^2) / (B + 1/gamma)``.

    The branch is the one giving a real ``eta*`` in ``[0, d]`` with the
    smallest threshold residual; ``previous`` (a neighbouring solution in a
    sweep) breaks ties in favour of continuity.
    """
    gamma = float(gamma)
    if gamma == 0.0:
        raise DomainError("closed form needs gamma != 0; see linear_gamma_zero")
    d = _linear_d(profile)
    k = limit_constants(profile, gamma, cfg)
    if profile.r0 <= k.R_T0:
        return ThresholdResult(0.0, "Degenerate0", (0.0, 0.0), profile.r0 - k.R_T0, 0)
    B, A = k.B, k.A
    a0 = -gamma * gamma * (B + 1.0 / gamma)
    r0 = (d * (B - A) + 1.0 / (gamma * gamma)) / (B + 1.0 / gamma)
    z = _safe_lambert_arg(gamma, r0, a0)
    cands = _lambert_candidates(r0, gamma, z)
    branch, eta, res = _pick(cands, lambda e: _residual(profile, gamma, e, cfg, k), 0.0, d, previous)
    return ThresholdResult(eta, "LambertLinear", (eta, eta), res, 0, branch)


def _safe_lambert_arg(scale: float, r0: float, a0: float) -> float:
    log_mag = math.log(abs(scale / a0)) - scale * r0
    if log_mag > 700:
        raise BranchError("Lambert W argument overflows")
    return math.copysign(math.exp(log_mag), scale / a0)


def linear_closed_form_c(c: float, gamma: float, previous: Optional[float] = None) -> ThresholdResult:
    """Lambert W solution in the service-revenue / waiting-cost ratio ``c = a/b``.

    Solves ``eta (B + c(eta)) = c (1 + gamma B) + (1 - (1 + gamma eta) e^{-gamma eta}) / gamma^2``
    with ``a0 = -gamma - gamma^2 B`` and ``r0 = c gamma + 1/(gamma + gamma^2 B)``.
    """
    gamma = float(gamma)
    if gamma == 0.0:
        raise DomainError("closed form needs gamma != 0")
    if not c > 0:
        raise DomainError("c must be positive")
    B = float(specfun.mills_ratio(gamma))
    a0 = -gamma - gamma * gamma * B
    r0 = c * gamma + 1.0 / (gamma + gamma * gamma * B)

    def resid(eta):
        lhs = eta * (B + float(c_weight(gamma, eta)))
        rhs = c * (1 + gamma * B) + (1 - (1 + gamma * eta) * math.exp(-gamma * eta)) / gamma ** 2
        return rhs - lhs

    z = _safe_lambert_arg(gamma, r0, a0)
    cands = _lambert_candidates(r0, gamma, z)
    branch, eta, res = _pick(cands, resid, 0.0, math.inf, previous)
    return ThresholdResult(eta, "LambertLinear", (eta, eta), res, 0, branch)


def linear_gamma_zero(profile: RevenueProfile, d: Optional[float] = None,
                      cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """``sqrt(B^2 + 2 d (B - A)) - B`` at ``gamma = 0`` (``B = sqrt(pi/2)``)."""
    if d is None:
        d = _linear_d(profile)
    A = profile.left_integral(0.0, cfg)
    B = _SQRT_HALF_PI
    return math.sqrt(B * B + 2 * d * (B - A)) - B


def linear_gamma_large(profile: RevenueProfile, gamma: float,
                       cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """``d (1 - A/B)``, the large-slack limit of the linear solution."""
    d = _linear_d(profile)
    k = limit_constants(profile, gamma, cfg)
    return d * (1.0 - k.R_T0)


# ---------------------------------------------------------------------------
# exponential right half

def _exp_delta(profile: RevenueProfile) -> float:
    if not isinstance(profile.right, ExpRight):
        raise UnsupportedError("needs the exponential right half exp(-delta x)")
    return profile.right.d


def exp_lambert(profile: RevenueProfile, delta: Optional[float] = None,
                cfg: QuadratureConfig = DEFAULT_QUAD) -> ThresholdResult:
    """Lambert W solution for ``r_R = e^{-delta x}`` at slack ``gamma = -delta``.

    ``eta* = r0 + W(delta e^{-delta r0} / a0) / delta`` with
    ``a0 = 1/(B - 1/delta)`` and ``r0 = 1/delta - B R_T(0)``.
    """
    d_prof = _exp_delta(profile)
    delta = d_prof if delta is None else float(delta)
    if abs(delta - d_prof) > 1e-12 * max(1.0, d_prof):
        raise DomainError("delta must match the profile's right rate")
    if not delta > 0:
        raise DomainError("delta must be positive")
    gamma = -delta
    k = limit_constants(profile, gamma, cfg)
    if profile.r0 <= k.R_T0:
        return ThresholdResult(0.0, "Degenerate0", (0.0, 0.0), profile.r0 - k.R_T0, 0)
    a0 = 1.0 / (k.B - 1.0 / delta)
    r0 = 1.0 / delta - k.B * k.R_T0
    z = _safe_lambert_arg(delta, r0, a0)
    cands = _lambert_candidates(r0, delta, z)
    branch, eta, res = _pick(cands, lambda e: _residual(profile, gamma, e, cfg, k),
                             0.0, math.inf)
    return ThresholdResult(eta, "LambertExpGammaEqMinusDelta", (eta, eta), res, 0, branch)


def exp_alpha(gamma: float, delta: float) -> float:
    """``alpha = (gamma + delta) / delta``."""
    return (gamma + delta) / delta


def exp_sqrt(alpha: float, gamma: float, delta: float, R_T0: float) -> float:
    """Square-root solutions for ``alpha`` in ``{-1, 1/2, 2}``.

    ``eta* = -(1/delta) ln(1 - w(eps))`` with ``eps = 1 - R_T(0)``.

    Raises
    ------
    DomainError
        When ``alpha`` does not match ``(gamma + delta)/delta`` or ``eps``
        lies outside the case's range of validity.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    if abs(exp_alpha(gamma, delta) - alpha) > 1e-12 * max(1.0, abs(alpha)):
        raise DomainError(f"alpha={alpha} does not match (gamma+delta)/delta={exp_alpha(gamma, delta)}")
    eps = 1.0 - R_T0
    if eps == 0.0:
        return 0.0
    gB = gamma * float(specfun.mills_ratio(gamma))
    if alpha == -1:
        t = -gB / (1 + gB)
        u = 1 + 2 / t
        radius = u - math.sqrt(u * u - 1)
        if abs(eps) >= radius:
            raise DomainError(f"eps={eps} outside |eps| < {radius}")
        w = 0.5 * t * (math.sqrt((1 + eps) ** 2 + 4 * eps / t) - 1 - eps)
    elif alpha == 0.5:
        t = -gB / (1 + gB)
        if abs(eps) >= t:
            raise DomainError(f"eps={eps} outside |eps| < {t}")
        w = 2 * t / (1 + gB) * (math.sqrt(1 + eps / t) - 1) - t * eps
    elif alpha == 2:
        if abs(eps) >= 0.5 * gB:
            raise DomainError(f"eps={eps} outside |eps| < {0.5 * gB}")
        w = -gB + math.sqrt(gB * gB + 2 * gB * eps)
    else:
        raise DomainError("square-root forms exist only for alpha in {-1, 1/2, 2}")
    return -math.log1p(-w) / delta


def series_coefficients(alpha: float, gB: float, L: int) -> np.ndarray:
    """Coefficients ``a_1..a_L`` of ``w(eps) = sum a_l eps^l``.

    ``a_1 = 1``, ``a_2 = (alpha + beta - 1)/2`` and
    ``a_{l+1} = ((l alpha + (l+1) beta - 1) a_l + beta sum_{i=2}^{l-1} i a_i a_{l+1-i}) / (l+1)``
    with ``beta = (1 - alpha)(1 + 1/(gamma B))``. Index 0 of the result is ``a_1``.
    """
    if alpha in (0.0, 1.0):
        raise DomainError("series needs alpha not in {0, 1}")
    if L < 1:
        raise DomainError("need at least one term")
    beta = (1 - alpha) * (1 + 1 / gB)
    a = np.zeros(L + 1)
    a[1] = 1.0
    if L >= 2:
        a[2] = 0.5 * (alpha + beta - 1)
    for l in range(2, L):
        conv = sum(i * a[i] * a[l + 1 - i] for i in range(2, l))
        a[l + 1] = ((l * alpha + (l + 1) * beta - 1) * a[l] + beta * conv) / (l + 1)
    return a[1:]


@dataclass(frozen=True)
class SeriesResult:
    eta_star: float
    w: float
    truncation: float
    terms: int


def exp_series(alpha: float, gamma: float, B: float, eps: float, L: int = 30,
               tol: float = 1e-14, full: bool = False):
    """Power-series solution ``eta* = -(1/delta) ln(1 - sum a_l eps^l)``.

    ``delta = gamma/(alpha - 1)``. Requires the last retained term to fall
    below ``tol`` times the partial sum.

    Raises
    ------
    NonConvergenceError
        If the terms have not contracted by term ``L``.
    """
    if alpha in (0.0, 1.0):
        raise DomainError("series needs alpha not in {0, 1}")
    delta = gamma / (alpha - 1)
    if not delta > 0:
        raise DomainError("alpha and gamma imply a nonpositive delta")
    if eps == 0.0:
        out = SeriesResult(0.0, 0.0, 0.0, 0)
        return out if full else out.eta_star
    a = series_coefficients(alpha, gamma * B, L)
    powers = eps ** np.arange(1, L + 1)
    terms = a * powers
    w = float(np.sum(terms))
    last = abs(float(terms[-1]))
    if not math.isfinite(w) or last > tol * abs(w):
        raise NonConvergenceError(f"series not contracted after {L} terms (last term {last:.3e})")
    if w >= 1:
        raise NonConvergenceError("series sum leaves the admissible range w < 1")
    out = SeriesResult(-math.log1p(-w) / delta, w, last, L)
    return out if full else out.eta_star


def exp_delta_zero(profile: RevenueProfile, delta: float,
                   cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """``sqrt(2 (B - A)/delta) - (2A + B)/3`` at ``gamma = 0`` for small ``delta``."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    A = profile.left_integral(0.0, cfg)
    B = _SQRT_HALF_PI
    return math.sqrt(2 * (B - A) / delta) - (2 * A + B) / 3


def closed_form(profile: RevenueProfile, gamma: float,
                cfg: QuadratureConfig = DEFAULT_QUAD) -> Optional[ThresholdResult]:
    """Closed-form solution when one applies to this profile and slack, else ``None``."""
    if isinstance(profile.right, LinearRight) and gamma != 0:
        return linear_closed_form(profile, gamma, cfg)
    if isinstance(profile.right, ExpRight):
        delta = profile.right.d
        if abs(gamma + delta) <= 1e-12 * max(1.0, delta):
            return exp_lambert(profile, cfg=cfg)
        alpha = exp_alpha(gamma, delta)
        for a in (-1.0, 0.5, 2.0):
            if abs(alpha - a) <= 1e-12:
                k = limit_constants(profile, gamma, cfg)
                try:
                    eta = exp_sqrt(a, gamma, delta, k.R_T0)
                except DomainError:
                    return None
                res = _residual(profile, gamma, eta, cfg, k)
                return ThresholdResult(eta, "SqrtAlpha", (eta, eta), res, 0)
    return None


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonotonicityReport:
    """Per-slack values and monotonicity verdicts.

    Verdicts are ``"strict"``, ``"nonstrict"`` (flat somewhere) or
    ``"violated"``.
    """

    gammas: np.ndarray
    R_T0: np.ndarray
    eta_star: np.ndarray
    R_star: np.ndarray
    eta_increasing: str
    R_T0_decreasing: str
    R_star_decreasing: str

    def rows(self):
        for i in range(len(self.gammas)):
            yield (float(self.gammas[i]), float(self.R_T0[i]),
                   float(self.eta_star[i]), float(self.R_star[i]))


def _verdict(values: np.ndarray, increasing: bool, atol: float = 1e-13) -> str:
    diff = np.diff(values)
    if not increasing:
        diff = -diff
    if np.all(diff > 0):
        return "strict"
    if np.all(diff >= -atol):
        return "nonstrict"
    return "violated"


def monotonicity_report(profile: RevenueProfile, gamma_grid: Sequence[float],
                        cfg: QuadratureConfig = DEFAULT_QUAD) -> MonotonicityReport:
    g = np.asarray(gamma_grid, dtype=float)
    if np.any(np.diff(g) <= 0):
        raise DomainError("gamma grid must be strictly ascending")
    r0s, etas, rs = [], [], []
    for gamma in g:
        k = limit_constants(profile, gamma, cfg)
        res = solve(profile, gamma, cfg)
        r0s.append(k.R_T0)
        etas.append(res.eta_star)
        rs.append(limit_revenue_threshold(profile, gamma, res.eta_star, cfg, k))
    r0s, etas, rs = map(np.asarray, (r0s, etas, rs))
    return MonotonicityReport(g, r0s, etas, rs, _verdict(etas, True),
                              _verdict(r0s, False), _verdict(rs, False))
