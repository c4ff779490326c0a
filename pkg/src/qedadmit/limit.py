"""Limit revenue functionals in the QED regime and finite-size expansions.

For an admission profile ``f`` the scaled revenue converges to

    R(f) = (A + int_0^inf r f e^{-gamma x} dx) / (B + int_0^inf f e^{-gamma x} dx)

with ``A = int_{-inf}^0 r_L e^{-x^2/2 - gamma x} dx`` and ``B = Phi/phi`` at
``gamma``. Threshold profiles ``f = 1{x < eta}`` give ``R_T(eta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import finite, specfun
from .errors import DivergenceError, DomainError
from .revenue import RevenueProfile
from .specfun import DEFAULT_QUAD, QuadratureConfig, c_weight

_DGAMMA = 1e-5


@dataclass(frozen=True)
class LimitConstants:
    """``A``, ``B`` and ``R_T0 = A/B`` at slack ``gamma``."""

    gamma: float
    A: float
    B: float
    R_T0: float


def limit_constants(profile: RevenueProfile, gamma: float,
                    cfg: QuadratureConfig = DEFAULT_QUAD) -> LimitConstants:
    A = profile.left_integral(gamma, cfg)
    B = float(specfun.mills_ratio(gamma))
    return LimitConstants(float(gamma), A, B, A / B)


def limit_revenue_threshold(profile: RevenueProfile, gamma: float, eta: float,
                            cfg: QuadratureConfig = DEFAULT_QUAD,
                            consts: Optional[LimitConstants] = None) -> float:
    """``R_T(eta) = (A + int_0^eta r_R e^{-gamma x}) / (B + c(eta))``."""
    if eta < 0:
        raise DomainError("eta must be nonnegative")
    k = consts if consts is not None else limit_constants(profile, gamma, cfg)
    num = k.A + profile.right_integral(gamma, eta, cfg)
    return num / (k.B + float(c_weight(gamma, eta)))


def limit_revenue_threshold_derivative(profile: RevenueProfile, gamma: float, eta: float,
                                       cfg: QuadratureConfig = DEFAULT_QUAD,
                                       consts: Optional[LimitConstants] = None) -> float:
    """``dR_T/deta = e^{-gamma eta} (r(eta) - R_T(eta)) / (B + c(eta))``.

    Its sign is that of ``r(eta) - R_T(eta)``.
    """
    k = consts if consts is not None else limit_constants(profile, gamma, cfg)
    rt = limit_revenue_threshold(profile, gamma, eta, cfg, k)
    r = float(profile.r_right(eta))
    return math.exp(-gamma * eta) * (r - rt) / (k.B + float(c_weight(gamma, eta)))


def _profile_integrals(profile, gamma, f, support, decays, cfg):
    upper = math.inf if support is None else float(support)
    pts = list(profile.kinks)
    if support is not None:
        pts.append(float(support))
    fv = _scalar(f)
    den = specfun.integrate_right_tail(fv, gamma, upper, cfg, pts, decays)
    num = specfun.integrate_right_tail(lambda x: float(profile.r_right(x)) * fv(x),
                                       gamma, upper, cfg, pts, decays)
    if not math.isfinite(den):
        raise DivergenceError("int f e^{-gamma x} diverges")
    return num, den


def _scalar(f: Callable) -> Callable[[float], float]:
    return lambda x: float(f(x))


def limit_revenue_profile(profile: RevenueProfile, gamma: float, f: Callable,
                          support: Optional[float] = None, decays: bool = False,
                          cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Limit revenue ``R(f)`` for an admission profile ``f``.

    Parameters
    ----------
    support : float, optional
        ``f`` vanishes beyond this point.
    decays : bool
        Caller vouches that ``f e^{-gamma x}`` is integrable on the half-line
        (needed when ``gamma <= 0`` and no support is given).
    """
    k = limit_constants(profile, gamma, cfg)
    num, den = _profile_integrals(profile, gamma, f, support, decays, cfg)
    return (k.A + num) / (k.B + den)


def stationary_density(gamma: float, f: Callable, x, support: Optional[float] = None,
                       decays: bool = False, cfg: QuadratureConfig = DEFAULT_QUAD):
    """Limit density ``w(x)`` of the scaled occupancy ``(Q - s)/sqrt(s)``.

    ``w = e^{-x^2/2 - gamma x}/Z`` left of zero and ``f e^{-gamma x}/Z`` right of it.
    """
    upper = math.inf if support is None else float(support)
    pts = [] if support is None else [float(support)]
    Z = float(specfun.mills_ratio(gamma)) + specfun.integrate_right_tail(
        _scalar(f), gamma, upper, cfg, pts, decays)
    xa = np.asarray(x, dtype=float)
    left = np.exp(-0.5 * xa * xa - gamma * xa)
    with np.errstate(over="ignore"):
        right_w = np.exp(-gamma * np.maximum(xa, 0.0))
    fx = np.array([float(f(v)) if v >= 0 else 0.0 for v in np.atleast_1d(xa)]).reshape(xa.shape)
    out = np.where(xa < 0, left, fx * right_w) / Z
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# finite-size expansions of the lattice sums

@dataclass(frozen=True)
class ExpansionReport:
    """Comparison of a two-term expansion against the exact lattice sum.

    ``expansion = leading + first_order``; ``abs_error = |exact - expansion|``.
    """

    s: int
    gamma: float
    gamma_s: float
    leading: float
    first_order: float
    exact: float
    abs_error: float

    @property
    def expansion(self) -> float:
        return self.leading + self.first_order

    def to_dict(self) -> dict:
        return {"s": self.s, "gamma": self.gamma, "gamma_s": self.gamma_s,
                "leading": self.leading, "first_order": self.first_order,
                "expansion": self.expansion, "exact": self.exact,
                "abs_error": self.abs_error}


def gamma_s(s: int, gamma: float) -> float:
    """Effective slack ``-sqrt(s) ln(1 - gamma/sqrt(s))`` so that ``rho^m = e^{-gamma_s m/sqrt(s)}``."""
    root = math.sqrt(s)
    return -root * math.log1p(-gamma / root)


def wsr_expansion(profile: RevenueProfile, s: int, gamma: float,
                  eta: Optional[float] = None, f: Optional[Callable] = None,
                  cfg: QuadratureConfig = DEFAULT_QUAD) -> ExpansionReport:
    """Expansion of the waiting-room sum ``W_s^R``.

    With ``eta`` the threshold case ``f = 1{x <= eta}`` is used and the
    lattice correction ``(floor(eta sqrt s) - eta sqrt s + 1/2) e^{-gamma eta} r(eta)``
    is included. Otherwise ``f`` (default 1) must make ``r f e^{-gamma x}``
    integrable; the exact sum is ``sum_{m>=1} r(m/sqrt s) f(m/sqrt s) rho^m``.
    """
    root = math.sqrt(s)
    exact_cfg = QuadratureConfig(abs_tol=min(cfg.abs_tol, 1e-14), rel_tol=min(cfg.rel_tol, 1e-12),
                                 max_subdivisions=max(cfg.max_subdivisions, 200))
    if eta is not None:
        def L(g):
            return profile.right_integral(g, eta, exact_cfg)
        M = int(math.floor(eta * root))
        lattice = (M - (eta * root - 0.5)) * math.exp(-gamma * eta) * float(profile.r_right(eta))
        exact = finite.lattice_sum_right(profile.r_right, s, gamma, eta=eta)
        f0 = 1.0
    else:
        fv = f if f is not None else (lambda x: np.ones_like(np.asarray(x, dtype=float)))

        def L(g):
            return specfun.integrate_right_tail(
                lambda x: float(profile.r_right(x)) * float(fv(x)), g, math.inf, exact_cfg,
                points=profile.kinks, decays=True)
        lattice = 0.0
        exact = finite.lattice_sum_right(profile.r_right, s, gamma, f=fv)
        f0 = float(fv(0.0))
    lead = root * L(gamma)
    dL = (L(gamma + _DGAMMA) - L(gamma - _DGAMMA)) / (2 * _DGAMMA)
    first = 0.5 * gamma * gamma * dL - 0.5 * profile.r0 * f0 + lattice
    return ExpansionReport(int(s), float(gamma), gamma_s(s, gamma), lead, first, exact,
                           abs(exact - lead - first))


def wsl_expansion(profile: RevenueProfile, s: int, gamma: float,
                  cfg: QuadratureConfig = DEFAULT_QUAD) -> ExpansionReport:
    """Expansion of the below-capacity sum ``W_s^L``.

    ``sqrt(s) A + r(0)/2 + int e^{-y^2/2 - gamma y} (y^3/6 - (1+gamma^2) y/2) r_L(y) dy``
    against ``sum_{k=0}^s r((k-s)/sqrt s) s!/(k! lam^{s-k})``.
    """
    root = math.sqrt(s)
    lead = root * profile.left_integral(gamma, cfg)
    corr = specfun.integrate_left_tail(
        lambda y: (y ** 3 / 6.0 - 0.5 * (1.0 + gamma * gamma) * y) * float(profile.r_left(y)),
        gamma, cfg)
    first = 0.5 * profile.r0 + corr
    exact = finite.lattice_sum_left(profile.eval, s, gamma)
    return ExpansionReport(int(s), float(gamma), gamma_s(s, gamma), lead, first, exact,
                           abs(exact - lead - first))
