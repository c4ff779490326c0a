"""Special functions and quadrature primitives.

The Gaussian helpers accept scalars or arrays. Quadrature wraps QUADPACK
(``scipy.integrate.quad``) so that failures surface as exceptions instead of
warnings.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import integrate, special

from .errors import ConvergenceError, DivergenceError, DomainError

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
_INV_E = math.exp(-1.0)

# beyond this many standard deviations the Gaussian weight is below 1e-31
_GAUSS_SPAN = 12.0


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances for adaptive quadrature.

    Attributes
    ----------
    abs_tol : float
        Absolute error target.
    rel_tol : float
        Relative error target.
    max_subdivisions : int
        Upper bound on the number of adaptive subintervals.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("quadrature tolerances must be strictly positive")
        if int(self.max_subdivisions) < 1:
            raise DomainError("max_subdivisions must be at least 1")

    @classmethod
    def from_env(cls, var: str = "QED_QUAD_TOL") -> "QuadratureConfig":
        """Default config with ``rel_tol`` taken from an environment variable if set."""
        raw = os.environ.get(var)
        if raw is None or raw.strip() == "":
            return cls()
        try:
            tol = float(raw)
        except ValueError as exc:
            raise DomainError(f"{var}={raw!r} is not a number") from exc
        return cls(rel_tol=tol)


DEFAULT_QUAD = QuadratureConfig()


def normal_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / _SQRT_2PI
    return out[()] if out.ndim == 0 else out


def normal_cdf(x):
    """Standard normal distribution function."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return out[()] if np.ndim(out) == 0 else out


def mills_ratio(gamma):
    """Return ``Phi(gamma)/phi(gamma)``.

    Evaluated as ``sqrt(pi/2) * erfcx(-gamma/sqrt(2))`` which stays accurate
    deep in the left tail where both numerator and denominator underflow.
    """
    out = _SQRT_HALF_PI * special.erfcx(-np.asarray(gamma, dtype=float) / math.sqrt(2.0))
    return out[()] if np.ndim(out) == 0 else out


def _lambert_guess(branch: int, x: float) -> float:
    # series about the branch point -1/e
    if x < -0.25:
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        if branch == -1:
            p = -p
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    if branch == 0:
        if x < 3.0:
            return math.log1p(x) * (1.0 - 0.25 * math.log1p(x)) if x > 0 else x
        l1 = math.log(x)
        l2 = math.log(l1)
        return l1 - l2 + l2 / l1
    l1 = math.log(-x)
    l2 = math.log(-l1)
    return l1 - l2 + l2 / l1


def lambert_w(branch: int, x: float) -> float:
    """Real Lambert W on branch 0 or -1 by Halley iteration.

    Parameters
    ----------
    branch : {0, -1}
    x : float
        Branch 0 needs ``x >= -1/e``; branch -1 needs ``-1/e <= x < 0``.

    Returns
    -------
    float
        ``w`` with ``w * exp(w) == x``; ``w >= -1`` on branch 0 and
        ``w <= -1`` on branch -1.
    """
    if branch not in (0, -1):
        raise DomainError(f"unsupported branch {branch}")
    x = float(x)
    if not math.isfinite(x):
        raise DomainError("x must be finite")
    # tolerate rounding of -1/e itself
    lo = -_INV_E * (1.0 + 4.0 * np.finfo(float).eps)
    if x < lo or (branch == -1 and x >= 0.0):
        raise DomainError(f"x={x!r} outside the domain of branch {branch}")
    if x <= -_INV_E:
        return -1.0
    if x == 0.0:
        return 0.0
    w = _lambert_guess(branch, x)
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w_new = w - step
        # stay on the requested side of the branch point
        if branch == 0 and w_new < -1.0:
            w_new = 0.5 * (w - 1.0)
        elif branch == -1 and w_new > -1.0:
            w_new = 0.5 * (w - 1.0)
        if abs(w_new - w) <= 1e-15 * max(1.0, abs(w_new)):
            return w_new
        w = w_new
    return w


def _quad(func, a, b, cfg: QuadratureConfig, points=None) -> float:
    kwargs = dict(epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
                  limit=int(cfg.max_subdivisions), full_output=1)
    if points is not None and len(points) > 0:
        kwargs["points"] = list(points)
    res = integrate.quad(func, a, b, **kwargs)
    if len(res) > 3:
        raise ConvergenceError(f"quadrature on [{a}, {b}] failed: {res[3]}")
    return float(res[0])


def _interior(points: Optional[Iterable[float]], a: float, b: float) -> list:
    if points is None:
        return []
    return sorted({float(p) for p in points if a < p < b})


def integrate_left_tail(integrand: Callable[[float], float], gamma: float,
                        cfg: QuadratureConfig = DEFAULT_QUAD,
                        points: Optional[Iterable[float]] = None) -> float:
    """Integrate ``h(x) exp(-x^2/2 - gamma x)`` over ``(-inf, 0]``.

    The weight equals ``exp(gamma^2/2) exp(-(x+gamma)^2/2)``, a Gaussian
    centred at ``-gamma``. The range is cut where that Gaussian is
    negligible, which keeps the problem on a finite interval so that
    breakpoints can be honoured.
    """
    gamma = float(gamma)
    if gamma <= 0.0:
        # weight peaks at the origin with value 1
        lo = -_GAUSS_SPAN

        def f(x):
            return integrand(x) * math.exp(-0.5 * x * x - gamma * x)

        return _quad(f, lo, 0.0, cfg, _interior(points, lo, 0.0))

    if gamma * gamma > 1400:
        raise DomainError(f"gamma={gamma} overflows the Gaussian weight")
    # rescale so the integrand peaks at 1 near x = -gamma
    scale = math.exp(0.5 * gamma * gamma)
    lo = -gamma - _GAUSS_SPAN

    def g(x):
        y = x + gamma
        return integrand(x) * math.exp(-0.5 * y * y)

    pts = sorted(set(_interior(points, lo, 0.0)) | {-gamma})
    return scale * _quad(g, lo, 0.0, cfg, pts)


def integrate_right_tail(integrand: Callable[[float], float], gamma: float,
                         upper: float = math.inf,
                         cfg: QuadratureConfig = DEFAULT_QUAD,
                         points: Optional[Iterable[float]] = None,
                         decays: bool = False) -> float:
    """Integrate ``h(x) exp(-gamma x)`` over ``[0, upper]``.

    Parameters
    ----------
    upper : float
        Finite bound or ``inf``. An infinite range needs ``gamma > 0`` or
        ``decays=True`` (the caller vouches for integrability).
    points : iterable of float, optional
        Kink locations to split the range at.
    """
    gamma = float(gamma)
    upper = float(upper)
    if upper < 0:
        raise DomainError("upper must be nonnegative")
    if upper == 0.0:
        return 0.0

    def f(x):
        v = integrand(x)
        if v == 0.0:
            return 0.0
        try:
            return v * math.exp(-gamma * x)
        except OverflowError:
            # decaying integrand against a growing weight: combine in log space
            return math.copysign(math.exp(min(math.log(abs(v)) - gamma * x, 709.0)), v)

    if math.isfinite(upper):
        return _quad(f, 0.0, upper, cfg, _interior(points, 0.0, upper))
    if gamma <= 0.0 and not decays:
        raise DivergenceError("infinite right range needs gamma > 0 or declared decay")
    pts = _interior(points, 0.0, math.inf)
    split = pts[-1] if pts else 0.0
    head = _quad(f, 0.0, split, cfg, pts[:-1]) if split > 0 else 0.0
    return head + _quad(f, split, math.inf, cfg)


def c_weight(gamma: float, eta):
    """``int_0^eta exp(-gamma x) dx``, equal to ``eta`` at ``gamma = 0``.

    Written with ``expm1`` so small ``gamma * eta`` loses no digits.
    """
    eta = np.asarray(eta, dtype=float)
    if gamma == 0.0:
        out = eta.copy()
    else:
        out = -np.expm1(-gamma * eta) / gamma
    return out[()] if out.ndim == 0 else out
