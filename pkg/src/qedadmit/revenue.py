"""Asymptotic revenue profiles and finite-system revenue structures.

A profile ``r`` is stored as two halves: ``r_L`` on ``x < 0`` (below
capacity) and ``r_R`` on ``x >= 0`` (customers waiting). Built-in halves
carry closed forms for the integrals the limit functionals need; anything
else falls back on quadrature.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import specfun
from .errors import DomainError, UnsupportedError
from .specfun import QuadratureConfig, DEFAULT_QUAD

_FD_STEP = 1e-6


def _as_vectorized(fn: Callable) -> Callable:
    """Wrap a scalar callable so it also maps over arrays."""
    def wrapped(x):
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            return float(fn(float(arr)))
        return np.array([fn(float(v)) for v in arr.ravel()]).reshape(arr.shape)
    return wrapped


def _phi2(z):
    """``(1 - (1+z) e^{-z}) / z^2`` without cancellation near ``z = 0``."""
    if abs(z) > 0.5:
        return (1.0 - (1.0 + z) * math.exp(-z)) / (z * z)
    total, fact = 0.0, 2.0
    for n in range(2, 30):
        if n > 2:
            fact *= n
        total += (-1) ** n * (n - 1) * z ** (n - 2) / fact
    return total


# --------------------------------------------------------------------------
# left halves

@dataclass(frozen=True)
class ExpLeft:
    """``r_L(x) = exp(b x)``; ``b = 0`` gives the flat profile ``r_L = 1``."""
    b: float

    def __post_init__(self):
        if not self.b >= 0:
            raise DomainError("left rate b must be nonnegative")

    def __call__(self, x):
        return np.exp(self.b * np.asarray(x, dtype=float))

    @property
    def slope0(self) -> float:
        return float(self.b)

    def gauss_integral(self, gamma: float, cfg: QuadratureConfig) -> float:
        # int_{-inf}^0 e^{bx - x^2/2 - gamma x} dx = Phi(gamma-b)/phi(gamma-b)
        return float(specfun.mills_ratio(gamma - self.b))


@dataclass(frozen=True)
class PowerLeft:
    """``r_L(x) = -alpha (-x)^beta``, the waiting-side mirror of a power penalty."""
    alpha: float
    beta: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return -self.alpha * np.power(np.maximum(-x, 0.0), self.beta)

    @property
    def slope0(self) -> float:
        if self.alpha == 0:
            return 0.0
        return self.alpha if self.beta == 1 else 0.0

    def gauss_integral(self, gamma: float, cfg: QuadratureConfig) -> float:
        if self.alpha == 0:
            return 0.0
        return specfun.integrate_left_tail(lambda x: float(self(x)), gamma, cfg)


@dataclass(frozen=True)
class CallableLeft:
    """Arbitrary left half given as a callable."""
    fn: Callable
    slope: Optional[float] = None

    def __call__(self, x):
        return _as_vectorized(self.fn)(x)

    @property
    def slope0(self) -> float:
        if self.slope is not None:
            return float(self.slope)
        h = _FD_STEP
        # second-order one-sided stencil
        return float((3 * self.fn(0.0) - 4 * self.fn(-h) + self.fn(-2 * h)) / (2 * h))

    def gauss_integral(self, gamma: float, cfg: QuadratureConfig) -> float:
        return specfun.integrate_left_tail(lambda x: float(self.fn(x)), gamma, cfg)


# --------------------------------------------------------------------------
# right halves

@dataclass(frozen=True)
class ExpRight:
    """``r_R(x) = exp(-d x)``."""
    d: float

    def __post_init__(self):
        if not self.d > 0:
            raise DomainError("right rate d must be positive")

    support = math.inf
    kinks = ()
    infimum = 0.0

    def __call__(self, x):
        return np.exp(-self.d * np.asarray(x, dtype=float))

    def deriv(self, x):
        return -self.d * np.exp(-self.d * np.asarray(x, dtype=float))

    def inverse(self, y: float) -> float:
        return -math.log(y) / self.d

    def weighted_integral(self, gamma, eta, cfg) -> float:
        return float(specfun.c_weight(gamma + self.d, eta))


@dataclass(frozen=True)
class LinearRight:
    """``r_R(x) = (1 - x/d)`` on ``[0, d]``, zero beyond."""
    d: float

    def __post_init__(self):
        if not self.d > 0:
            raise DomainError("linear support d must be positive")

    infimum = 0.0

    @property
    def support(self) -> float:
        return float(self.d)

    @property
    def kinks(self) -> tuple:
        return (float(self.d),)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip(1.0 - x / self.d, 0.0, None)

    def deriv(self, x):
        # left derivative at the kink x = d
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.d, -1.0 / self.d, 0.0)

    def inverse(self, y: float) -> float:
        return self.d * (1.0 - y)

    def weighted_integral(self, gamma, eta, cfg) -> float:
        m = min(float(eta), self.d)
        if m <= 0:
            return 0.0
        first = float(specfun.c_weight(gamma, m))
        # int_0^m x e^{-gamma x} dx
        second = m * m * _phi2(gamma * m)
        return first - second / self.d


@dataclass(frozen=True)
class PowerRight:
    """``r_R(x) = -alpha x^beta`` (zero when ``alpha = 0``)."""
    alpha: float
    beta: float

    support = math.inf
    kinks = ()
    infimum = -math.inf

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return -self.alpha * np.power(np.maximum(x, 0.0), self.beta)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return -self.alpha * self.beta * np.power(np.maximum(x, 0.0), self.beta - 1.0)

    def inverse(self, y: float) -> float:
        if self.alpha == 0:
            raise UnsupportedError("flat right half has no inverse")
        return (-y / self.alpha) ** (1.0 / self.beta)

    def weighted_integral(self, gamma, eta, cfg) -> float:
        if self.alpha == 0:
            return 0.0
        return specfun.integrate_right_tail(lambda x: float(self(x)), gamma, eta, cfg)


@dataclass(frozen=True)
class CallableRight:
    """Arbitrary right half given as callables."""
    fn: Callable
    derivative: Optional[Callable] = None
    inv: Optional[Callable] = None
    support: float = math.inf
    kinks: tuple = ()
    infimum: float = -math.inf

    def __call__(self, x):
        return _as_vectorized(self.fn)(x)

    def deriv(self, x):
        if self.derivative is not None:
            return _as_vectorized(self.derivative)(x)

        def fd(v):
            h = _FD_STEP * max(1.0, abs(v))
            if v - h < 0:
                return (-3 * self.fn(v) + 4 * self.fn(v + h) - self.fn(v + 2 * h)) / (2 * h)
            return (self.fn(v + h) - self.fn(v - h)) / (2 * h)
        return _as_vectorized(fd)(x)

    def inverse(self, y: float) -> float:
        if self.inv is not None:
            return float(self.inv(y))
        if not math.isfinite(self.support):
            raise UnsupportedError("custom right half needs an inverse or a finite support bound")
        from scipy.optimize import brentq
        return float(brentq(lambda x: self.fn(x) - y, 0.0, self.support, xtol=1e-14, rtol=1e-15))

    def weighted_integral(self, gamma, eta, cfg) -> float:
        return specfun.integrate_right_tail(lambda x: float(self.fn(x)), gamma, eta, cfg,
                                            points=self.kinks)


# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RevenueProfile:
    """Scaled revenue profile ``r`` with halves ``r_L`` and ``r_R``.

    Attributes
    ----------
    kind : str
        One of ``exponential``, ``linear``, ``exponential_right``, ``poly``,
        ``custom``.
    left, right
        Half-profile objects.
    normalization : float
        ``r(0)`` of the profile as supplied, before any rescaling.
    params : dict
        Constructor parameters, kept for reporting.
    """

    kind: str
    left: object
    right: object
    normalization: float = 1.0
    params: dict = field(default_factory=dict)

    # -- evaluation -----------------------------------------------------
    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Evaluate ``r`` piecewise; scalars in, scalars out."""
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            xv = float(arr)
            return float(self.left(xv)) if xv < 0 else float(self.right(xv))
        out = np.empty_like(arr)
        neg = arr < 0
        if neg.any():
            out[neg] = self.left(arr[neg])
        if (~neg).any():
            out[~neg] = self.right(arr[~neg])
        return out

    def r_left(self, x):
        return self.left(x)

    def r_right(self, x):
        return self.right(x)

    @property
    def r0(self) -> float:
        return float(self.right(0.0))

    @property
    def is_normalized(self) -> bool:
        return abs(self.r0 - 1.0) < 1e-12

    @property
    def support(self) -> float:
        """Point beyond which ``r_R`` is constant at its infimum."""
        return float(self.right.support)

    @property
    def kinks(self) -> tuple:
        return tuple(self.right.kinks)

    # -- derivatives and inverse -----------------------------------------
    def right_derivative(self, x):
        """``r_R'(x)`` for ``x >= 0`` (left derivative at kinks)."""
        return self.right.deriv(x)

    def boundary_slopes(self) -> tuple[float, float]:
        """Return ``(r_L'(0-), r_R'(0+))``."""
        return float(self.left.slope0), float(self.right.deriv(0.0))

    def right_inverse(self, y: float) -> float:
        """Solve ``r_R(x) = y`` for ``x >= 0``.

        Raises
        ------
        DomainError
            If ``y`` is not in ``(inf r_R, r(0)]``.
        UnsupportedError
            If no inverse is available.
        """
        y = float(y)
        if not (self.right.infimum < y <= self.r0 + 1e-15):
            raise DomainError(f"y={y} outside the range ({self.right.infimum}, {self.r0}] of r_R")
        return max(0.0, float(self.right.inverse(min(y, self.r0))))

    def has_inverse(self) -> bool:
        try:
            self.right_inverse(0.5 * (self.r0 + max(self.right.infimum, self.r0 - 1.0)))
        except UnsupportedError:
            return False
        except DomainError:
            return False
        return True

    # -- integrals against the limiting weights ----------------------------
    def left_integral(self, gamma: float, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
        """``A = int_{-inf}^0 r_L(x) exp(-x^2/2 - gamma x) dx``."""
        return self.left.gauss_integral(gamma, cfg)

    def right_integral(self, gamma: float, eta: float,
                       cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
        """``int_0^eta r_R(x) exp(-gamma x) dx``."""
        if eta < 0:
            raise DomainError("eta must be nonnegative")
        return self.right.weighted_integral(gamma, eta, cfg)

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


def exponential(b: float, d: float) -> RevenueProfile:
    """``r_L = exp(b x)``, ``r_R = exp(-d x)``."""
    return RevenueProfile("exponential", ExpLeft(float(b)), ExpRight(float(d)),
                          params={"b": float(b), "d": float(d)})


def linear(d: float, b: float = 1.0) -> RevenueProfile:
    """Right half ``(1 - x/d)`` clamped at zero; left half ``exp(b x)``."""
    return RevenueProfile("linear", ExpLeft(float(b)), LinearRight(float(d)),
                          params={"d": float(d), "b": float(b)})


def exponential_right(delta: float, left=None) -> RevenueProfile:
    """``r_R = exp(-delta x)`` with any nondecreasing left half.

    ``left`` may be a number (the rate of ``exp(b x)``), a callable, or
    ``None`` for ``exp(x)``.
    """
    lh = _left_from(left if left is not None else 1.0)
    params = {"delta": float(delta)}
    if isinstance(lh, ExpLeft):
        params["b"] = lh.b
    return RevenueProfile("exponential_right", lh, ExpRight(float(delta)), params=params)


def linear_with_left(d: float, left) -> RevenueProfile:
    """Linear right half with an arbitrary left half."""
    lh = _left_from(left)
    params = {"d": float(d)}
    if isinstance(lh, ExpLeft):
        params["b"] = lh.b
    return RevenueProfile("linear", lh, LinearRight(float(d)), params=params)


def polynomial_penalty(alpha_minus: float, beta_minus: float,
                       alpha_plus: float, beta_plus: float) -> RevenueProfile:
    """Power penalties on either side of capacity; ``r(0) = 0``.

    Only the side(s) with the larger exponent are active, so that
    ``r(x) = -a- |x|^b- 1{b- >= b+}`` left of zero and
    ``-a+ x^b+ 1{b- <= b+}`` right of it.
    """
    if alpha_minus < 0 or alpha_plus < 0 or beta_minus < 1 or beta_plus < 1:
        raise DomainError("need alpha >= 0 and beta >= 1 on both sides")
    am = alpha_minus if beta_minus >= beta_plus else 0.0
    ap = alpha_plus if beta_minus <= beta_plus else 0.0
    return RevenueProfile(
        "poly", PowerLeft(float(am), float(beta_minus)), PowerRight(float(ap), float(beta_plus)),
        normalization=0.0,
        params={"alpha_minus": float(alpha_minus), "beta_minus": float(beta_minus),
                "alpha_plus": float(alpha_plus), "beta_plus": float(beta_plus)})


def custom(r_left: Callable, r_right: Callable,
           r_right_derivative: Optional[Callable] = None,
           r_right_inverse: Optional[Callable] = None,
           support: float = math.inf, kinks: tuple = (),
           check: bool = True) -> RevenueProfile:
    """Profile from user callables, rescaled so that ``r(0) = 1``.

    The scale factor is kept in ``normalization``. Monotonicity of each half
    is checked on a sample grid unless ``check`` is false.
    """
    r0 = float(r_right(0.0))
    scale = r0 if r0 > 0 else 1.0
    if check:
        xl = np.linspace(-8.0, 0.0, 401)[:-1]
        yl = np.array([r_left(v) for v in xl])
        if np.any(np.diff(yl) < -1e-12 * max(1.0, np.max(np.abs(yl)))):
            raise DomainError("r_L must be nondecreasing")
        top = support if math.isfinite(support) else 8.0
        xr = np.linspace(0.0, top, 401)
        yr = np.array([r_right(v) for v in xr])
        if np.any(np.diff(yr) > 1e-12 * max(1.0, np.max(np.abs(yr)))):
            raise DomainError("r_R must be nonincreasing")
    lfn = (lambda x: r_left(x) / scale)
    rfn = (lambda x: r_right(x) / scale)
    dfn = None if r_right_derivative is None else (lambda x: r_right_derivative(x) / scale)
    ifn = None if r_right_inverse is None else (lambda y: r_right_inverse(y * scale))
    infimum = float(r_right(support)) / scale if math.isfinite(support) else -math.inf
    return RevenueProfile(
        "custom", CallableLeft(lfn),
        CallableRight(rfn, dfn, ifn, float(support), tuple(kinks), infimum),
        normalization=r0)


def _left_from(left):
    if isinstance(left, (ExpLeft, PowerLeft, CallableLeft)):
        return left
    if callable(left):
        return CallableLeft(left)
    return ExpLeft(float(left))


def profile_from_dict(spec: dict) -> RevenueProfile:
    """Build a profile from its JSON form.

    Accepted shapes::

        {"kind": "exponential", "b": 5.0, "d": 1.0}
        {"kind": "linear", "d": 1.0, "b": 1.0}        # b optional, default 1
        {"kind": "poly", "alpha_minus": ..., "beta_minus": ...,
                         "alpha_plus": ..., "beta_plus": ...}
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise DomainError("profile must be an object with a 'kind' field")
    kind = spec["kind"]
    try:
        if kind == "exponential":
            _require(spec, ("b", "d"), ())
            return exponential(float(spec["b"]), float(spec["d"]))
        if kind == "linear":
            _require(spec, ("d",), ("b",))
            return linear(float(spec["d"]), float(spec.get("b", 1.0)))
        if kind == "poly":
            keys = ("alpha_minus", "beta_minus", "alpha_plus", "beta_plus")
            _require(spec, keys, ())
            return polynomial_penalty(*(float(spec[k]) for k in keys))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"bad profile parameter: {exc}") from exc
    raise DomainError(f"unknown profile kind {kind!r}")


def _require(spec, needed, optional):
    missing = [k for k in needed if k not in spec]
    if missing:
        raise DomainError(f"profile {spec['kind']!r} is missing {missing}")
    extra = set(spec) - set(needed) - set(optional) - {"kind"}
    if extra:
        raise DomainError(f"profile {spec['kind']!r} has unknown fields {sorted(extra)}")
    for k in needed + tuple(k for k in optional if k in spec):
        v = spec[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise DomainError(f"field {k!r} must be a finite number")


def load_profile(path: str) -> RevenueProfile:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}: invalid JSON ({exc})") from exc
    return profile_from_dict(data)


@dataclass(frozen=True)
class FiniteRevenue:
    """Finite-system revenue ``r_s(k) = n_s + q_s r((k - s)/sqrt(s))``.

    ``n_s`` and ``q_s`` may be constants or callables of ``s``.
    """

    profile: RevenueProfile
    n_s: object = 0.0
    q_s: object = 1.0

    def coefficients(self, s: int) -> tuple[float, float]:
        n = self.n_s(s) if callable(self.n_s) else self.n_s
        q = self.q_s(s) if callable(self.q_s) else self.q_s
        if not q > 0:
            raise DomainError("q_s must be positive")
        return float(n), float(q)

    def values(self, s: int, k) -> np.ndarray:
        """``r_s(k)`` for integer occupancies ``k``."""
        n, q = self.coefficients(s)
        k = np.asarray(k, dtype=float)
        return n + q * np.asarray(self.profile.eval((k - s) / math.sqrt(s)))
