"""Transaction-cost functions and their mean value modification.

A cost model maps the (dimensionless) traded volume ``xi`` to the cost
fraction ``C(xi)`` charged per unit of the underlying.  Hedging against a
normally distributed rebalancing volume replaces ``C`` by its mean value
modification

    C_tilde(xi) = integral_0^inf C(xi * x) * x * exp(-x**2 / 2) dx,

which every model here exposes both in closed form (``mean_value``) and
through adaptive quadrature (``mean_value_quadrature``), the latter acting
as an independent oracle for the former.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

__all__ = [
    "CostModel",
    "ConstantCost",
    "LinearCost",
    "PiecewiseLinearCost",
    "QuadratureError",
    "mean_value_quadrature",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT_PI_OVER_2 = math.sqrt(math.pi / 2.0)


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def _check_volume(xi):
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0.0):
        raise ValueError("traded volume xi must be non-negative")
    return xi


def _match(xi, values):
    # return a python float for scalar input, an ndarray otherwise
    if np.ndim(xi) == 0:
        return float(values)
    return values


@dataclass(frozen=True)
class CostModel:
    """Base class; concrete models override the evaluation hooks."""

    c0: float

    def __post_init__(self):
        if self.c0 <= 0.0:
            raise ValueError("c0 must be positive")

    # -- evaluation hooks -------------------------------------------------

    def cost(self, xi):
        """Cost fraction C(xi) for traded volume xi >= 0."""
        raise NotImplementedError

    def mean_value(self, xi):
        """Closed-form mean value modification C_tilde(xi)."""
        raise NotImplementedError

    def mean_value_prime(self, xi):
        """Derivative d C_tilde / d xi (right-sided at xi = 0)."""
        raise NotImplementedError

    # -- shared structure --------------------------------------------------

    @property
    def cost_at_zero(self) -> float:
        return self.c0

    @property
    def floor_value(self) -> float:
        """Largest lower bound of C_tilde over xi >= 0."""
        raise NotImplementedError

    @property
    def has_negative_values(self) -> bool:
        """True when the model can charge economically invalid negative costs."""
        return self.floor_value < 0.0

    def kinks(self) -> tuple[float, ...]:
        """Volumes at which C switches branch (used to split quadrature)."""
        return ()


@dataclass(frozen=True)
class ConstantCost(CostModel):
    """Flat cost fraction; C(xi) = c0 for every traded volume."""

    def __post_init__(self):
        if self.c0 < 0.0:
            raise ValueError("c0 must be non-negative")

    def cost(self, xi):
        xi = _check_volume(xi)
        return _match(xi, np.full_like(xi, self.c0))

    def mean_value(self, xi):
        return self.cost(xi)

    def mean_value_prime(self, xi):
        xi = _check_volume(xi)
        return _match(xi, np.zeros_like(xi))

    @property
    def floor_value(self) -> float:
        return self.c0


@dataclass(frozen=True)
class LinearCost(CostModel):
    """Linearly decreasing costs, C(xi) = c0 - kappa * xi.

    Unbounded below, so large volumes produce negative costs; the model is
    kept for comparison purposes and flagged through ``has_negative_values``.
    """

    kappa: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if self.kappa < 0.0:
            raise ValueError("kappa must be non-negative")

    def cost(self, xi):
        xi = _check_volume(xi)
        return _match(xi, self.c0 - self.kappa * xi)

    def mean_value(self, xi):
        xi = _check_volume(xi)
        return _match(xi, self.c0 - _SQRT_PI_OVER_2 * self.kappa * xi)

    def mean_value_prime(self, xi):
        xi = _check_volume(xi)
        return _match(xi, np.full_like(xi, -_SQRT_PI_OVER_2 * self.kappa))

    @property
    def floor_value(self) -> float:
        return self.c0 if self.kappa == 0.0 else -math.inf

    @property
    def has_negative_values(self) -> bool:
        return self.kappa > 0.0


@dataclass(frozen=True)
class PiecewiseLinearCost(CostModel):
    """Piecewise linear decreasing costs.

    C(xi) = c0                      for xi <  xi_minus
            c0 - kappa*(xi - xi_minus)  on [xi_minus, xi_plus]
            c0 - kappa*(xi_plus - xi_minus)  beyond xi_plus

    The floor value may come out negative for aggressive slopes; such models
    are accepted but flagged (negative costs are economically invalid).
    """

    kappa: float = 0.0
    xi_minus: float = 0.0
    xi_plus: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if self.kappa < 0.0:
            raise ValueError("kappa must be non-negative")
        if not (0.0 < self.xi_minus <= self.xi_plus):
            raise ValueError("breakpoints must satisfy 0 < xi_minus <= xi_plus")

    def cost(self, xi):
        xi = _check_volume(xi)
        mid = self.c0 - self.kappa * (xi - self.xi_minus)
        out = np.where(xi < self.xi_minus, self.c0,
                       np.where(xi <= self.xi_plus, mid, self.floor_value))
        return _match(xi, out)

    def mean_value(self, xi):
        xi = _check_volume(xi)
        scalar = np.ndim(xi) == 0
        x = np.atleast_1d(xi)
        out = np.full_like(x, self.c0)
        pos = x > 0.0
        if np.any(pos):
            # below xi_minus/40 the CDF difference is exactly zero in doubles,
            # so flooring xi there changes nothing and avoids overflow noise
            xp = np.maximum(x[pos], 0.025 * self.xi_minus)
            a = self.xi_minus / xp
            b = self.xi_plus / xp
            integral = _SQRT_2PI * (ndtr(b) - ndtr(a))
            out[pos] = self.c0 - self.kappa * x[pos] * integral
        return float(out[0]) if scalar else out

    def mean_value_prime(self, xi):
        xi = _check_volume(xi)
        scalar = np.ndim(xi) == 0
        x = np.atleast_1d(xi)
        out = np.zeros_like(x)
        pos = x > 0.0
        if np.any(pos):
            xp = np.maximum(x[pos], 0.025 * self.xi_minus)  # same floor as mean_value
            a = self.xi_minus / xp
            b = self.xi_plus / xp
            integral = _SQRT_2PI * (ndtr(b) - ndtr(a))
            # d/dxi [xi * I(xi)] with I' expressed through the branch densities
            xi_iprime = (self.xi_minus * np.exp(-0.5 * a * a)
                         - self.xi_plus * np.exp(-0.5 * b * b)) / xp
            out[pos] = -self.kappa * (integral + xi_iprime)
        return float(out[0]) if scalar else out

    @property
    def floor_value(self) -> float:
        return self.c0 - self.kappa * (self.xi_plus - self.xi_minus)

    def kinks(self) -> tuple[float, ...]:
        return (self.xi_minus, self.xi_plus)


def mean_value_quadrature(model: CostModel, xi: float, tol: float = 1e-10) -> float:
    """Evaluate C_tilde(xi) by adaptive quadrature (oracle for ``mean_value``).

    Splits the integration range at images of the cost function's kinks and
    raises :class:`QuadratureError` when the combined error estimate exceeds
    the requested absolute tolerance.
    """
    if xi < 0.0:
        raise ValueError("traded volume xi must be non-negative")
    if xi == 0.0:
        # integral of x * exp(-x^2/2) over [0, inf) is one
        return float(model.cost(0.0))

    def integrand(x):
        return model.cost(xi * x) * x * math.exp(-0.5 * x * x)

    points = sorted(k / xi for k in model.kinks())
    # the Gaussian weight is ~4e-23 at x = 10; integrate the remainder separately
    cut = max(10.0, (points[-1] + 1.0) if points else 0.0)
    inner = [p for p in points if 0.0 < p < cut]
    total, err = quad(integrand, 0.0, cut, points=inner or None,
                      limit=200, epsabs=0.5 * tol, epsrel=1e-12)
    tail, tail_err = quad(integrand, cut, np.inf, epsabs=0.5 * tol, epsrel=1e-12)
    residual = err + tail_err
    if residual > 10.0 * tol:
        raise QuadratureError(
            f"mean value quadrature at xi={xi} did not converge "
            f"(error estimate {residual:.3e})", residual)
    return float(total + tail)
