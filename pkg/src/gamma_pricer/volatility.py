"""Nonlinear diffusion coefficient driven by transaction costs.

The adjusted variance seen by a delta hedger who rebalances every
``dt_rehedge`` years is

    sigma_hat(H)^2 = sigma^2 * (1 -/+ sqrt(2/pi) * C_tilde(xi) * sgn(H) / (sigma*sqrt(dt)))

with ``xi = sigma * |H| * sqrt(dt)`` and ``H`` the cash Gamma of the option.
The minus sign prices the bid (seller hedges, costs lower the variance), the
plus sign the ask.  The solver consumes the flux ``beta(H) = sigma_hat^2 * H / 2``
and its derivative, both provided here, plus a parabolicity check that the
time stepping requires before a model may be used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .tc_models import ConstantCost, CostModel

__all__ = [
    "MarketParams",
    "VolatilityModel",
    "ParabolicityReport",
    "validate_parabolicity",
]

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

Side = Literal["bid", "ask"]


@dataclass(frozen=True)
class MarketParams:
    """Market and contract data: annualized rates, strike and maturity."""

    sigma: float
    r: float
    q: float
    strike: float
    maturity: float
    dt_rehedge: float

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.strike <= 0.0:
            raise ValueError("strike must be positive")
        if self.maturity <= 0.0:
            raise ValueError("maturity must be positive")
        if self.dt_rehedge <= 0.0:
            raise ValueError("dt_rehedge must be positive")
        if self.r < 0.0 or self.q < 0.0:
            raise ValueError("rates must be non-negative")


@dataclass(frozen=True)
class VolatilityModel:
    market: MarketParams
    costs: CostModel
    side: Side = "bid"

    def __post_init__(self):
        if self.side not in ("bid", "ask"):
            raise ValueError(f"side must be 'bid' or 'ask', got {self.side!r}")

    @property
    def sign(self) -> float:
        # +1 subtracts the cost correction (bid), -1 adds it (ask)
        return 1.0 if self.side == "bid" else -1.0

    @property
    def sigma_sqrt_dt(self) -> float:
        m = self.market
        return m.sigma * math.sqrt(m.dt_rehedge)

    @property
    def leland_scale(self) -> float:
        """sqrt(2/pi) / (sigma*sqrt(dt)); multiplies C_tilde in the variance."""
        return _SQRT_2_OVER_PI / self.sigma_sqrt_dt

    def volume(self, h):
        """Traded-volume argument xi = sigma * |H| * sqrt(dt)."""
        return self.sigma_sqrt_dt * np.abs(np.asarray(h, dtype=float))

    def sigma_hat_squared(self, h):
        """Adjusted variance at cash Gamma ``h`` (sgn(0) = 0, so sigma^2 at 0).

        May return a non-positive value for oversized costs; callers must
        screen the model with :func:`validate_parabolicity`.
        """
        h_arr = np.asarray(h, dtype=float)
        sig2 = self.market.sigma ** 2
        ct = self.costs.mean_value(self.volume(h_arr))
        out = sig2 * (1.0 - self.sign * self.leland_scale * ct * np.sign(h_arr))
        return float(out) if np.ndim(h) == 0 else out

    def beta(self, h):
        """Nonlinear flux beta(H) = sigma_hat(H)^2 * H / 2."""
        h_arr = np.asarray(h, dtype=float)
        out = 0.5 * self.sigma_hat_squared(h_arr) * h_arr
        return float(out) if np.ndim(h) == 0 else out

    def beta_prime(self, h):
        """Derivative of beta; the right-hand one-sided limit is used at H = 0."""
        h_arr = np.asarray(h, dtype=float)
        sig2 = self.market.sigma ** 2
        xi = self.volume(h_arr)
        # d/dH [C_tilde(xi(H)) * sgn(H)] = C_tilde'(xi) * sigma*sqrt(dt), any H != 0
        dsig2 = -self.sign * sig2 * _SQRT_2_OVER_PI * self.costs.mean_value_prime(xi)
        out = 0.5 * self.sigma_hat_squared(h_arr) + 0.5 * h_arr * dsig2
        limit0 = 0.5 * sig2 * (1.0 - self.sign * self.leland_scale * self.costs.cost_at_zero)
        out = np.where(h_arr == 0.0, limit0, out)
        return float(out) if np.ndim(h) == 0 else out

    @property
    def has_constant_diffusivity(self) -> bool:
        """True when beta' does not depend on H over H >= 0 (flat cost models)."""
        return isinstance(self.costs, ConstantCost)


@dataclass(frozen=True)
class ParabolicityReport:
    passed: bool
    min_sigma_hat_squared: float
    min_beta_prime: float
    violations: tuple[float, ...]

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        msg = (f"parabolicity {status}: min sigma_hat^2 = "
               f"{self.min_sigma_hat_squared:.6g}, min beta' = {self.min_beta_prime:.6g}")
        if self.violations:
            shown = ", ".join(f"{h:.4g}" for h in self.violations[:8])
            msg += f"; violating H values: {shown}"
            if len(self.violations) > 8:
                msg += f" (+{len(self.violations) - 8} more)"
        return msg


def validate_parabolicity(model: VolatilityModel, h_range: tuple[float, float],
                          samples: int = 2001) -> ParabolicityReport:
    """Check sigma_hat^2 > 0 and beta' > 0 over a dense sample of ``h_range``.

    Returns a report rather than raising: a failing model is a modelling
    choice to surface, not a programming error.
    """
    lo, hi = float(h_range[0]), float(h_range[1])
    if hi < lo:
        raise ValueError("h_range must be a non-empty interval")
    hs = np.linspace(lo, hi, samples) if hi > lo else np.array([lo])
    s2 = np.atleast_1d(model.sigma_hat_squared(hs))
    bp = np.atleast_1d(model.beta_prime(hs))
    bad = (s2 <= 0.0) | (bp <= 0.0)
    return ParabolicityReport(
        passed=not bool(bad.any()),
        min_sigma_hat_squared=float(s2.min()),
        min_beta_prime=float(bp.min()),
        violations=tuple(float(h) for h in hs[bad]),
    )
