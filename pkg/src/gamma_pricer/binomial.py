"""Binomial-lattice pricer used as an independent constant-volatility oracle.

Standard recombining tree with u = 1/d and a continuous dividend yield in
the risk-neutral up probability.  Besides plain prices it extracts the
early-exercise boundary and the pair of constant volatilities that bound
the cost-adjusted diffusion from below and above on each quoting side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .volatility import MarketParams, Side, VolatilityModel

__all__ = ["TreeSpec", "crr_price", "crr_exercise_boundary", "sigma_bounds"]

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

Style = Literal["american", "european"]


@dataclass(frozen=True)
class TreeSpec:
    steps: int
    style: Style
    market: MarketParams
    sigma: float  # constant volatility override

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.style not in ("american", "european"):
            raise ValueError(f"style must be 'american' or 'european', got {self.style!r}")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")

    def lattice(self) -> tuple[float, float, float, float, float]:
        """Return (dt, u, d, p, discount); validates p in (0, 1)."""
        dt = self.market.maturity / self.steps
        u = math.exp(self.sigma * math.sqrt(dt))
        d = 1.0 / u
        p = (math.exp((self.market.r - self.market.q) * dt) - d) / (u - d)
        if not 0.0 < p < 1.0:
            raise ValueError(
                f"risk-neutral probability {p:.6f} outside (0, 1); "
                "reduce sigma*sqrt(dt) or the rate gap")
        return dt, u, d, p, math.exp(-self.market.r * dt)


def crr_price(spec: TreeSpec, s0: float, strike: float) -> float:
    """Backward-induction price of a call struck at ``strike``, spot ``s0``."""
    if s0 <= 0.0 or strike <= 0.0:
        raise ValueError("spot and strike must be positive")
    _, u, d, p, disc = spec.lattice()
    n = spec.steps
    j = np.arange(n + 1)
    s = s0 * u ** j * d ** (n - j)
    values = np.maximum(s - strike, 0.0)
    american = spec.style == "american"
    for level in range(n - 1, -1, -1):
        s = s[: level + 1] * u
        values = disc * (p * values[1: level + 2] + (1.0 - p) * values[: level + 1])
        if american:
            values = np.maximum(values, s - strike)
    return float(values[0])


def crr_exercise_boundary(spec: TreeSpec, s0: float, strike: float
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Early-exercise boundary of an American call along the tree levels.

    Returns ``(taus, s_f)`` with time-to-maturity ascending from one step to
    the full horizon (the expiry level itself is skipped: every in-the-money
    node exercises there and carries no boundary information).  Levels with
    no exercised node report the +inf sentinel.
    """
    if spec.style != "american":
        raise ValueError("exercise boundary requires an american tree")
    dt, u, d, p, disc = spec.lattice()
    n = spec.steps
    j = np.arange(n + 1)
    s = s0 * u ** j * d ** (n - j)
    values = np.maximum(s - strike, 0.0)
    taus = np.empty(n)
    s_f = np.empty(n)
    for level in range(n - 1, -1, -1):
        s = s[: level + 1] * u
        cont = disc * (p * values[1: level + 2] + (1.0 - p) * values[: level + 1])
        intrinsic = s - strike
        values = np.maximum(cont, intrinsic)
        exercised = (intrinsic >= cont) & (intrinsic > 0.0)
        k = n - 1 - level  # output slot, tau ascending
        taus[k] = spec.market.maturity - level * dt
        s_f[k] = _suffix_start_price(exercised, s)
    return taus, s_f


def _suffix_start_price(exercised: np.ndarray, prices: np.ndarray) -> float:
    """Price at the start of the exercised suffix, +inf when none exists."""
    if exercised.size == 0 or not exercised[-1]:
        return math.inf
    inactive = np.flatnonzero(~exercised)
    start = inactive[-1] + 1 if inactive.size else 0
    return float(prices[start])


def sigma_bounds(vol: VolatilityModel, side: Side | None = None) -> tuple[float, float]:
    """Constant volatilities bounding sigma_hat over H >= 0 for one side.

    The envelope follows from the mean value bounds floor <= C_tilde <= c0:
    on the bid the largest cost gives the smallest variance, on the ask the
    roles are mirrored with the correction added instead of subtracted.
    """
    side = vol.side if side is None else side
    if side not in ("bid", "ask"):
        raise ValueError(f"side must be 'bid' or 'ask', got {side!r}")
    c_hi = vol.costs.cost_at_zero
    c_lo = vol.costs.floor_value
    if not math.isfinite(c_lo):
        raise ValueError("cost model is unbounded below; no volatility envelope exists")
    sig2 = vol.market.sigma ** 2
    scale = _SQRT_2_OVER_PI / vol.sigma_sqrt_dt
    if side == "bid":
        lo2 = sig2 * (1.0 - scale * c_hi)
        hi2 = sig2 * (1.0 - scale * c_lo)
    else:
        lo2 = sig2 * (1.0 + scale * c_lo)
        hi2 = sig2 * (1.0 + scale * c_hi)
    if lo2 <= 0.0 or hi2 <= 0.0:
        raise ValueError(
            f"transaction costs too large: bounding variance not positive "
            f"({lo2:.6g}, {hi2:.6g})")
    return math.sqrt(lo2), math.sqrt(hi2)
