import itertools

import numpy as np
import pytest

from gamma_pricer import (ConstantCost, GammaGrid, MarketParams,
                          PiecewiseLinearCost, PsorConfig, VolatilityModel)

# benchmark parameter set used throughout the suite
SIGMA = 0.3
R = 0.011
Q = 0.008
STRIKE = 50.0
MATURITY = 1.0
DT_REHEDGE = 1.0 / 261.0
C0 = 0.02
KAPPA = 0.3
XI_MINUS = 0.05
XI_PLUS = 0.1
TAU_STAR = 0.005
TRUNCATION = 2.5


@pytest.fixture(scope="session")
def market():
    return MarketParams(sigma=SIGMA, r=R, q=Q, strike=STRIKE,
                        maturity=MATURITY, dt_rehedge=DT_REHEDGE)


@pytest.fixture(scope="session")
def pw_costs():
    return PiecewiseLinearCost(c0=C0, kappa=KAPPA,
                               xi_minus=XI_MINUS, xi_plus=XI_PLUS)


@pytest.fixture(scope="session")
def bid_model(market, pw_costs):
    return VolatilityModel(market=market, costs=pw_costs, side="bid")


@pytest.fixture(scope="session")
def ask_model(market, pw_costs):
    return VolatilityModel(market=market, costs=pw_costs, side="ask")


@pytest.fixture(scope="session")
def psor_cfg():
    return PsorConfig()


def constant_sigma_model(sigma_const: float) -> VolatilityModel:
    """Plain constant-volatility dynamics expressed as a zero-cost model."""
    mkt = MarketParams(sigma=sigma_const, r=R, q=Q, strike=STRIKE,
                       maturity=MATURITY, dt_rehedge=DT_REHEDGE)
    return VolatilityModel(market=mkt, costs=ConstantCost(c0=0.0), side="bid")


def small_grid(n=100, m=50) -> GammaGrid:
    return GammaGrid(L=TRUNCATION, n=n, m=m, maturity=MATURITY, tau_star=TAU_STAR)


def enumerate_lcp(mat, rhs, obstacle, tol=1e-10):
    """Independent reference: try every active set, keep the consistent one.

    Deliberately written against the problem statement only (no shared code
    with the solver): active components sit on the obstacle, free components
    solve their rows, and the candidate must be feasible on both sides.
    """
    n = len(rhs)
    for pattern in itertools.product((False, True), repeat=n):
        active = np.array(pattern)
        v = obstacle.astype(float).copy()
        free = ~active
        if free.any():
            sub = mat[np.ix_(free, free)]
            b = rhs[free] - mat[np.ix_(free, active)] @ obstacle[active]
            try:
                v[free] = np.linalg.solve(sub, b)
            except np.linalg.LinAlgError:
                continue
        if np.all(v >= obstacle - tol) and np.all(mat @ v - rhs >= -tol):
            return v
    raise AssertionError("no consistent active set")


def random_dominant_lcp(rng, n):
    """Random strictly dominant tridiagonal complementarity problem."""
    sub = -rng.uniform(0.1, 1.0, n)
    sup = -rng.uniform(0.1, 1.0, n)
    diag = np.abs(sub) + np.abs(sup) + rng.uniform(0.5, 2.0, n)
    mat = np.diag(diag)
    mat[np.arange(1, n), np.arange(n - 1)] = sub[1:]
    mat[np.arange(n - 1), np.arange(1, n)] = sup[:-1]
    return mat, rng.normal(0.0, 1.0, n), rng.normal(0.0, 1.0, n)
