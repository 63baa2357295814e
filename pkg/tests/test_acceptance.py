"""Acceptance gate: every release-blocking criterion at its stated tolerance.

Heavy pricing runs are shared through module-scoped fixtures; each criterion
prints one PASS/FAIL line (visible with ``pytest -s``) and asserts it.
Run with: pytest tests/test_acceptance.py -v -s
"""

import math
import time

import numpy as np
import pytest

from gamma_pricer import (ConstantCost, GammaGrid, LinearCost, MarketParams,
                          PiecewiseLinearCost, PsorConfig, TreeSpec,
                          VolatilityModel, analytic_european_call,
                          crr_exercise_boundary, crr_price,
                          mean_value_quadrature, price_american_call,
                          price_european_call, psor_dense, sigma_bounds)

from conftest import (C0, DT_REHEDGE, KAPPA, MATURITY, Q, R, SIGMA, STRIKE,
                      TAU_STAR, TRUNCATION, XI_MINUS, XI_PLUS,
                      constant_sigma_model, enumerate_lcp, random_dominant_lcp)

S_LIST = np.arange(40.0, 61.0, 2.0)
CFG = PsorConfig()


def report(name: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def grid_for(n: int, m: int) -> GammaGrid:
    return GammaGrid(L=TRUNCATION, n=n, m=m, maturity=MATURITY, tau_star=TAU_STAR)


def tree_price_curve(market, sigma_const, s_values, steps=800):
    spec = TreeSpec(steps=steps, style="american", market=market, sigma=sigma_const)
    return np.array([crr_price(spec, float(s), STRIKE) for s in s_values])


# --------------------------------------------------------------------------- #
#  Shared heavy runs
# --------------------------------------------------------------------------- #

@pytest.fixture(scope="module")
def ask_bounds(ask_model):
    return sigma_bounds(ask_model, "ask")


@pytest.fixture(scope="module")
def const_sigma_sweep(market, ask_bounds):
    """Criterion-one data: both ask-side envelope volatilities at 500x800."""
    t0 = time.perf_counter()
    runs = {}
    for sigma_const in ask_bounds:
        model = constant_sigma_model(sigma_const)
        pde = price_american_call(model, grid_for(500, 800), CFG, S_LIST)
        tree = tree_price_curve(market, sigma_const, S_LIST, steps=800)
        runs[sigma_const] = (pde, tree)
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def vtc_runs(bid_model, ask_model):
    out = {}
    for model in (bid_model, ask_model):
        for n, m in ((250, 200), (500, 800)):
            out[(model.side, n, m)] = price_american_call(
                model, grid_for(n, m), CFG, S_LIST)
    return out


@pytest.fixture(scope="module")
def vtc_european_runs(bid_model, ask_model):
    out = {}
    for model in (bid_model, ask_model):
        for n, m in ((250, 200), (500, 800)):
            out[(model.side, n, m)] = price_european_call(
                model, grid_for(n, m), CFG, S_LIST)
    return out


@pytest.fixture(scope="module")
def boundary_sigma(bid_model):
    lo, _ = sigma_bounds(bid_model, "bid")
    return lo


@pytest.fixture(scope="module")
def boundary_run(boundary_sigma):
    model = constant_sigma_model(boundary_sigma)
    return price_american_call(model, grid_for(500, 800), CFG, S_LIST)


# --------------------------------------------------------------------------- #
#  Criteria
# --------------------------------------------------------------------------- #

def test_constant_volatility_consistency(const_sigma_sweep):
    runs, elapsed = const_sigma_sweep
    worst = 0.0
    for sigma_const, (pde, tree) in runs.items():
        worst = max(worst, float(np.max(np.abs(pde.values - tree))))
    ok = worst <= 0.05 and elapsed < 300.0
    report("constant-volatility consistency", ok,
           f"max |pde - tree| = {worst:.4f} over both envelope volatilities, "
           f"tolerance 0.05; sweep took {elapsed:.0f}s (budget 300s)")


def test_sandwich_ordering(market, bid_model, ask_model, vtc_runs):
    worst = math.inf
    for model in (bid_model, ask_model):
        lo, hi = sigma_bounds(model, model.side)
        v_lo = tree_price_curve(market, lo, S_LIST)
        v_hi = tree_price_curve(market, hi, S_LIST)
        for n, m in ((250, 200), (500, 800)):
            values = vtc_runs[(model.side, n, m)].values
            slack = float(np.min(np.minimum(values - (v_lo - 0.05),
                                            (v_hi + 0.05) - values)))
            worst = min(worst, slack)
    report("sandwich ordering", worst >= 0.0,
           f"min slack against tree bounds = {worst:.4f} across both sides "
           f"and both meshes (slack 0.05)")


def test_european_closed_form_agreement(market):
    model = constant_sigma_model(SIGMA)
    result = price_european_call(model, grid_for(500, 800), CFG, S_LIST)
    worst = max(abs(v - analytic_european_call(market, SIGMA, s, MATURITY))
                for s, v in zip(S_LIST, result.values))
    report("European closed-form agreement", worst <= 0.01 * STRIKE,
           f"max |diff| = {worst:.4f}, tolerance {0.01 * STRIKE:.2f}")


def test_mean_value_equivalence(pw_costs):
    rng = np.random.default_rng(20240817)
    models = [ConstantCost(c0=C0), LinearCost(c0=C0, kappa=KAPPA), pw_costs]
    worst = 0.0
    bounds_ok = True
    for model in models:
        for xi in rng.uniform(0.0, 10.0, 1000):
            closed = model.mean_value(xi)
            worst = max(worst, abs(closed - mean_value_quadrature(model, xi)))
            if not (model.floor_value - 1e-12 <= closed <= model.cost_at_zero + 1e-12):
                bounds_ok = False
    report("mean value modification equivalence", worst < 1e-8 and bounds_ok,
           f"max |closed form - quadrature| = {worst:.2e} over 3000 samples, "
           f"tolerance 1e-08; floor/ceiling bounds {'held' if bounds_ok else 'broken'}")


def test_lcp_correctness(vtc_runs):
    rng = np.random.default_rng(20240818)
    worst = 0.0
    for size in (3, 5):
        for _ in range(100):
            mat, rhs, g = random_dominant_lcp(rng, size)
            want = enumerate_lcp(mat, rhs, g)
            got, _, _ = psor_dense(mat, rhs, g, g.copy(), CFG)
            worst = max(worst, float(np.max(np.abs(got - want))))
    step_residual = max(run.max_residual for run in vtc_runs.values())
    ok = worst <= 1e-7 and step_residual <= 1e-7
    report("LCP correctness", ok,
           f"max |psor - enumeration| = {worst:.2e} over 200 systems "
           f"(tolerance 1e-07); max step complementarity residual "
           f"{step_residual:.2e} (tolerance 1e-07)")


def test_dirac_mass(market):
    from gamma_pricer import initial_condition
    worst_lo, worst_hi = 1.0, 1.0
    for n, m in ((250, 200), (500, 800)):
        grid = grid_for(n, m)
        mass = grid.h * initial_condition(grid, market).h_values.sum()
        worst_lo = min(worst_lo, mass)
        worst_hi = max(worst_hi, mass)
    ok = 0.999 <= worst_lo and worst_hi <= 1.001
    report("start profile unit mass", ok,
           f"mass within [{worst_lo:.6f}, {worst_hi:.6f}] on both benchmark grids, "
           f"required [0.999, 1.001]")


def test_exercise_boundary(market, boundary_sigma, boundary_run):
    grid = grid_for(500, 800)
    taus = boundary_run.taus[1:]
    sf_pde = boundary_run.boundary[1:]

    # reference boundary from a longer lattice: the boundary depends on time
    # to maturity only, and the extra horizon keeps the root fan-out away
    # from the comparison window
    ext_market = MarketParams(sigma=boundary_sigma, r=R, q=Q, strike=STRIKE,
                              maturity=1.25 * MATURITY, dt_rehedge=DT_REHEDGE)
    spec = TreeSpec(steps=2500, style="american", market=ext_market,
                    sigma=boundary_sigma)
    tree_taus, tree_sf = crr_exercise_boundary(spec, STRIKE, STRIKE)
    sf_tree = np.interp(taus, tree_taus, tree_sf)

    window = taus >= 0.1 * MATURITY  # t in [0, 0.9 T]
    diff = np.abs(sf_pde[window] - sf_tree[window])
    tol = 2.0 * grid.h * sf_pde[window]
    pointwise_ok = bool(np.all(diff <= tol))

    # monotone in time-to-maturity up to one cell
    cell_pde = (math.exp(grid.h) - 1.0) * sf_pde[1:]
    mono_pde = bool(np.all(np.diff(sf_pde) >= -cell_pde))
    fin = np.isfinite(tree_sf)
    dt_tree = ext_market.maturity / spec.steps
    cell_tree = (math.exp(2 * boundary_sigma * math.sqrt(dt_tree)) - 1.0) * tree_sf[1:]
    pair = fin[1:] & fin[:-1]
    d_tree = tree_sf[1:][pair] - tree_sf[:-1][pair]
    mono_tree = bool(np.all(d_tree >= -cell_tree[pair]))

    # expiry limit, evaluated once the start-profile transient has cleared
    limit = max(STRIKE, R * STRIKE / Q)
    settle = taus >= max(2.0 * grid.k, 2.0 * TAU_STAR)
    pde_near = sf_pde[settle][0]
    tree_near = tree_sf[np.isfinite(tree_sf)][0]
    limit_ok = abs(pde_near - limit) <= 5.0 and abs(tree_near - limit) <= 5.0

    ok = pointwise_ok and mono_pde and mono_tree and limit_ok
    report("early-exercise boundary", ok,
           f"max |pde - tree| = {diff.max():.3f} vs 2hS_f >= {tol.min():.3f}; "
           f"monotone pde={mono_pde} tree={mono_tree}; near-expiry "
           f"pde {pde_near:.2f} / tree {tree_near:.2f} vs limit {limit:.2f} +- 5")


def test_flat_and_linear_reductions(market):
    flat_pw = VolatilityModel(market, PiecewiseLinearCost(
        c0=C0, kappa=0.0, xi_minus=XI_MINUS, xi_plus=XI_PLUS), side="bid")
    flat_const = VolatilityModel(market, ConstantCost(c0=C0), side="bid")
    hs = np.linspace(-20.0, 50.0, 1001)
    exact = bool(np.array_equal(flat_pw.sigma_hat_squared(hs),
                                flat_const.sigma_hat_squared(hs)))

    linear = LinearCost(c0=C0, kappa=KAPPA)
    degenerate = PiecewiseLinearCost(c0=C0, kappa=KAPPA,
                                     xi_minus=1e-8, xi_plus=1e8)
    xi = np.linspace(0.0, 10.0, 2001)
    gap = float(np.max(np.abs(linear.mean_value(xi) - degenerate.mean_value(xi))))

    ok = exact and gap <= 1e-6
    report("flat-slope and linear reductions", ok,
           f"flat-slope equality exact={exact}; linear-limit gap = {gap:.2e} "
           f"(tolerance 1e-06)")


def test_american_dominates(const_sigma_sweep, vtc_runs, vtc_european_runs,
                            boundary_sigma, boundary_run):
    intrinsic = np.maximum(S_LIST - STRIKE, 0.0)
    worst_eu = math.inf
    worst_intr = math.inf

    for key, am in vtc_runs.items():
        eu = vtc_european_runs[key]
        worst_eu = min(worst_eu, float(np.min(am.values - eu.values)))
        worst_intr = min(worst_intr, float(np.min(am.values - intrinsic)))

    runs, _ = const_sigma_sweep
    for sigma_const, (am, _tree) in runs.items():
        eu = price_european_call(constant_sigma_model(sigma_const),
                                 grid_for(500, 800), CFG, S_LIST)
        worst_eu = min(worst_eu, float(np.min(am.values - eu.values)))
        worst_intr = min(worst_intr, float(np.min(am.values - intrinsic)))

    eu = price_european_call(constant_sigma_model(boundary_sigma),
                             grid_for(500, 800), CFG, S_LIST)
    worst_eu = min(worst_eu, float(np.min(boundary_run.values - eu.values)))
    worst_intr = min(worst_intr, float(np.min(boundary_run.values - intrinsic)))

    ok = worst_eu >= -1e-9 and worst_intr >= -1e-9
    report("American dominates European and intrinsic", ok,
           f"min(American - European) = {worst_eu:.2e}, "
           f"min(American - intrinsic) = {worst_intr:.2e} over every run")
