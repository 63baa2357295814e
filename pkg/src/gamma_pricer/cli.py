"""Batch front end: TOML-configured pricing experiments emitting CSV files.

Subcommands
-----------
price      model prices per side and mesh
table      model prices bracketed by the two constant-volatility tree prices
boundary   early-exercise boundary of the model and of both bounding trees
curves     price curves plus the cost-function and flux-function samples
validate   cross-module consistency suite (quadrature vs closed form, solver
           vs enumeration, closed-form agreement, price ordering)

Exit codes: 0 success, 1 solver failure or failed validation, 2 bad config.
The environment variable GAMMA_PRICER_THREADS caps the number of concurrent
pricing jobs (distinct side/mesh combinations).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from .binomial import TreeSpec, crr_exercise_boundary, crr_price, sigma_bounds
from .gamma_solver import (GammaGrid, PsorConfig, SolverError,
                           price_american_call, price_european_call)
from .tc_models import (ConstantCost, CostModel, LinearCost,
                        PiecewiseLinearCost, mean_value_quadrature)
from .volatility import MarketParams, VolatilityModel, validate_parabolicity

__all__ = ["ConfigError", "RunConfig", "analytic_european_call", "main",
           "run_table", "run_boundary", "run_curves", "run_validate"]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


# --------------------------------------------------------------------------- #
#  Closed-form oracle
# --------------------------------------------------------------------------- #

def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))

def analytic_european_call(market: MarketParams, sigma_const: float,
                           s: float, t_to_expiry: float) -> float:
    """Dividend-adjusted closed-form European call value."""
    if sigma_const <= 0.0:
        raise ValueError("sigma_const must be positive")
    if t_to_expiry < 0.0:
        raise ValueError("t_to_expiry must be non-negative")
    strike = market.strike
    if s <= 0.0:
        return 0.0
    if t_to_expiry == 0.0:
        return max(s - strike, 0.0)
    vol = sigma_const * math.sqrt(t_to_expiry)
    d1 = (math.log(s / strike)
          + (market.r - market.q + 0.5 * sigma_const ** 2) * t_to_expiry) / vol
    d2 = d1 - vol
    return (s * math.exp(-market.q * t_to_expiry) * _norm_cdf(d1)
            - strike * math.exp(-market.r * t_to_expiry) * _norm_cdf(d2))


# --------------------------------------------------------------------------- #
#  Configuration
# --------------------------------------------------------------------------- #

def _take(section: dict, name: str, keys: dict[str, bool]) -> dict:
    unknown = set(section) - set(keys)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    missing = [k for k, required in keys.items() if required and k not in section]
    if missing:
        raise ConfigError(f"missing key(s) in [{name}]: {', '.join(missing)}")
    return section


@dataclass(frozen=True)
class RunConfig:
    market: MarketParams
    costs: CostModel
    side: str                       # bid | ask | both
    grid_l: float
    tau_star: float
    meshes: tuple[tuple[int, int], ...]
    psor: PsorConfig
    binomial_steps: int
    s_list: tuple[float, ...]
    out_dir: Path

    @property
    def sides(self) -> tuple[str, ...]:
        return ("bid", "ask") if self.side == "both" else (self.side,)

    def grid(self, n: int, m: int) -> GammaGrid:
        return GammaGrid(L=self.grid_l, n=n, m=m,
                         maturity=self.market.maturity, tau_star=self.tau_star)

    def model(self, side: str) -> VolatilityModel:
        return VolatilityModel(market=self.market, costs=self.costs, side=side)

    @classmethod
    def load(cls, path: str | Path, n: int | None = None, m: int | None = None,
             side: str | None = None, out: str | None = None) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc

        top = _take(raw, "top level", {
            "market": True, "costs": True, "side": True, "grid": True,
            "psor": False, "binomial": True, "output": True})

        try:
            mkt = _take(dict(top["market"]), "market", {
                "sigma": True, "r": True, "q": True, "strike": True,
                "maturity": True, "dt_rehedge": True})
            market = MarketParams(**{k: float(v) for k, v in mkt.items()})

            costs = cls._parse_costs(dict(top["costs"]))

            side_val = str(side if side is not None else top["side"]).lower()
            if side_val not in ("bid", "ask", "both"):
                raise ConfigError(f"side must be bid, ask or both, got {side_val!r}")

            grid_sec = _take(dict(top["grid"]), "grid", {
                "L": True, "tau_star": True, "meshes": True})
            meshes = tuple((int(nn), int(mm)) for nn, mm in grid_sec["meshes"])
            if n is not None or m is not None:
                if n is None or m is None:
                    raise ConfigError("--n and --m must be given together")
                meshes = ((int(n), int(m)),)
            if not meshes:
                raise ConfigError("at least one mesh is required")

            psor_sec = _take(dict(top.get("psor", {})), "psor", {
                "omega": False, "tol": False, "k_max": False})
            psor = PsorConfig(omega=float(psor_sec.get("omega", 1.3)),
                              tol=float(psor_sec.get("tol", 1e-8)),
                              k_max=int(psor_sec.get("k_max", 10_000)))

            bin_sec = _take(dict(top["binomial"]), "binomial", {"steps": True})
            steps = int(bin_sec["steps"])
            if steps < 1:
                raise ConfigError("binomial steps must be positive")

            out_sec = _take(dict(top["output"]), "output", {
                "s_list": True, "directory": True})
            s_list = tuple(float(s) for s in out_sec["s_list"])
            if not s_list or any(s <= 0.0 for s in s_list):
                raise ConfigError("s_list must contain positive prices")
            out_dir = Path(out if out is not None else out_sec["directory"])
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

        return cls(market=market, costs=costs, side=side_val, grid_l=float(grid_sec["L"]),
                   tau_star=float(grid_sec["tau_star"]), meshes=meshes, psor=psor,
                   binomial_steps=steps, s_list=s_list, out_dir=out_dir)

    @staticmethod
    def _parse_costs(section: dict) -> CostModel:
        variant = str(section.pop("variant", "piecewise")).lower()
        if variant == "constant":
            sec = _take(section, "costs", {"c0": True})
            return ConstantCost(c0=float(sec["c0"]))
        if variant == "linear":
            sec = _take(section, "costs", {"c0": True, "kappa": True})
            return LinearCost(c0=float(sec["c0"]), kappa=float(sec["kappa"]))
        if variant == "piecewise":
            sec = _take(section, "costs", {
                "c0": True, "kappa": True, "xi_minus": True, "xi_plus": True})
            return PiecewiseLinearCost(
                c0=float(sec["c0"]), kappa=float(sec["kappa"]),
                xi_minus=float(sec["xi_minus"]), xi_plus=float(sec["xi_plus"]))
        raise ConfigError(f"unknown cost variant {variant!r}")


# --------------------------------------------------------------------------- #
#  CSV plumbing
# --------------------------------------------------------------------------- #

def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    return f"{float(value):.6f}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(_fmt(cell) for cell in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")


def _worker_count(n_jobs: int) -> int:
    env = os.environ.get("GAMMA_PRICER_THREADS")
    if env is not None:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(f"GAMMA_PRICER_THREADS must be an integer, got {env!r}")
        if cap < 1:
            raise ConfigError("GAMMA_PRICER_THREADS must be at least 1")
    else:
        cap = min(4, os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def _run_jobs(jobs, worker):
    """Evaluate ``worker`` over jobs, possibly concurrently, order-preserving."""
    count = _worker_count(len(jobs))
    if count == 1 or len(jobs) == 1:
        return [worker(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=count) as pool:
        return list(pool.map(worker, jobs))


# --------------------------------------------------------------------------- #
#  Commands
# --------------------------------------------------------------------------- #

def _price_jobs(config: RunConfig):
    return [(side, n, m) for side in config.sides for n, m in config.meshes]


def run_price(config: RunConfig) -> int:
    def worker(job):
        side, n, m = job
        result = price_american_call(config.model(side), config.grid(n, m),
                                     config.psor, config.s_list)
        return job, result

    for (side, n, m), result in _run_jobs(_price_jobs(config), worker):
        rows = list(zip(result.s_values, result.values))
        _write_csv(config.out_dir / f"prices_{side}_{n}x{m}.csv",
                   ["S", "V_model"], rows)
    return 0


def _bounding_tree_prices(config: RunConfig, side: str, s_values) -> tuple:
    lo, hi = sigma_bounds(config.model(side), side)
    out = []
    for sigma_const in (lo, hi):
        spec = TreeSpec(steps=config.binomial_steps, style="american",
                        market=config.market, sigma=sigma_const)
        prices = []
        for s in s_values:
            try:
                prices.append(crr_price(spec, float(s), config.market.strike))
            except ValueError as exc:
                raise SolverError(f"binomial bound failed at S={s}: {exc}") from exc
        out.append(np.asarray(prices))
    return (lo, hi), out[0], out[1]


def run_table(config: RunConfig) -> int:
    def worker(job):
        side, n, m = job
        result = price_american_call(config.model(side), config.grid(n, m),
                                     config.psor, config.s_list)
        _, v_lo, v_hi = _bounding_tree_prices(config, side, result.s_values)
        return job, result, v_lo, v_hi

    for (side, n, m), result, v_lo, v_hi in _run_jobs(_price_jobs(config), worker):
        mesh = f"{n}x{m}"
        rows = [(s, lo, v, hi, side, mesh) for s, lo, v, hi
                in zip(result.s_values, v_lo, result.values, v_hi)]
        _write_csv(config.out_dir / f"table_{side}_{mesh}.csv",
                   ["S", "V_bin_min", "V_model", "V_bin_max", "side", "mesh"], rows)
    return 0


def run_boundary(config: RunConfig) -> int:
    def worker(job):
        side, n, m = job
        result = price_american_call(config.model(side), config.grid(n, m),
                                     config.psor, (config.market.strike,))
        lo, hi = sigma_bounds(config.model(side), side)
        tree_curves = []
        for sigma_const in (lo, hi):
            spec = TreeSpec(steps=config.binomial_steps, style="american",
                            market=config.market, sigma=sigma_const)
            taus, s_f = crr_exercise_boundary(spec, config.market.strike,
                                              config.market.strike)
            tree_curves.append((taus, s_f))
        return job, result, tree_curves

    for (side, n, m), result, tree_curves in _run_jobs(_price_jobs(config), worker):
        taus = result.taus[1:]
        model_sf = result.boundary[1:]
        cols = [np.interp(taus, t, sf) for t, sf in tree_curves]
        rows = list(zip(config.market.maturity - taus, model_sf, cols[0], cols[1]))
        _write_csv(config.out_dir / f"boundary_{side}_{n}x{m}.csv",
                   ["t", "S_f_model", "S_f_bin_sigma_min", "S_f_bin_sigma_max"], rows)
    return 0


def run_curves(config: RunConfig) -> int:
    s_grid = np.linspace(min(config.s_list), max(config.s_list), 41)

    def worker(job):
        side, n, m = job
        result = price_american_call(config.model(side), config.grid(n, m),
                                     config.psor, s_grid)
        _, v_lo, v_hi = _bounding_tree_prices(config, side, s_grid)
        return job, result, v_lo, v_hi

    for (side, n, m), result, v_lo, v_hi in _run_jobs(_price_jobs(config), worker):
        rows = list(zip(s_grid, result.values, v_lo, v_hi))
        _write_csv(config.out_dir / f"curves_{side}_{n}x{m}.csv",
                   ["S", "V_model", "V_bin_min", "V_bin_max"], rows)

    costs = config.costs
    xi_max = 4.0 * costs.xi_plus if isinstance(costs, PiecewiseLinearCost) else 1.0
    xi_grid = np.linspace(0.0, xi_max, 401)
    _write_csv(config.out_dir / "cost_curve.csv", ["xi", "C", "C_tilde"],
               zip(xi_grid, np.atleast_1d(costs.cost(xi_grid)),
                   np.atleast_1d(costs.mean_value(xi_grid))))

    model = config.model(config.sides[0])
    h_grid = np.linspace(0.0, 25.0, 501)
    _write_csv(config.out_dir / "beta_curve.csv", ["H", "beta"],
               zip(h_grid, model.beta(h_grid)))
    return 0


# --------------------------------------------------------------------------- #
#  Validation suite
# --------------------------------------------------------------------------- #

def _check(name: str, passed: bool, detail: str, failures: list) -> None:
    print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    if not passed:
        failures.append(name)


def run_validate(config: RunConfig) -> int:
    from .gamma_solver import brute_force_lcp, psor_dense  # late import, test utilities

    failures: list[str] = []
    rng = np.random.default_rng(20240901)
    market = config.market

    # mean value modification: closed form against adaptive quadrature
    models = [config.costs, ConstantCost(c0=0.02), LinearCost(c0=0.02, kappa=0.3)]
    worst = 0.0
    for mdl in models:
        for xi in rng.uniform(0.0, 10.0, 60):
            worst = max(worst, abs(mdl.mean_value(xi) - mean_value_quadrature(mdl, xi)))
    _check("mean value closed form vs quadrature", worst < 1e-8,
           f"max |diff| = {worst:.3e}", failures)

    # flat-slope reduction: piecewise with kappa = 0 equals the constant model
    hs = np.linspace(-5.0, 40.0, 401)
    flat = VolatilityModel(market, PiecewiseLinearCost(
        c0=0.02, kappa=0.0, xi_minus=0.05, xi_plus=0.1), side="bid")
    const = VolatilityModel(market, ConstantCost(c0=0.02), side="bid")
    dev = float(np.max(np.abs(flat.sigma_hat_squared(hs) - const.sigma_hat_squared(hs))))
    _check("flat-slope reduction to constant costs", dev == 0.0,
           f"max |diff| = {dev:.3e}", failures)

    # projected SOR against brute-force active-set enumeration
    worst = 0.0
    for _ in range(40):
        size = int(rng.choice([3, 5]))
        mat, rhs, obstacle = _random_lcp(rng, size)
        ref = brute_force_lcp(mat, rhs, obstacle)
        sol, _, _ = psor_dense(mat, rhs, obstacle, obstacle.copy(), PsorConfig())
        worst = max(worst, float(np.max(np.abs(sol - ref))))
    _check("projected SOR vs active-set enumeration", worst < 1e-7,
           f"max |diff| = {worst:.3e}", failures)

    # parabolicity of the configured model on both requested sides
    for side in config.sides:
        report = validate_parabolicity(config.model(side), (0.0, 40.0))
        _check(f"parabolicity ({side})", report.passed, str(report), failures)

    n, m = config.meshes[0]
    grid = config.grid(n, m)

    # unconstrained engine against the closed-form European value
    euro_model = VolatilityModel(market, ConstantCost(c0=0.0), side="bid")
    result = price_european_call(euro_model, grid, config.psor, config.s_list)
    worst = max(abs(v - analytic_european_call(market, market.sigma, s, market.maturity))
                for s, v in zip(result.s_values, result.values))
    _check("European engine vs closed form", worst <= 0.01 * market.strike,
           f"max |diff| = {worst:.4f} (tolerance {0.01 * market.strike:.2f})", failures)

    # model price between the two constant-volatility tree prices
    if not failures or "parabolicity" not in " ".join(failures):
        probe = [s for s in config.s_list][:: max(1, len(config.s_list) // 3)][:3]
        for side in config.sides:
            try:
                am = price_american_call(config.model(side), grid, config.psor, probe)
                _, v_lo, v_hi = _bounding_tree_prices(config, side, probe)
            except SolverError as exc:
                _check(f"price ordering ({side})", False, str(exc), failures)
                continue
            ok = bool(np.all(v_lo - 0.05 <= am.values) and np.all(am.values <= v_hi + 0.05))
            gap = float(np.min(np.minimum(am.values - v_lo, v_hi - am.values)))
            _check(f"price ordering ({side})", ok,
                   f"min slack to tree bounds = {gap:.4f}", failures)

    if failures:
        print(f"{len(failures)} check(s) failed: {', '.join(failures)}")
        return 1
    print("all checks passed")
    return 0


def _random_lcp(rng, size: int):
    sub = -rng.uniform(0.1, 1.0, size)
    sup = -rng.uniform(0.1, 1.0, size)
    diag = np.abs(sub) + np.abs(sup) + rng.uniform(0.5, 2.0, size)
    mat = np.diag(diag)
    mat[np.arange(1, size), np.arange(size - 1)] = sub[1:]
    mat[np.arange(size - 1), np.arange(1, size)] = sup[:-1]
    rhs = rng.normal(0.0, 1.0, size)
    obstacle = rng.normal(0.0, 1.0, size)
    return mat, rhs, obstacle


# --------------------------------------------------------------------------- #
#  Entry point
# --------------------------------------------------------------------------- #

_COMMANDS = {
    "price": run_price,
    "table": run_table,
    "boundary": run_boundary,
    "curves": run_curves,
    "validate": run_validate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gamma-pricer",
        description="price American calls under cost-adjusted nonlinear volatility")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("price", "model prices per side and mesh"),
            ("table", "model prices with binomial bound columns"),
            ("boundary", "early-exercise boundary curves"),
            ("curves", "price, cost and flux curves for plotting"),
            ("validate", "run the built-in consistency suite")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--n", type=int, default=None, help="override: half node count")
        p.add_argument("--m", type=int, default=None, help="override: time steps")
        p.add_argument("--side", default=None, choices=["bid", "ask", "both"],
                       help="override: quoting side")
        p.add_argument("--out", default=None, help="override: output directory")
    args = parser.parse_args(argv)

    try:
        config = RunConfig.load(args.config, n=args.n, m=args.m,
                                side=args.side, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        return _COMMANDS[args.command](config)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
