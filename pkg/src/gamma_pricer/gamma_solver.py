"""Finite-volume time stepping for the cash-Gamma obstacle problem.

The engine evolves H(tau, u), the cash Gamma of the option on the
log-moneyness grid u = ln(S/E), from a near-Dirac initial profile up to the
horizon.  Each semi-implicit step freezes the flux derivative beta'(H) at
the previous level, which yields one tridiagonal system A H = d per step.
American early exercise enters through the transformed unknown v = P H,
whose entries are option values at sampled prices; the step then becomes a
linear complementarity problem

    (P A P^-1) v >= P d,   v >= g,   componentwise complementarity,

solved by projected SOR sweeps.  European prices use the same pipeline with
the projection disabled (a plain tridiagonal solve in H space).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded, solve_triangular

from ._kernels import partition_rows, psor_sweeps
from .volatility import MarketParams, VolatilityModel, validate_parabolicity

__all__ = [
    "GammaGrid",
    "GammaState",
    "TridiagonalSystem",
    "PayoffMatrix",
    "PsorConfig",
    "PricingResult",
    "SolverError",
    "PsorConvergenceError",
    "BoundaryWarning",
    "initial_condition",
    "assemble",
    "build_payoff_matrix",
    "psor_solve",
    "psor_dense",
    "brute_force_lcp",
    "step",
    "reconstruct_price",
    "exercise_boundary",
    "price_american_call",
    "price_european_call",
]


class SolverError(RuntimeError):
    """A time step could not be assembled or completed."""


class PsorConvergenceError(SolverError):
    """Projected SOR failed to converge within the sweep budget."""

    def __init__(self, message: str, residual: float, sweeps: int):
        super().__init__(message)
        self.residual = residual
        self.sweeps = sweeps


class BoundaryWarning(UserWarning):
    """Non-contiguous active set met while extracting the exercise boundary."""


@dataclass(frozen=True)
class GammaGrid:
    """Uniform space-time mesh on [-L, L] x [0, T].

    ``tau_star`` is the smoothing horizon of the initial near-Dirac profile;
    it must be small against the maturity but positive.
    """

    L: float
    n: int
    m: int
    maturity: float
    tau_star: float

    def __post_init__(self):
        if self.L <= 0.0 or self.n < 2 or self.m < 1:
            raise ValueError("need L > 0, n >= 2, m >= 1")
        if self.maturity <= 0.0:
            raise ValueError("maturity must be positive")
        if not 0.0 < self.tau_star < self.maturity:
            raise ValueError("tau_star must lie strictly inside (0, maturity)")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def k(self) -> float:
        return self.maturity / self.m

    @property
    def size(self) -> int:
        """Number of interior unknowns, 2n - 1."""
        return 2 * self.n - 1

    def u_nodes(self) -> np.ndarray:
        """All 2n + 1 grid nodes u_i = i*h, i = -n..n."""
        return np.arange(-self.n, self.n + 1) * self.h

    def taus(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.k


@dataclass
class GammaState:
    """Solution at one time level: cash Gamma on the full grid and v = P H."""

    j: int
    h_values: np.ndarray       # 2n + 1 entries, boundary pinned to zero
    v_values: np.ndarray       # 2n - 1 entries
    psor_sweeps: int = 0
    psor_residual: float = 0.0

    @property
    def interior(self) -> np.ndarray:
        return self.h_values[1:-1]


@dataclass(frozen=True)
class TridiagonalSystem:
    """One implicit step A H = d with A given by its three diagonals.

    The diagonal satisfies b = (1 + k q) - (a + c) row by row; ``sub``/``sup``
    carry the full coefficient arrays (the first sub and last sup entries
    multiply pinned boundary values and never enter the matrix).
    """

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray

    @property
    def size(self) -> int:
        return self.diag.shape[0]

    def dominance_margin(self) -> float:
        """min_i (|b_i| - |a_i| - |c_i|); positive means strictly dominant."""
        margin = np.abs(self.diag).copy()
        margin[1:] -= np.abs(self.sub[1:])
        margin[:-1] -= np.abs(self.sup[:-1])
        return float(margin.min())

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[1:] += self.sub[1:] * x[:-1]
        y[:-1] += self.sup[:-1] * x[1:]
        return y

    def solve(self, rhs: np.ndarray | None = None) -> np.ndarray:
        """Direct banded solve of A x = rhs (defaults to the stored rhs)."""
        b = self.rhs if rhs is None else rhs
        ab = np.zeros((3, self.size))
        ab[0, 1:] = self.sup[:-1]
        ab[1] = self.diag
        ab[2, :-1] = self.sub[1:]
        return solve_banded((1, 1), ab, b)


class PayoffMatrix:
    """Lower-triangular map from cash Gamma to option values at sample prices.

    Row l integrates the payoff kernel against H:
        (P H)_l = h * E * sum_i max(e^{v_l} - e^{u_i}, 0) * H_i
    with sample points v_l = u_{l+1}.  Entries vanish for i > l, the diagonal
    h*E*(e^{u_{l+1}} - e^{u_l}) is strictly positive, so P is invertible and
    triangular solves recover H from v.
    """

    def __init__(self, grid: GammaGrid, strike: float):
        if strike <= 0.0:
            raise ValueError("strike must be positive")
        self.grid = grid
        self.strike = strike
        u = grid.u_nodes()
        self._exp_u = np.exp(u[1:-1])            # interior e^{u_i}
        self.v_samples = u[2:]                   # v_l = u_{l+1}, l interior
        self._exp_v = np.exp(self.v_samples)
        self.s_samples = strike * self._exp_v
        self.g = np.maximum(self.s_samples - strike, 0.0)
        scale = grid.h * strike
        self.matrix = scale * np.maximum(self._exp_v[:, None] - self._exp_u[None, :], 0.0)
        self._inv = None
        self._cached_coeffs: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
        self._cached_conjugate: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def inverse(self) -> np.ndarray:
        if self._inv is None:
            self._inv = solve_triangular(self.matrix, np.eye(self.size), lower=True)
        return self._inv

    def apply(self, x: np.ndarray) -> np.ndarray:
        """P @ x in O(n) through cumulative sums."""
        cs = np.cumsum(x)
        ct = np.cumsum(self._exp_u * x)
        return self.grid.h * self.strike * (self._exp_v * cs - ct)

    def solve(self, y: np.ndarray) -> np.ndarray:
        """Forward substitution P^-1 @ y (P^-1 is never formed for solves)."""
        return solve_triangular(self.matrix, y, lower=True)

    def conjugate(self, system: TridiagonalSystem) -> np.ndarray:
        """Materialize P A P^-1 as a dense matrix, O(n^2) per call.

        Constant-diffusivity models reassemble identical coefficients every
        step; an O(n) equality check on the diagonals then reuses the cached
        conjugate instead of rebuilding it.
        """
        coeffs = (system.sub, system.diag, system.sup)
        if self._cached_conjugate is not None and self._cached_coeffs is not None:
            if all(np.array_equal(c, cc) for c, cc in zip(coeffs, self._cached_coeffs)):
                return self._cached_conjugate
        pinv = self.inverse
        m = system.diag[:, None] * pinv
        m[1:] += system.sub[1:, None] * pinv[:-1]
        m[:-1] += system.sup[:-1, None] * pinv[1:]
        cs = np.cumsum(m, axis=0)
        ct = np.cumsum(self._exp_u[:, None] * m, axis=0)
        out = self.grid.h * self.strike * (self._exp_v[:, None] * cs - ct)
        self._cached_coeffs = tuple(c.copy() for c in coeffs)
        self._cached_conjugate = out
        return out


@dataclass(frozen=True)
class PsorConfig:
    omega: float = 1.3
    tol: float = 1e-8
    k_max: int = 10_000

    def __post_init__(self):
        if not 1.0 <= self.omega <= 2.0:
            raise ValueError("relaxation omega must lie in [1, 2]")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")


@dataclass
class PricingResult:
    """Prices at the requested spots plus the solver's by-products."""

    s_values: np.ndarray
    values: np.ndarray            # V(0, S), final time level
    taus: np.ndarray              # m + 1 time levels
    surface: np.ndarray           # (m + 1, len(s_values)) value samples
    boundary: np.ndarray          # S_f per level; NaN at level 0, +inf sentinel
    max_residual: float = 0.0
    max_sweeps: int = 0
    total_sweeps: int = 0
    boundary_warnings: int = 0


# --------------------------------------------------------------------------- #
#  Grid-level operations
# --------------------------------------------------------------------------- #

def initial_condition(grid: GammaGrid, market: MarketParams) -> GammaState:
    """Gaussian smoothing of the Dirac start: the constant-volatility profile
    a short horizon ``tau_star`` after expiry, pinned to zero at both ends."""
    u = grid.u_nodes()
    width = market.sigma * math.sqrt(grid.tau_star)
    drift = (market.r - market.q - 0.5 * market.sigma ** 2) * grid.tau_star
    d = (u + drift) / width
    h_vals = np.exp(-0.5 * d * d) / (math.sqrt(2.0 * math.pi) * width)
    h_vals[0] = 0.0
    h_vals[-1] = 0.0
    return GammaState(j=0, h_values=h_vals, v_values=np.empty(0))


def assemble(grid: GammaGrid, vol: VolatilityModel, prev: GammaState) -> TridiagonalSystem:
    """Coefficients of the semi-implicit step from level j-1.

    beta and beta' are sampled on the clamped profile max(H, 0); the additive
    H term in the right-hand side keeps the raw values.
    """
    h, k = grid.h, grid.k
    market = vol.market
    clamped = np.maximum(prev.h_values, 0.0)
    bp = vol.beta_prime(clamped)
    if np.any(bp <= 0.0):
        node = int(np.argmax(bp <= 0.0)) - grid.n
        raise SolverError(
            f"parabolicity lost at level {prev.j}: beta'(H) = {bp.min():.6g} "
            f"at node i={node}; validate the model before pricing")
    bv = vol.beta(clamped)
    drift = 0.5 * (k / h) * (market.r - market.q)
    sub = -(k / h ** 2) * bp[:-2] + drift
    sup = -(k / h ** 2) * bp[1:-1] - drift
    diag = (1.0 + k * market.q) - (sub + sup)
    rhs = prev.h_values[1:-1] + (k / h) * (bv[1:-1] - bv[:-2])
    return TridiagonalSystem(sub=sub, diag=diag, sup=sup, rhs=rhs)


def build_payoff_matrix(grid: GammaGrid, strike: float) -> PayoffMatrix:
    return PayoffMatrix(grid, strike)


def psor_dense(mat: np.ndarray, rhs: np.ndarray, obstacle: np.ndarray,
               v0: np.ndarray, cfg: PsorConfig) -> tuple[np.ndarray, int, float]:
    """Projected SOR on a dense complementarity problem.

    Finds v >= obstacle with mat @ v >= rhs and componentwise
    complementarity; returns ``(v, sweeps, residual)``.  Isolated rows with
    a non-positive diagonal (a steep frozen-diffusivity front) are treated
    as exact left-paired blocks inside each sweep.
    """
    roles, n_weak = partition_rows(mat)
    if n_weak > max(2, mat.shape[0] // 10):
        raise SolverError(
            f"{n_weak} of {mat.shape[0]} rows carry a weak or non-positive "
            "diagonal; the system is not suitable for projected relaxation sweeps")
    v = np.array(v0, dtype=float, copy=True)
    sweeps, residual, ok = psor_sweeps(mat, rhs, obstacle, v,
                                       cfg.omega, cfg.tol, cfg.k_max, roles)
    if not ok:
        raise PsorConvergenceError(
            f"projected SOR did not converge within {cfg.k_max} sweeps "
            f"(residual {residual:.3e}); retry with a larger budget or "
            f"another relaxation parameter", residual, sweeps)
    return v, sweeps, residual


def brute_force_lcp(mat: np.ndarray, rhs: np.ndarray, obstacle: np.ndarray,
                    tol: float = 1e-10) -> np.ndarray:
    """Reference complementarity solve by enumerating every active set.

    Exponential in the dimension; meant for small validation systems only.
    """
    n = mat.shape[0]
    if n > 16:
        raise ValueError("active-set enumeration is limited to dimension 16")
    for mask in range(1 << n):
        active = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        v = np.array(obstacle, dtype=float, copy=True)
        free = ~active
        if free.any():
            sub = mat[np.ix_(free, free)]
            b = rhs[free] - mat[np.ix_(free, active)] @ obstacle[active]
            try:
                v[free] = np.linalg.solve(sub, b)
            except np.linalg.LinAlgError:
                continue
        residual = mat @ v - rhs
        if np.all(v >= obstacle - tol) and np.all(residual >= -tol):
            return v
    raise RuntimeError("no consistent active set found")


def psor_solve(system: TridiagonalSystem, payoff: PayoffMatrix,
               prev_v: np.ndarray, cfg: PsorConfig,
               obstacle: np.ndarray | None = None) -> tuple[np.ndarray, int, float]:
    """Solve the value-space complementarity problem of one step.

    Warm-starts from the previous level's values and returns
    ``(v, sweeps, residual)``.  ``obstacle`` defaults to the payoff vector;
    tests may override it (e.g. with -inf for an unconstrained solve).
    """
    mat = payoff.conjugate(system)
    rhs = payoff.apply(system.rhs)
    g = payoff.g if obstacle is None else obstacle
    return psor_dense(mat, rhs, g, prev_v, cfg)


def step(prev: GammaState, grid: GammaGrid, vol: VolatilityModel,
         payoff: PayoffMatrix, cfg: PsorConfig) -> GammaState:
    """Advance one time level: assemble, project, recover H, re-pin boundaries."""
    system = assemble(grid, vol, prev)
    warm = prev.v_values if prev.v_values.size else payoff.apply(prev.interior)
    v, sweeps, residual = psor_solve(system, payoff, warm, cfg)
    h_int = payoff.solve(v)
    h_vals = np.concatenate(([0.0], h_int, [0.0]))
    return GammaState(j=prev.j + 1, h_values=h_vals, v_values=v,
                      psor_sweeps=sweeps, psor_residual=residual)


def reconstruct_price(state: GammaState, grid: GammaGrid, strike: float, s) -> float:
    """Rectangle-rule value V = h * sum_i (S - E e^{u_i})^+ H_i at spot ``s``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0.0):
        raise ValueError("spot price must be positive")
    kernel = np.maximum(s_arr[..., None] - strike * np.exp(grid.u_nodes()), 0.0)
    out = grid.h * kernel @ state.h_values
    return float(out) if np.ndim(s) == 0 else out


def exercise_boundary(state: GammaState, payoff: PayoffMatrix,
                      tol: float = 1e-6) -> float:
    """Critical price above which the values sit on the payoff.

    Scans for the contiguous active suffix v_l - g_l <= tol and returns its
    first sample price.  +inf signals that no exercise region is present
    inside the truncated domain.  Active in-the-money nodes detached from the
    suffix indicate a too-coarse mesh: a BoundaryWarning is emitted and the
    smallest such index is returned, as conservative a boundary as the data
    supports.
    """
    gap = state.v_values - payoff.g
    active = gap <= tol
    itm = payoff.g > 0.0
    if not active[-1]:
        if np.any(active & itm):
            warnings.warn("active in-the-money nodes without an active suffix",
                          BoundaryWarning, stacklevel=2)
            return float(payoff.s_samples[np.flatnonzero(active & itm)[0]])
        return math.inf
    inactive = np.flatnonzero(~active)
    start = inactive[-1] + 1 if inactive.size else 0
    strays = np.flatnonzero(active & itm)
    strays = strays[strays < start - 1]
    if strays.size:
        warnings.warn(
            f"non-contiguous active set: {strays.size} stray node(s) below the "
            f"exercise suffix; mesh may be too coarse", BoundaryWarning, stacklevel=2)
        return float(payoff.s_samples[strays[0]])
    return float(payoff.s_samples[start])


# --------------------------------------------------------------------------- #
#  Full pricing runs
# --------------------------------------------------------------------------- #

def _prepare_run(vol: VolatilityModel, grid: GammaGrid, s_list) -> tuple:
    s_values = np.asarray(s_list, dtype=float)
    if s_values.ndim != 1 or s_values.size == 0:
        raise ValueError("s_list must be a non-empty 1-d sequence")
    report = validate_parabolicity(vol, (0.0, _h_ceiling(vol, grid)))
    if not report.passed:
        raise SolverError(f"model rejected: {report}")
    strike = vol.market.strike
    kernel = grid.h * np.maximum(
        s_values[:, None] - strike * np.exp(grid.u_nodes())[None, :], 0.0)
    return s_values, kernel


def _h_ceiling(vol: VolatilityModel, grid: GammaGrid) -> float:
    # the profile never exceeds its initial peak 1/(sigma*sqrt(2*pi*tau_star))
    peak = 1.0 / (vol.market.sigma * math.sqrt(2.0 * math.pi * grid.tau_star))
    return 2.0 * peak


def price_american_call(vol: VolatilityModel, grid: GammaGrid, cfg: PsorConfig,
                        s_list) -> PricingResult:
    """March the obstacle problem over all m levels and sample prices."""
    s_values, kernel = _prepare_run(vol, grid, s_list)
    payoff = build_payoff_matrix(grid, vol.market.strike)
    state = initial_condition(grid, vol.market)
    state.v_values = payoff.apply(state.interior)

    m = grid.m
    surface = np.empty((m + 1, s_values.size))
    boundary = np.full(m + 1, np.nan)
    surface[0] = kernel @ state.h_values
    result = PricingResult(
        s_values=s_values, values=np.empty(0), taus=grid.taus(),
        surface=surface, boundary=boundary)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BoundaryWarning)
        for _ in range(m):
            state = step(state, grid, vol, payoff, cfg)
            surface[state.j] = kernel @ state.h_values
            boundary[state.j] = exercise_boundary(state, payoff, tol=10.0 * cfg.tol)
            result.max_residual = max(result.max_residual, state.psor_residual)
            result.max_sweeps = max(result.max_sweeps, state.psor_sweeps)
            result.total_sweeps += state.psor_sweeps
    result.boundary_warnings = len(caught)
    result.values = surface[m].copy()
    return result


def price_european_call(vol: VolatilityModel, grid: GammaGrid, cfg: PsorConfig,
                        s_list) -> PricingResult:
    """Same pipeline with the projection disabled: one banded solve per step."""
    s_values, kernel = _prepare_run(vol, grid, s_list)
    state = initial_condition(grid, vol.market)
    m = grid.m
    surface = np.empty((m + 1, s_values.size))
    surface[0] = kernel @ state.h_values
    for _ in range(m):
        system = assemble(grid, vol, state)
        h_int = system.solve()
        state = GammaState(j=state.j + 1,
                           h_values=np.concatenate(([0.0], h_int, [0.0])),
                           v_values=state.v_values)
        surface[state.j] = kernel @ state.h_values
    return PricingResult(
        s_values=s_values, values=surface[m].copy(), taus=grid.taus(),
        surface=surface, boundary=np.full(m + 1, math.inf))
