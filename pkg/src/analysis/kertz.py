"""
The Kertz constant, its boundary-value curve and the worst-case i.i.d. law.

beta solves  int_0^1 dy / [(1/beta - 1) - y (log y - 1)] = 1.
The curve y(t) solves  y' = y (log y - 1) - (1/beta - 1),  y(0) = 1, y(1) = 0,
and is represented through its inverse t(y) = int_y^1 ds / [(1/beta - 1) + s (1 - log s)].
"""

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import bisect
from scipy.special import xlogy

from src.analysis.dist import power_cdf
from src.core.config import settings
from src.core.errors import DomainError, InternalError, ResolutionError
from src.models.distribution import Distribution, Instance

logger = logging.getLogger(__name__)

BRACKET = (0.5, 0.99)
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(8)


def _den(y, a: float):
    """a + y (1 - log y) = -(y'), positive on [0, 1]."""
    return a + y - xlogy(y, y)


def _segment_integrals(nodes: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Gauss-Legendre integral of ``fn`` over each [nodes[k], nodes[k+1]]."""
    half = np.diff(nodes) / 2.0
    mid = nodes[:-1] + half
    pts = mid[:, None] + half[:, None] * _NODES[None, :]
    return (half[:, None] * _WEIGHTS[None, :] * fn(pts)).sum(axis=1)


def kertz_integral(beta: float, epsabs: float = 1e-13) -> float:
    """The defining integral of beta (equals 1 at the Kertz constant)."""
    if not 0 < beta < 1:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    a = 1.0 / beta - 1.0
    value, _ = quad(lambda y: 1.0 / _den(y, a), 0.0, 1.0, epsabs=epsabs, epsrel=1e-12, limit=200)
    return float(value)


def solve_beta(tol: Optional[float] = None, quad_tol: Optional[float] = None) -> float:
    """
    Solve for the Kertz constant by bisection on (0.5, 0.99).

    Args:
        tol: Residual tolerance on the defining integral, in (0, 1e-4]
        quad_tol: Absolute quadrature tolerance (defaults to tol / 1000)

    Returns:
        beta with |integral - 1| <= tol
    """
    tol = settings.kertz_tolerance if tol is None else tol
    if not 0 < tol <= 1e-4:
        raise DomainError(f"tol must lie in (0, 1e-4], got {tol}")
    quad_tol = quad_tol or tol * 1e-3

    def residual(beta: float) -> float:
        return kertz_integral(beta, epsabs=quad_tol) - 1.0

    lo, hi = BRACKET
    if not residual(lo) < 0 < residual(hi):
        raise InternalError(f"defining integral does not change sign on {BRACKET}")
    beta = bisect(residual, lo, hi, xtol=tol * 1e-2, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(residual(beta)) > tol:
        raise InternalError(f"beta = {beta} leaves residual {residual(beta):.3g} above {tol}")
    logger.info(f"Kertz constant beta = {beta:.12f} (tol {tol:g})")
    return float(beta)


def _y_nodes(grid_size: int) -> np.ndarray:
    third = max(grid_size // 3, 10)
    low = np.geomspace(1e-10, 0.5, third)
    mid = np.linspace(0.0, 1.0, max(grid_size - 2 * third, 2))
    y = np.unique(np.concatenate(([0.0, 1.0], low, 1.0 - low, mid)))
    y = y[np.concatenate(([True], np.diff(y) > 1e-13))]
    y[-1] = 1.0
    return y


@dataclass(frozen=True, eq=False)
class KertzSolution:
    """
    beta and the tabulated curve y(t) with y' from the ODE right-hand side.

    The grids are ascending in t. Evaluation uses cubic Hermite
    interpolation with exact slopes.
    """

    beta: float
    t_grid: np.ndarray
    y_grid: np.ndarray
    yprime_grid: np.ndarray
    tolerance: float
    _curve: CubicHermiteSpline = field(repr=False)
    _inverse: CubicHermiteSpline = field(repr=False)
    _rate: CubicHermiteSpline = field(repr=False)

    @property
    def a(self) -> float:
        return 1.0 / self.beta - 1.0

    def y(self, t):
        """y(t), clipped to [0, 1]."""
        t_arr = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        out = np.clip(self._curve(t_arr), 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def yprime(self, t):
        """y'(t) from the ODE right-hand side."""
        out = -_den(np.asarray(self.y(t), dtype=float), self.a)
        return float(out) if np.ndim(out) == 0 else out

    def t_of(self, y):
        """Inverse curve t(y)."""
        y_arr = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
        out = np.clip(self._inverse(y_arr), 0.0, None)
        return float(out) if out.ndim == 0 else out

    def rate_of_y(self, y):
        """int_0^y ds / den(s)^2, i.e. r*(t) written in terms of y = y(t)."""
        y_arr = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
        out = np.maximum(self._rate(y_arr), 0.0)
        return float(out) if out.ndim == 0 else out


def solve_y(
    beta: float,
    grid_size: Optional[int] = None,
    tolerance: Optional[float] = None,
) -> KertzSolution:
    """
    Tabulate the curve through its inverse integral.

    Args:
        beta: Kertz constant from solve_beta
        grid_size: Approximate number of y nodes (>= 100), log-dense near 0 and 1
        tolerance: Tolerance recorded on the solution

    Returns:
        KertzSolution
    """
    grid_size = grid_size or settings.kertz_grid_size
    if grid_size < 100:
        raise DomainError(f"grid_size must be at least 100, got {grid_size}")
    a = 1.0 / beta - 1.0
    y_nodes = _y_nodes(grid_size)

    seg = _segment_integrals(y_nodes, lambda y: 1.0 / _den(y, a))
    t_of_y = np.concatenate((np.cumsum(seg[::-1])[::-1], [0.0]))
    t_grid = t_of_y[::-1].copy()
    y_grid = y_nodes[::-1].copy()
    if np.any(np.diff(t_grid) <= 0):
        raise InternalError("t(y) table is not strictly monotone")
    yprime_grid = -_den(y_grid, a)

    rate_seg = _segment_integrals(y_nodes, lambda y: 1.0 / _den(y, a) ** 2)
    rate = np.concatenate(([0.0], np.cumsum(rate_seg)))

    logger.debug(f"y(t) table: {y_nodes.size} nodes, t(0) = {t_grid[-1]:.12f}")
    return KertzSolution(
        beta=float(beta),
        t_grid=t_grid,
        y_grid=y_grid,
        yprime_grid=yprime_grid,
        tolerance=tolerance if tolerance is not None else settings.kertz_tolerance,
        _curve=CubicHermiteSpline(t_grid, y_grid, yprime_grid),
        _inverse=CubicHermiteSpline(y_nodes, t_of_y, -1.0 / _den(y_nodes, a)),
        _rate=CubicHermiteSpline(y_nodes, rate, 1.0 / _den(y_nodes, a) ** 2),
    )


@lru_cache(maxsize=None)
def default_solution() -> KertzSolution:
    """Solution at the configured tolerance and grid size, computed once."""
    beta = solve_beta(settings.kertz_tolerance)
    return solve_y(beta, settings.kertz_grid_size)


@dataclass(frozen=True, eq=False)
class WorstCaseParams:
    """
    Worst-case construction for a cut-off q.

    r*(t) = H on [0, q] and r*(t) = -int_t^1 ds / y'(s) on [q, 1].
    """

    q: float
    p: float
    H: float
    r_star_grid: np.ndarray
    solution: KertzSolution = field(repr=False)
    F_q: Optional[Distribution] = field(default=None, repr=False)

    @property
    def r_star_q(self) -> float:
        return float(self.solution.rate_of_y(self.p))

    def r_star(self, t):
        """r*(t), vectorized."""
        t_arr = np.asarray(t, dtype=float)
        inner = np.asarray(self.solution.rate_of_y(self.solution.y(t_arr)), dtype=float)
        out = np.where(t_arr < self.q, self.H, np.where(t_arr >= 1.0, 0.0, inner))
        return float(out) if out.ndim == 0 else out


def optimal_rate(sol: KertzSolution, q: float) -> WorstCaseParams:
    """
    Build q, p = y(q), H and the tabulated r* (without F_q).

    Raises:
        DomainError: If q is outside (0, 0.5)
        ResolutionError: If q is below the resolution of the y(t) table
    """
    if not 0 < q < 0.5:
        raise DomainError(f"q must lie in (0, 0.5), got {q}")
    p = sol.y(q)
    if 1.0 - p < 1e-9 or q < sol.t_grid[1]:
        raise ResolutionError(f"q = {q} is below the table resolution; raise grid_size")
    r_q = float(sol.rate_of_y(p))
    H = 1.0 / (sol.yprime(q) * np.log(p)) + r_q
    if not H > r_q:
        raise ResolutionError(f"H = {H:.6g} does not exceed r*(q) = {r_q:.6g} at q = {q}")

    t_tab = np.unique(
        np.concatenate((np.linspace(0.0, q, 16), sol.t_grid[sol.t_grid > q], [1.0]))
    )
    params = WorstCaseParams(
        q=float(q), p=float(p), H=float(H), r_star_grid=np.empty((0, 2)), solution=sol
    )
    r_tab = params.r_star(t_tab)
    return replace(params, r_star_grid=np.column_stack((t_tab, r_tab)))


def worst_case_cdf(params: WorstCaseParams, points: Optional[int] = None) -> Distribution:
    """
    Discretize F_q: y((r*)^-1(x)) on [0, r*(q)], p on (r*(q), H), 1 at H.

    Args:
        params: Output of optimal_rate
        points: Grid points on [0, r*(q)] (defaults to settings.worst_case_grid_points)

    Returns:
        Discrete Distribution whose c.d.f. equals y(t_k) at x = r*(t_k)
    """
    points = points or settings.worst_case_grid_points
    sol = params.solution
    t = np.linspace(params.q, 1.0, points)
    x = np.asarray(params.r_star(t), dtype=float)
    levels = np.asarray(sol.y(t), dtype=float)
    levels[0] = params.p
    x[-1], levels[-1] = 0.0, 0.0
    x_asc, levels_asc = x[::-1], levels[::-1]
    masses = np.maximum(np.diff(levels_asc, prepend=0.0), 0.0)
    values = np.concatenate((x_asc, [params.H]))
    masses = np.concatenate((masses, [1.0 - params.p]))
    return Distribution.from_atoms(values, masses / masses.sum(), f"F_q(q={params.q:g})")


def worst_case_params(
    q: float,
    sol: Optional[KertzSolution] = None,
    points: Optional[int] = None,
) -> WorstCaseParams:
    """optimal_rate followed by worst_case_cdf, with F_q attached."""
    params = optimal_rate(sol or default_solution(), q)
    return replace(params, F_q=worst_case_cdf(params, points))


def worst_case_instance(
    q: float,
    n: int,
    sol: Optional[KertzSolution] = None,
    points: Optional[int] = None,
) -> Instance:
    """n i.i.d. variables with c.d.f. F_q^(1/n)."""
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    params = worst_case_params(q, sol, points)
    piece = power_cdf(params.F_q, n)
    return Instance.iid(piece, n, label=f"worst-case q={q:g} n={n}")


def limit_values(params: WorstCaseParams) -> Tuple[float, float]:
    """
    Closed-form large-n values of the worst-case instance.

    Returns:
        (OPT_q, MAX_q)
    """
    p, q, H = params.p, params.q, params.H
    r_q = params.r_star_q
    a = params.solution.a
    opt = (1.0 - p ** q) * H + p ** q * r_q
    tail, _ = quad(lambda y: (1.0 - y) / _den(y, a) ** 2, 0.0, p, epsabs=1e-12, limit=200)
    return float(opt), float((H - r_q) * (1.0 - p) + tail)


def optimality_residual(params: WorstCaseParams, t: float) -> Tuple[float, float]:
    """
    Both sides of r'(t) = int_{r(t)}^inf log F_q(u) du for t in (q, 1).

    Returns:
        (r*'(t), integral)
    """
    if not params.q < t < 1:
        raise DomainError(f"t must lie in ({params.q}, 1), got {t}")
    sol = params.solution
    lhs = 1.0 / sol.yprime(t)
    inner, _ = quad(
        lambda s: np.log(sol.y(s)) / _den(sol.y(s), sol.a), params.q, t, epsabs=1e-12, limit=200
    )
    rhs = (params.H - params.r_star_q) * np.log(params.p) + inner
    return float(lhs), float(rhs)
