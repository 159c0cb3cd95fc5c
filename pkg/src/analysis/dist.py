"""
Distribution algebra.

Exact queries (c.d.f., generalized inverse, conditional tail statistics,
smallness) and the transforms every other module consumes: powers of the
c.d.f., residuals above a shift, truncation and thinning.
"""

import logging
import math
from typing import Tuple

import numpy as np

from src.core.errors import DomainError
from src.models.distribution import (
    ATOM_TOL,
    AnyDistribution,
    Distribution,
    ParametricDistribution,
    atom_tolerance,
)

logger = logging.getLogger(__name__)


def as_discrete(d: AnyDistribution) -> Distribution:
    """Return ``d`` itself, or its quantile-grid discretization if parametric."""
    if isinstance(d, ParametricDistribution):
        return d.discretize()
    return d


def cdf(d: AnyDistribution, x):
    """Pr[X <= x]; exact for discrete laws."""
    if not np.all(np.isfinite(x)):
        raise DomainError(f"cdf needs a finite argument, got {x}")
    return d.cdf(x)


def quantile(d: AnyDistribution, u):
    """
    Generalized inverse inf{x : cdf(x) >= u}.

    For discrete laws this is the smallest atom meeting the mass; u = 0
    gives the bottom of the support.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0) or np.any(u_arr > 1) or np.any(np.isnan(u_arr)):
        raise DomainError(f"quantile level must lie in [0, 1], got {u}")
    return d.quantile(u)


def tail_stats(d: AnyDistribution, t: float) -> Tuple[float, float]:
    """
    Conditional tail statistics at threshold ``t``.

    Args:
        d: Distribution
        t: Nonnegative threshold

    Returns:
        (lambda, p) with lambda = E[X | X >= t] and p = Pr[X < t];
        (0, 1) when Pr[X >= t] = 0
    """
    if t < 0:
        raise DomainError(f"threshold must be nonnegative, got {t}")
    below, tail, moment = as_discrete(d).tail(t)
    if tail <= 0:
        return 0.0, 1.0
    return moment / tail, below


def is_small(d: AnyDistribution, eps: float, delta: float) -> bool:
    """True iff all but ``eps`` of the mass of ``d`` lies in [0, delta]."""
    if not 0 < eps < 1:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    if delta < 0:
        raise DomainError(f"delta must be nonnegative, got {delta}")
    return d.mass_above(delta) <= eps + ATOM_TOL


def smallness_delta(d: AnyDistribution, eps: float) -> float:
    """Least delta for which ``d`` is (eps, delta)-small."""
    if not 0 < eps < 1:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    return float(quantile(d, 1.0 - eps))


def power_cdf(d: AnyDistribution, k: int) -> Distribution:
    """
    Distribution with c.d.f. F^(1/k) on the same support.

    The maximum of k independent copies of the result has law ``d``.
    """
    if k < 1 or int(k) != k:
        raise DomainError(f"k must be a positive integer, got {k}")
    d = as_discrete(d)
    if k == 1:
        return d
    levels = np.asarray(d.cdf(d.values), dtype=float) ** (1.0 / k)
    levels[-1] = 1.0
    masses = np.diff(levels, prepend=0.0)
    return Distribution.from_atoms(d.values, np.maximum(masses, 0.0), d.label)


def shift_residual(d: AnyDistribution, t: float) -> Distribution:
    """Law of max(X, t) - t; mass at or below ``t`` collapses onto 0."""
    if t < 0:
        raise DomainError(f"shift must be nonnegative, got {t}")
    d = as_discrete(d)
    if t == 0:
        return d
    return Distribution.from_atoms(np.maximum(d.values - t, 0.0), d.masses, d.label)


def truncate_below(d: AnyDistribution, delta: float) -> Distribution:
    """Law of X * 1{X > delta}."""
    if delta < 0:
        raise DomainError(f"delta must be nonnegative, got {delta}")
    d = as_discrete(d)
    values = np.where(d.values <= delta + atom_tolerance(delta), 0.0, d.values)
    return Distribution.from_atoms(values, d.masses, d.label)


def thin(d: AnyDistribution, keep_prob: float) -> Distribution:
    """Law of X with probability ``keep_prob`` and 0 otherwise."""
    if not 0 < keep_prob <= 1:
        raise DomainError(f"keep probability must lie in (0, 1], got {keep_prob}")
    d = as_discrete(d)
    values = np.concatenate(([0.0], d.values))
    masses = np.concatenate(([1.0 - keep_prob], keep_prob * d.masses))
    return Distribution.from_atoms(values, masses, d.label)


def split_small(d: AnyDistribution, eps: float) -> Tuple[int, Distribution]:
    """
    Split ``d`` into k i.i.d. eps-small pieces with the same maximum.

    Args:
        d: Distribution with an atom at 0
        eps: Target smallness

    Returns:
        (k, power_cdf(d, k)) with k the least split making each piece eps-small

    Raises:
        DomainError: If d has no mass at 0 (no finite split is small)
    """
    if not 0 < eps < 1:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    d = as_discrete(d)
    f0 = float(d.cdf(0.0))
    if f0 <= 0:
        raise DomainError("a variable without mass at 0 cannot be split into small pieces")
    k = 1 if f0 >= 1 - eps else math.ceil(math.log(f0) / math.log1p(-eps))
    while not is_small(piece := power_cdf(d, k), eps, 0.0):
        k += 1
    logger.debug(f"Split {d.label or 'variable'} into {k} pieces of smallness {eps}")
    return k, piece


def sample(d: AnyDistribution, rng: np.random.Generator, size) -> np.ndarray:
    """Draw ``size`` independent values."""
    return as_discrete(d).sample(rng, size)
