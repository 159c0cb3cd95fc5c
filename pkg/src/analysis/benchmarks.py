"""
Exact benchmark values and brute-force oracles.

MAX, the k-th order statistic benchmark, the exact random-order and
free-order optima over subsets, and closed-form evaluation of stateless
(order + thresholds) policies.
"""

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.analysis.dist import tail_stats
from src.core.config import settings
from src.core.errors import CapacityError, DomainError
from src.models.distribution import Distribution, Instance

logger = logging.getLogger(__name__)

TIE_TOL = 1e-13


@dataclass(frozen=True)
class StatelessPolicy:
    """
    Inspection order with one acceptance threshold per position.

    ``thresholds``, ``lambdas`` and ``ps`` are aligned with ``order``;
    ``lambdas[k] = E[X | X >= tau]`` and ``ps[k] = Pr[X < tau]`` for the
    variable inspected at position k.
    """

    order: Tuple[int, ...]
    thresholds: Tuple[float, ...]
    lambdas: Tuple[float, ...]
    ps: Tuple[float, ...]
    value: float

    @classmethod
    def from_thresholds(
        cls,
        inst: Instance,
        order: Sequence[int],
        thresholds: Sequence[float],
    ) -> "StatelessPolicy":
        """Build a policy and evaluate it exactly."""
        order = tuple(int(i) for i in order)
        if sorted(order) != list(range(inst.n)):
            raise DomainError(f"order must be a permutation of 0..{inst.n - 1}, got {order}")
        if len(thresholds) != inst.n:
            raise DomainError(f"expected {inst.n} thresholds, got {len(thresholds)}")
        thresholds = tuple(float(t) for t in thresholds)
        if not all(np.isfinite(thresholds)):
            raise DomainError("thresholds must be finite")
        stats = [tail_stats(inst[i], max(t, 0.0)) for i, t in zip(order, thresholds)]
        lambdas = tuple(s[0] for s in stats)
        ps = tuple(s[1] for s in stats)
        return cls(order, thresholds, lambdas, ps, utility(lambdas, ps))

    def threshold_of(self, index: int) -> float:
        """Threshold applied to variable ``index``."""
        return self.thresholds[self.order.index(index)]

    def with_last_threshold_zero(self, inst: Instance) -> "StatelessPolicy":
        """Same policy with the final threshold lowered to 0 (never worse)."""
        return StatelessPolicy.from_thresholds(inst, self.order, self.thresholds[:-1] + (0.0,))

    def to_dict(self) -> dict:
        return {
            "order": list(self.order),
            "thresholds": list(self.thresholds),
            "value": self.value,
        }


def utility(lambdas: Sequence[float], ps: Sequence[float]) -> float:
    """
    Expected reward sum_i lambda_i (1 - p_i) prod_{j < i} p_j.

    Args:
        lambdas: Conditional tail means per position
        ps: Rejection probabilities per position

    Returns:
        Expected reward of the stateless policy
    """
    lam = np.asarray(lambdas, dtype=float)
    p = np.asarray(ps, dtype=float)
    if lam.size == 0:
        return 0.0
    reach = np.concatenate(([1.0], np.cumprod(p)[:-1]))
    return float(np.sum(lam * (1.0 - p) * reach))


def max_distribution(inst: Instance) -> Distribution:
    """Law of max_i X_i on the merged support grid."""
    grid = inst.support_grid()
    log_f = np.zeros(grid.size)
    for d, count in inst.class_members():
        with np.errstate(divide="ignore"):
            log_f += count * np.log(d.cdf(grid))
    f = np.exp(log_f)
    f[-1] = 1.0
    masses = np.maximum(np.diff(f, prepend=0.0), 0.0)
    return Distribution.from_atoms(grid, masses / masses.sum(), "max")


def expected_max(inst: Instance) -> float:
    """Exact E[max_i X_i]."""
    return max_distribution(inst).mean


def expected_kth_max(inst: Instance, k: int) -> float:
    """
    Exact expectation of the k-th largest value.

    Pr[at least k of the X_i >= v] is computed at every grid value with a
    truncated Poisson-binomial recurrence over the variables.
    """
    if not 1 <= k <= inst.n:
        raise DomainError(f"k must lie in [1, {inst.n}], got {k}")
    grid = inst.support_grid()
    # states 0..k-1 exact, state k absorbs "at least k"
    dp = np.zeros((k + 1, grid.size))
    dp[0] = 1.0
    for d in inst.variables:
        success = d.mass_at_least(grid)
        nxt = dp * (1.0 - success)
        nxt[1:] += dp[:-1] * success
        nxt[k] += dp[k] * success
        dp = nxt
    at_least_k = dp[k]
    widths = np.diff(grid, prepend=0.0)
    return float(np.dot(widths, at_least_k))


def _check_capacity(inst: Instance) -> None:
    if inst.n > settings.subset_dp_max_n:
        raise CapacityError(
            f"subset dynamic program supports n <= {settings.subset_dp_max_n}, got n = {inst.n}"
        )


def _subset_layers(n: int) -> List[np.ndarray]:
    masks = np.arange(1 << n, dtype=np.int64)
    popcount = np.zeros(masks.size, dtype=np.int64)
    for i in range(n):
        popcount += (masks >> i) & 1
    return [masks[popcount == s] for s in range(n + 1)]


def _subset_dp(inst: Instance, free: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    n = inst.n
    value = np.zeros(1 << n)
    best = np.full(1 << n, -1, dtype=np.int64) if free else None
    for size, layer in enumerate(_subset_layers(n)):
        if size == 0:
            continue
        acc = np.full(layer.size, -np.inf) if free else np.zeros(layer.size)
        for i in range(n):
            has_i = ((layer >> i) & 1).astype(bool)
            members = layer[has_i]
            cand = np.asarray(inst[i].expected_max_with(value[members ^ (1 << i)]), dtype=float)
            if free:
                current = acc[has_i]
                floor = np.full(current.shape, -np.inf)
                seen = np.isfinite(current)
                floor[seen] = current[seen] + TIE_TOL * np.maximum(1.0, np.abs(current[seen]))
                better = cand > floor
                acc[has_i] = np.where(better, cand, current)
                best[members[better]] = i
            else:
                acc[has_i] += cand
        value[layer] = acc if free else acc / size
    return value, best


def opt_random_order(inst: Instance) -> float:
    """
    Exact optimal value when variables arrive in uniformly random order.

    Raises:
        CapacityError: If n exceeds settings.subset_dp_max_n
    """
    _check_capacity(inst)
    value, _ = _subset_dp(inst, free=False)
    return float(value[-1])


def opt_free_order(inst: Instance) -> Tuple[float, Tuple[int, ...]]:
    """
    Exact optimal value when the inspection order may be chosen.

    Returns:
        (value, order) with argmax ties broken by lowest index

    Raises:
        CapacityError: If n exceeds settings.subset_dp_max_n
    """
    _check_capacity(inst)
    value, best = _subset_dp(inst, free=True)
    order = []
    mask = (1 << inst.n) - 1
    while mask:
        i = int(best[mask])
        order.append(i)
        mask ^= 1 << i
    return float(value[-1]), tuple(order)


def backward_induction(inst: Instance, order: Sequence[int]) -> StatelessPolicy:
    """
    Optimal thresholds for a fixed inspection order.

    The threshold at each position is the value of continuing with the
    remaining variables; the last threshold is 0.
    """
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(inst.n)):
        raise DomainError(f"order must be a permutation of 0..{inst.n - 1}, got {order}")
    thresholds = [0.0] * inst.n
    continuation = 0.0
    for pos in range(inst.n - 1, -1, -1):
        thresholds[pos] = continuation
        continuation = inst[order[pos]].expected_max_with(continuation)
    return StatelessPolicy.from_thresholds(inst, order, thresholds)


def eval_policy(inst: Instance, pol: StatelessPolicy) -> float:
    """Exact expected reward of a stateless policy on ``inst``."""
    return StatelessPolicy.from_thresholds(inst, pol.order, pol.thresholds).value


def opt_iid(d: Distribution, n: int) -> Tuple[float, np.ndarray]:
    """
    Exact optimal sequential value for n i.i.d. copies of ``d``.

    Returns:
        (value, thresholds) with thresholds[j] applied at position j
    """
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    continuation = np.zeros(n)
    v = 0.0
    for j in range(n):
        continuation[j] = v
        v = d.expected_max_with(v)
    return float(v), continuation[::-1].copy()


def coupled_policy_value(inst: Instance, pol: StatelessPolicy, removed: Sequence[int]) -> float:
    """
    Exact value on the surviving variables of the virtual-value coupling.

    Removed variables are replaced by independent virtual copies; when the
    policy stops on one of them, the next surviving variable in the order
    is accepted whatever its value.
    """
    removed = set(int(i) for i in removed)
    order = pol.order
    # mean of the next surviving variable after each position
    next_mean = [0.0] * (len(order) + 1)
    for pos in range(len(order) - 1, -1, -1):
        i = order[pos]
        next_mean[pos] = inst[i].mean if i not in removed else next_mean[pos + 1]
    total, reach = 0.0, 1.0
    for pos, i in enumerate(order):
        accept = 1.0 - pol.ps[pos]
        if i in removed:
            total += reach * accept * next_mean[pos + 1]
        else:
            total += reach * accept * pol.lambdas[pos]
        reach *= pol.ps[pos]
    return total


def coupling_average(
    inst: Instance, pol: StatelessPolicy, candidates: Sequence[int], r: int
) -> float:
    """Average of coupled_policy_value over all r-subsets of ``candidates``."""
    subsets = list(combinations(sorted(candidates), r))
    if not subsets:
        return pol.value
    return float(np.mean([coupled_policy_value(inst, pol, s) for s in subsets]))
