"""
Big/small decomposition of an instance around a shift t*.

Each variable has a critical value s_i: the least shift t at which its
residual max(X_i, t) - t passes the smallness criterion. t* is the
(k+1)-th largest critical value, and the variables strictly above it are
the big ones.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from src.analysis.dist import is_small, quantile, shift_residual
from src.core.errors import DomainError, InternalError
from src.models.distribution import Instance

logger = logging.getLogger(__name__)


class SmallnessMode(str, Enum):
    """Criterion applied to residuals."""

    EPS_T_SMALL = "eps_t_small"  # Pr[Z(t) > eps t] <= eps
    EPS_SMALL = "eps_small"  # Pr[Z(t) > 0] <= eps


@dataclass(frozen=True)
class DecompositionResult:
    """Output of ``decompose``; ``residual_instance`` is index-aligned with the input."""

    t_star: float
    big_indices: Tuple[int, ...]
    residual_instance: Instance
    mode: SmallnessMode
    eps: float
    k: int
    critical_values: Tuple[float, ...]

    @property
    def survivors(self) -> Tuple[int, ...]:
        big = set(self.big_indices)
        return tuple(i for i in range(self.residual_instance.n) if i not in big)

    def residual_delta(self) -> float:
        """delta used by the smallness criterion at t*."""
        return self.eps * self.t_star if self.mode == SmallnessMode.EPS_T_SMALL else 0.0

    def to_dict(self) -> dict:
        return {
            "t_star": self.t_star,
            "big_indices": list(self.big_indices),
            "mode": self.mode.value,
            "eps": self.eps,
            "k": self.k,
            "critical_values": list(self.critical_values),
        }


def critical_value(d, eps: float, mode: SmallnessMode) -> float:
    """
    Least shift t at which the residual of ``d`` is small.

    eps_small:    Pr[X > t] <= eps            ->  s = F^-1(1 - eps)
    eps_t_small:  Pr[X > (1 + eps) t] <= eps  ->  s = F^-1(1 - eps) / (1 + eps)
    """
    top = float(quantile(d, 1.0 - eps))
    if mode == SmallnessMode.EPS_T_SMALL:
        return top / (1.0 + eps)
    return top


def decompose(
    inst: Instance, eps: float, k: int, mode: SmallnessMode = SmallnessMode.EPS_T_SMALL
) -> DecompositionResult:
    """
    Split ``inst`` into at most ``k`` big variables and small residuals.

    Args:
        inst: Instance to split
        eps: Smallness level in (0, 0.5)
        k: Largest number of big variables (>= 0)
        mode: Smallness criterion for residuals

    Returns:
        DecompositionResult with t* and the big indices

    Raises:
        DomainError: If eps or k is out of range
    """
    if not 0 < eps < 0.5:
        raise DomainError(f"eps must lie in (0, 0.5), got {eps}")
    if k < 0:
        raise DomainError(f"k must be nonnegative, got {k}")
    mode = SmallnessMode(mode)

    by_class = {}
    for d, _ in inst.class_members():
        by_class[d.fingerprint()] = critical_value(d, eps, mode)
    s = np.array([by_class[inst[i].fingerprint()] for i in range(inst.n)])

    positive = np.sort(s[s > 0])[::-1]
    t_star = float(positive[k]) if positive.size > k else 0.0
    big = tuple(int(i) for i in np.flatnonzero(s > t_star))

    shifted = {}
    for d, _ in inst.class_members():
        shifted[d.fingerprint()] = shift_residual(d, t_star)
    residual = Instance(
        tuple(shifted[inst[i].fingerprint()] for i in range(inst.n)),
        label=f"{inst.label} residual at {t_star:.6g}".strip(),
    )
    result = DecompositionResult(
        t_star=t_star,
        big_indices=big,
        residual_instance=residual,
        mode=mode,
        eps=float(eps),
        k=int(k),
        critical_values=tuple(float(v) for v in s),
    )

    delta = result.residual_delta()
    for i in result.survivors:
        if not is_small(residual[i], eps, delta):
            raise InternalError(f"residual {i} is not small at t* = {t_star:.12g}")
    logger.info(
        f"Decomposition ({mode.value}, eps={eps}, k={k}): t* = {t_star:.6g}, {len(big)} big"
    )
    return result
