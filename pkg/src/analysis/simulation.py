"""
Seeded Monte Carlo harness.

Trials are split into fixed-size blocks; block b of stream s under seed k
draws from its own counter-based generator, so results are bit-identical
for a given (seed, trials) whatever the number of worker threads.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Tuple

import numpy as np

from src.core.config import settings
from src.core.errors import DomainError
from src.core.utils import make_rng
from src.models.distribution import Instance

logger = logging.getLogger(__name__)

BlockFn = Callable[[np.random.Generator, int], Tuple[np.ndarray, ...]]


@dataclass(frozen=True)
class SimResult:
    """Monte Carlo estimate with a 95% normal half-width."""

    mean: float
    half_width_95: float
    trials: int
    seed: int
    extras: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_rewards(cls, rewards: np.ndarray, seed: int, **extras) -> "SimResult":
        trials = int(rewards.size)
        std = float(np.std(rewards, ddof=1)) if trials > 1 else 0.0
        return cls(
            mean=float(np.mean(rewards)),
            half_width_95=1.96 * std / math.sqrt(trials),
            trials=trials,
            seed=int(seed),
            extras=dict(extras),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean": self.mean,
            "half_width_95": self.half_width_95,
            "trials": self.trials,
            "seed": self.seed,
            **self.extras,
        }


def _block_sizes(trials: int) -> List[int]:
    block = settings.sim_block_size
    return [min(block, trials - start) for start in range(0, trials, block)]


def run_blocks(block_fn: BlockFn, trials: int, seed: int, stream: str) -> Tuple[np.ndarray, ...]:
    """
    Run ``block_fn`` over all trial blocks and concatenate its outputs.

    Args:
        block_fn: (generator, block size) -> tuple of per-trial arrays
        trials: Total number of trials (>= 1)
        seed: Nonnegative seed
        stream: Stream name keying the generators

    Returns:
        Tuple of concatenated per-trial arrays, in trial order
    """
    if trials < 1:
        raise DomainError(f"trials must be positive, got {trials}")
    if seed < 0:
        raise DomainError(f"seed must be nonnegative, got {seed}")
    sizes = _block_sizes(trials)

    def work(b: int) -> Tuple[np.ndarray, ...]:
        out = block_fn(make_rng(seed, stream, b), sizes[b])
        return out if isinstance(out, tuple) else (out,)

    if settings.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(b) for b in range(len(sizes))]
    logger.debug(f"Stream '{stream}': {trials} trials in {len(sizes)} blocks")
    return tuple(np.concatenate(column) for column in zip(*parts))


def sample_values(inst: Instance, rng: np.random.Generator, size: int) -> np.ndarray:
    """Independent draws of every variable: array of shape (size, n)."""
    out = np.empty((size, inst.n))
    for members in inst.frequency_classes:
        d = inst[members[0]]
        out[:, list(members)] = d.sample(rng, (size, len(members)))
    return out


def first_accepted(
    values: np.ndarray, times: np.ndarray, eligible: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Earliest eligible arrival per row.

    Returns:
        (reward, column index, accepted flag); reward is 0 where nothing is eligible
    """
    masked = np.where(eligible, times, np.inf)
    col = np.argmin(masked, axis=1)
    rows = np.arange(values.shape[0])
    accepted = np.isfinite(masked[rows, col])
    reward = np.where(accepted, values[rows, col], 0.0)
    return reward, col, accepted


def sample_timestamps(n: int, seed: int) -> np.ndarray:
    """n i.i.d. uniform timestamps on [0, 1], sorted ascending."""
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    return np.sort(make_rng(seed, "timestamps").random(n))
