"""
Stopping rules and their Monte Carlo evaluation.

Time-based rules give every arrival an i.i.d. uniform timestamp (arrival
order is the timestamp order) and accept the first value above a
nonincreasing threshold curve, each acceptance surviving an independent
coin. The two-phase rules built on top of the decomposition handle a
few big variables; the frequent-instance and order-statistic guarantees
are thin reports on top of them.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.analysis.benchmarks import expected_kth_max, expected_max, max_distribution
from src.analysis.decomposition import DecompositionResult, SmallnessMode, decompose
from src.analysis.dist import as_discrete, is_small, smallness_delta, thin
from src.analysis.kertz import KertzSolution, default_solution, limit_values, optimal_rate
from src.analysis.kertz import worst_case_instance
from src.analysis.simulation import SimResult, first_accepted, run_blocks, sample_values
from src.core.config import settings
from src.core.errors import DomainError, PreconditionError, ResolutionError
from src.models.distribution import AnyDistribution, Distribution, Instance, atom_tolerance

logger = logging.getLogger(__name__)

Q_LADDER = (0.2, 0.1, 0.05, 0.02, 0.01, 0.005)


# ---------------------------------------------------------------------------
# Threshold curves and time policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuantileCurve:
    """r(t) = F^-1(y(t)) for a law F and the Kertz curve y."""

    law: Distribution
    solution: KertzSolution

    def __call__(self, t) -> np.ndarray:
        return np.asarray(self.law.quantile(self.solution.y(t)), dtype=float)


@dataclass(frozen=True)
class ConstantCurve:
    value: float

    def __call__(self, t) -> np.ndarray:
        return np.full(np.shape(t), float(self.value))


@dataclass(frozen=True, eq=False)
class TimePolicy:
    """
    Accept an arrival at time t if its value is at least r(t) and an
    independent coin with success probability ``accept_prob`` comes up.

    ``skip_zero`` additionally rejects zero values.
    """

    threshold_curve: Callable[[np.ndarray], np.ndarray]
    accept_prob: float = 1.0
    eps: float = 0.0
    delta: float = 0.0
    skip_zero: bool = False

    def __post_init__(self):
        if not 0 < self.accept_prob <= 1:
            raise DomainError(f"accept_prob must lie in (0, 1], got {self.accept_prob}")
        r = self.thresholds(np.linspace(0.0, 1.0, 257))
        if np.any(np.diff(r) > atom_tolerance(r[:-1])):
            raise DomainError("threshold curve must be nonincreasing on [0, 1]")

    @classmethod
    def constant(
        cls, value: float, accept_prob: float = 1.0, skip_zero: bool = False
    ) -> "TimePolicy":
        return cls(ConstantCurve(float(value)), accept_prob, skip_zero=skip_zero)

    def thresholds(self, t) -> np.ndarray:
        return np.asarray(self.threshold_curve(np.asarray(t, dtype=float)), dtype=float)

    def eligible(
        self, values: np.ndarray, times: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        """Which arrivals the rule would take if it reached them."""
        thr = self.thresholds(times)
        ok = values >= thr - atom_tolerance(thr)
        if self.accept_prob < 1:
            ok &= rng.random(values.shape) < self.accept_prob
        if self.skip_zero:
            ok &= values > 0
        return ok


def _check_eps(eps: float, upper: float = 1.0) -> None:
    if not 0 < eps < upper:
        raise DomainError(f"eps must lie in (0, {upper}), got {eps}")


def _defaults(trials: Optional[int], seed: Optional[int]) -> Tuple[int, int]:
    return (
        settings.default_trials if trials is None else int(trials),
        settings.default_seed if seed is None else int(seed),
    )


def _curve_policy(
    law: Distribution, eps: float, sol: Optional[KertzSolution], delta: float = 0.0
) -> TimePolicy:
    return TimePolicy(
        QuantileCurve(law, sol or default_solution()),
        accept_prob=(1.0 - eps) ** 2,
        eps=eps,
        delta=delta,
        skip_zero=True,
    )


def small_prophets_policy(
    inst: Instance, eps: float, sol: Optional[KertzSolution] = None
) -> TimePolicy:
    """
    Time policy r(t) = F^-1(y(t)) with F the c.d.f. of max_i X_i.

    Args:
        inst: Instance of eps-small variables
        eps: Smallness level; acceptance coins succeed with (1 - eps)^2
        sol: Kertz solution (defaults to the cached one)

    Raises:
        PreconditionError: If some variable is not eps-small
    """
    _check_eps(eps)
    offending: List[int] = []
    for members in inst.frequency_classes:
        if not is_small(inst[members[0]], eps, 0.0):
            offending.extend(members)
    if offending:
        raise PreconditionError(
            f"variables {sorted(offending)[:20]} are not {eps}-small "
            f"({len(offending)} offending)"
        )
    return _curve_policy(max_distribution(inst), eps, sol)


def run_time_policy(
    inst: Instance,
    pol: TimePolicy,
    trials: Optional[int] = None,
    seed: Optional[int] = None,
    stream: str = "time-policy",
) -> SimResult:
    """
    Simulate ``pol`` under uniform random arrival order.

    Returns:
        SimResult of the accepted value (0 when nothing is accepted)
    """
    trials, seed = _defaults(trials, seed)

    def block(rng: np.random.Generator, size: int):
        values = sample_values(inst, rng, size)
        times = rng.random(values.shape)
        reward, _, _ = first_accepted(values, times, pol.eligible(values, times, rng))
        return (reward,)

    (rewards,) = run_blocks(block, trials, seed, stream)
    return SimResult.from_rewards(rewards, seed)


def run_restricted_small(
    inst: Instance,
    eps: float,
    sol: Optional[KertzSolution] = None,
    trials: Optional[int] = None,
    seed: Optional[int] = None,
) -> SimResult:
    """
    Small-prophets rule that never looks past arrival floor((1 - eps) n).

    Each box is kept with probability 1 - 2 eps; the kept boxes are the
    first R arrivals and run the curve built for the thinned collection.
    Trials with R > floor((1 - eps) n) quit with reward 0.

    Raises:
        PreconditionError: If n <= eps^-2 log(1/eps)
    """
    _check_eps(eps, 0.5)
    trials, seed = _defaults(trials, seed)
    n = inst.n
    needed = eps ** -2 * math.log(1.0 / eps)
    if not n > needed:
        raise PreconditionError(f"restricted rule needs n > {needed:.1f}, got n = {n}")

    delta = max(smallness_delta(d, eps) for d, _ in inst.class_members())
    keep_prob = 1.0 - 2.0 * eps
    thinned = {d.fingerprint(): thin(d, keep_prob) for d, _ in inst.class_members()}
    thinned_inst = Instance(tuple(thinned[d.fingerprint()] for d in inst.variables))
    pol = _curve_policy(max_distribution(thinned_inst), eps, sol, delta)
    cap = math.floor((1.0 - eps) * n)

    def block(rng: np.random.Generator, size: int):
        values = sample_values(inst, rng, size)
        times = rng.random(values.shape)
        keep = rng.random(values.shape) < keep_prob
        ok = pol.eligible(values, times, rng) & keep
        reward, col, accepted = first_accepted(values, times, ok)
        quit = keep.sum(axis=1) > cap
        t_acc = times[np.arange(size), col]
        rank = (keep & (times <= t_acc[:, None])).sum(axis=1)
        taken = accepted & ~quit
        return np.where(quit, 0.0, reward), np.where(taken, rank, 0), quit.astype(float)

    rewards, positions, quits = run_blocks(block, trials, seed, "restricted")
    max_position = int(positions.max())
    logger.info(f"Restricted run: max position {max_position} of cap {cap}")
    return SimResult.from_rewards(
        rewards,
        seed,
        delta=float(delta),
        position_cap=cap,
        max_position=max_position,
        quit_fraction=float(quits.mean()),
    )


# ---------------------------------------------------------------------------
# Decomposition-based rules
# ---------------------------------------------------------------------------


def removal_budget(eps: float, multiplier: Optional[float] = None) -> int:
    """ceil(multiplier * eps^-2 * log(1/eps))."""
    _check_eps(eps)
    multiplier = settings.removal_multiplier if multiplier is None else multiplier
    return math.ceil(multiplier * eps ** -2 * math.log(1.0 / eps))


def _weak_split(inst: Instance, eps: float, k: int) -> DecompositionResult:
    # at least one variable always survives
    return decompose(inst, eps, min(k, inst.n - 1), SmallnessMode.EPS_T_SMALL)


def _simulate_two_phase(
    inst: Instance,
    dec: DecompositionResult,
    eps: float,
    sol: Optional[KertzSolution],
    trials: int,
    seed: int,
) -> SimResult:
    survivors = np.array(dec.survivors, dtype=np.int64)
    residuals = dec.residual_instance.subset(survivors)
    pol = _curve_policy(max_distribution(residuals), eps, sol, dec.residual_delta())
    cutoff_rank = math.floor((1.0 - eps) * survivors.size)
    t_star = dec.t_star
    is_survivor = np.zeros(inst.n, dtype=bool)
    is_survivor[survivors] = True

    def block(rng: np.random.Generator, size: int):
        values = sample_values(inst, rng, size)
        times = rng.random(values.shape)
        residual = np.maximum(values - t_star, 0.0)
        if cutoff_rank >= 1:
            own = times[:, survivors]
            cutoff = np.partition(own, cutoff_rank - 1, axis=1)[:, cutoff_rank - 1]
        else:
            cutoff = np.full(size, -np.inf)
        early = times <= cutoff[:, None]
        first = is_survivor & early & pol.eligible(residual, times, rng)
        second = ~early & (values >= t_star - atom_tolerance(t_star)) & (values > 0)
        reward, _, _ = first_accepted(values, times, first | second)
        return (reward,)

    (rewards,) = run_blocks(block, trials, seed, "imperfect")
    return SimResult.from_rewards(rewards, seed)


def self_competing_subset(
    inst: Instance, eps: float, k: Optional[int] = None
) -> Tuple[Tuple[int, ...], Optional[int]]:
    """
    Iterate the weak split until the expected max stops collapsing.

    X_0 = X and X_{j+1} is the surviving set of the weak split of X_j. The
    first X_j with MAX(X_{j+1}) >= (1 - eps) MAX(X_j) is returned. After
    k_max = ceil(10 eps^-1 log eps^-1) rounds without one, the variable of
    largest mean among X \\ X_1 is added to X_{k_max} and returned as the
    fallback to accept on sight.

    Returns:
        (subset indices, fallback index or None)
    """
    _check_eps(eps)
    k = removal_budget(eps) if k is None else k
    k_max = math.ceil(10.0 / eps * math.log(1.0 / eps))
    current = tuple(range(inst.n))
    current_max = expected_max(inst)
    dropped_first: Tuple[int, ...] = ()
    for j in range(k_max):
        dec = _weak_split(inst.subset(current), eps, k)
        nxt = tuple(current[i] for i in dec.survivors)
        if j == 0:
            dropped_first = tuple(current[i] for i in dec.big_indices)
        nxt_max = expected_max(inst.subset(nxt))
        if nxt_max >= (1.0 - eps) * current_max - atom_tolerance(current_max):
            logger.debug(f"Self-competing subset found after {j} rounds ({len(current)} kept)")
            return current, None
        current, current_max = nxt, nxt_max
    star = max(dropped_first, key=lambda i: (inst[i].mean, -i))
    logger.info(f"No self-competing subset within {k_max} rounds; falling back to X_{star}")
    return tuple(sorted(set(current) | {star})), star


@dataclass(frozen=True)
class ImperfectProphetResult:
    """Removed set, simulated value and the benchmark MAX of the kept variables."""

    removed: Tuple[int, ...]
    sim: SimResult
    benchmark: float
    t_star: float
    variant: str
    subset: Tuple[int, ...]
    fallback: Optional[int] = None

    @property
    def ratio(self) -> float:
        return self.sim.mean / self.benchmark if self.benchmark > 0 else float("nan")

    def to_dict(self) -> dict:
        return {
            "removed": list(self.removed),
            "benchmark": self.benchmark,
            "ratio": self.ratio,
            "t_star": self.t_star,
            "variant": self.variant,
            "fallback": self.fallback,
            **self.sim.to_dict(),
        }


def imperfect_prophet_policy(
    inst: Instance,
    eps: float,
    sol: Optional[KertzSolution] = None,
    seed: Optional[int] = None,
    trials: Optional[int] = None,
    variant: str = "weak",
    k: Optional[int] = None,
) -> ImperfectProphetResult:
    """
    Two-phase rule competing with the expected max of a large subset.

    Phase one runs the small-prophets curve on the residuals
    max(X_i, t*) - t* of the kept variables for the first
    floor((1 - eps) |X'|) of their arrivals; phase two takes the first
    later arrival (kept or big) worth at least t*.

    Args:
        inst: Instance
        eps: Accuracy in (0, 0.25)
        sol: Kertz solution (defaults to the cached one)
        seed: Simulation seed
        trials: Monte Carlo trials
        variant: "weak" (one split) or "strong" (self-competing subset)
        k: Removal budget (defaults to removal_budget(eps))

    Returns:
        ImperfectProphetResult
    """
    _check_eps(eps, 0.25)
    trials, seed = _defaults(trials, seed)
    k = removal_budget(eps) if k is None else k
    if variant not in ("weak", "strong"):
        raise DomainError(f"variant must be 'weak' or 'strong', got {variant!r}")

    if variant == "weak":
        dec = _weak_split(inst, eps, k)
        kept = dec.survivors
        sim = _simulate_two_phase(inst, dec, eps, sol, trials, seed)
        return ImperfectProphetResult(
            removed=dec.big_indices,
            sim=sim,
            benchmark=expected_max(inst.subset(kept)),
            t_star=dec.t_star,
            variant=variant,
            subset=kept,
        )

    subset, star = self_competing_subset(inst, eps, k)
    removed = tuple(i for i in range(inst.n) if i not in set(subset))
    benchmark = expected_max(inst.subset(subset))
    if star is not None:
        d = inst[star]
        (rewards,) = run_blocks(lambda rng, size: (d.sample(rng, size),), trials, seed, "fallback")
        sim = SimResult.from_rewards(rewards, seed, fallback=star)
        t_star = 0.0
    else:
        sub = inst.subset(subset)
        dec = _weak_split(sub, eps, k)
        sim = _simulate_two_phase(sub, dec, eps, sol, trials, seed)
        t_star = dec.t_star
    return ImperfectProphetResult(
        removed=removed,
        sim=sim,
        benchmark=benchmark,
        t_star=t_star,
        variant=variant,
        subset=subset,
        fallback=star,
    )


@dataclass(frozen=True)
class KthOrderResult:
    k: int
    ratio: float
    kth_max: float
    imperfect: ImperfectProphetResult


def kth_order_guarantee(
    inst: Instance,
    eps: float,
    sol: Optional[KertzSolution] = None,
    seed: Optional[int] = None,
    trials: Optional[int] = None,
    budget: Optional[int] = None,
) -> KthOrderResult:
    """Compare the two-phase rule with the (|removed| + 1)-th largest value."""
    res = imperfect_prophet_policy(inst, eps, sol, seed, trials, "weak", budget)
    k = min(len(res.removed) + 1, inst.n)
    kth = expected_kth_max(inst, k)
    ratio = res.sim.mean / kth if kth > 0 else float("nan")
    return KthOrderResult(k=k, ratio=ratio, kth_max=kth, imperfect=res)


@dataclass(frozen=True)
class FrequentResult:
    sim: SimResult
    ratio: float
    max_value: float
    removed: Tuple[int, ...]
    m: int
    coupling_floor: float
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "max": self.max_value,
            "removed": list(self.removed),
            "m": self.m,
            "coupling_floor": self.coupling_floor,
            **self.sim.to_dict(),
        }


def frequent_guarantee(
    inst: Instance,
    eps: float,
    sol: Optional[KertzSolution] = None,
    seed: Optional[int] = None,
    trials: Optional[int] = None,
    budget: Optional[int] = None,
) -> FrequentResult:
    """
    Run the two-phase rule on an m-frequent instance against the full MAX.

    Any removal of r variables keeps at least a (1 - r/m) share of the
    expected max, reported as ``coupling_floor``.

    Raises:
        PreconditionError: If the smallest frequency class has fewer than 2 members
    """
    m = inst.m
    if m < 2:
        raise PreconditionError(f"instance must be at least 2-frequent, got m = {m}")
    budget = removal_budget(eps) if budget is None else budget
    warnings = []
    if m < budget:
        warnings.append(f"instance is {m}-frequent, below the {budget} the guarantee assumes")
        logger.warning(warnings[-1])
    res = imperfect_prophet_policy(inst, eps, sol, seed, trials, "weak", budget)
    full_max = expected_max(inst)
    return FrequentResult(
        sim=res.sim,
        ratio=res.sim.mean / full_max if full_max > 0 else float("nan"),
        max_value=full_max,
        removed=res.removed,
        m=m,
        coupling_floor=max(0.0, 1.0 - len(res.removed) / m),
        warnings=warnings,
    )


def single_threshold_baseline(
    inst: Instance, trials: Optional[int] = None, seed: Optional[int] = None
) -> SimResult:
    """Accept the first value at least the median of max_i X_i."""
    tau = float(max_distribution(inst).quantile(0.5))
    sim = run_time_policy(inst, TimePolicy.constant(tau), trials, seed, stream="baseline")
    return SimResult(sim.mean, sim.half_width_95, sim.trials, sim.seed, {"threshold": tau})


# ---------------------------------------------------------------------------
# I.i.d. sequences and tightness instances
# ---------------------------------------------------------------------------


def simulate_threshold_sequence(
    d: AnyDistribution,
    thresholds: Sequence[float],
    trials: Optional[int] = None,
    seed: Optional[int] = None,
) -> SimResult:
    """
    Monte Carlo of an i.i.d. rule accepting X_j >= thresholds[j].

    The stopping position is drawn from its exact law and the accepted
    value from X | X >= tau, so the cost does not grow with n.
    """
    trials, seed = _defaults(trials, seed)
    d = as_discrete(d)
    tau = np.maximum(np.asarray(thresholds, dtype=float), 0.0)
    n = tau.size
    accept = np.asarray(d.mass_at_least(tau), dtype=float)
    reach = np.concatenate(([1.0], np.cumprod(1.0 - accept)))
    stop_cum = np.cumsum(reach[:-1] * accept)

    def block(rng: np.random.Generator, size: int):
        pos = np.searchsorted(stop_cum, rng.random(size), side="right")
        stopped = pos < n
        values = np.zeros(size)
        values[stopped] = d.draw_at_least(rng.random(int(stopped.sum())), tau[pos[stopped]])
        return values, stopped.astype(float)

    rewards, stopped = run_blocks(block, trials, seed, "threshold-sequence")
    return SimResult.from_rewards(rewards, seed, stop_rate=float(stopped.mean()))


def tightness_parameters(
    alpha: float, r: int, sol: Optional[KertzSolution] = None
) -> Tuple[float, int]:
    """
    Cut-off q and size n of an i.i.d. worst-case instance on which removing
    r variables cannot lift the optimal ratio to ``alpha``.

    Raises:
        DomainError: If alpha <= beta or r < 0
        ResolutionError: If no q on the ladder gets close enough to beta
    """
    sol = sol or default_solution()
    beta = sol.beta
    if not beta < alpha < 1:
        raise DomainError(f"alpha must lie in (beta = {beta:.6f}, 1), got {alpha}")
    if r < 0:
        raise DomainError(f"r must be nonnegative, got {r}")
    gap = (alpha - beta) / 2.0
    for q in Q_LADDER:
        opt, mx = limit_values(optimal_rate(sol, q))
        if opt / mx < beta + gap:
            break
    else:
        raise ResolutionError(f"no q in {Q_LADDER} brings the limit ratio within {gap:.3g} of beta")
    n = max(
        settings.tightness_min_n,
        math.ceil(2 * r * alpha / (alpha - beta)) + 1,
        math.ceil(r * (1 + gap)) + 1,
    )
    logger.info(f"Tightness instance for alpha={alpha}, r={r}: q={q}, n={n}")
    return q, n


def tightness_instance(
    alpha: float, r: int, sol: Optional[KertzSolution] = None, points: Optional[int] = None
) -> Instance:
    """Worst-case i.i.d. instance from ``tightness_parameters``."""
    q, n = tightness_parameters(alpha, r, sol)
    return worst_case_instance(q, n, sol, points)
