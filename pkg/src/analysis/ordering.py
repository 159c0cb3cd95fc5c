"""
Near-optimal inspection orders for the free-order problem.

Thresholds are restricted to the grid t_u = (1 - u eps)^+ MAX. Each
(variable, threshold) pair has a tail mean lambda and a rejection
probability p; sorting the chosen pairs by lambda gives the policy. The
assignment of thresholds to variables is relaxed to the concave program

    max_z  sum_l (lambda_r(l) - lambda_r(l+1)) (1 - prod_{l' <= l} p_r(l')^z_r(l'))

over row-stochastic z (r ranks all pairs by lambda), solved by projected
gradient ascent and rounded row by row. Instances with a few non-small
variables go through the decomposition: the big rows are enumerated
(fixed) and the rest solved on the shifted residuals.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import lambertw

from src.analysis.benchmarks import StatelessPolicy, backward_induction, expected_max
from src.analysis.decomposition import SmallnessMode, decompose
from src.analysis.dist import is_small, tail_stats
from src.analysis.policies import removal_budget
from src.core.config import settings
from src.core.errors import CapacityError, DomainError, PreconditionError
from src.core.utils import make_rng
from src.models.distribution import Instance

logger = logging.getLogger(__name__)

LOG_P_FLOOR = 1e-12
ARMIJO = 1e-4
MAX_STEP = 1e8


@dataclass(frozen=True, eq=False)
class ThresholdGrid:
    """Levels t_u = (1 - u eps)^+ MAX for u = 0..c."""

    eps: float
    c: int
    levels: np.ndarray
    max_value: float

    @property
    def size(self) -> int:
        return self.c + 1


@dataclass(frozen=True, eq=False)
class AssignmentTables:
    """
    lambda/p tables over (variable, level) and the lambda ranking.

    ``ranking`` lists flat pair indices i * (c + 1) + j by lambda
    descending, ties by (i, j) ascending; ``rank_of`` is its inverse.
    """

    inst: Instance
    grid: ThresholdGrid
    lam: np.ndarray
    p: np.ndarray
    ranking: np.ndarray
    rank_of: np.ndarray
    dlam: np.ndarray
    log_p: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.lam.shape


@dataclass(frozen=True, eq=False)
class Assignment:
    """Row-stochastic z over (variable, level); ``fixed`` rows are one-hot."""

    z: np.ndarray
    objective: float
    fixed: Tuple[Tuple[int, int], ...] = ()
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        if np.any(np.abs(self.z.sum(axis=1) - 1.0) > 1e-9):
            raise DomainError("assignment rows must sum to 1")
        for row, col in self.fixed:
            if self.z[row, col] != 1.0:
                raise DomainError(f"fixed row {row} is not one-hot at column {col}")

    def is_integral(self) -> bool:
        return bool(np.all((self.z == 0.0) | (self.z == 1.0)))

    def choices(self) -> np.ndarray:
        if not self.is_integral():
            raise DomainError("assignment is fractional")
        return np.argmax(self.z, axis=1)


# ---------------------------------------------------------------------------
# Grid and tables
# ---------------------------------------------------------------------------


def build_grid(inst: Instance, eps: float) -> ThresholdGrid:
    """Threshold grid with c = ceil(1/eps) and MAX = expected_max(inst)."""
    if not 0 < eps <= 0.5:
        raise DomainError(f"eps must lie in (0, 0.5], got {eps}")
    c = math.ceil(1.0 / eps - 1e-12)
    max_value = expected_max(inst)
    levels = np.maximum(1.0 - np.arange(c + 1) * eps, 0.0) * max_value
    levels[0] = max_value
    return ThresholdGrid(eps=float(eps), c=c, levels=levels, max_value=max_value)


def build_tables(inst: Instance, grid: ThresholdGrid) -> AssignmentTables:
    """Exact lambda/p tables via tail_stats and the deterministic lambda ranking."""
    n, cols = inst.n, grid.size
    per_class: Dict[Tuple[bytes, bytes], Tuple[np.ndarray, np.ndarray]] = {}
    for d, _ in inst.class_members():
        stats = [tail_stats(d, float(t)) for t in grid.levels]
        per_class[d.fingerprint()] = (
            np.array([s[0] for s in stats]),
            np.array([s[1] for s in stats]),
        )
    lam = np.empty((n, cols))
    p = np.empty((n, cols))
    for i in range(n):
        lam[i], p[i] = per_class[inst[i].fingerprint()]

    rows, cols_idx = np.divmod(np.arange(n * cols), cols)
    ranking = np.lexsort((cols_idx, rows, -lam.ravel()))
    rank_of = np.empty_like(ranking)
    rank_of[ranking] = np.arange(ranking.size)
    lam_r = lam.ravel()[ranking]
    dlam = lam_r - np.append(lam_r[1:], 0.0)
    log_p = np.log(np.maximum(p.ravel()[ranking], LOG_P_FLOOR))
    for arr in (lam, p, ranking, rank_of, dlam, log_p):
        arr.flags.writeable = False
    return AssignmentTables(inst, grid, lam, p, ranking, rank_of, dlam, log_p)


# ---------------------------------------------------------------------------
# Concave program
# ---------------------------------------------------------------------------


def _ranked(tables: AssignmentTables, z: np.ndarray) -> np.ndarray:
    flat = z.reshape(z.shape[:-2] + (-1,))
    return flat[..., tables.ranking]


def cp_objective(tables: AssignmentTables, z: np.ndarray) -> Union[float, np.ndarray]:
    """Objective of the relaxation, batched over leading axes of ``z``."""
    zr = _ranked(tables, np.asarray(z, dtype=float))
    s = np.cumsum(zr * tables.log_p, axis=-1)
    out = np.sum(tables.dlam * (1.0 - np.exp(s)), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def cp_gradient(tables: AssignmentTables, z: np.ndarray) -> np.ndarray:
    """Analytic gradient of ``cp_objective`` (same shape as ``z``)."""
    z = np.asarray(z, dtype=float)
    zr = _ranked(tables, z)
    weights = tables.dlam * np.exp(np.cumsum(zr * tables.log_p, axis=-1))
    tail = np.cumsum(weights[..., ::-1], axis=-1)[..., ::-1]
    grad_r = -tables.log_p * tail
    grad = np.empty_like(grad_r)
    grad[..., tables.ranking] = grad_r
    return grad.reshape(z.shape)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row (last axis) onto the probability simplex."""
    shape = v.shape
    flat = v.reshape(-1, shape[-1])
    u = np.sort(flat, axis=1)[:, ::-1]
    cssv = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, shape[-1] + 1)
    rho = np.count_nonzero(u - cssv / ind > 0, axis=1)
    theta = cssv[np.arange(flat.shape[0]), rho - 1] / rho
    return np.maximum(flat - theta[:, None], 0.0).reshape(shape)


def _solve_batch(
    tables: AssignmentTables, fixed_cols: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """
    Projected gradient ascent for a batch of fixings.

    Args:
        tables: Assignment tables
        fixed_cols: (B, n) fixed column per row, -1 where free

    Returns:
        (z of shape (B, n, c+1), objectives, converged flags, iterations)
    """
    n, cols = tables.shape
    batch = fixed_cols.shape[0]
    fixed = fixed_cols >= 0
    onehot = np.eye(cols)[np.maximum(fixed_cols, 0)]
    z = np.where(fixed[..., None], onehot, np.full((batch, n, cols), 1.0 / cols))
    f = np.asarray(cp_objective(tables, z), dtype=float).reshape(batch)

    patience = settings.cp_patience
    history = np.empty((patience + 1, batch))
    history[0] = f
    step = np.full(batch, 1.0 / max(tables.grid.max_value, 1e-12))
    active = np.ones(batch, dtype=bool)
    it = 0
    while it < settings.cp_max_iter and active.any():
        idx = np.flatnonzero(active)
        zi = z[idx]
        grad = cp_gradient(tables, zi)
        grad[fixed[idx]] = 0.0
        cand = project_simplex(zi + step[idx, None, None] * grad)
        cand = np.where(fixed[idx][..., None], zi, cand)
        fc = np.asarray(cp_objective(tables, cand), dtype=float).reshape(idx.size)
        ok = fc >= f[idx] + ARMIJO * np.sum(grad * (cand - zi), axis=(1, 2))
        z[idx[ok]] = cand[ok]
        f[idx[ok]] = fc[ok]
        step[idx] = np.where(ok, np.minimum(step[idx] * 2.0, MAX_STEP), step[idx] / 2.0)

        it += 1
        history[it % (patience + 1)] = f
        if it >= patience:
            old = history[(it - patience) % (patience + 1)]
            stalled = f - old <= settings.cp_rel_tol * np.maximum(np.abs(f), 1e-300)
            active &= ~stalled
    if active.any():
        logger.warning(f"Concave solver hit the iteration cap ({it}) on {active.sum()} fixings")
    return z, f, ~active, it


def solve_cp(
    tables: AssignmentTables, fixed: Optional[Dict[int, int]] = None
) -> Assignment:
    """
    Solve the relaxation, optionally with some rows fixed to one column.

    Args:
        tables: Assignment tables
        fixed: Optional map row -> column

    Returns:
        Fractional Assignment; ``converged`` is False if the iteration cap was hit
    """
    n, cols = tables.shape
    fixed = dict(fixed or {})
    fixed_cols = np.full((1, n), -1, dtype=np.int64)
    for row, col in fixed.items():
        if not (0 <= row < n and 0 <= col < cols):
            raise DomainError(f"fixing ({row}, {col}) is outside the {n} x {cols} table")
        fixed_cols[0, row] = col
    z, f, converged, iterations = _solve_batch(tables, fixed_cols)
    return Assignment(
        z=z[0],
        objective=float(f[0]),
        fixed=tuple(sorted(fixed.items())),
        converged=bool(converged[0]),
        iterations=iterations,
    )


# ---------------------------------------------------------------------------
# Integral solutions and rounding
# ---------------------------------------------------------------------------


def _integral_values(tables: AssignmentTables, choices: np.ndarray) -> np.ndarray:
    """Exact policy values for integral choices of shape (R, n)."""
    n, cols = tables.shape
    pairs = np.arange(n) * cols + choices
    order = np.argsort(tables.rank_of[pairs], axis=1)
    lam = np.take_along_axis(tables.lam.ravel()[pairs], order, axis=1)
    p = np.take_along_axis(tables.p.ravel()[pairs], order, axis=1)
    reach = np.concatenate((np.ones((p.shape[0], 1)), np.cumprod(p, axis=1)[:, :-1]), axis=1)
    return np.sum(lam * (1.0 - p) * reach, axis=1)


def integral_objective(
    tables: AssignmentTables, assignment: Union[Assignment, np.ndarray]
) -> float:
    """
    Exact value of an integral assignment (pairs taken in lambda order).

    p = 0 terms are evaluated directly, never through the log floor.
    """
    if isinstance(assignment, Assignment):
        choices = assignment.choices()
    else:
        z = np.asarray(assignment, dtype=float)
        if z.ndim == 1:
            choices = z.astype(np.int64)
        else:
            if not np.all((z == 0.0) | (z == 1.0)) or np.any(z.sum(axis=1) != 1.0):
                raise DomainError("integral assignment must be one-hot per row")
            choices = np.argmax(z, axis=1)
    return float(_integral_values(tables, choices[None, :])[0])


def policy_from_choices(tables: AssignmentTables, choices: Sequence[int]) -> StatelessPolicy:
    """Policy assigning level t_j to each variable and sorting pairs by lambda."""
    choices = np.asarray(choices, dtype=np.int64)
    n, cols = tables.shape
    order = np.argsort(tables.rank_of[np.arange(n) * cols + choices])
    thresholds = tables.grid.levels[choices[order]]
    return StatelessPolicy.from_thresholds(tables.inst, order, thresholds)


def round_assignment(
    tables: AssignmentTables,
    assignment: Assignment,
    seed: Optional[int] = None,
    reps: Optional[int] = None,
) -> Tuple[Assignment, StatelessPolicy]:
    """
    Independent per-row categorical rounding, best of ``reps`` draws.

    Args:
        tables: Assignment tables
        assignment: Fractional solution
        seed: Rounding seed
        reps: Repetitions (defaults to ceil(10 / eps))

    Returns:
        (integral Assignment, induced lambda-sorted policy)
    """
    seed = settings.default_seed if seed is None else seed
    reps = reps if reps is not None else math.ceil(10.0 / tables.grid.eps - 1e-9)
    if reps < 1:
        raise DomainError(f"reps must be positive, got {reps}")
    n, cols = tables.shape
    rng = make_rng(seed, "rounding")
    u = rng.random((reps, n))
    cum = np.cumsum(assignment.z, axis=1)
    cum = cum / cum[:, -1:]
    choices = np.minimum((cum[None, :, :] <= u[:, :, None]).sum(axis=2), cols - 1)
    for row, col in assignment.fixed:
        choices[:, row] = col

    values = _integral_values(tables, choices)
    best = int(np.argmax(values))
    z = np.eye(cols)[choices[best]]
    rounded = Assignment(z=z, objective=float(values[best]), fixed=assignment.fixed)
    logger.debug(
        f"Rounding: best of {reps} = {values[best]:.6g} vs fractional {assignment.objective:.6g}"
    )
    return rounded, policy_from_choices(tables, choices[best])


# ---------------------------------------------------------------------------
# Orders
# ---------------------------------------------------------------------------


def _all_small(inst: Instance, eps: float) -> bool:
    return all(is_small(d, eps, 0.0) for d, _ in inst.class_members())


def _solve_small(
    inst: Instance, eps: float, seed: Optional[int], reps: Optional[int]
) -> Tuple[StatelessPolicy, Assignment]:
    tables = build_tables(inst, build_grid(inst, eps))
    frac = solve_cp(tables)
    _, pol = round_assignment(tables, frac, seed, reps)
    return pol.with_last_threshold_zero(inst), frac


def order_small(
    inst: Instance, eps: float, seed: Optional[int] = None, reps: Optional[int] = None
) -> StatelessPolicy:
    """
    Order for an instance of eps-small variables.

    Raises:
        PreconditionError: If some variable is not eps-small
    """
    if not 0 < eps <= 0.5:
        raise DomainError(f"eps must lie in (0, 0.5], got {eps}")
    offending = [i for i in range(inst.n) if not is_small(inst[i], eps, 0.0)]
    if offending:
        raise PreconditionError(f"variables {offending[:20]} are not {eps}-small")
    pol, _ = _solve_small(inst, eps, seed, reps)
    return pol


@dataclass(frozen=True)
class OrderingResult:
    """Two-phase policy on the full instance plus bookkeeping of the reduction."""

    policy: StatelessPolicy
    refined: StatelessPolicy
    t_star: float
    big_indices: Tuple[int, ...]
    rand_indices: Tuple[int, ...]
    k_requested: int
    k_used: int
    fixings: int
    cp_objective: float
    converged: bool
    adjusted: bool
    eps: float
    eps_effective: Optional[float]

    @property
    def value(self) -> float:
        return self.policy.value

    def flags(self) -> List[str]:
        out = []
        if not self.converged:
            out.append("cp_not_converged")
        if self.adjusted:
            out.append(f"k_adjusted:{self.k_requested}->{self.k_used}")
        return out

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.to_dict(),
            "refined": self.refined.to_dict(),
            "t_star": self.t_star,
            "big_indices": list(self.big_indices),
            "rand_indices": list(self.rand_indices),
            "k_requested": self.k_requested,
            "k_used": self.k_used,
            "eps": self.eps,
            "eps_effective": self.eps_effective,
            "fixings": self.fixings,
            "cp_objective": self.cp_objective,
            "converged": self.converged,
            "adjusted": self.adjusted,
        }


def effective_eps(eps: float, k: int) -> Optional[float]:
    """
    Least accuracy >= eps whose removal budget is at most k.

    Solves m eps^-2 log(1/eps) = k on (0, e^-1/2), where the budget
    decreases: with x = eps^-2, x log x = 2k/m and log x = W(2k/m).
    None when k/m <= e/2, below the budget at the top of that range.
    """
    if removal_budget(eps) <= k:
        return float(eps)
    load = 2.0 * k / settings.removal_multiplier
    if load <= math.e:
        return None
    return max(float(eps), math.exp(-0.5 * float(lambertw(load).real)))


def _distinct_columns(tables: AssignmentTables, row: int) -> List[int]:
    seen, cols = set(), []
    for j in range(tables.grid.size):
        key = (float(tables.lam[row, j]), float(tables.p[row, j]))
        if key not in seen:
            seen.add(key)
            cols.append(j)
    return cols


def _skip_zero_threshold(inst: Instance, i: int) -> float:
    """Smallest threshold rejecting exactly the zero values of X_i."""
    positive = inst[i].values[inst[i].values > 0]
    return float(positive[0]) if positive.size else 1.0


def order_general(
    inst: Instance,
    eps: float,
    seed: Optional[int] = None,
    allow_adjust: bool = True,
    fixing_cap: Optional[int] = None,
    reps: Optional[int] = None,
) -> OrderingResult:
    """
    Near-optimal order for an arbitrary instance.

    Decompose with k = min(removal_budget(eps), n) under the eps_small
    criterion, set aside a random r = floor(eps |big|) of the big
    variables, solve the residuals of the rest with every fixing of the
    big rows, and append the set-aside variables at threshold t*.

    Args:
        inst: Instance
        eps: Accuracy in (0, 0.25]
        seed: Seed for the subset draw and the rounding
        allow_adjust: Lower k until the fixing count fits the cap
        fixing_cap: Largest number of fixings (defaults to settings.ordering_fixing_cap)
        reps: Rounding repetitions

    Returns:
        OrderingResult

    Raises:
        CapacityError: If the fixings exceed the cap and allow_adjust is False
    """
    if not 0 < eps <= 0.25:
        raise DomainError(f"eps must lie in (0, 0.25], got {eps}")
    seed = settings.default_seed if seed is None else seed
    cap = fixing_cap or settings.ordering_fixing_cap
    n = inst.n
    k_requested = min(removal_budget(eps), n)

    if _all_small(inst, eps):
        pol, frac = _solve_small(inst, eps, seed, reps)
        return OrderingResult(
            policy=pol,
            refined=backward_induction(inst, pol.order),
            t_star=0.0,
            big_indices=(),
            rand_indices=(),
            k_requested=k_requested,
            k_used=0,
            fixings=1,
            cp_objective=frac.objective,
            converged=frac.converged,
            adjusted=False,
            eps=float(eps),
            eps_effective=float(eps),
        )

    k = k_requested
    while True:
        dec = decompose(inst, eps, k, SmallnessMode.EPS_SMALL)
        big = dec.big_indices
        r = math.floor(eps * len(big))
        rng = make_rng(seed, "ordering-subset")
        rand = tuple(sorted(int(i) for i in rng.choice(big, size=r, replace=False))) if r else ()
        kept = [i for i in range(n) if i not in set(rand)]
        residual = dec.residual_instance.subset(kept)
        tables = build_tables(residual, build_grid(residual, eps))
        big_set = set(big)
        fixed_rows = [pos for pos, i in enumerate(kept) if i in big_set]
        options = [_distinct_columns(tables, row) for row in fixed_rows]
        count = math.prod(len(o) for o in options)
        if count <= cap:
            break
        if not allow_adjust:
            raise CapacityError(
                f"{count} fixings for k = {k}, c = {tables.grid.c} exceed the cap of {cap}"
            )
        k -= 1
    adjusted = k != k_requested
    logger.info(
        f"Ordering: t* = {dec.t_star:.6g}, {len(big)} big, {len(rand)} set aside, "
        f"{count} fixings (k = {k})"
    )

    z, objective, converged, fixing = _enumerate_fixings(tables, fixed_rows, options, count)
    best = Assignment(
        z=z,
        objective=objective,
        fixed=tuple((row, int(col)) for row, col in zip(fixed_rows, fixing)),
        converged=converged,
    )
    _, residual_pol = round_assignment(tables, best, seed, reps)

    order = [kept[i] for i in residual_pol.order] + list(rand)
    thresholds = [t + dec.t_star for t in residual_pol.thresholds] + [dec.t_star] * len(rand)
    for pos, i in enumerate(order[:-1]):
        if thresholds[pos] <= 0:
            thresholds[pos] = _skip_zero_threshold(inst, i)
    thresholds[-1] = 0.0
    policy = StatelessPolicy.from_thresholds(inst, order, thresholds)

    return OrderingResult(
        policy=policy,
        refined=backward_induction(inst, order),
        t_star=dec.t_star,
        big_indices=big,
        rand_indices=rand,
        k_requested=k_requested,
        k_used=k,
        fixings=count,
        cp_objective=objective,
        converged=converged,
        adjusted=adjusted,
        eps=float(eps),
        eps_effective=effective_eps(eps, k) if adjusted else float(eps),
    )


def _enumerate_fixings(
    tables: AssignmentTables,
    fixed_rows: List[int],
    options: List[List[int]],
    count: int,
) -> Tuple[np.ndarray, float, bool, np.ndarray]:
    """Best fixing by relaxation value; ties go to the lowest fixing index."""
    n, _ = tables.shape
    sizes = [len(o) for o in options]
    batch = settings.cp_batch_size

    def solve(start: int):
        ids = np.arange(start, min(start + batch, count))
        fixed_cols = np.full((ids.size, n), -1, dtype=np.int64)
        if sizes:
            digits = np.unravel_index(ids, sizes)
            for a, row in enumerate(fixed_rows):
                fixed_cols[:, row] = np.asarray(options[a])[digits[a]]
        z, f, conv, _ = _solve_batch(tables, fixed_cols)
        j = int(np.argmax(f))
        return z[j], float(f[j]), bool(conv.all()), fixed_cols[j, fixed_rows]

    starts = range(0, count, batch)
    if settings.threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            results = list(pool.map(solve, starts))
    else:
        results = [solve(s) for s in starts]

    best = results[0]
    for res in results[1:]:
        if res[1] > best[1]:
            best = res
    converged = all(res[2] for res in results)
    return best[0], best[1], converged, best[3]
