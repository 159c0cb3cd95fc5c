"""
Distribution and instance types.

A ``Distribution`` is one nonnegative random variable with finitely many
atoms; a ``ParametricDistribution`` wraps a scipy.stats law and is
discretized to a quantile grid before any exact algorithm touches it. An
``Instance`` is an ordered collection of independent discrete variables
with its frequency classes.
"""

from dataclasses import dataclass, field
from typing import ClassVar, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from src.core.config import settings
from src.core.errors import CapacityError, DomainError

# Atoms closer than this (relative) are merged; comparisons at atoms use it too.
ATOM_TOL = 1e-12
MASS_TOL = 1e-9


def atom_tolerance(x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Comparison slack at value ``x``."""
    return ATOM_TOL * np.maximum(1.0, np.abs(x))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Distribution:
    """
    Finite discrete law of a nonnegative random variable.

    ``values`` are strictly ascending and nonnegative, ``masses`` are
    positive and sum to one. Use ``from_atoms`` to build one from raw,
    unsorted or duplicated atoms.
    """

    values: np.ndarray
    masses: np.ndarray
    label: str = ""

    kind: ClassVar[str] = "discrete"

    _cum: np.ndarray = field(init=False, repr=False)
    _upper: np.ndarray = field(init=False, repr=False)
    _tail_moment: np.ndarray = field(init=False, repr=False)
    _fingerprint: Tuple[bytes, bytes] = field(init=False, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        masses = np.array(self.masses, dtype=float).ravel()
        if values.size == 0 or values.size != masses.size:
            raise DomainError("a distribution needs the same positive number of values and masses")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("atom values must be finite and nonnegative")
        if np.any(masses <= 0):
            raise DomainError("atom masses must be positive")
        if np.any(np.diff(values) <= 0):
            raise DomainError("atom values must be strictly ascending")
        total = masses.sum()
        if abs(total - 1.0) > MASS_TOL:
            raise DomainError(f"masses sum to {total:.12g}, expected 1")
        masses = masses / total

        cum = np.concatenate(([0.0], np.cumsum(masses)))
        cum[-1] = 1.0
        upper = np.concatenate((np.cumsum(masses[::-1])[::-1], [0.0]))
        tail_moment = np.concatenate((np.cumsum((values * masses)[::-1])[::-1], [0.0]))
        fingerprint = (np.round(values, 12).tobytes(), np.round(masses, 12).tobytes())

        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "masses", _readonly(masses))
        object.__setattr__(self, "_cum", _readonly(cum))
        object.__setattr__(self, "_upper", _readonly(upper))
        object.__setattr__(self, "_tail_moment", _readonly(tail_moment))
        object.__setattr__(self, "_fingerprint", fingerprint)

    @classmethod
    def from_atoms(
        cls,
        values: Iterable[float],
        masses: Iterable[float],
        label: str = "",
    ) -> "Distribution":
        """
        Build a distribution from raw atoms.

        Atoms are sorted, zero-mass atoms dropped, atoms within ``ATOM_TOL``
        merged, and masses renormalized after a sum-to-one check.

        Args:
            values: Atom values (nonnegative)
            masses: Atom probabilities
            label: Optional display name

        Returns:
            Canonical Distribution
        """
        v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
        m = np.asarray(list(masses) if not isinstance(masses, np.ndarray) else masses, dtype=float)
        if v.shape != m.shape or v.ndim != 1 or v.size == 0:
            raise DomainError("values and masses must be nonempty sequences of equal length")
        if np.any(m < 0):
            raise DomainError("atom masses must be nonnegative")
        if np.any(v < -ATOM_TOL):
            raise DomainError("atom values must be nonnegative")
        v = np.maximum(v, 0.0)
        total = m.sum()
        if abs(total - 1.0) > MASS_TOL:
            raise DomainError(f"masses sum to {total:.12g}, expected 1")

        keep = m > 0
        v, m = v[keep], m[keep]
        order = np.argsort(v, kind="stable")
        v, m = v[order], m[order]
        starts = np.concatenate(([True], np.diff(v) > atom_tolerance(v[1:])))
        group = np.cumsum(starts) - 1
        merged_m = np.bincount(group, weights=m)
        return cls(v[starts], merged_m / merged_m.sum(), label)

    @classmethod
    def point_mass(cls, value: float, label: str = "") -> "Distribution":
        """Distribution concentrated at ``value``."""
        return cls(np.array([float(value)]), np.array([1.0]), label)

    # -- queries -----------------------------------------------------------

    @property
    def mean(self) -> float:
        return float(self._tail_moment[0])

    @property
    def support_size(self) -> int:
        return int(self.values.size)

    def atoms(self) -> List[Tuple[float, float]]:
        """Atoms as (value, mass) pairs."""
        return [(float(v), float(m)) for v, m in zip(self.values, self.masses)]

    def cdf(self, x):
        """Pr[X <= x], vectorized."""
        x_arr = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.values, x_arr + atom_tolerance(x_arr), side="right")
        out = self._cum[idx]
        return float(out) if out.ndim == 0 else out

    def quantile(self, u):
        """Generalized inverse inf{x : cdf(x) >= u}, vectorized."""
        u_arr = np.asarray(u, dtype=float)
        idx = np.searchsorted(self._cum[1:], u_arr - ATOM_TOL, side="left")
        out = self.values[np.minimum(idx, self.values.size - 1)]
        return float(out) if out.ndim == 0 else out

    def tail(self, t: float) -> Tuple[float, float, float]:
        """
        Statistics of the event X >= t.

        Returns:
            (Pr[X < t], Pr[X >= t], E[X; X >= t])
        """
        idx = int(np.searchsorted(self.values, t - atom_tolerance(t), side="left"))
        return float(self._cum[idx]), float(self._upper[idx]), float(self._tail_moment[idx])

    def mass_above(self, x: float) -> float:
        """Pr[X > x]."""
        idx = int(np.searchsorted(self.values, x + atom_tolerance(x), side="right"))
        return float(self._upper[idx])

    def mass_at_least(self, x) -> np.ndarray:
        """Pr[X >= x], vectorized."""
        x_arr = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.values, x_arr - atom_tolerance(x_arr), side="left")
        return self._upper[idx]

    def expected_max_with(self, c):
        """E[max(X, c)], vectorized in ``c``."""
        c_arr = np.asarray(c, dtype=float)
        idx = np.searchsorted(self.values, c_arr, side="right")
        out = c_arr * self._cum[idx] + self._tail_moment[idx]
        return float(out) if out.ndim == 0 else out

    def draw(self, u) -> np.ndarray:
        """Map uniforms on [0, 1) to values (inverse-cdf transform)."""
        idx = np.searchsorted(self._cum[1:], np.asarray(u, dtype=float), side="right")
        return self.values[np.minimum(idx, self.values.size - 1)]

    def draw_at_least(self, u, t) -> np.ndarray:
        """Map uniforms to draws of X conditioned on X >= t (t vectorized, tail nonempty)."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.values, t_arr - atom_tolerance(t_arr), side="left")
        below = self._cum[np.minimum(idx, self.values.size - 1)]
        return self.draw(below + np.asarray(u, dtype=float) * (1.0 - below))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Inverse-cdf sampling."""
        return self.draw(rng.random(size))

    # -- identity ----------------------------------------------------------

    def fingerprint(self) -> Tuple[bytes, bytes]:
        """Key identifying the distribution up to the atom tolerance."""
        return self._fingerprint

    def __eq__(self, other) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return self._fingerprint == other._fingerprint

    def __hash__(self) -> int:
        return hash(self._fingerprint)

    def __repr__(self) -> str:
        return (
            f"Distribution(atoms={self.support_size}, mean={self.mean:.6g}, label={self.label!r})"
        )


@dataclass(frozen=True, eq=False)
class ParametricDistribution:
    """Continuous nonnegative law backed by a frozen scipy.stats distribution."""

    law: object
    label: str = ""

    kind: ClassVar[str] = "parametric"

    @property
    def mean(self) -> float:
        return float(self.law.mean())

    def cdf(self, x):
        out = np.asarray(self.law.cdf(x), dtype=float)
        return float(out) if out.ndim == 0 else out

    def quantile(self, u):
        out = np.asarray(self.law.ppf(u), dtype=float)
        return float(out) if out.ndim == 0 else out

    def mass_above(self, x: float) -> float:
        return float(self.law.sf(x))

    def discretize(self, points: int = None) -> Distribution:
        """
        Discretize on the midpoint quantile grid (k - 1/2)/points.

        Args:
            points: Grid size (defaults to settings.quantile_grid_points)

        Returns:
            Discrete Distribution with equal masses (merged where atoms coincide)
        """
        points = points or settings.quantile_grid_points
        u = (np.arange(points) + 0.5) / points
        values = np.maximum(np.asarray(self.law.ppf(u), dtype=float), 0.0)
        return Distribution.from_atoms(values, np.full(points, 1.0 / points), self.label)


AnyDistribution = Union[Distribution, ParametricDistribution]


@dataclass(frozen=True)
class Instance:
    """
    Ordered collection of independent discrete variables.

    Parametric members are discretized on construction. Frequency classes
    group indices of identical distributions in order of first appearance.
    """

    variables: Tuple[Distribution, ...]
    label: str = ""
    frequency_classes: Tuple[Tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        variables = tuple(
            v.discretize() if isinstance(v, ParametricDistribution) else v for v in self.variables
        )
        if not variables:
            raise DomainError("an instance needs at least one variable")
        for i, v in enumerate(variables):
            if not isinstance(v, Distribution):
                raise DomainError(f"variable {i} is not a distribution")
        classes: Dict[Tuple[bytes, bytes], List[int]] = {}
        for i, v in enumerate(variables):
            classes.setdefault(v.fingerprint(), []).append(i)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "frequency_classes", tuple(tuple(c) for c in classes.values()))

    @classmethod
    def iid(cls, d: Distribution, n: int, label: str = "") -> "Instance":
        """``n`` independent copies of ``d``."""
        if n < 1:
            raise DomainError(f"n must be positive, got {n}")
        return cls(tuple([d] * n), label)

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def m(self) -> int:
        """Size of the smallest frequency class."""
        return min(len(c) for c in self.frequency_classes)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Distribution:
        return self.variables[i]

    def subset(self, indices: Sequence[int], label: str = "") -> "Instance":
        """Sub-instance with the given indices, in the given order."""
        return Instance(tuple(self.variables[i] for i in indices), label or self.label)

    def class_members(self) -> List[Tuple[Distribution, int]]:
        """(distribution, multiplicity) per frequency class."""
        return [(self.variables[c[0]], len(c)) for c in self.frequency_classes]

    def support_grid(self) -> np.ndarray:
        """
        Merged sorted support of all variables.

        Raises:
            CapacityError: If the grid exceeds settings.support_grid_cap
        """
        grid = np.unique(np.concatenate([d.values for d, _ in self.class_members()]))
        if grid.size > settings.support_grid_cap:
            raise CapacityError(
                f"merged support has {grid.size} points, limit is {settings.support_grid_cap}"
            )
        return grid
