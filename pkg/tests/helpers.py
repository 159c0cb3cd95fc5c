"""
Instance builders shared by the tests.
"""

import numpy as np

from src.models.distribution import Distribution, Instance


def small_variable(eps: float, top: float = 1.0, atoms: int = 4) -> Distribution:
    """Variable that is 0 with probability 1 - eps and spread over (0, top] otherwise."""
    values = [0.0] + [top * (k + 1) / atoms for k in range(atoms)]
    masses = [1.0 - eps] + [eps / atoms] * atoms
    return Distribution.from_atoms(values, masses)


def random_instance(rng: np.random.Generator, n: int, support: int = 3, top: float = 10.0):
    """n independent variables with random atoms in [0, top) and Dirichlet masses."""
    variables = []
    for _ in range(n):
        values = rng.uniform(0.0, top, support)
        masses = rng.dirichlet(np.ones(support))
        variables.append(Distribution.from_atoms(values, masses))
    return Instance(tuple(variables))
