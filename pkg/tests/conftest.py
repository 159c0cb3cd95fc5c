"""
Pytest configuration and fixtures.
"""

import json

import pytest

from src.analysis.kertz import default_solution
from src.models.distribution import Distribution, Instance


@pytest.fixture
def coin():
    """Fair 0/1 variable."""
    return Distribution.from_atoms([0.0, 1.0], [0.5, 0.5], "coin")


@pytest.fixture
def instance_a(coin):
    """X1 = fair 0/1 coin, X2 = point mass at 0.6 (MAX 0.8, OPT 0.7, OPT_free 0.8)."""
    return Instance((coin, Distribution.point_mass(0.6, "const")), "A")


@pytest.fixture
def instance_a_doc():
    return {
        "label": "A",
        "variables": [
            {"atoms": [[0, 0.5], [1, 0.5]], "label": "coin"},
            {"atoms": [[0.6, 1.0]], "label": "const"},
        ],
    }


@pytest.fixture
def instance_a_path(tmp_path, instance_a_doc):
    """Instance A written as an instance document."""
    path = tmp_path / "a.json"
    path.write_text(json.dumps(instance_a_doc))
    return path


@pytest.fixture(scope="session")
def solution():
    """Kertz solution at the configured tolerance (computed once per session)."""
    return default_solution()
