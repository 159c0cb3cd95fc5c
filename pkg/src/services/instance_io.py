"""
Instance document I/O.

Documents look like ``{"variables": [{"atoms": [[value, mass], ...],
"label": "..."}, ...]}``; a variable may instead be ``{"uniform": [a, b]}``
or ``{"exponential": [rate]}``, discretized on load.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

from pydantic import ValidationError
from scipy import stats

from src.core.errors import DomainError, OutputError, ParseError
from src.core.utils import to_plain
from src.models.distribution import Distribution, Instance, ParametricDistribution
from src.models.schemas import InstanceSpec, VariableSpec

logger = logging.getLogger(__name__)


def _read_source(source: Union[str, Path, Dict[str, Any]]) -> Dict[str, Any]:
    if isinstance(source, dict):
        return source
    if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
        path = Path(source)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ParseError(f"cannot read instance file {path}: {e}") from e
    else:
        text = str(source)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e


def _to_distribution(spec: VariableSpec, index: int) -> Distribution:
    label = spec.label or f"X{index}"
    try:
        if spec.atoms is not None:
            values = [v for v, _ in spec.atoms]
            masses = [m for _, m in spec.atoms]
            return Distribution.from_atoms(values, masses, label)
        if spec.uniform is not None:
            a, b = spec.uniform
            return ParametricDistribution(stats.uniform(loc=a, scale=b - a), label).discretize()
        (rate,) = spec.exponential
        return ParametricDistribution(stats.expon(scale=1.0 / rate), label).discretize()
    except DomainError as e:
        raise ParseError(f"variable {index}: {e}") from e


def parse_instance(source: Union[str, Path, Dict[str, Any]]) -> Instance:
    """
    Parse and validate an instance document.

    Args:
        source: Path to a JSON file, JSON text, or an already-decoded dict

    Returns:
        Instance with frequency classes detected by distribution equality

    Raises:
        ParseError: On malformed JSON or invalid variables, naming the location
    """
    raw = _read_source(source)
    try:
        spec = InstanceSpec.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise ParseError(f"invalid instance at {where or 'root'}: {first['msg']}") from e

    variables = tuple(_to_distribution(v, i) for i, v in enumerate(spec.variables))
    inst = Instance(variables, spec.label)
    logger.debug(f"Parsed instance with n = {inst.n}, {len(inst.frequency_classes)} classes")
    return inst


def instance_to_dict(inst: Instance) -> Dict[str, Any]:
    """Instance document with every variable written as atoms."""
    return {
        "label": inst.label,
        "variables": [
            {"atoms": [[v, m] for v, m in d.atoms()], "label": d.label} for d in inst.variables
        ],
    }


def write_instance(inst: Instance, path: Union[str, Path]) -> Path:
    """Write ``inst`` as an instance document (floats at 12 significant digits)."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(to_plain(instance_to_dict(inst)), sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as e:
        raise OutputError(f"cannot write instance to {path}: {e}") from e
    logger.info(f"Instance written to {path}")
    return path
