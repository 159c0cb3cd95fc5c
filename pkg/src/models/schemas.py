"""
Pydantic schemas for the instance document and experiment reports.
"""

from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from src import __version__


class VariableSpec(BaseModel):
    """One variable of an instance document: atoms or a parametric law."""

    atoms: Optional[List[Tuple[float, float]]] = None
    uniform: Optional[Tuple[float, float]] = None
    exponential: Optional[Tuple[float]] = None
    label: str = ""

    @model_validator(mode="after")
    def exactly_one_kind(self) -> "VariableSpec":
        kinds = [k for k in ("atoms", "uniform", "exponential") if getattr(self, k) is not None]
        if len(kinds) != 1:
            raise ValueError(
                f"exactly one of atoms/uniform/exponential is required, got {kinds or 'none'}"
            )
        return self

    @field_validator("atoms")
    @classmethod
    def atoms_nonnegative(cls, atoms):
        if atoms is None:
            return atoms
        if not atoms:
            raise ValueError("atoms must not be empty")
        for value, mass in atoms:
            if value < 0:
                raise ValueError(f"negative atom value {value}")
            if mass < 0:
                raise ValueError(f"negative atom mass {mass}")
        return atoms

    @field_validator("uniform")
    @classmethod
    def uniform_interval(cls, bounds):
        if bounds is not None and not 0 <= bounds[0] < bounds[1]:
            raise ValueError(f"uniform needs 0 <= a < b, got {list(bounds)}")
        return bounds

    @field_validator("exponential")
    @classmethod
    def exponential_rate(cls, rate):
        if rate is not None and rate[0] <= 0:
            raise ValueError(f"exponential rate must be positive, got {rate[0]}")
        return rate


class InstanceSpec(BaseModel):
    """Instance document: ``{"variables": [...], "label": "..."}``."""

    variables: List[VariableSpec] = Field(min_length=1)
    label: str = ""


class Report(BaseModel):
    """Result of one CLI command, emitted as canonical JSON."""

    command: str
    inputs: Dict[str, Any] = Field(default_factory=dict)
    results: Dict[str, Any] = Field(default_factory=dict)
    flags: List[str] = Field(default_factory=list)
    version: str = __version__
