"""
Report emission.

Reports are canonical JSON: sorted keys, floats rounded to 12 significant
digits and non-finite floats written as strings, so two emissions of the
same report are byte-identical.
"""

import json
import logging
from pathlib import Path
from typing import Optional, Union

import pandas as pd
from pydantic import ValidationError

from src.core.errors import OutputError, ParseError
from src.core.utils import to_plain
from src.models.schemas import Report

logger = logging.getLogger(__name__)


def canonical_json(report: Report) -> str:
    """Canonical JSON text of ``report`` (ends with a newline)."""
    return json.dumps(to_plain(report.model_dump()), sort_keys=True, indent=2) + "\n"


def emit_report(report: Report, path: Optional[Union[str, Path]] = None) -> str:
    """
    Serialize ``report`` and write it to ``path`` if given.

    Returns:
        The canonical JSON text

    Raises:
        OutputError: If the file cannot be written
    """
    text = canonical_json(report)
    if path is not None:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
        except OSError as e:
            raise OutputError(f"cannot write report to {path}: {e}") from e
        logger.info(f"Report written to {path}")
    return text


def load_report(path: Union[str, Path]) -> Report:
    """Read a report written by ``emit_report``."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise OutputError(f"cannot read report {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"report {path} is not valid JSON: {e.msg}") from e
    try:
        return Report.model_validate(raw)
    except ValidationError as e:
        raise ParseError(f"report {path} does not match the schema: {e.errors()[0]['msg']}") from e


def write_curve_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write a tabulated curve as CSV with 12 significant digits."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.12g")
    except OSError as e:
        raise OutputError(f"cannot write curve to {path}: {e}") from e
    logger.info(f"Curve with {len(frame)} rows written to {path}")
    return path
