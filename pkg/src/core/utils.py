"""
Utility functions shared across the toolkit.
"""

import logging
import math
import zlib
from typing import Any

import numpy as np
from rich.console import Console
from rich.logging import RichHandler


def configure_logging(level: str = "INFO") -> None:
    """
    Install a rich handler (on stderr) on the root logger.

    Calling it again only updates the level.

    Args:
        level: Logging level name (e.g. "INFO", "DEBUG")
    """
    root = logging.getLogger()
    root.setLevel(level.upper())
    if not any(isinstance(h, RichHandler) for h in root.handlers):
        handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        root.addHandler(handler)


def make_rng(seed: int, stream: str, block: int = 0) -> np.random.Generator:
    """
    Build the counter-based generator for one (seed, stream, block) key.

    Args:
        seed: Nonnegative experiment seed
        stream: Name of the random stream (one per consumer)
        block: Index of the trial block or repetition

    Returns:
        numpy Generator backed by Philox
    """
    key = np.random.SeedSequence([int(seed), zlib.crc32(stream.encode("utf-8")), int(block)])
    return np.random.Generator(np.random.Philox(key))


def round_sig(value: float, digits: int = 12) -> float:
    """Round a float to a fixed number of significant digits."""
    if value == 0 or not math.isfinite(value):
        return float(value)
    return float(f"{value:.{digits}g}")


def to_plain(obj: Any, digits: int = 12) -> Any:
    """
    Convert numpy scalars/arrays, tuples and floats into JSON-ready values.

    Floats are rounded to ``digits`` significant digits; non-finite floats
    become strings so the output stays valid JSON.
    """
    if isinstance(obj, dict):
        return {str(k): to_plain(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v, digits) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            return str(value)
        return round_sig(value, digits)
    return obj
