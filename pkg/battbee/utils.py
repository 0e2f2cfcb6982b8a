import hashlib
import logging
import os
from typing import Optional

import numpy as np

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def rmse(a, b) -> float:
    """root mean squared difference

    Parameters
    -----------
    a, b : array-like
        equal length

    Returns
    -------
    float
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def file_digest(path: str) -> str:
    """sha256 hex digest of a file's bytes"""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def log_level(name: Optional[str] = None) -> int:
    """logging level from a name, falling back to warning"""
    if name is None:
        name = os.environ.get("BATTBEE_LOG", "warning")
    return LOG_LEVELS.get(name.strip().lower(), logging.WARNING)


def configure_logging(name: Optional[str] = None) -> None:
    """configure the root logger from BATTBEE_LOG"""
    logging.basicConfig(
        level=log_level(name),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def is_strictly_increasing(values) -> bool:
    values = np.asarray(values, dtype=np.float64)
    return bool(np.all(np.diff(values) > 0))
