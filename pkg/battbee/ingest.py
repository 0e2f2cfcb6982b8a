"""
Data I/O
"""

import datetime
import logging
import os
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from battbee import consts
from battbee.errors import TelemetryError
from battbee.identify import DataSet
from battbee.simulate import CurrentProfile


def _read_csv(path: str) -> pd.DataFrame:
    if not os.path.isfile(path):
        raise TelemetryError(f"no such file: {path}")
    try:
        return pd.read_csv(path, comment="#", skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as err:
        raise TelemetryError(f"{path}: {err}") from err


def validate_table(df: pd.DataFrame, required, optional=(), source: str = "") -> pd.DataFrame:
    """Check required columns, numeric finite cells and strictly increasing time.

    Parameters
    ----------
    df : pandas.DataFrame
    required : sequence of str
        first entry is the time column
    optional : sequence of str
    source : str
        name used in error messages

    Returns
    -------
    pandas.DataFrame
        the required and present optional columns, as float64
    """
    prefix = f"{source}: " if source else ""
    for column in required:
        if column not in df.columns:
            raise TelemetryError(f"{prefix}missing column {column!r}", column)
    columns = list(required) + [c for c in optional if c in df.columns]
    out = pd.DataFrame(index=df.index)
    for column in columns:
        values = pd.to_numeric(df[column], errors="coerce").astype(np.float64)
        bad = ~np.isfinite(values.values)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise TelemetryError(f"{prefix}non-numeric or non-finite {column!r} in data row {row + 1}", column)
        out[column] = values
    if len(out) < 2:
        raise TelemetryError(f"{prefix}need at least two rows")
    t = out[required[0]].values
    if np.any(np.diff(t) <= 0):
        raise TelemetryError(f"{prefix}{required[0]} must be strictly increasing", required[0])
    return out.reset_index(drop=True)


def read_telemetry(path: str) -> pd.DataFrame:
    """Read a telemetry CSV (t_s, current_A, voltage_V, temp_surf_K[, temp_amb_K])"""
    df = validate_table(
        _read_csv(path), consts.TELEMETRY_COLUMNS, consts.TELEMETRY_OPTIONAL, os.path.basename(path)
    )
    logging.info("read %d telemetry rows from %s", len(df), path)
    return df


def read_current_csv(path: str) -> CurrentProfile:
    """current profile CSV with columns t_s, current_A"""
    df = validate_table(_read_csv(path), ("t_s", "current_A"), source=os.path.basename(path))
    return CurrentProfile(df["t_s"].values, df["current_A"].values)


def read_dataset(
    path: str,
    T_amb: Optional[float] = None,
    capacity: Optional[float] = None,
    initial_soc: float = 1.0,
    fault_window: Optional[Tuple[float, float]] = None,
) -> DataSet:
    """Telemetry CSV as an identification data set.

    Without `T_amb` the mean of the temp_amb_K column is used, else the
    first surface temperature.
    """
    df = read_telemetry(path)
    if T_amb is None:
        if "temp_amb_K" in df.columns:
            T_amb = float(df["temp_amb_K"].mean())
        else:
            T_amb = float(df["temp_surf_K"].iloc[0])
    return DataSet(
        df,
        T_amb=T_amb,
        capacity=capacity,
        initial_soc=initial_soc,
        fault_window=fault_window,
        name=os.path.basename(path),
    )


def write_csv(df: pd.DataFrame, path: str, stamp: bool = True) -> None:
    """Write a table with 9 significant digits.

    The first line is a `# generated:` comment carrying the timestamp; the
    remaining bytes depend only on the data.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as f:
        if stamp:
            now = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
            f.write(f"# generated: {now}\n")
        df.to_csv(f, index=False, float_format=consts.CSV_FLOAT_FORMAT, lineterminator="\n")
    logging.info("wrote %d rows to %s", len(df), path)


def read_table(path: str) -> pd.DataFrame:
    """read back a table written by `write_csv`"""
    return _read_csv(path)
