"""Utility functions for run artifacts.

Currently contains:
- save_series / save_field: CSV writers with full round-trip precision
- load_samples: two-column CSV reader for sampled inputs
- inject_noise: seeded uniform perturbation of a measurement
- timed: wall-clock helper used by bench mode
"""

import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

import numpy as np

from thermomem.core.config import CSV_FLOAT_FORMAT
from thermomem.core.errors import ConfigError
from thermomem.numerics.grid import SpaceTimeField, TimeSeries


def save_series(series: TimeSeries, path: Path) -> Path:
    """Write a time series as ``t,value`` rows.

    Args:
        series: Series to write
        path: Destination file

    Returns:
        The path written
    """
    table = np.column_stack([series.grid.nodes, series.values])
    np.savetxt(path, table, delimiter=",", header="t,value", comments="", fmt=CSV_FLOAT_FORMAT)
    return path


def save_field(field: SpaceTimeField, path: Path) -> Path:
    """Write a space-time field, one row per time node: ``t,x_0,...,x_M``."""
    header = "t," + ",".join(f"x_{i}" for i in range(field.sgrid.size))
    table = np.column_stack([field.tgrid.nodes, field.values])
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt=CSV_FLOAT_FORMAT)
    return path


def load_samples(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column CSV (abscissa, value) with a one-line header.

    Raises:
        ConfigError: If the file is missing, has the wrong shape or unsorted abscissae
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Sample file not found: {path}")
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as e:
        raise ConfigError(f"Could not parse sample file {path}: {e}") from e
    if table.shape[1] != 2 or table.shape[0] < 2:
        raise ConfigError(
            f"Sample file {path} must have two columns and at least two rows, got shape {table.shape}"
        )
    if np.any(np.diff(table[:, 0]) <= 0):
        raise ConfigError(f"Sample file {path}: abscissae must be strictly increasing")
    return table[:, 0], table[:, 1]


def inject_noise(g: TimeSeries, amplitude: float, seed: int | None = None, offset: float = 0.0) -> TimeSeries:
    """Add a constant offset and uniform(-amplitude, amplitude) noise per node.

    Deterministic for a fixed seed; amplitude 0 and offset 0 return g unchanged.

    Example:
        noisy = inject_noise(g, 1e-4, seed=7)
    """
    if amplitude < 0:
        raise ValueError(f"noise amplitude must be >= 0, got {amplitude}")
    values = g.values + offset
    if amplitude > 0:
        rng = np.random.default_rng(seed)
        values = values + rng.uniform(-amplitude, amplitude, size=values.shape)
    return g.with_values(values)


@contextmanager
def timed() -> Iterator[dict]:
    """Context manager filling ``["seconds"]`` with the elapsed wall time."""
    out = {"seconds": 0.0}
    started = time.perf_counter()
    try:
        yield out
    finally:
        out["seconds"] = time.perf_counter() - started
