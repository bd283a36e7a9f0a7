"""Uniform time/space grids, sampled fields and trapezoid quadrature.

All grids are immutable; sampled containers copy their input and mark the
array read-only, so they can be shared freely between solvers and threads.
Time nodes are t_n = n*dt (n = 0..N); space nodes are x_i = i/M on the unit
interval with boundary index set {0, M}.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from types import GenericAlias
from typing import Generic, NamedTuple, TypeVar

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from thermomem.core.errors import ConfigError, GridMismatchError

T = TypeVar("T")


if sys.version_info >= (3, 11):

    class Boundary(NamedTuple, Generic[T]):
        """Pair of values at x=0 and x=1 (reals or time series)."""

        left: T
        right: T

else:  # Generic NamedTuple requires Python 3.11

    class Boundary(NamedTuple):
        """Pair of values at x=0 and x=1 (reals or time series)."""

        left: T
        right: T

        __class_getitem__ = classmethod(GenericAlias)


def _frozen(values, shape: tuple[int, ...], what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != shape:
        raise GridMismatchError(f"{what}: expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


# ============================================================================
# Grids
# ============================================================================

@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with N steps of width dt."""

    dt: float
    steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"Time step must be positive, got dt={self.dt}")
        if self.steps < 0:
            raise ConfigError(f"Step count must be nonnegative, got {self.steps}")

    @classmethod
    def uniform(cls, t_end: float, steps: int) -> TimeGrid:
        """Build the grid from horizon and step count (N >= 2, T > 0)."""
        if not t_end > 0:
            raise ConfigError(f"Time horizon must be positive, got T={t_end}")
        if steps < 2:
            raise ConfigError(f"Need at least 2 time steps, got N={steps}")
        return cls(dt=t_end / steps, steps=steps)

    @property
    def t_end(self) -> float:
        return self.dt * self.steps

    @property
    def size(self) -> int:
        return self.steps + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def prefix(self, m: int) -> TimeGrid:
        """Grid of the first m steps (same dt, may be shorter than 2 steps)."""
        if not 0 <= m <= self.steps:
            raise IndexError(f"prefix length {m} outside 0..{self.steps}")
        return TimeGrid(dt=self.dt, steps=m)

    def refine(self, factor: int) -> TimeGrid:
        return TimeGrid(dt=self.dt / factor, steps=self.steps * factor)


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform grid on [0, 1] with M cells."""

    cells: int

    def __post_init__(self):
        if self.cells < 4:
            raise ConfigError(f"Need at least 4 space cells, got M={self.cells}")

    @property
    def dx(self) -> float:
        return 1.0 / self.cells

    @property
    def size(self) -> int:
        return self.cells + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.cells + 1)

    def refine(self, factor: int) -> SpaceGrid:
        return SpaceGrid(cells=self.cells * factor)


# ============================================================================
# Sampled containers
# ============================================================================

@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Scalar function sampled at the nodes of a TimeGrid."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, (self.grid.size,), "TimeSeries"))

    @classmethod
    def zeros(cls, grid: TimeGrid) -> TimeSeries:
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> TimeSeries:
        return cls(grid, np.full(grid.size, float(value)))

    def __len__(self) -> int:
        return self.grid.size

    def prefix(self, m: int) -> TimeSeries:
        return TimeSeries(self.grid.prefix(m), self.values[: m + 1])

    def with_values(self, values) -> TimeSeries:
        return TimeSeries(self.grid, values)


@dataclass(frozen=True, eq=False)
class SpaceField:
    """Function of x sampled at the nodes of a SpaceGrid."""

    grid: SpaceGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, (self.grid.size,), "SpaceField"))

    @classmethod
    def zeros(cls, grid: SpaceGrid) -> SpaceField:
        return cls(grid, np.zeros(grid.size))

    @property
    def trace(self) -> Boundary[float]:
        return Boundary(float(self.values[0]), float(self.values[-1]))

    def with_values(self, values) -> SpaceField:
        return SpaceField(self.grid, values)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Function of (t, x); row n is the snapshot at t_n."""

    tgrid: TimeGrid
    sgrid: SpaceGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = (self.tgrid.size, self.sgrid.size)
        object.__setattr__(self, "values", _frozen(self.values, shape, "SpaceTimeField"))

    @classmethod
    def zeros(cls, tgrid: TimeGrid, sgrid: SpaceGrid) -> SpaceTimeField:
        return cls(tgrid, sgrid, np.zeros((tgrid.size, sgrid.size)))

    @classmethod
    def separable(cls, time: TimeSeries, space: SpaceField) -> SpaceTimeField:
        """Outer product time(t)*space(x)."""
        return cls(time.grid, space.grid, np.outer(time.values, space.values))

    def row(self, n: int) -> SpaceField:
        return SpaceField(self.sgrid, self.values[n])

    def trace_left(self) -> TimeSeries:
        return TimeSeries(self.tgrid, self.values[:, 0])

    def trace_right(self) -> TimeSeries:
        return TimeSeries(self.tgrid, self.values[:, -1])

    def traces(self) -> Boundary[TimeSeries]:
        return Boundary(self.trace_left(), self.trace_right())

    def prefix(self, m: int) -> SpaceTimeField:
        return SpaceTimeField(self.tgrid.prefix(m), self.sgrid, self.values[: m + 1])

    def with_values(self, values) -> SpaceTimeField:
        return SpaceTimeField(self.tgrid, self.sgrid, values)


def check_same_grid(a, b, what: str = "operands") -> None:
    """Raise GridMismatchError unless both objects live on the same grid(s)."""
    ga = getattr(a, "grid", None) or (a.tgrid, a.sgrid)
    gb = getattr(b, "grid", None) or (b.tgrid, b.sgrid)
    if ga != gb:
        raise GridMismatchError(f"{what} live on different grids: {ga} vs {gb}")


# ============================================================================
# Norms and quadrature
# ============================================================================

def l2_space(f: SpaceField) -> float:
    """Discrete L2(0,1) norm with trapezoid weights."""
    return float(np.sqrt(trapezoid(f.values**2, dx=f.grid.dx)))


def l2_time(f: TimeSeries) -> float:
    """Discrete L2(0,T) norm with trapezoid weights."""
    return float(np.sqrt(trapezoid(f.values**2, dx=f.grid.dt)))


def l1_time(f: TimeSeries) -> float:
    """Discrete L1(0,T) norm with trapezoid weights."""
    return float(trapezoid(np.abs(f.values), dx=f.grid.dt))


def l2_spacetime(f: SpaceTimeField) -> float:
    """Discrete L2 norm over Q_T (trapezoid in both directions)."""
    inner = trapezoid(f.values**2, dx=f.sgrid.dx, axis=1)
    return float(np.sqrt(trapezoid(inner, dx=f.tgrid.dt)))


def inner_space(f: SpaceField, g: SpaceField) -> float:
    """Trapezoid L2(0,1) inner product."""
    return float(trapezoid(f.values * g.values, dx=f.grid.dx))


def antiderivative(v: TimeSeries) -> TimeSeries:
    """Cumulative trapezoid integral (1*v); output[0] = 0."""
    return v.with_values(cumulative_trapezoid(v.values, dx=v.grid.dt, initial=0.0))


def antiderivative_field(v: SpaceTimeField) -> SpaceTimeField:
    """Node-wise cumulative trapezoid integral in time."""
    return v.with_values(cumulative_trapezoid(v.values, dx=v.tgrid.dt, axis=0, initial=0.0))


# ============================================================================
# Restriction to coarser aligned grids
# ============================================================================

def _time_factor(fine: TimeGrid, coarse: TimeGrid) -> int:
    factor = fine.steps // coarse.steps if coarse.steps else 0
    if factor < 1 or fine.steps != factor * coarse.steps or not np.isclose(
        fine.dt * factor, coarse.dt, rtol=1e-12, atol=0.0
    ):
        raise GridMismatchError(f"{fine} is not an aligned refinement of {coarse}")
    return factor


def _space_factor(fine: SpaceGrid, coarse: SpaceGrid) -> int:
    factor = fine.cells // coarse.cells
    if factor < 1 or fine.cells != factor * coarse.cells:
        raise GridMismatchError(f"{fine} is not an aligned refinement of {coarse}")
    return factor


def restrict_time(series: TimeSeries, coarse: TimeGrid) -> TimeSeries:
    """Sample a fine-grid series at the nodes of an aligned coarse grid."""
    factor = _time_factor(series.grid, coarse)
    return TimeSeries(coarse, series.values[::factor])


def restrict_space(f: SpaceField, coarse: SpaceGrid) -> SpaceField:
    """Sample a fine-grid field at the nodes of an aligned coarse grid."""
    return SpaceField(coarse, f.values[:: _space_factor(f.grid, coarse)])


def restrict_field(f: SpaceTimeField, tgrid: TimeGrid, sgrid: SpaceGrid) -> SpaceTimeField:
    """Sample a space-time field on the aligned coarse grids."""
    tf = _time_factor(f.tgrid, tgrid)
    xf = _space_factor(f.sgrid, sgrid)
    return SpaceTimeField(tgrid, sgrid, f.values[::tf, ::xf])
