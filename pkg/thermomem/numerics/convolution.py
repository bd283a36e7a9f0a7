"""Causal time convolution, splitting algebra and the second-kind node solve.

The trapezoid product rule used throughout,

    (h*f)_n = dt * (h_0 f_n / 2 + sum_{k=1}^{n-1} h_k f_{n-k} + h_n f_0 / 2),

is symmetric in (h, f), vanishes at n = 0 and splits node-exactly at any
aligned index, which the restart machinery of the inverse march relies on.
"""

from __future__ import annotations

from typing import Literal

import numpy as np

from thermomem.core.config import VOLTERRA_EPS
from thermomem.core.errors import GridMismatchError, VolterraSingular
from thermomem.numerics.grid import TimeGrid, TimeSeries, check_same_grid


def trapezoid_convolution(h: np.ndarray, f: np.ndarray, dt: float) -> np.ndarray:
    """Array form of convolve(); f may carry trailing axes (e.g. space)."""
    h = np.asarray(h, dtype=float)
    f = np.asarray(f, dtype=float)
    n = h.shape[0]
    if f.ndim == 1:
        full = np.convolve(h, f)[:n]
        out = dt * (full - 0.5 * (h[0] * f + h * f[0]))
    else:
        flat = f.reshape(n, -1)
        full = np.stack([np.convolve(h, col)[:n] for col in flat.T], axis=1)
        out = dt * (full - 0.5 * (h[0] * flat + np.outer(h, flat[0])))
        out = out.reshape(f.shape)
    out[0] = 0.0
    return out


def convolve(h: TimeSeries, f: TimeSeries) -> TimeSeries:
    """Trapezoid convolution (h*f)(t_n) on a common grid.

    Args:
        h: Kernel series
        f: Convolved series on the same grid

    Returns:
        TimeSeries with output[0] = 0

    Raises:
        GridMismatchError: If h and f live on different grids
    """
    check_same_grid(h, f, "convolution operands")
    return f.with_values(trapezoid_convolution(h.values, f.values, f.grid.dt))


def convolve_partial(h: TimeSeries, f: TimeSeries, n: int) -> float:
    """Single node of convolve(h, f) in O(n)."""
    check_same_grid(h, f, "convolution operands")
    if not 0 <= n <= f.grid.steps:
        raise IndexError(f"node {n} outside 0..{f.grid.steps}")
    return convolve_node(h.values, f.values, n, f.grid.dt)


def convolve_node(h: np.ndarray, f: np.ndarray, n: int, dt: float) -> float:
    """Array form of convolve_partial."""
    if n == 0:
        return 0.0
    total = np.dot(h[: n + 1], f[n::-1])
    return float(dt * (total - 0.5 * (h[0] * f[n] + h[n] * f[0])))


def _trapezoid_band(h: np.ndarray, z: np.ndarray, total: int, lo: int, hi: int, dt: float) -> float:
    """dt-trapezoid of h_k z_{total-k} over k in [lo, hi]."""
    if hi <= lo:
        return 0.0
    k = np.arange(lo, hi + 1)
    terms = h[k] * z[total - k]
    return float(dt * (terms.sum() - 0.5 * (terms[0] + terms[-1])))


def split_convolution(
    h: TimeSeries,
    z: TimeSeries,
    m: int,
    identity: Literal["III", "II"] = "III",
) -> tuple[TimeSeries, TimeSeries]:
    """Split h*z at t_m into a head on [0, t_m] and a tail on [0, T - t_m].

    The head is the convolution of the restricted inputs. The tail is
    assembled from restricted pieces only, never from the full product:

    - identity "III" (requires T - t_m <= t_m): zero-extended head term at
      t_m + t_n, plus the shifted-kernel term h(.+t_m)*z|[0,t_m] and the
      restricted-kernel term h|[0,t_m]*z(.+t_m).
    - identity "II": the zero-extended z head convolved with the full kernel
      at t_m + t_n, plus h|[0,T-t_m]*z(.+t_m).

    Args:
        h: Kernel series
        z: Convolved series on the same grid
        m: Split node, 0 < m < N
        identity: Which decomposition builds the tail

    Returns:
        (head, tail) TimeSeries on grids of m and N - m steps

    Raises:
        GridMismatchError: Misaligned split index or grids
    """
    check_same_grid(h, z, "split operands")
    steps = h.grid.steps
    if not 0 < m < steps:
        raise GridMismatchError(f"split index {m} must lie strictly inside 0..{steps}")
    tail_steps = steps - m
    if identity == "III" and tail_steps > m:
        raise GridMismatchError(
            f"identity III needs T - t_m <= t_m; got {tail_steps} tail steps for split {m}"
        )
    dt = h.grid.dt
    hv, zv = h.values, z.values

    head = convolve(h.prefix(m), z.prefix(m))

    tail = np.empty(tail_steps + 1)
    for n in range(tail_steps + 1):
        total = m + n
        # kernel near 0, z beyond t_m
        restricted = _trapezoid_band(hv, zv, total, 0, n, dt)
        if identity == "III":
            zero_extended = _trapezoid_band(hv, zv, total, n, m, dt)
            shifted_kernel = _trapezoid_band(hv, zv, total, m, total, dt)
            tail[n] = zero_extended + shifted_kernel + restricted
        else:
            tail[n] = _trapezoid_band(hv, zv, total, n, total, dt) + restricted
    return head, TimeSeries(TimeGrid(dt=dt, steps=tail_steps), tail)


def volterra2_solve_node(a: float, rhs: float, weight: float, node: int | None = None) -> float:
    """Solve h_n = rhs - weight*a*h_n for h_n.

    Args:
        a: Diagonal coefficient, (psi1, v)(0) in the kernel equation
        rhs: Right-hand side with all lagged terms already subtracted
        weight: Quadrature weight of the diagonal (dt/2 for the trapezoid rule)
        node: Node index, reported on failure

    Returns:
        float: rhs / (1 + weight*a)

    Raises:
        VolterraSingular: If |1 + weight*a| <= VOLTERRA_EPS
    """
    denominator = 1.0 + weight * a
    if abs(denominator) <= VOLTERRA_EPS:
        raise VolterraSingular(node, denominator)
    return rhs / denominator
