"""Thermostat dynamics and the feedback boundary source.

    eps*phi' + phi = W(M(u)) + u_C,   phi(0) = phi0
    u_e = phi*u_A + u_B = F(W(M(u)))
    F(r) = (E1*r) u_A + E0,  E1(t) = exp(-t/eps)/eps
    E0   = [(E1*u_C) + eps*phi0*E1] u_A + u_B

Psi(v) = D_t F(W(M(u0 + 1*v))) is evaluated through the exact identities
D_t(E1*r) = (r - E1*r)/eps and D_t[(E1*u_C) + eps*phi0*E1] =
(u_C - E1*u_C)/eps - phi0*E1, so no convolution is ever differentiated
numerically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.integrate import trapezoid

from thermomem.core.config import JUNCTION_TOL
from thermomem.core.errors import FeedbackDataError, GridMismatchError
from thermomem.models.models import MemoryOperatorSpec
from thermomem.numerics.convolution import convolve_node, trapezoid_convolution
from thermomem.numerics.grid import (
    Boundary,
    SpaceField,
    SpaceTimeField,
    TimeGrid,
    TimeSeries,
    antiderivative,
    l2_spacetime,
)
from thermomem.numerics.hysteresis import make_state, w_apply
from thermomem.numerics.pde_ops import MeasurementWeights, measure_M, measure_M_rows


@dataclass(frozen=True, eq=False)
class ThermostatParams:
    """Thermostat constants and boundary data.

    Attributes:
        eps: Relaxation time (> 0)
        phi0: Initial control value
        u_C: Additive thermostat forcing
        u_A, u_B: Control gain and offset at both endpoints
        du_A, du_B: Time derivatives of u_A, u_B (analytic mode)
        derivative_mode: "analytic" uses du_A/du_B as given; "numeric" fills
            them with second-order finite differences of the samples
    """

    eps: float
    phi0: float
    u_C: TimeSeries
    u_A: Boundary[TimeSeries]
    u_B: Boundary[TimeSeries]
    du_A: Boundary[TimeSeries] | None = None
    du_B: Boundary[TimeSeries] | None = None
    derivative_mode: Literal["analytic", "numeric"] = "analytic"

    def __post_init__(self):
        if not self.eps > 0:
            raise FeedbackDataError(f"Thermostat relaxation time must be positive, got eps={self.eps}")
        for series in (*self.u_A, *self.u_B):
            if series.grid != self.u_C.grid:
                raise GridMismatchError("Thermostat series must share one time grid")
        if self.derivative_mode == "numeric":
            dt = self.grid.dt
            object.__setattr__(self, "du_A", Boundary(*(s.with_values(np.gradient(s.values, dt, edge_order=2)) for s in self.u_A)))
            object.__setattr__(self, "du_B", Boundary(*(s.with_values(np.gradient(s.values, dt, edge_order=2)) for s in self.u_B)))

    @property
    def grid(self) -> TimeGrid:
        return self.u_C.grid

    def rates(self) -> tuple[Boundary[TimeSeries], Boundary[TimeSeries]]:
        """(D_t u_A, D_t u_B); raises FeedbackDataError when not supplied."""
        if self.du_A is None or self.du_B is None:
            raise FeedbackDataError(
                "Analytic derivative mode needs D_t u_A and D_t u_B.\n"
                "  Supply closed-form u_A/u_B or set derivative_mode to 'numeric'."
            )
        return self.du_A, self.du_B

    def prefix(self, m: int) -> ThermostatParams:
        cut = lambda pair: None if pair is None else Boundary(*(s.prefix(m) for s in pair))  # noqa: E731
        return ThermostatParams(
            eps=self.eps,
            phi0=self.phi0,
            u_C=self.u_C.prefix(m),
            u_A=cut(self.u_A),
            u_B=cut(self.u_B),
            du_A=cut(self.du_A),
            du_B=cut(self.du_B),
            derivative_mode="analytic",
        )


def _pair(b: Boundary[TimeSeries]) -> np.ndarray:
    return np.stack([b.left.values, b.right.values], axis=1)


def _boundary_series(grid: TimeGrid, values: np.ndarray) -> Boundary[TimeSeries]:
    return Boundary(TimeSeries(grid, values[:, 0]), TimeSeries(grid, values[:, 1]))


# ============================================================================
# Thermostat kernels
# ============================================================================

def e1_series(p: ThermostatParams, tg: TimeGrid) -> TimeSeries:
    """E1(t_n) = exp(-t_n/eps)/eps."""
    return TimeSeries(tg, np.exp(-tg.nodes / p.eps) / p.eps)


def _base(p: ThermostatParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(E1, (E1*u_C) + eps*phi0*E1, its exact time derivative) as arrays."""
    e1 = e1_series(p, p.grid).values
    e1_uc = trapezoid_convolution(e1, p.u_C.values, p.grid.dt)
    base = e1_uc + p.eps * p.phi0 * e1
    dbase = (p.u_C.values - e1_uc) / p.eps - p.phi0 * e1
    return e1, base, dbase


def e0_series(p: ThermostatParams, tg: TimeGrid | None = None) -> Boundary[TimeSeries]:
    """E0 = [(E1*u_C) + eps*phi0*E1] u_A + u_B at both endpoints."""
    if tg is not None and tg != p.grid:
        raise GridMismatchError(f"Thermostat data live on {p.grid}, requested {tg}")
    _, base, _ = _base(p)
    return _boundary_series(p.grid, base[:, None] * _pair(p.u_A) + _pair(p.u_B))


def thermostat_ode_solve(p: ThermostatParams, w_series: TimeSeries) -> TimeSeries:
    """phi = phi0*exp(-t/eps) + E1*(w + u_C) (variation of constants)."""
    e1 = e1_series(p, p.grid).values
    forcing = w_series.values + p.u_C.values
    phi = p.phi0 * np.exp(-p.grid.nodes / p.eps) + trapezoid_convolution(e1, forcing, p.grid.dt)
    return w_series.with_values(phi)


def apply_F(p: ThermostatParams, r: TimeSeries) -> Boundary[TimeSeries]:
    """Feedback operator F(r) = (E1*r) u_A + E0."""
    e1, base, _ = _base(p)
    phi = trapezoid_convolution(e1, r.values, p.grid.dt) + base
    return _boundary_series(p.grid, phi[:, None] * _pair(p.u_A) + _pair(p.u_B))


# ============================================================================
# Sensor chain
# ============================================================================

def measurement_series(w: MeasurementWeights, u: SpaceTimeField) -> TimeSeries:
    """M(u(t_n)) for every node."""
    return TimeSeries(u.tgrid, measure_M_rows(w, u.values))


def boundary_control(
    p: ThermostatParams, spec: MemoryOperatorSpec, w: MeasurementWeights, u: SpaceTimeField
) -> Boundary[TimeSeries]:
    """u_e = F(W(M(u))) along a whole trajectory."""
    return apply_F(p, w_apply(spec, measurement_series(w, u)))


def rv_series(
    spec: MemoryOperatorSpec, w: MeasurementWeights, u0: SpaceField, v: SpaceTimeField
) -> TimeSeries:
    """r_v = W(M u0 + 1*M v)."""
    x = antiderivative(measurement_series(w, v))
    return w_apply(spec, x.with_values(measure_M(w, u0) + x.values))


def psi_from_r(p: ThermostatParams, r: TimeSeries) -> Boundary[TimeSeries]:
    """Psi given the hysteresis output r (product-rule expansion of D_t F(r))."""
    du_A, du_B = p.rates()
    e1, base, dbase = _base(p)
    er = trapezoid_convolution(e1, r.values, p.grid.dt)
    der = (r.values - er) / p.eps
    u_A, du_A_v, du_B_v = _pair(p.u_A), _pair(du_A), _pair(du_B)
    psi = (der + dbase)[:, None] * u_A + (er + base)[:, None] * du_A_v + du_B_v
    return _boundary_series(p.grid, psi)


def psi_eval(
    p: ThermostatParams,
    spec: MemoryOperatorSpec,
    w: MeasurementWeights,
    u0: SpaceField,
    v: SpaceTimeField,
) -> Boundary[TimeSeries]:
    """Psi(v) = D_t F(W(M(u0 + 1*v))) at both endpoints."""
    if v.tgrid != p.grid:
        p = p.prefix(v.tgrid.steps)
    return psi_from_r(p, rv_series(spec, w, u0, v))


def psi_restart(
    p: ThermostatParams,
    spec: MemoryOperatorSpec,
    w: MeasurementWeights,
    u0: SpaceField,
    prefix_v: SpaceTimeField,
    tail_v: SpaceTimeField,
) -> Boundary[TimeSeries]:
    """Psi of the history prefix_v followed by tail_v, returned on the tail window only.

    Raises:
        GridMismatchError: If tail_v(0) differs from prefix_v(tau) or steps mismatch
    """
    if prefix_v.tgrid.dt != tail_v.tgrid.dt or prefix_v.sgrid != tail_v.sgrid:
        raise GridMismatchError("Restart pieces must share dt and the space grid")
    gap = float(np.max(np.abs(tail_v.values[0] - prefix_v.values[-1])))
    if gap > JUNCTION_TOL:
        raise GridMismatchError(f"Restart junction mismatch: max |tail(0) - prefix(tau)| = {gap:.3e}")
    tau = prefix_v.tgrid.steps
    total = tau + tail_v.tgrid.steps
    joined = SpaceTimeField(
        TimeGrid(dt=prefix_v.tgrid.dt, steps=total),
        prefix_v.sgrid,
        np.vstack([prefix_v.values, tail_v.values[1:]]),
    )
    full = psi_eval(p.prefix(total), spec, w, u0, joined)
    return Boundary(*(TimeSeries(tail_v.tgrid, s.values[tau:]) for s in full))


def psi_lipschitz_ratio(
    p: ThermostatParams,
    spec: MemoryOperatorSpec,
    w: MeasurementWeights,
    u0: SpaceField,
    v1: SpaceTimeField,
    v2: SpaceTimeField,
    m: int,
) -> float:
    """||Psi(v1) - Psi(v2)||_{L2(Sigma_tau)} / ||v1 - v2||_{L2(Q_tau)} with tau = t_m."""
    a = psi_eval(p, spec, w, u0, v1.prefix(m))
    b = psi_eval(p, spec, w, u0, v2.prefix(m))
    sq = sum((x.values - y.values) ** 2 for x, y in zip(a, b))
    num = float(np.sqrt(trapezoid(sq, dx=v1.tgrid.dt)))
    den = l2_spacetime(v1.prefix(m).with_values(v1.values[: m + 1] - v2.values[: m + 1]))
    return num / den if den > 0 else 0.0


# ============================================================================
# Incremental evaluation for time-marching solvers
# ============================================================================

class FeedbackTracker:
    """Node-by-node W -> F pipeline with explicit commits.

    Inputs are sensor values x_n (forward: M(u^n); inverse: M u0 + (1*M v)_n).
    Trial blocks run the hysteresis on a copy of the committed state, so a
    fixed-point iteration may evaluate the same block many times.

    Args:
        p: Thermostat parameters on the solver grid
        spec: Memory operator
        x0: Sensor value at t=0
    """

    def __init__(self, p: ThermostatParams, spec: MemoryOperatorSpec, x0: float):
        self.p = p
        self.dt = p.grid.dt
        self._e1, self._base, self._dbase = _base(p)
        self._u_A = _pair(p.u_A)
        self._u_B = _pair(p.u_B)
        self._rates: tuple[np.ndarray, np.ndarray] | None = None
        size = p.grid.size
        self.x = np.zeros(size)
        self.r = np.zeros(size)
        self._state = make_state(spec, x0)
        self.x[0] = x0
        self.r[0] = self._state.update(x0)
        self.committed = 0

    def _trial_r(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        state = self._state.copy()
        r_block = np.array([state.update(float(x)) for x in xs])
        start = self.committed + 1
        scratch = self.r.copy()
        scratch[start : start + r_block.size] = r_block
        er = np.array(
            [convolve_node(self._e1, scratch, j, self.dt) for j in range(start, start + r_block.size)]
        )
        return r_block, er

    def control(self, xs: np.ndarray) -> np.ndarray:
        """Trial u_e for the nodes after the last commit; shape (len(xs), 2)."""
        _, er = self._trial_r(np.atleast_1d(xs))
        sl = slice(self.committed + 1, self.committed + 1 + er.size)
        phi = er + self._base[sl]
        return phi[:, None] * self._u_A[sl] + self._u_B[sl]

    def psi(self, xs: np.ndarray) -> np.ndarray:
        """Trial Psi for the nodes after the last commit; shape (len(xs), 2)."""
        if self._rates is None:
            du_A, du_B = self.p.rates()
            self._rates = (_pair(du_A), _pair(du_B))
        du_A, du_B = self._rates
        r_block, er = self._trial_r(np.atleast_1d(xs))
        sl = slice(self.committed + 1, self.committed + 1 + er.size)
        der = (r_block - er) / self.p.eps
        return (der + self._dbase[sl])[:, None] * self._u_A[sl] + (er + self._base[sl])[:, None] * du_A[sl] + du_B[sl]

    def commit(self, xs: np.ndarray) -> None:
        """Advance the committed history by the given sensor values."""
        for x in np.atleast_1d(xs):
            self.committed += 1
            self.x[self.committed] = x
            self.r[self.committed] = self._state.update(float(x))
