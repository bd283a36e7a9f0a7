"""Translation of a validated RunConfig into solver problem objects.

Every builder samples the configured functions on the grids it is given,
so the same config can be instantiated on a fine (data generation) and a
coarse (inversion) grid pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from thermomem.core.logger import numerics_logger
from thermomem.models.models import (
    BoundaryFunctions,
    CoefficientsConfig,
    FluxConfig,
    FunctionSpec,
    GridConfig,
    RunConfig,
    SourceConfig,
    ThermostatConfig,
    WeightsConfig,
)
from thermomem.numerics.feedback import ThermostatParams
from thermomem.numerics.grid import Boundary, SpaceField, SpaceGrid, SpaceTimeField, TimeGrid, TimeSeries
from thermomem.numerics.hysteresis import make_state
from thermomem.numerics.pde_ops import Coefficients, MeasurementWeights, measure_M
from thermomem.presets.functions import eval_space, eval_time
from thermomem.solvers.forward_solver import ForwardProblem
from thermomem.solvers.inverse_solver import InverseProblem


@dataclass(frozen=True)
class FluxResolution:
    """q(t) = q0 + (q1/rate)*(1 - exp(-rate*t)) per side, so q(0) = q0 and q'(0) = q1."""

    q0: Boundary[float]
    q1: Boundary[float]
    rate: float

    def as_dict(self) -> dict:
        return {"q0": list(self.q0), "q1": list(self.q1), "rate": self.rate}


# ============================================================================
# Grids and spatial data
# ============================================================================

def build_grids(cfg: GridConfig, refinement: int = 1) -> tuple[TimeGrid, SpaceGrid]:
    return TimeGrid.uniform(cfg.t_end, cfg.steps * refinement), SpaceGrid(cfg.cells * refinement)


def _space_field(spec: FunctionSpec, sgrid: SpaceGrid, base_dir: Path | None) -> SpaceField:
    return SpaceField(sgrid, eval_space(spec, sgrid.nodes, 0, base_dir))


def _time_series(spec: FunctionSpec, tgrid: TimeGrid, base_dir: Path | None, order: int = 0) -> TimeSeries | None:
    values = eval_time(spec, tgrid.nodes, order, base_dir)
    return None if values is None else TimeSeries(tgrid, values)


def _boundary_series(
    spec: BoundaryFunctions, tgrid: TimeGrid, base_dir: Path | None, order: int = 0
) -> Boundary[TimeSeries] | None:
    left = _time_series(spec.left, tgrid, base_dir, order)
    right = _time_series(spec.right, tgrid, base_dir, order)
    return None if left is None or right is None else Boundary(left, right)


def build_coefficients(cfg: CoefficientsConfig, sgrid: SpaceGrid, base_dir: Path | None = None) -> Coefficients:
    return Coefficients(
        a=_space_field(cfg.a, sgrid, base_dir),
        b1_left=cfg.b1_left,
        b1_right=cfg.b1_right,
        b0_left=cfg.b0_left,
        b0_right=cfg.b0_right,
    )


def build_weights(cfg: WeightsConfig, sgrid: SpaceGrid, base_dir: Path | None = None) -> MeasurementWeights:
    return MeasurementWeights(
        omega=_space_field(cfg.omega, sgrid, base_dir),
        omega1=_space_field(cfg.omega1, sgrid, base_dir),
        omega2_left=cfg.omega2_left,
        omega2_right=cfg.omega2_right,
    )


def build_u0(spec: FunctionSpec, sgrid: SpaceGrid, base_dir: Path | None = None) -> SpaceField:
    return _space_field(spec, sgrid, base_dir)


# ============================================================================
# Time-dependent data
# ============================================================================

def build_thermostat(cfg: ThermostatConfig, tgrid: TimeGrid, base_dir: Path | None = None) -> ThermostatParams:
    """Sample the thermostat data; falls back to numeric rates for sampled u_A/u_B."""
    mode = cfg.derivative_mode
    du_A = du_B = None
    if mode == "analytic":
        du_A = _boundary_series(cfg.u_A, tgrid, base_dir, order=1)
        du_B = _boundary_series(cfg.u_B, tgrid, base_dir, order=1)
        if du_A is None or du_B is None:
            numerics_logger.warning("u_A/u_B given as samples; thermostat rates fall back to finite differences")
            mode, du_A, du_B = "numeric", None, None
    return ThermostatParams(
        eps=cfg.eps,
        phi0=cfg.phi0,
        u_C=_time_series(cfg.u_C, tgrid, base_dir),
        u_A=_boundary_series(cfg.u_A, tgrid, base_dir),
        u_B=_boundary_series(cfg.u_B, tgrid, base_dir),
        du_A=du_A,
        du_B=du_B,
        derivative_mode=mode,
    )


def build_source(
    cfg: SourceConfig, tgrid: TimeGrid, sgrid: SpaceGrid, base_dir: Path | None = None
) -> tuple[SpaceTimeField, SpaceTimeField | None]:
    """f = sum time_k(t)*space_k(x) and its exact time derivative (None for sampled terms)."""
    f = np.zeros((tgrid.size, sgrid.size))
    df: np.ndarray | None = np.zeros_like(f)
    for term in cfg.terms:
        space = eval_space(term.space, sgrid.nodes, 0, base_dir)
        f += np.outer(eval_time(term.time, tgrid.nodes, 0, base_dir), space)
        rate = eval_time(term.time, tgrid.nodes, 1, base_dir)
        if rate is None or df is None:
            df = None
        else:
            df += np.outer(rate, space)
    return (
        SpaceTimeField(tgrid, sgrid, f),
        None if df is None else SpaceTimeField(tgrid, sgrid, df),
    )


def build_kernel(spec: FunctionSpec, tgrid: TimeGrid, base_dir: Path | None = None) -> TimeSeries:
    return _time_series(spec, tgrid, base_dir)


def resolve_flux(
    cfg: RunConfig, tgrid: TimeGrid, sgrid: SpaceGrid, base_dir: Path | None = None
) -> FluxResolution | None:
    """Derive the compatible flux constants on the given grids (None for explicit flux).

    q0 enforces B u0 + q(0) = phi0 u_A(0) + u_B(0) - u0 on the boundary and
    q1 the time-differentiated condition at t=0:
        B v0 + h(0) B u0 + q'(0) = u_e'(0) - v0,   v0 = A u0 + f(0)
    with u_e'(0) = phi'(0) u_A(0) + phi0 u_A'(0) + u_B'(0) and
    eps*phi'(0) = W(M u0)(0) + u_C(0) - phi0. Discrete A and B are used,
    so the conditions hold exactly on these grids.
    """
    if cfg.flux.mode == "explicit":
        return None
    c = build_coefficients(cfg.coefficients, sgrid, base_dir)
    w = build_weights(cfg.weights, sgrid, base_dir)
    th = build_thermostat(cfg.thermostat, tgrid, base_dir)
    u0 = build_u0(cfg.u0, sgrid, base_dir)
    f, _ = build_source(cfg.source, tgrid, sgrid, base_dir)
    h0 = float(eval_time(cfg.kernel, np.zeros(1), 0, base_dir)[0])

    bu0 = c.B @ u0.values
    v0 = c.A @ u0.values + f.values[0]
    bv0 = c.B @ v0
    x0 = measure_M(w, u0)
    r0 = make_state(cfg.memory, x0).update(x0)
    dphi0 = (r0 + th.u_C.values[0] - th.phi0) / th.eps
    du_A, du_B = th.rates()

    q0, q1 = [], []
    for i, node in ((0, 0), (1, -1)):
        u_A0, u_B0 = th.u_A[i].values[0], th.u_B[i].values[0]
        q0.append(float(th.phi0 * u_A0 + u_B0 - u0.values[node] - bu0[i]))
        due0 = dphi0 * u_A0 + th.phi0 * du_A[i].values[0] + du_B[i].values[0]
        q1.append(float(due0 - v0[node] - bv0[i] - h0 * bu0[i]))
    resolution = FluxResolution(Boundary(*q0), Boundary(*q1), cfg.flux.relaxation_rate)
    numerics_logger.info(f"Compatible flux resolved: {resolution.as_dict()}")
    return resolution


def build_flux(
    cfg: FluxConfig, tgrid: TimeGrid, resolution: FluxResolution | None = None, base_dir: Path | None = None
) -> tuple[Boundary[TimeSeries], Boundary[TimeSeries] | None]:
    """(q, D_t q); D_t q is None when q is sampled."""
    if cfg.mode == "explicit":
        return _boundary_series(cfg.values, tgrid, base_dir), _boundary_series(cfg.values, tgrid, base_dir, order=1)
    if resolution is None:
        raise ValueError("compatible flux needs a FluxResolution; call resolve_flux first")
    t, rate = tgrid.nodes, resolution.rate
    decay = np.exp(-rate * t)
    q = Boundary(*(TimeSeries(tgrid, q0 + q1 / rate * (1.0 - decay)) for q0, q1 in zip(resolution.q0, resolution.q1)))
    dq = Boundary(*(TimeSeries(tgrid, q1 * decay) for q1 in resolution.q1))
    return q, dq


# ============================================================================
# Problems
# ============================================================================

def build_forward_problem(
    cfg: RunConfig,
    tgrid: TimeGrid,
    sgrid: SpaceGrid,
    resolution: FluxResolution | None = None,
    base_dir: Path | None = None,
) -> ForwardProblem:
    f, _ = build_source(cfg.source, tgrid, sgrid, base_dir)
    q, _ = build_flux(cfg.flux, tgrid, resolution, base_dir)
    return ForwardProblem(
        coefficients=build_coefficients(cfg.coefficients, sgrid, base_dir),
        thermostat=build_thermostat(cfg.thermostat, tgrid, base_dir),
        memory=cfg.memory,
        weights=build_weights(cfg.weights, sgrid, base_dir),
        f=f,
        q=q,
        u0=build_u0(cfg.u0, sgrid, base_dir),
        h=build_kernel(cfg.kernel, tgrid, base_dir),
    )


def measurement_from_config(
    cfg: RunConfig, tgrid: TimeGrid, base_dir: Path | None = None
) -> tuple[TimeSeries, TimeSeries | None, TimeSeries | None]:
    """(g, g', g'') from the measurement section; derivatives None unless closed form or given."""
    m = cfg.measurement
    g = _time_series(m.g, tgrid, base_dir)
    dg = _time_series(m.dg, tgrid, base_dir) if m.dg is not None else _time_series(m.g, tgrid, base_dir, 1)
    ddg = _time_series(m.ddg, tgrid, base_dir) if m.ddg is not None else _time_series(m.g, tgrid, base_dir, 2)
    return g, dg, ddg


def build_inverse_problem(
    cfg: RunConfig,
    tgrid: TimeGrid,
    sgrid: SpaceGrid,
    g: TimeSeries,
    dg: TimeSeries | None = None,
    ddg: TimeSeries | None = None,
    resolution: FluxResolution | None = None,
    base_dir: Path | None = None,
) -> InverseProblem:
    """Inverse problem on (tgrid, sgrid); controls.derivatives='numeric' discards analytic rates."""
    f, df = build_source(cfg.source, tgrid, sgrid, base_dir)
    q, dq = build_flux(cfg.flux, tgrid, resolution, base_dir)
    if cfg.controls.derivatives == "numeric":
        df = dq = dg = ddg = None
    return InverseProblem(
        coefficients=build_coefficients(cfg.coefficients, sgrid, base_dir),
        thermostat=build_thermostat(cfg.thermostat, tgrid, base_dir),
        memory=cfg.memory,
        weights=build_weights(cfg.weights, sgrid, base_dir),
        f=f,
        q=q,
        u0=build_u0(cfg.u0, sgrid, base_dir),
        g=g,
        df=df,
        dq=dq,
        dg=dg,
        ddg=ddg,
        smoothing_window=cfg.controls.smoothing_window,
    )
