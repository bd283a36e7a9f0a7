"""Identification of the memory kernel from the scalar measurement g = Phi(u).

Differentiating the problem in time (v = D_t u) turns the kernel equation
into a second-kind Volterra equation:

    D_t v = A v + h*Av + v* - [s + h*s] z0
    B v   = -v + Psi(v) - h*Bv + [s + h*s] z1 + v*_G
    h     = h* - s - h*s,        s(t) = (psi1, v(t))

with chi = 1/Phi(A u0), h* = chi (g'' - Phi(D_t f)), z0 = A u0, z1 = B u0,
psi1 = chi A omega, v* = D_t f + h* z0, v*_G = -D_t q - h* z1 and
v(0) = A u0 + f(0). The march commits one window of nodes at a time; inside
a window the hysteresis feedback is iterated to a fixed point while the
kernel coupling, which is linear in v, is solved exactly per node.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import savgol_filter

from thermomem.core.config import COMPAT_TOL_FACTOR, MONOTONE_SKIP, TOL_CHI, VOLTERRA_EPS
from thermomem.core.errors import (
    ChiSingular,
    CompatibilityError,
    GridMismatchError,
    LinearSolveError,
    PicardDiverged,
    SeriesTooShort,
    ThermoMemError,
)
from thermomem.core.logger import solver_logger
from thermomem.core.metrics import ACTIVE_SOLVES, PICARD_ITERATIONS_HISTOGRAM, SOLVER_ERROR_COUNTER, SOLVES_COUNTER
from thermomem.core.retry_handler import retry_on_divergence
from thermomem.models.models import (
    CompatibilityResidual,
    MemoryOperatorSpec,
    ResidualReport,
    SolverControls,
    SolverReport,
    WindowReport,
)
from thermomem.numerics.convolution import trapezoid_convolution, volterra2_solve_node
from thermomem.numerics.feedback import FeedbackTracker, ThermostatParams, boundary_control
from thermomem.numerics.grid import (
    Boundary,
    SpaceField,
    SpaceTimeField,
    TimeSeries,
    antiderivative_field,
    l2_spacetime,
    l2_time,
)
from thermomem.numerics.pde_ops import (
    Coefficients,
    MeasurementWeights,
    apply_A_rows,
    apply_B_rows,
    assemble_psi1,
    factorize,
    measure_M,
    measure_M_rows,
    measure_Phi,
    measure_Phi_rows,
    step_matrix,
)

# ============================================================================
# Problem data
# ============================================================================

@dataclass(frozen=True, eq=False)
class InverseProblem:
    """Problem data without the kernel, plus the measurement g.

    Time derivatives df, dq, dg, ddg are used when supplied; otherwise df
    and dq come from second-order finite differences and dg, ddg from
    smooth_diff with the given smoothing window.
    """

    coefficients: Coefficients
    thermostat: ThermostatParams
    memory: MemoryOperatorSpec
    weights: MeasurementWeights
    f: SpaceTimeField
    q: Boundary[TimeSeries]
    u0: SpaceField
    g: TimeSeries
    df: SpaceTimeField | None = None
    dq: Boundary[TimeSeries] | None = None
    dg: TimeSeries | None = None
    ddg: TimeSeries | None = None
    smoothing_window: int = 1

    def __post_init__(self):
        tgrid, sgrid = self.f.tgrid, self.f.sgrid
        series = [self.g, *self.q, *(s for s in (self.dg, self.ddg) if s is not None)]
        if self.dq is not None:
            series += list(self.dq)
        if self.thermostat.grid != tgrid or any(s.grid != tgrid for s in series):
            raise GridMismatchError("Inverse problem time series must share the source's time grid")
        if self.df is not None and (self.df.tgrid != tgrid or self.df.sgrid != sgrid):
            raise GridMismatchError("D_t f must live on the grids of f")
        spatial = (self.coefficients.grid, self.weights.omega.grid, self.weights.omega1.grid, self.u0.grid)
        if any(g != sgrid for g in spatial):
            raise GridMismatchError("Inverse problem fields must share the source's space grid")

    @property
    def source_rate(self) -> SpaceTimeField:
        if self.df is not None:
            return self.df
        return self.f.with_values(np.gradient(self.f.values, self.f.tgrid.dt, axis=0, edge_order=2))

    @property
    def flux_rate(self) -> Boundary[TimeSeries]:
        if self.dq is not None:
            return self.dq
        dt = self.f.tgrid.dt
        return Boundary(*(s.with_values(np.gradient(s.values, dt, edge_order=2)) for s in self.q))

    @property
    def measurement_rate(self) -> TimeSeries:
        return self.dg if self.dg is not None else smooth_diff(self.g, 1, self.smoothing_window)

    @property
    def measurement_curvature(self) -> TimeSeries:
        return self.ddg if self.ddg is not None else smooth_diff(self.g, 2, self.smoothing_window)


@dataclass(frozen=True, eq=False)
class InverseCoefficients:
    """Derived data of the time-differentiated system."""

    chi: float
    h_star: TimeSeries
    z0: SpaceField
    z1: Boundary[float]
    psi1: SpaceField
    v_star: SpaceTimeField
    v_star_gamma: Boundary[TimeSeries]
    v0: SpaceField

    def prefix(self, m: int) -> InverseCoefficients:
        return replace(
            self,
            h_star=self.h_star.prefix(m),
            v_star=self.v_star.prefix(m),
            v_star_gamma=Boundary(*(s.prefix(m) for s in self.v_star_gamma)),
        )


@dataclass(frozen=True, eq=False)
class InverseResult:
    v: SpaceTimeField
    h: TimeSeries
    report: SolverReport


# ============================================================================
# Data preparation
# ============================================================================

def smooth_diff(g: TimeSeries, order: int, smoothing: int = 1) -> TimeSeries:
    """Derivative of a sampled series by moving least-squares quadratic fits.

    Args:
        g: Sampled series
        order: 1 or 2
        smoothing: Half-width of the fit window; 1 gives central differences

    Returns:
        TimeSeries of the derivative (edges from the fit of the first/last window)

    Raises:
        SeriesTooShort: If N < 2*smoothing
        ValueError: If order is not 1 or 2
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if smoothing < 1:
        raise ValueError(f"smoothing window must be >= 1, got {smoothing}")
    if g.grid.steps < 2 * smoothing:
        raise SeriesTooShort(
            f"smooth_diff needs N >= 2*window: N={g.grid.steps}, window={smoothing}"
        )
    values = savgol_filter(
        g.values, 2 * smoothing + 1, polyorder=2, deriv=order, delta=g.grid.dt, mode="interp"
    )
    return g.with_values(values)


def default_tol_compat(p: InverseProblem) -> float:
    """10*(dt + dx^2)*max(1, |u0|_inf)."""
    scale = max(1.0, float(np.max(np.abs(p.u0.values))))
    return COMPAT_TOL_FACTOR * (p.f.tgrid.dt + p.f.sgrid.dx**2) * scale


def check_compatibility(
    p: InverseProblem, tol: float | None = None, tol_chi: float = TOL_CHI
) -> list[CompatibilityResidual]:
    """Residuals of the compatibility conditions and the identifiability condition.

    Conditions:
        initial_measurement: |Phi(u0) - g(0)|
        initial_rate: |Phi(v0) - g'(0)| with v0 = A u0 + f(0)
        boundary_left/right: |B u0 + q(0) - phi0 u_A(0) - u_B(0) + u0|
        chi_nondegenerate: |Phi(A u0)|, passes when above tol_chi
    """
    tol = default_tol_compat(p) if tol is None else tol
    c, w, th = p.coefficients, p.weights, p.thermostat
    z0 = c.A @ p.u0.values
    v0 = p.u0.with_values(z0 + p.f.values[0])
    bu0 = c.B @ p.u0.values

    residuals = {
        "initial_measurement": abs(measure_Phi(w, p.u0) - p.g.values[0]),
        "initial_rate": abs(measure_Phi(w, v0) - p.measurement_rate.values[0]),
    }
    for i, side in enumerate(("left", "right")):
        control0 = th.phi0 * th.u_A[i].values[0] + th.u_B[i].values[0]
        trace = p.u0.values[0 if i == 0 else -1]
        residuals[f"boundary_{side}"] = abs(bu0[i] + p.q[i].values[0] - control0 + trace)

    report = [
        CompatibilityResidual(condition=name, residual=float(value), tol=tol, passed=bool(value <= tol))
        for name, value in residuals.items()
    ]
    phi_az0 = abs(measure_Phi(w, p.u0.with_values(z0)))
    report.append(
        CompatibilityResidual(
            condition="chi_nondegenerate", residual=float(phi_az0), tol=tol_chi, passed=bool(phi_az0 > tol_chi)
        )
    )
    return report


def assemble_coefficients(p: InverseProblem, tol_chi: float = TOL_CHI) -> InverseCoefficients:
    """Build chi, h*, z0, z1, psi1, v*, v*_G and v0.

    Raises:
        ChiSingular: If |Phi(A u0)| <= tol_chi
        MeasurementWeightsError: If omega does not vanish to second order at the boundary
    """
    c, w = p.coefficients, p.weights
    z0 = p.u0.with_values(c.A @ p.u0.values)
    phi_az0 = measure_Phi(w, z0)
    if abs(phi_az0) <= tol_chi:
        raise ChiSingular(phi_az0, tol_chi)
    chi = 1.0 / phi_az0

    df = p.source_rate
    h_star = p.g.with_values(chi * (p.measurement_curvature.values - measure_Phi_rows(w, df.values)))
    bu0 = c.B @ p.u0.values
    z1 = Boundary(float(bu0[0]), float(bu0[1]))
    v_star = df.with_values(df.values + np.outer(h_star.values, z0.values))
    dq = p.flux_rate
    v_star_gamma = Boundary(
        *(dq[i].with_values(-dq[i].values - h_star.values * z1[i]) for i in range(2))
    )
    return InverseCoefficients(
        chi=chi,
        h_star=h_star,
        z0=z0,
        z1=z1,
        psi1=assemble_psi1(c, w, chi),
        v_star=v_star,
        v_star_gamma=v_star_gamma,
        v0=p.u0.with_values(z0.values + p.f.values[0]),
    )


# ============================================================================
# Time march
# ============================================================================

def _relative_update(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.max(np.abs(new - old)) / max(float(np.max(np.abs(new))), 1.0))


def _is_monotone(residuals: list[float]) -> bool:
    tail = residuals[MONOTONE_SKIP:]
    return all(b <= a for a, b in zip(tail, tail[1:]))


@retry_on_divergence()
def inverse_march(p: InverseProblem, coeffs: InverseCoefficients, controls: SolverControls) -> InverseResult:
    """Reconstruct (v, h) node by node or window by window.

    Args:
        p: Problem data (operators, thermostat, memory operator, u0)
        coeffs: Output of assemble_coefficients (possibly truncated)
        controls: Tolerances, window length and growth policy

    Returns:
        InverseResult with v, h and the solver report

    Raises:
        VolterraSingular: Kernel diagonal vanishes
        PicardDiverged: Window fixed point failed after all retries
        LinearSolveError: Step system singular
    """
    started = time.perf_counter()
    ACTIVE_SOLVES.inc()
    try:
        march = _InverseMarch(p, coeffs, controls)
        windows = march.run()
    except ThermoMemError as e:
        SOLVER_ERROR_COUNTER.labels(error_type=type(e).__name__).inc()
        SOLVES_COUNTER.labels(solver="inverse", outcome="error").inc()
        raise
    finally:
        ACTIVE_SOLVES.dec()

    tgrid, sgrid = coeffs.h_star.grid, p.u0.grid
    warnings = []
    irregular = [wr.start for wr in windows if not wr.monotone]
    if irregular:
        warnings.append(f"non-monotone fixed-point residuals in {len(irregular)} window(s), first at node {irregular[0]}")
    report = SolverReport(
        solver="inverse",
        steps=tgrid.steps,
        cells=sgrid.cells,
        iterations=[wr.iterations for wr in windows],
        max_iterations=max((wr.iterations for wr in windows), default=0),
        windows=windows,
        window_steps=controls.window_steps,
        wall_time=time.perf_counter() - started,
        warnings=warnings,
    )
    SOLVES_COUNTER.labels(solver="inverse", outcome="ok").inc()
    solver_logger.info(
        f"Inverse march done: N={tgrid.steps}, M={sgrid.cells}, {len(windows)} windows, "
        f"max iterations {report.max_iterations}, {report.wall_time:.2f}s"
    )
    return InverseResult(
        v=SpaceTimeField(tgrid, sgrid, march.V),
        h=TimeSeries(tgrid, march.H),
        report=report,
    )


class _InverseMarch:
    """Mutable state of one march; arrays beyond the committed node are scratch."""

    def __init__(self, p: InverseProblem, k: InverseCoefficients, controls: SolverControls):
        self.p, self.k, self.controls = p, k, controls
        c = p.coefficients
        tgrid, sgrid = k.h_star.grid, p.u0.grid
        self.steps, self.dt = tgrid.steps, tgrid.dt
        size = sgrid.size
        dt = self.dt

        weights = np.full(size, sgrid.dx)
        weights[[0, -1]] *= 0.5
        self.quad = k.psi1.values * weights  # s(v) = quad @ v

        self.V = np.zeros((self.steps + 1, size))
        self.AV = np.zeros_like(self.V)
        self.BV = np.zeros((self.steps + 1, 2))
        self.S = np.zeros(self.steps + 1)
        self.H = np.zeros(self.steps + 1)
        self.MV = np.zeros(self.steps + 1)
        self.X = np.zeros(self.steps + 1)

        self.V[0] = k.v0.values
        self.AV[0] = c.A @ self.V[0]
        self.BV[0] = c.B @ self.V[0]
        self.S[0] = self.quad @ self.V[0]
        self.H[0] = k.h_star.values[0] - self.S[0]
        self.MV[0] = measure_M_rows(p.weights, self.V[0])
        self.X[0] = measure_M(p.weights, p.u0)

        self.s0, self.h0 = self.S[0], self.H[0]
        kappa = 1.0 + 0.5 * dt * self.h0
        # 1 / (1 + dt*s0/2), guarded as a Volterra diagonal
        self.inv_diag = volterra2_solve_node(self.s0, 1.0, 0.5 * dt, node=1)
        self.beta = kappa * self.inv_diag
        self.solve = factorize(step_matrix(c, dt, kappa))

        # h_n = alpha_n - beta*s_n is linear in v^n: fold it into the step
        # system as a rank-one correction solved by Sherman-Morrison.
        z0, z1 = k.z0.values, k.z1
        rank_one = dt * self.beta * (0.5 * dt * self.AV[0] + z0)
        rank_one[0] = -self.beta * (z1.left + 0.5 * dt * self.BV[0, 0])
        rank_one[-1] = -self.beta * (z1.right + 0.5 * dt * self.BV[0, 1])
        self.correction = self.solve(rank_one)
        self.sm_denominator = 1.0 + self.quad @ self.correction
        if abs(self.sm_denominator) <= VOLTERRA_EPS:
            raise LinearSolveError(
                f"Kernel-coupled step system is singular (1 + q.z = {self.sm_denominator:.3e})"
            )

        self.h_star = k.h_star.values
        self.v_star = k.v_star.values
        self.v_star_gamma = np.stack([s.values for s in k.v_star_gamma], axis=1)
        self.tracker = FeedbackTracker(p.thermostat.prefix(self.steps), p.memory, self.X[0])

    def _advance(self, n: int, psi_n: np.ndarray) -> None:
        """Solve node n with a fixed boundary source Psi_n; writes the arrays at n."""
        c, k, dt = self.p.coefficients, self.k, self.dt
        H, S, AV, BV = self.H, self.S, self.AV, self.BV
        lag_s = dt * (H[1:n] @ S[n - 1 : 0 : -1])
        alpha = (self.h_star[n] - lag_s) * self.inv_diag
        lag_A = dt * (H[n - 1 : 0 : -1] @ AV[1:n])
        lag_B = dt * (H[n - 1 : 0 : -1] @ BV[1:n])
        fixed_bracket = self.h_star[n] - alpha

        rhs = self.V[n - 1] + dt * (lag_A + 0.5 * dt * alpha * AV[0] + self.v_star[n] - fixed_bracket * k.z0.values)
        for i, row in ((0, 0), (1, -1)):
            rhs[row] = (
                psi_n[i] + fixed_bracket * k.z1[i] + self.v_star_gamma[n, i] - lag_B[i] - 0.5 * dt * alpha * BV[0, i]
            )
        y = self.solve(rhs)
        v = y - self.correction * (self.quad @ y) / self.sm_denominator

        s = self.quad @ v
        rhs_h = self.h_star[n] - s - dt * 0.5 * self.h0 * s - lag_s
        self.H[n] = volterra2_solve_node(self.s0, rhs_h, 0.5 * dt, node=n)
        self.S[n] = s
        self.V[n] = v
        self.AV[n] = c.A @ v
        self.BV[n] = c.B @ v
        self.MV[n] = measure_M_rows(self.p.weights, v)

    def _sensor(self, n0: int, length: int) -> np.ndarray:
        """x_j = M u0 + (1*Mv)_j for the block nodes, trapezoid in time."""
        mv = self.MV[n0 : n0 + length + 1]
        return self.X[n0] + np.cumsum(0.5 * self.dt * (mv[:-1] + mv[1:]))

    def _window(self, n0: int, length: int) -> WindowReport:
        controls = self.controls
        block = slice(n0 + 1, n0 + length + 1)
        self.V[block] = self.V[n0]
        self.H[block] = self.H[n0]
        self.MV[block] = self.MV[n0]
        prev_v, prev_h = self.V[block].copy(), self.H[block].copy()
        psi_block = self.tracker.psi(self._sensor(n0, length))

        history: list[float] = []
        for _ in range(controls.max_picard):
            for j in range(length):
                self._advance(n0 + 1 + j, psi_block[j])
            new_v, new_h = self.V[block].copy(), self.H[block].copy()
            history.append(max(_relative_update(new_v, prev_v), _relative_update(new_h, prev_h)))
            if history[-1] < controls.tol_picard:
                break
            prev_v, prev_h = new_v, new_h
            psi_block = self.tracker.psi(self._sensor(n0, length))
        else:
            raise PicardDiverged(step=n0 + 1, residuals=history, solver="inverse")

        x = self._sensor(n0, length)
        self.X[block] = x
        self.tracker.commit(x)
        PICARD_ITERATIONS_HISTOGRAM.labels(solver="inverse").observe(len(history))
        return WindowReport(
            start=n0 + 1, steps=length, iterations=len(history), residuals=history, monotone=_is_monotone(history)
        )

    def run(self) -> list[WindowReport]:
        controls = self.controls
        windows: list[WindowReport] = []
        n0, length = 0, controls.window_steps
        report_every = max(self.steps // 10, 1)
        next_report = report_every
        while n0 < self.steps:
            current = min(length, self.steps - n0)
            windows.append(self._window(n0, current))
            n0 += current
            if controls.window_growth == "doubling":
                length = min(2 * length, controls.max_window_steps)
            if n0 >= next_report:
                solver_logger.debug(
                    f"inverse node {n0}/{self.steps}: window {current}, "
                    f"{windows[-1].iterations} iterations, h={self.H[n0]:.6g}"
                )
                next_report += report_every
        return windows


# ============================================================================
# Post-processing
# ============================================================================

def reconstruct_u(u0: SpaceField, v: SpaceTimeField) -> SpaceTimeField:
    """u = u0 + 1*v (trapezoid in time)."""
    integral = antiderivative_field(v)
    return integral.with_values(u0.values + integral.values)


def kernel_equation_residual(h: TimeSeries, v: SpaceTimeField, coeffs: InverseCoefficients) -> float:
    """max_n |h_n + s_n + (h*s)_n - h*_n| with s_n = (psi1, v^n)."""
    dx = v.sgrid.dx
    weights = np.full(v.sgrid.size, dx)
    weights[[0, -1]] *= 0.5
    s = v.values @ (coeffs.psi1.values * weights)
    hs = trapezoid_convolution(h.values, s, h.grid.dt)
    return float(np.max(np.abs(h.values + s + hs - coeffs.h_star.values)))


def residual_problem2(
    u: SpaceTimeField,
    h: TimeSeries,
    p: InverseProblem,
    v: SpaceTimeField | None = None,
) -> ResidualReport:
    """Residuals of the original (undifferentiated) problem for a candidate (u, h).

    (a) interior equation in L2(Q_T), backward difference in time, interior nodes
    (b) boundary condition with u_e from the feedback pipeline, max over nodes
    (c) measurement, max over nodes
    (d) derivative identity D_t(h*Au) = h A u0 + h*Av, L2(Q_T)
    """
    c = p.coefficients
    dt, dx = u.tgrid.dt, u.sgrid.dx
    U = u.values
    AU = apply_A_rows(c, U)
    BU = apply_B_rows(c, U)
    hAU = trapezoid_convolution(h.values, AU, dt)
    hBU = trapezoid_convolution(h.values, BU, dt)

    interior = (U[1:] - U[:-1]) / dt - AU[1:] - hAU[1:] - p.f.values[1:]
    interior_norm = float(np.sqrt(dt * dx * np.sum(interior[:, 1:-1] ** 2)))

    u_e = boundary_control(p.thermostat, p.memory, p.weights, u)
    q = np.stack([s.values for s in p.q], axis=1)
    ue = np.stack([s.values for s in u_e], axis=1)
    boundary = BU + hBU + q - ue + U[:, [0, -1]]
    boundary_norm = float(np.max(np.abs(boundary)))

    measurement = float(np.max(np.abs(measure_Phi_rows(p.weights, U) - p.g.values)))

    V = v.values if v is not None else np.gradient(U, dt, axis=0, edge_order=2)
    AV = apply_A_rows(c, V)
    lhs = np.gradient(hAU, dt, axis=0, edge_order=2)
    identity = lhs - np.outer(h.values, AU[0]) - trapezoid_convolution(h.values, AV, dt)
    identity_norm = l2_spacetime(u.with_values(identity))

    return ResidualReport(
        interior=interior_norm,
        boundary=boundary_norm,
        measurement=measurement,
        derivative_identity=identity_norm,
    )


def relative_l2(estimate: TimeSeries, truth: TimeSeries) -> float:
    """||estimate - truth|| / ||truth|| in L2(0,T) (absolute when truth vanishes)."""
    err = l2_time(estimate.with_values(estimate.values - truth.values))
    ref = l2_time(truth)
    return err / ref if ref > 0 else err


def relative_l2_field(estimate: SpaceTimeField, truth: SpaceTimeField) -> float:
    err = l2_spacetime(estimate.with_values(estimate.values - truth.values))
    ref = l2_spacetime(truth)
    return err / ref if ref > 0 else err


# ============================================================================
# Orchestration
# ============================================================================

@dataclass(frozen=True, eq=False)
class InverseSolution:
    u: SpaceTimeField
    v: SpaceTimeField
    h: TimeSeries
    coefficients: InverseCoefficients
    compatibility: list[CompatibilityResidual]
    residuals: ResidualReport
    report: SolverReport


def solve_inverse(p: InverseProblem, controls: SolverControls | None = None) -> InverseSolution:
    """Compatibility check, coefficient assembly, march, reconstruction and residuals.

    Raises:
        CompatibilityError: In strict mode when a compatibility residual exceeds tol_compat
        ChiSingular: When Phi(A u0) vanishes
    """
    controls = controls or SolverControls()
    compatibility = check_compatibility(p, controls.tol_compat, controls.tol_chi)
    failed = {r.condition: r.residual for r in compatibility if not r.passed and r.condition != "chi_nondegenerate"}
    warnings = []
    if failed:
        tol = compatibility[0].tol
        if controls.strict:
            raise CompatibilityError(failed, tol)
        for name, value in failed.items():
            message = f"compatibility condition {name} violated: residual {value:.3e} > {tol:.3e}"
            solver_logger.warning(message)
            warnings.append(message)

    coeffs = assemble_coefficients(p, controls.tol_chi)
    solver_logger.info(f"chi = {coeffs.chi:.6g}, h*(0) = {coeffs.h_star.values[0]:.6g}")
    result = inverse_march(p, coeffs, controls)
    result.report.warnings.extend(warnings)
    u = reconstruct_u(p.u0, result.v)
    residuals = residual_problem2(u, result.h, p, result.v)
    return InverseSolution(
        u=u,
        v=result.v,
        h=result.h,
        coefficients=coeffs,
        compatibility=compatibility,
        residuals=residuals,
        report=result.report,
    )
