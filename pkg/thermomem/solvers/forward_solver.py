"""Forward simulation of the memory heat equation with thermostat feedback.

    D_t u = A u + h*Au + f                 in (0,T) x (0,1)
    B u + h*Bu + q = u_e - u               at x = 0, 1
    u_e = F(W(M(u))),  u(0) = u0

Implicit Euler in time; the memory term is lagged except for its trapezoid
endpoint h_0/2, which is folded into the system matrix. The boundary
feedback is resolved by a fixed-point iteration per step, evaluating the
hysteresis on a copy of the state committed at t_{n-1}.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from thermomem.core.errors import GridMismatchError, PicardDiverged, ThermoMemError
from thermomem.core.logger import solver_logger
from thermomem.core.metrics import ACTIVE_SOLVES, PICARD_ITERATIONS_HISTOGRAM, SOLVER_ERROR_COUNTER, SOLVES_COUNTER
from thermomem.models.models import MemoryOperatorSpec, SolverControls, SolverReport
from thermomem.numerics.feedback import FeedbackTracker, ThermostatParams
from thermomem.numerics.grid import Boundary, SpaceField, SpaceTimeField, TimeSeries
from thermomem.numerics.pde_ops import (
    Coefficients,
    MeasurementWeights,
    factorize,
    measure_M,
    measure_Phi_rows,
    step_matrix,
)


@dataclass(frozen=True, eq=False)
class ForwardProblem:
    """All data of the forward problem with a known kernel h."""

    coefficients: Coefficients
    thermostat: ThermostatParams
    memory: MemoryOperatorSpec
    weights: MeasurementWeights
    f: SpaceTimeField
    q: Boundary[TimeSeries]
    u0: SpaceField
    h: TimeSeries

    def __post_init__(self):
        tgrid, sgrid = self.f.tgrid, self.f.sgrid
        if self.h.grid != tgrid or self.thermostat.grid != tgrid or any(s.grid != tgrid for s in self.q):
            raise GridMismatchError("Forward problem time series must share the source's time grid")
        spatial = (self.coefficients.grid, self.weights.omega.grid, self.weights.omega1.grid, self.u0.grid)
        if any(g != sgrid for g in spatial):
            raise GridMismatchError("Forward problem fields must share the source's space grid")


@dataclass(frozen=True, eq=False)
class ForwardResult:
    u: SpaceTimeField
    report: SolverReport


def _relative_update(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.max(np.abs(new - old)) / max(float(np.max(np.abs(new))), 1.0))


def forward_solve(p: ForwardProblem, controls: SolverControls | None = None) -> ForwardResult:
    """March the forward problem from t=0 to T.

    Args:
        p: Problem data with known kernel
        controls: Fixed-point tolerance and iteration limit

    Returns:
        ForwardResult with the temperature field and a SolverReport

    Raises:
        PicardDiverged: Boundary feedback iteration did not converge
        LinearSolveError: Step matrix is singular
    """
    controls = controls or SolverControls()
    started = time.perf_counter()
    ACTIVE_SOLVES.inc()
    try:
        result = _march(p, controls)
    except ThermoMemError as e:
        SOLVER_ERROR_COUNTER.labels(error_type=type(e).__name__).inc()
        SOLVES_COUNTER.labels(solver="forward", outcome="error").inc()
        solver_logger.error(f"Forward solve failed: {e}", exc_info=True)
        raise
    finally:
        ACTIVE_SOLVES.dec()
    u, iterations = result
    report = SolverReport(
        solver="forward",
        steps=p.f.tgrid.steps,
        cells=p.f.sgrid.cells,
        iterations=iterations,
        max_iterations=max(iterations, default=0),
        wall_time=time.perf_counter() - started,
    )
    SOLVES_COUNTER.labels(solver="forward", outcome="ok").inc()
    solver_logger.info(
        f"Forward solve done: N={report.steps}, M={report.cells}, "
        f"max iterations {report.max_iterations}, {report.wall_time:.2f}s"
    )
    return ForwardResult(u=u, report=report)


def _march(p: ForwardProblem, controls: SolverControls) -> tuple[SpaceTimeField, list[int]]:
    c = p.coefficients
    tgrid, sgrid = p.f.tgrid, p.f.sgrid
    steps, dt = tgrid.steps, tgrid.dt
    h = p.h.values
    f = p.f.values
    q = np.stack([p.q.left.values, p.q.right.values], axis=1)

    kappa = 1.0 + 0.5 * dt * h[0]
    solve = factorize(step_matrix(c, dt, kappa))

    U = np.zeros((steps + 1, sgrid.size))
    AU = np.zeros_like(U)
    BU = np.zeros((steps + 1, 2))
    U[0] = p.u0.values
    AU[0] = c.A @ U[0]
    BU[0] = c.B @ U[0]

    tracker = FeedbackTracker(p.thermostat, p.memory, measure_M(p.weights, p.u0))
    iterations: list[int] = []
    report_every = max(steps // 10, 1)

    for n in range(1, steps + 1):
        lag_A = dt * (h[n - 1 : 0 : -1] @ AU[1:n] + 0.5 * h[n] * AU[0])
        lag_B = dt * (h[n - 1 : 0 : -1] @ BU[1:n] + 0.5 * h[n] * BU[0])
        rhs = U[n - 1] + dt * (lag_A + f[n])
        fixed_boundary = q[n] + lag_B

        u_it = U[n - 1]
        history: list[float] = []
        for k in range(1, controls.max_picard + 1):
            x = measure_M(p.weights, SpaceField(sgrid, u_it))
            u_e = tracker.control(np.array([x]))[0]
            rhs[0] = u_e[0] - fixed_boundary[0]
            rhs[-1] = u_e[1] - fixed_boundary[1]
            u_new = solve(rhs)
            history.append(_relative_update(u_new, u_it))
            u_it = u_new
            if history[-1] < controls.tol_picard:
                break
        else:
            raise PicardDiverged(step=n, residuals=history, solver="forward")

        U[n] = u_it
        AU[n] = c.A @ u_it
        BU[n] = c.B @ u_it
        tracker.commit(np.array([measure_M(p.weights, SpaceField(sgrid, u_it))]))
        iterations.append(k)
        PICARD_ITERATIONS_HISTOGRAM.labels(solver="forward").observe(k)
        if n % report_every == 0:
            solver_logger.debug(f"forward step {n}/{steps}: {k} iterations, update {history[-1]:.2e}")

    return SpaceTimeField(tgrid, sgrid, U), iterations


def emit_measurement(u: SpaceTimeField, w: MeasurementWeights) -> TimeSeries:
    """g_n = Phi(u^n)."""
    return TimeSeries(u.tgrid, measure_Phi_rows(w, u.values))
