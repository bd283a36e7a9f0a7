"""Pydantic models for run configuration and run reports.

These models define the schema for:
- Function specifications (kind + parameters, or CSV samples)
- Problem data: coefficients, sensors, thermostat, memory operator, kernel
- Solver controls, noise and mode-specific options
- The JSON report written after every run
"""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from thermomem.core.config import BENCH_STEPS, MAX_PICARD, MAX_WINDOW_RETRIES, TOL_CHI, TOL_PICARD

TimeKind = Literal["const", "poly", "sin", "exp", "csv"]
SpaceKind = Literal["const", "poly", "sin", "cos", "bump", "csv"]
Mode = Literal["forward", "invert", "roundtrip", "verify", "bench"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ============================================================================
# Function specifications
# ============================================================================

class FunctionTerm(_Strict):
    """One term of a sampled function.

    Attributes:
        kind: Closed-form family or "csv" for sampled data
        params: Family parameters (see presets.factory for each kind)
        path: CSV file for kind "csv" (columns t,value or x,value)

    Example:
        {"kind": "exp", "params": [1.0, 1.0]}   # e^{-t}
    """
    kind: str
    params: list[float] = Field(default_factory=list)
    path: str | None = None

    @model_validator(mode="after")
    def csv_needs_path(self):
        if self.kind == "csv" and not self.path:
            raise ValueError("kind 'csv' requires a path")
        return self


def _as_term(item: Any) -> Any:
    """A bare number becomes a const term; anything else is left to validation."""
    if isinstance(item, bool):
        raise ValueError("boolean is not a function specification")
    if isinstance(item, (int, float)):
        return {"kind": "const", "params": [float(item)]}
    return item


class FunctionSpec(_Strict):
    """Sum of function terms.

    Accepts a bare number (constant), a single term, a list of terms or
    {"terms": [...]}.
    """
    terms: list[FunctionTerm] = Field(default_factory=list)

    @model_validator(mode="before")
    @classmethod
    def normalize(cls, value: Any):
        if isinstance(value, list):
            return {"terms": [_as_term(item) for item in value]}
        if isinstance(value, dict) and isinstance(value.get("terms"), list):
            return {**value, "terms": [_as_term(item) for item in value["terms"]]}
        if isinstance(value, dict) and "kind" in value:
            return {"terms": [value]}
        if isinstance(value, (bool, int, float)):
            return {"terms": [_as_term(value)]}
        return value

    def kinds(self) -> set[str]:
        return {t.kind for t in self.terms}


def _const(value: float) -> FunctionSpec:
    return FunctionSpec.model_validate(value)


class SeparableTerm(_Strict):
    """time(t) * space(x) contribution to the source f."""
    time: FunctionSpec
    space: FunctionSpec


class SourceConfig(_Strict):
    """Heat source f as a sum of separable terms (empty = zero source)."""
    terms: list[SeparableTerm] = Field(default_factory=list)


class BoundaryFunctions(_Strict):
    """Time functions at x=0 and x=1; a single spec applies to both sides."""
    left: FunctionSpec = Field(default_factory=lambda: _const(0.0))
    right: FunctionSpec = Field(default_factory=lambda: _const(0.0))

    @model_validator(mode="before")
    @classmethod
    def broadcast(cls, value: Any):
        if isinstance(value, dict) and set(value) <= {"left", "right"}:
            return value
        return {"left": value, "right": value}


class FluxConfig(_Strict):
    """Boundary flux q.

    mode "explicit" uses left/right as given. mode "compatible" derives
    q(t) = q0 + (q1/relaxation_rate)*(1 - exp(-relaxation_rate*t)) per side from the
    compatibility conditions and the known kernel value h(0).
    """
    mode: Literal["explicit", "compatible"] = "explicit"
    values: BoundaryFunctions = Field(default_factory=BoundaryFunctions)
    relaxation_rate: float = Field(default=1.0, gt=0)


# ============================================================================
# Problem data
# ============================================================================

class GridConfig(_Strict):
    t_end: float = Field(default=1.0, gt=0)  # T
    steps: int = Field(default=400, ge=2)  # N
    cells: int = Field(default=100, ge=4)  # M


class CoefficientsConfig(_Strict):
    """A = D_x(a D_x); B = b1 D_x + b0 at each endpoint."""
    a: FunctionSpec = Field(default_factory=lambda: _const(1.0))
    b1_left: float = -1.0  # outward normal derivative at x=0
    b1_right: float = 1.0
    b0_left: float = 0.0
    b0_right: float = 0.0


class WeightsConfig(_Strict):
    """Sensors: omega for Phi, omega1/omega2 for the feedback functional M."""
    omega: FunctionSpec = Field(default_factory=lambda: FunctionSpec.model_validate({"kind": "bump", "params": [1.0]}))
    omega1: FunctionSpec = Field(default_factory=lambda: _const(1.0))
    omega2_left: float = 0.0
    omega2_right: float = 0.0


class ThermostatConfig(_Strict):
    """eps*phi' + phi = W(M(u)) + u_C; u_e = phi*u_A + u_B."""
    eps: float = Field(default=0.5, gt=0)
    phi0: float = 0.0
    u_C: FunctionSpec = Field(default_factory=lambda: _const(0.0))
    u_A: BoundaryFunctions = Field(default_factory=BoundaryFunctions)
    u_B: BoundaryFunctions = Field(default_factory=BoundaryFunctions)
    derivative_mode: Literal["analytic", "numeric"] = "analytic"


class RelaySpec(_Strict):
    """Bistable relay: +1 once input >= high, -1 once input <= low."""
    low: float
    high: float
    weight: float = Field(default=1.0, ge=0)
    state: Literal[-1, 1] | None = None  # None: set from the initial input

    @model_validator(mode="after")
    def ordered(self):
        if not self.low < self.high:
            raise ValueError(f"relay thresholds must satisfy low < high, got {self.low} >= {self.high}")
        return self


class PreisachGridSpec(_Strict):
    """Relays on all threshold pairs of a uniform grid, equal weights."""
    low: float
    high: float
    levels: int = Field(default=5, ge=2)
    total_mass: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def ordered(self):
        if not self.low < self.high:
            raise ValueError("Preisach grid needs low < high")
        return self


class MemoryOperatorSpec(_Strict):
    """Hysteresis operator W.

    Attributes:
        kind: play, preisach or scaled_identity
        half_width: play half-width r
        relays / preisach_grid: Preisach relay set (explicit list and/or grid)
        gain: scaled_identity slope
        initial: initial output (play: w0; scaled_identity: value at t=0)
    """
    kind: Literal["play", "preisach", "scaled_identity"] = "play"
    half_width: float = Field(default=0.1, ge=0)
    relays: list[RelaySpec] = Field(default_factory=list)
    preisach_grid: PreisachGridSpec | None = None
    gain: float = 1.0
    initial: float | None = None

    @model_validator(mode="after")
    def per_kind(self):
        if self.kind == "preisach" and not self.relays and self.preisach_grid is None:
            raise ValueError("preisach operator needs relays or a preisach_grid")
        return self


class MeasurementConfig(_Strict):
    """Observed g = Phi(u) for invert mode, with optional derivatives."""
    g: FunctionSpec
    dg: FunctionSpec | None = None
    ddg: FunctionSpec | None = None


class NoiseConfig(_Strict):
    amplitude: float = Field(default=0.0, ge=0)  # uniform(-a, a) per node
    seed: int | None = None
    offset: float = 0.0  # constant sensor bias

    @model_validator(mode="after")
    def seed_required(self):
        if self.amplitude > 0 and self.seed is None:
            raise ValueError("noise.seed is mandatory when noise.amplitude > 0")
        return self


class SolverControls(_Strict):
    tol_picard: float = Field(default=TOL_PICARD, gt=0)
    max_picard: int = Field(default=MAX_PICARD, ge=1)
    window_steps: int = Field(default=1, ge=1)
    window_growth: Literal["fixed", "doubling"] = "fixed"
    max_window_steps: int = Field(default=64, ge=1)
    max_retries: int = Field(default=MAX_WINDOW_RETRIES, ge=0)
    strict: bool = False
    smoothing_window: int = Field(default=1, ge=1)
    tol_compat: float | None = Field(default=None, gt=0)
    tol_chi: float = Field(default=TOL_CHI, gt=0)
    derivatives: Literal["analytic", "numeric"] = "analytic"


class RoundtripConfig(_Strict):
    refinement: int = Field(default=2, ge=1)  # forward grid = refinement x inversion grid
    convergence_levels: list[int] = Field(default_factory=list)


class BenchConfig(_Strict):
    steps: list[int] = Field(default_factory=lambda: list(BENCH_STEPS))
    cells: int = Field(default=50, ge=4)


class VerifyConfig(_Strict):
    seed: int = 20240101
    suites: list[str] | None = None  # None: all suites


class RunConfig(_Strict):
    """Single JSON document driving a run.

    Example:
        {"mode": "roundtrip", "preset": "exp_kernel", "grid": {"steps": 200, "cells": 50}}
    """
    mode: Mode = "roundtrip"
    preset: str | None = None
    grid: GridConfig = Field(default_factory=GridConfig)
    coefficients: CoefficientsConfig = Field(default_factory=CoefficientsConfig)
    weights: WeightsConfig = Field(default_factory=WeightsConfig)
    thermostat: ThermostatConfig = Field(default_factory=ThermostatConfig)
    memory: MemoryOperatorSpec = Field(default_factory=MemoryOperatorSpec)
    kernel: FunctionSpec | None = None
    u0: FunctionSpec = Field(default_factory=lambda: _const(0.0))
    source: SourceConfig = Field(default_factory=SourceConfig)
    flux: FluxConfig = Field(default_factory=FluxConfig)
    measurement: MeasurementConfig | None = None
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    controls: SolverControls = Field(default_factory=SolverControls)
    roundtrip: RoundtripConfig = Field(default_factory=RoundtripConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    output_dir: str | None = None

    @model_validator(mode="after")
    def mode_requirements(self):
        if self.mode in ("forward", "roundtrip", "bench") and self.kernel is None:
            raise ValueError(f"mode '{self.mode}' requires a kernel")
        if self.mode == "invert" and self.measurement is None:
            raise ValueError("mode 'invert' requires a measurement")
        if self.flux.mode == "compatible" and self.kernel is None:
            raise ValueError("compatible flux needs a known kernel value h(0)")
        return self


# ============================================================================
# Reports
# ============================================================================

class CompatibilityResidual(BaseModel):
    condition: str  # initial_measurement, initial_rate, boundary_left, boundary_right, chi_nondegenerate
    residual: float
    tol: float
    passed: bool


class WindowReport(BaseModel):
    start: int  # first committed node of the window
    steps: int
    iterations: int
    residuals: list[float]
    monotone: bool  # residuals decrease after the leading iterates


class SolverReport(BaseModel):
    solver: Literal["forward", "inverse"]
    steps: int
    cells: int
    iterations: list[int]  # per committed step or window
    max_iterations: int
    windows: list[WindowReport] = Field(default_factory=list)
    window_steps: int = 1
    retries: int = 0
    wall_time: float = 0.0
    warnings: list[str] = Field(default_factory=list)


class ResidualReport(BaseModel):
    interior: float  # D_t u - A u - h*Au - f in L2(Q_T)
    boundary: float  # B u + h*Bu + q - u_e + u, max over steps
    measurement: float  # max |Phi(u^n) - g_n|
    derivative_identity: float  # D_t(h*Au) - h A u0 - h*Av in L2(Q_T)


class ErrorTable(BaseModel):
    rel_l2_h: float
    rel_l2_u: float
    abs_l2_h: float


class ConvergenceLevel(BaseModel):
    steps: int
    cells: int
    rel_l2_h: float
    rel_l2_u: float
    ratio_h: float | None = None  # error(previous level) / error(this level)


class CheckResult(BaseModel):
    suite: str
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: str = ""


class BenchEntry(BaseModel):
    steps: int
    convolve_seconds: float
    forward_seconds: float
    invert_seconds: float


class RunReport(BaseModel):
    """Everything a run produced, echoed config included."""
    run_id: str
    mode: Mode
    exit_code: int = 0
    config: dict[str, Any]
    solvers: dict[str, SolverReport] = Field(default_factory=dict)
    compatibility: list[CompatibilityResidual] = Field(default_factory=list)
    residuals: ResidualReport | None = None
    errors: ErrorTable | None = None
    convergence: list[ConvergenceLevel] = Field(default_factory=list)
    checks: list[CheckResult] = Field(default_factory=list)
    bench: list[BenchEntry] = Field(default_factory=list)
    resolved: dict[str, Any] = Field(default_factory=dict)  # derived data, e.g. compatible flux
    artifacts: list[str] = Field(default_factory=list)
    wall_time: float = 0.0
    warnings: list[str] = Field(default_factory=list)
    error_message: str = ""
