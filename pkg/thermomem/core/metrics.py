"""Prometheus metrics definitions for solver runs.

This module centralizes all metric objects:
- Run counters and duration histograms per CLI mode
- Fixed-point iteration histograms per solver
- Solver error counters by error type
- Verify battery outcomes
The registry is dumped to metrics.prom at the end of every run.
"""

from pathlib import Path

from prometheus_client import REGISTRY, Counter, Gauge, Histogram, write_to_textfile

# --------------------------------------------------------------------------
# Run-level metrics
# --------------------------------------------------------------------------

# Counter: runner invocations by mode and exit code (0, 2, 3, 4)
RUN_STATUS_COUNTER = Counter(
    "thermomem_runs_total",
    "Count of runner invocations by mode and exit code",
    ["mode", "code"],
)

# Histogram: wall-clock time per run
RUN_DURATION_HISTOGRAM = Histogram(
    "thermomem_run_seconds",
    "Wall-clock duration of a runner invocation",
    ["mode"],
    buckets=[0.1, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0, 60.0, 300.0],
)

# --------------------------------------------------------------------------
# Solver metrics
# --------------------------------------------------------------------------

# Histogram: fixed-point iterations needed per committed step or window
PICARD_ITERATIONS_HISTOGRAM = Histogram(
    "thermomem_picard_iterations",
    "Fixed-point iterations per committed step or window",
    ["solver"],  # forward, inverse
    buckets=[1, 2, 3, 5, 8, 13, 21, 34, 50],
)

# Counter: solves started, by solver and outcome
SOLVES_COUNTER = Counter(
    "thermomem_solves_total",
    "Count of solver invocations by outcome",
    ["solver", "outcome"],  # ok, error
)

# Counter: solver error conditions
SOLVER_ERROR_COUNTER = Counter(
    "thermomem_solver_errors_total",
    "Count of solver errors by type",
    ["error_type"],  # ChiSingular, PicardDiverged, ...
)

# Gauge: solves currently running in this process
ACTIVE_SOLVES = Gauge(
    "thermomem_active_solves",
    "Number of solves currently running",
)

# --------------------------------------------------------------------------
# Verify metrics
# --------------------------------------------------------------------------

VERIFY_CHECK_COUNTER = Counter(
    "thermomem_verify_checks_total",
    "Invariant checks by suite and outcome",
    ["suite", "outcome"],  # pass, fail
)


def write_metrics(path: Path) -> Path:
    """Write the default registry in Prometheus text format and return the path."""
    write_to_textfile(str(path), REGISTRY)
    return path
