"""Configuration settings for the solvers and the experiment runner.

This module centralizes all configurable parameters for:
- Fixed-point iteration tolerances and limits
- Degeneracy thresholds (chi, Volterra diagonal)
- Compatibility tolerances
- Output/log directories and console log level
- Artifact formats and benchmark levels

Every numeric default can be overridden through an environment variable
(or a .env file in the project root).
"""
import os
from pathlib import Path
from dotenv import load_dotenv

from thermomem.core.errors import ConfigError

# ============================================================================
# ENVIRONMENT LOADING
# ============================================================================
# Load .env from the project root if it exists; OS variables take precedence

_ENV_FILE = Path(__file__).parent.parent.parent / ".env"
if _ENV_FILE.exists():
    load_dotenv(_ENV_FILE)


def _get_float_env(name: str, default: float) -> float:
    """Read a float override from the environment.

    Args:
        name: Environment variable name
        default: Value used when the variable is unset

    Returns:
        float: Parsed value

    Raises:
        ConfigError: If the variable is set but not a number
    """
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(
            f"{name}={raw!r} is not a number. Please set it in:\n"
            "  1. .env file in project root, OR\n"
            "  2. System environment variable\n"
            f"Example: {name}={default}"
        ) from None


def _get_int_env(name: str, default: int) -> int:
    """Read an integer override from the environment (see _get_float_env)."""
    value = _get_float_env(name, float(default))
    if value != int(value):
        raise ConfigError(f"{name} must be an integer, got {value}")
    return int(value)


# ============================================================================
# DIRECTORIES
# ============================================================================

def get_log_dir() -> Path:
    """Get the directory for per-run log files.

    Priority:
    1. THERMOMEM_LOG_DIR environment variable (or .env entry)
    2. ./logs relative to the project root

    Returns:
        Path: Existing (created if needed) log directory
    """
    configured = os.getenv("THERMOMEM_LOG_DIR")
    log_dir = Path(configured) if configured else Path(__file__).parent.parent.parent / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    return log_dir


LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def get_log_level() -> str:
    """Console log level from THERMOMEM_LOG_LEVEL (default INFO).

    Raises:
        ConfigError: If the variable names no standard level
    """
    level = os.getenv("THERMOMEM_LOG_LEVEL", "INFO").strip().upper()
    if level not in LOG_LEVELS:
        raise ConfigError(f"THERMOMEM_LOG_LEVEL={level!r} must be one of {', '.join(LOG_LEVELS)}")
    return level


def get_output_dir() -> Path:
    """Get the default artifact directory used when neither config nor CLI names one."""
    return Path(os.getenv("THERMOMEM_OUTPUT_DIR", "runs"))


# ============================================================================
# FIXED-POINT ITERATION
# ============================================================================

TOL_PICARD = _get_float_env("THERMOMEM_TOL_PICARD", 1e-10)  # Relative update threshold per step/window
MAX_PICARD = _get_int_env("THERMOMEM_MAX_PICARD", 50)  # Iterations before PicardDiverged
MAX_WINDOW_RETRIES = _get_int_env("THERMOMEM_MAX_WINDOW_RETRIES", 3)  # Window halvings after divergence
MONOTONE_SKIP = 3  # Leading iterates ignored by the contraction diagnostic

# ============================================================================
# DEGENERACY THRESHOLDS
# ============================================================================

TOL_CHI = _get_float_env("THERMOMEM_TOL_CHI", 1e-10)  # |Phi(A u0)| at or below this is singular
VOLTERRA_EPS = _get_float_env("THERMOMEM_VOLTERRA_EPS", 1e-12)  # Minimum |1 + weight*a|
OMEGA_EDGE_FACTOR = 10.0  # Endpoint slope of omega allowed up to factor*dx^2*(max|omega|+1)
JUNCTION_TOL = 1e-12  # Restart histories must agree at the junction node

# ============================================================================
# COMPATIBILITY
# ============================================================================

COMPAT_TOL_FACTOR = _get_float_env("THERMOMEM_COMPAT_TOL_FACTOR", 10.0)  # tol = factor*(dt+dx^2)*scale

# ============================================================================
# ARTIFACTS
# ============================================================================

CSV_FLOAT_FORMAT = "%.17g"  # Full round-trip precision
REPORT_FILE = "report.json"
METRICS_FILE = "metrics.prom"
BENCH_STEPS = (100, 200, 400, 800)
