"""Retry handler for windowed fixed-point marches.

This module provides a decorator that re-runs a windowed march with a
smaller window after the fixed-point map fails to contract.

Window strategy:
- Attempt 1: configured window_steps
- Attempt 2: window_steps // 2
- Attempt 3: window_steps // 4
- ... down to single-step marching, which is never retried

Only PicardDiverged is retried; degenerate data (ChiSingular,
VolterraSingular) and configuration errors propagate immediately.

Usage:
    @retry_on_divergence(max_retries=3)
    def inverse_march(problem, coeffs, controls):
        ...
"""
import inspect
from functools import wraps
from typing import Any, Callable

from thermomem.core.config import MAX_WINDOW_RETRIES
from thermomem.core.errors import PicardDiverged
from thermomem.core.logger import solver_logger


def retry_on_divergence(max_retries: int = MAX_WINDOW_RETRIES) -> Callable:
    """Decorator halving ``controls.window_steps`` after each divergence.

    The wrapped function must accept a ``controls`` argument exposing
    ``window_steps`` and ``model_copy(update=...)`` (a SolverControls model).

    Args:
        max_retries: Maximum number of retries with a halved window

    Returns:
        Decorator function

    Example:
        @retry_on_divergence(max_retries=2)
        def march(problem, coeffs, controls): ...

        # window 8 diverges -> retry with 4 -> retry with 2 -> raise
    """
    def decorator(func: Callable) -> Callable:
        signature = inspect.signature(func)

        @wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            bound = signature.bind(*args, **kwargs)
            bound.apply_defaults()
            controls = bound.arguments["controls"]
            retries = getattr(controls, "max_retries", max_retries)

            for attempt in range(retries + 1):
                try:
                    result = func(*bound.args, **bound.kwargs)
                    report = getattr(result, "report", None)
                    if attempt and report is not None:
                        report.retries = attempt
                    return result
                except PicardDiverged as e:
                    window = controls.window_steps
                    if attempt == retries or window <= 1:
                        solver_logger.error(
                            f"Fixed point diverged after {attempt} retries "
                            f"(window_steps={window}): {e}"
                        )
                        raise
                    controls = controls.model_copy(update={"window_steps": max(1, window // 2)})
                    bound.arguments["controls"] = controls
                    solver_logger.warning(
                        f"Divergence at step {e.step}. Retry {attempt + 1}/{retries} "
                        f"with window_steps={controls.window_steps}"
                    )
        return wrapper
    return decorator
