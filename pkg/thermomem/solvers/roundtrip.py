"""Forward-inverse round trip and the convergence-order study.

Data are generated on a grid ``refinement`` times finer than the inversion
grid and sampled at the coarse nodes, so the inversion never sees its own
discretization.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from tqdm import tqdm

from thermomem.core.logger import solver_logger
from thermomem.models.models import ConvergenceLevel, ErrorTable, RunConfig
from thermomem.numerics.grid import SpaceTimeField, TimeSeries, l2_time, restrict_field, restrict_time
from thermomem.presets.factory import (
    FluxResolution,
    build_forward_problem,
    build_grids,
    build_inverse_problem,
    build_kernel,
    resolve_flux,
)
from thermomem.solvers.forward_solver import ForwardResult, emit_measurement, forward_solve
from thermomem.solvers.inverse_solver import InverseSolution, relative_l2, relative_l2_field, solve_inverse
from thermomem.utils.utils import inject_noise


@dataclass(frozen=True, eq=False)
class RoundtripOutcome:
    forward: ForwardResult
    g: TimeSeries  # measurement handed to the inversion (restricted, noisy)
    solution: InverseSolution
    h_true: TimeSeries
    u_true: SpaceTimeField
    errors: ErrorTable
    resolution: FluxResolution | None


def roundtrip(cfg: RunConfig, steps: int, cells: int, base_dir: Path | None = None) -> RoundtripOutcome:
    """Forward solve on the refined grid, then invert on (steps, cells).

    Args:
        cfg: Validated run configuration with a known kernel
        steps: Inversion step count N
        cells: Inversion cell count M
        base_dir: Directory for relative CSV paths

    Returns:
        RoundtripOutcome with the error table against the known kernel
    """
    grid_cfg = cfg.grid.model_copy(update={"steps": steps, "cells": cells})
    fine_t, fine_s = build_grids(grid_cfg, cfg.roundtrip.refinement)
    coarse_t, coarse_s = build_grids(grid_cfg)

    resolution = resolve_flux(cfg, fine_t, fine_s, base_dir)
    forward_problem = build_forward_problem(cfg, fine_t, fine_s, resolution, base_dir)
    forward = forward_solve(forward_problem, cfg.controls)
    g_fine = emit_measurement(forward.u, forward_problem.weights)
    g = inject_noise(restrict_time(g_fine, coarse_t), cfg.noise.amplitude, cfg.noise.seed, cfg.noise.offset)

    inverse_problem = build_inverse_problem(cfg, coarse_t, coarse_s, g, resolution=resolution, base_dir=base_dir)
    solution = solve_inverse(inverse_problem, cfg.controls)

    h_true = build_kernel(cfg.kernel, coarse_t, base_dir)
    u_true = restrict_field(forward.u, coarse_t, coarse_s)
    errors = ErrorTable(
        rel_l2_h=relative_l2(solution.h, h_true),
        rel_l2_u=relative_l2_field(solution.u, u_true),
        abs_l2_h=l2_time(solution.h.with_values(solution.h.values - h_true.values)),
    )
    solver_logger.info(
        f"Round trip N={steps}, M={cells}: rel_l2_h={errors.rel_l2_h:.3e}, rel_l2_u={errors.rel_l2_u:.3e}"
    )
    return RoundtripOutcome(forward, g, solution, h_true, u_true, errors, resolution)


def convergence_study(cfg: RunConfig, levels: list[int], base_dir: Path | None = None) -> list[ConvergenceLevel]:
    """Round trips at several step counts; cells scale with steps from the configured ratio.

    ratio_h is error(previous level) / error(this level), about 2 for a
    first-order method under halving of dt.
    """
    results: list[ConvergenceLevel] = []
    for steps in tqdm(sorted(levels), desc="convergence", unit="level"):
        cells = max(4, round(cfg.grid.cells * steps / cfg.grid.steps))
        errors = roundtrip(cfg, steps, cells, base_dir).errors
        ratio = None
        if results and errors.rel_l2_h > 0:
            ratio = results[-1].rel_l2_h / errors.rel_l2_h
        results.append(
            ConvergenceLevel(
                steps=steps, cells=cells, rel_l2_h=errors.rel_l2_h, rel_l2_u=errors.rel_l2_u, ratio_h=ratio
            )
        )
    return results
