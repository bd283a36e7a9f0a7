"""Timing of convolution, forward and inverse solves across step counts."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from tqdm import tqdm

from thermomem.core.logger import cli_logger
from thermomem.models.models import BenchEntry, GridConfig, RunConfig
from thermomem.numerics.convolution import trapezoid_convolution
from thermomem.presets.factory import build_forward_problem, build_grids, build_inverse_problem, resolve_flux
from thermomem.solvers.forward_solver import emit_measurement, forward_solve
from thermomem.solvers.inverse_solver import solve_inverse
from thermomem.utils.utils import timed


def bench_level(cfg: RunConfig, steps: int, cells: int, base_dir: Path | None = None) -> BenchEntry:
    """Time one level: O(N^2) convolution, forward solve, then inversion of its data."""
    grid_cfg = GridConfig(t_end=cfg.grid.t_end, steps=steps, cells=cells)
    tgrid, sgrid = build_grids(grid_cfg)
    rng = np.random.default_rng(steps)
    h, f = rng.standard_normal((2, tgrid.size))
    with timed() as convolve_time:
        trapezoid_convolution(h, f, tgrid.dt)

    resolution = resolve_flux(cfg, tgrid, sgrid, base_dir)
    forward = build_forward_problem(cfg, tgrid, sgrid, resolution, base_dir)
    with timed() as forward_time:
        result = forward_solve(forward, cfg.controls)

    g = emit_measurement(result.u, forward.weights)
    inverse = build_inverse_problem(cfg, tgrid, sgrid, g, resolution=resolution, base_dir=base_dir)
    with timed() as invert_time:
        solve_inverse(inverse, cfg.controls)

    return BenchEntry(
        steps=steps,
        convolve_seconds=convolve_time["seconds"],
        forward_seconds=forward_time["seconds"],
        invert_seconds=invert_time["seconds"],
    )


def run_bench(cfg: RunConfig, base_dir: Path | None = None) -> list[BenchEntry]:
    entries = []
    for steps in tqdm(cfg.bench.steps, desc="bench", unit="level"):
        entry = bench_level(cfg, steps, cfg.bench.cells, base_dir)
        cli_logger.info(
            f"bench N={steps}: convolve {entry.convolve_seconds:.4f}s, "
            f"forward {entry.forward_seconds:.3f}s, invert {entry.invert_seconds:.3f}s"
        )
        entries.append(entry)
    return entries
