"""Pytest configuration and shared fixtures.

This module provides:
- Environment defaults applied before thermomem is imported (log/output dirs)
- Preset-based RunConfig factories
- Small grids and a small forward/inverse problem pair for solver tests
"""

import os
import tempfile

import pytest

# Set directories before importing thermomem: the logger binds its directory at import.
# Use setdefault so an existing environment value is not overridden on developer machines / CI
os.environ.setdefault("THERMOMEM_LOG_DIR", tempfile.mkdtemp(prefix="thermomem-logs-"))
os.environ.setdefault("THERMOMEM_OUTPUT_DIR", tempfile.mkdtemp(prefix="thermomem-runs-"))

from thermomem.models.models import RunConfig  # noqa: E402
from thermomem.numerics.grid import SpaceGrid, TimeGrid  # noqa: E402
from thermomem.presets.factory import (  # noqa: E402
    build_forward_problem,
    build_grids,
    build_inverse_problem,
    resolve_flux,
)
from thermomem.presets.registry import get_preset, merge_config  # noqa: E402
from thermomem.solvers.forward_solver import emit_measurement, forward_solve  # noqa: E402


def make_config(preset: str, **override) -> RunConfig:
    """RunConfig from a preset with keyword overrides merged over it."""
    document = merge_config(get_preset(preset), override)
    document.setdefault("mode", "roundtrip")
    return RunConfig.model_validate(document)


@pytest.fixture
def preset_config():
    """Factory fixture: preset_config("exp_kernel", grid={"steps": 40})."""
    return make_config


@pytest.fixture
def small_grids():
    """40 time steps on [0, 1] and 20 space cells."""
    return TimeGrid.uniform(1.0, 40), SpaceGrid(20)


@pytest.fixture
def exp_setup():
    """exp_kernel config, forward problem, forward field and inverse problem on a 40 x 20 grid."""
    cfg = make_config("exp_kernel", grid={"steps": 40, "cells": 20})
    tgrid, sgrid = build_grids(cfg.grid)
    resolution = resolve_flux(cfg, tgrid, sgrid)
    forward = build_forward_problem(cfg, tgrid, sgrid, resolution)
    u = forward_solve(forward, cfg.controls).u
    g = emit_measurement(u, forward.weights)
    inverse = build_inverse_problem(cfg, tgrid, sgrid, g, resolution=resolution)
    return cfg, forward, u, inverse


@pytest.fixture
def write_config(tmp_path):
    """Write a JSON config document to tmp_path and return its path."""
    import json

    def _write(document: dict, name: str = "run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return path

    return _write
