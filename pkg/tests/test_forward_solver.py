"""Tests for the implicit forward solver."""

import dataclasses

import numpy as np
import pytest

from thermomem.cli.verify import manufactured_errors
from thermomem.core.errors import GridMismatchError, PicardDiverged
from thermomem.models.models import SolverControls
from thermomem.numerics.grid import TimeGrid, TimeSeries, l2_space
from thermomem.numerics.pde_ops import measure_Phi
from thermomem.presets.factory import build_forward_problem, build_grids
from thermomem.solvers.forward_solver import emit_measurement, forward_solve


def _solve(cfg, steps, cells, controls=None):
    tgrid, sgrid = build_grids(cfg.grid.model_copy(update={"steps": steps, "cells": cells}))
    problem = build_forward_problem(cfg, tgrid, sgrid)
    return problem, forward_solve(problem, controls or cfg.controls)


class TestForwardSolve:
    """Tests for forward_solve."""

    def test_zero_data_gives_zero(self, preset_config):
        """u0 = 0, f = 0, q = 0 and zero feedback keep u = 0."""
        cfg = preset_config("manufactured", u0=0.0, source={"terms": []}, flux={"values": 0.0})
        _, result = _solve(cfg, 20, 10)
        assert np.all(result.u.values == 0.0)

    def test_stationary_solution_exact(self, preset_config):
        """u = x^2 with h = 1 is reproduced to roundoff."""
        cfg = preset_config("stationary")
        _, result = _solve(cfg, 20, 10)
        x = result.u.sgrid.nodes
        np.testing.assert_allclose(result.u.values, np.broadcast_to(x**2, result.u.values.shape), atol=1e-10)

    def test_energy_nonincreasing(self, preset_config):
        """Without sources and with a zero thermostat the L2 norm decays."""
        cfg = preset_config("manufactured", source={"terms": []}, flux={"values": 0.0})
        _, result = _solve(cfg, 50, 20)
        norms = np.array([l2_space(result.u.row(n)) for n in range(result.u.tgrid.size)])
        assert np.all(np.diff(norms) <= 1e-14)

    def test_manufactured_first_order_in_time(self):
        """Halving dt roughly halves the error against exp(-t) sin(pi x)."""
        e = manufactured_errors()
        assert 1.5 <= e[0] / e[1] <= 2.6
        assert 1.5 <= e[1] / e[2] <= 2.6

    def test_report(self, exp_setup):
        cfg, forward, _, _ = exp_setup
        report = forward_solve(forward, cfg.controls).report
        assert report.solver == "forward"
        assert report.steps == 40
        assert report.cells == 20
        assert len(report.iterations) == 40
        assert report.max_iterations == max(report.iterations)

    def test_initial_row_is_u0(self, exp_setup):
        _, forward, u, _ = exp_setup
        np.testing.assert_array_equal(u.values[0], forward.u0.values)

    def test_picard_limit(self, exp_setup):
        """One fixed-point iteration per step cannot meet the tolerance."""
        _, forward, _, _ = exp_setup
        with pytest.raises(PicardDiverged) as info:
            forward_solve(forward, SolverControls(max_picard=1))
        assert info.value.solver == "forward"
        assert info.value.step == 1


class TestForwardProblem:
    def test_kernel_grid_checked(self, exp_setup):
        """A kernel on another time grid is rejected."""
        _, forward, _, _ = exp_setup
        with pytest.raises(GridMismatchError):
            dataclasses.replace(forward, h=TimeSeries.zeros(TimeGrid.uniform(1.0, 20)))


class TestEmitMeasurement:
    def test_rows_match_phi(self, exp_setup):
        """g_n = Phi(u^n) at every node."""
        _, forward, u, _ = exp_setup
        g = emit_measurement(u, forward.weights)
        assert g.grid == u.tgrid
        for n in (0, 13, 40):
            assert g.values[n] == pytest.approx(measure_Phi(forward.weights, u.row(n)), abs=1e-14)
