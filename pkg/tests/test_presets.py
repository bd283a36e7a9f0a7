"""Tests for function specifications, the preset registry and the problem factory."""

import numpy as np
import pytest
from pydantic import ValidationError

from thermomem.core.errors import ConfigError
from thermomem.models.models import FunctionSpec, RunConfig
from thermomem.numerics.grid import SpaceGrid, TimeGrid
from thermomem.presets.factory import (
    build_flux,
    build_forward_problem,
    build_grids,
    build_inverse_problem,
    build_source,
    build_thermostat,
    measurement_from_config,
    resolve_flux,
)
from thermomem.presets.functions import eval_space, eval_time
from thermomem.presets.registry import PRESETS, get_preset, list_presets, merge_config, resolve_preset
from thermomem.solvers.inverse_solver import check_compatibility


def _spec(value) -> FunctionSpec:
    return FunctionSpec.model_validate(value)


class TestFunctionSpec:
    """Tests for spec normalization and evaluation."""

    def test_number_is_constant(self):
        spec = _spec(2.5)
        assert spec.kinds() == {"const"}
        np.testing.assert_array_equal(eval_time(spec, np.linspace(0, 1, 4)), 2.5)

    def test_boolean_rejected(self):
        with pytest.raises(ValidationError):
            _spec(True)

    def test_terms_summed(self):
        t = np.linspace(0.0, 1.0, 5)
        spec = _spec([1.0, {"kind": "poly", "params": [0.0, 2.0]}])
        np.testing.assert_allclose(eval_time(spec, t), 1.0 + 2.0 * t)

    def test_numbers_inside_terms_are_constants(self):
        spec = _spec({"terms": [2, {"kind": "poly", "params": [0.0, 1.0]}, 0.5]})
        assert [term.kind for term in spec.terms] == ["const", "poly", "const"]
        np.testing.assert_allclose(eval_time(spec, np.array([0.0, 1.0])), [2.5, 3.5])

    def test_boolean_term_rejected(self):
        with pytest.raises(ValidationError):
            _spec([1.0, False])

    def test_exp_derivatives(self):
        """exp [amp, rate] differentiates exactly."""
        t = np.linspace(0.0, 1.0, 11)
        spec = _spec({"kind": "exp", "params": [2.0, 3.0]})
        np.testing.assert_allclose(eval_time(spec, t, 1), -6.0 * np.exp(-3.0 * t))
        np.testing.assert_allclose(eval_time(spec, t, 2), 18.0 * np.exp(-3.0 * t))

    def test_sin_derivative(self):
        t = np.linspace(0.0, 1.0, 11)
        spec = _spec({"kind": "sin", "params": [1.0, 2.0, 0.0, 5.0]})
        np.testing.assert_allclose(eval_time(spec, t), np.sin(2.0 * t) + 5.0, atol=1e-14)
        np.testing.assert_allclose(eval_time(spec, t, 1), 2.0 * np.cos(2.0 * t), atol=1e-14)

    def test_bump(self):
        """bump = x^2 (1-x)^2 with vanishing slope at both ends."""
        x = np.array([0.0, 0.5, 1.0])
        spec = _spec({"kind": "bump", "params": [1.0]})
        np.testing.assert_allclose(eval_space(spec, x), [0.0, 1 / 16, 0.0], atol=1e-15)
        np.testing.assert_allclose(eval_space(spec, x, 1)[[0, 2]], 0.0, atol=1e-15)

    def test_cos_space(self):
        x = np.linspace(0.0, 1.0, 9)
        spec = _spec({"kind": "cos", "params": [0.2, 1.0]})
        np.testing.assert_allclose(eval_space(spec, x), 0.2 * np.cos(np.pi * x), atol=1e-15)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="Unknown time function kind"):
            eval_time(_spec({"kind": "gauss"}), np.zeros(2))

    def test_parameter_count(self):
        with pytest.raises(ConfigError, match="parameters"):
            eval_time(_spec({"kind": "exp", "params": [1.0, 2.0, 3.0, 4.0]}), np.zeros(2))

    def test_csv_interpolated(self, tmp_path):
        (tmp_path / "g.csv").write_text("t,value\n0,0\n1,2\n")
        spec = _spec({"kind": "csv", "path": "g.csv"})
        np.testing.assert_allclose(eval_time(spec, np.array([0.0, 0.25, 1.0]), 0, tmp_path), [0.0, 0.5, 2.0])
        assert eval_time(spec, np.array([0.0, 1.0]), 1, tmp_path) is None

    def test_csv_must_cover_grid(self, tmp_path):
        (tmp_path / "g.csv").write_text("t,value\n0,0\n0.5,1\n")
        with pytest.raises(ConfigError, match="cover"):
            eval_time(_spec({"kind": "csv", "path": "g.csv"}), np.linspace(0, 1, 3), 0, tmp_path)

    def test_csv_needs_path(self):
        with pytest.raises(ValidationError):
            _spec({"kind": "csv"})


class TestRegistry:
    """Tests for preset lookup and merging."""

    def test_all_presets_validate(self):
        for name in list_presets():
            document = get_preset(name)
            document.setdefault("mode", "roundtrip")
            RunConfig.model_validate(document)

    def test_listing(self):
        assert list_presets() == sorted(PRESETS)
        assert "exp_kernel" in list_presets()

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="Available presets"):
            get_preset("nope")

    def test_get_returns_copy(self):
        get_preset("exp_kernel")["grid"]["steps"] = 3
        assert PRESETS["exp_kernel"]["grid"]["steps"] == 400

    def test_merge_is_recursive(self):
        merged = merge_config({"grid": {"steps": 10, "cells": 5}}, {"grid": {"steps": 20}})
        assert merged == {"grid": {"steps": 20, "cells": 5}}

    def test_resolve_document_over_preset(self):
        document = resolve_preset({"preset": "exp_kernel", "grid": {"steps": 80}})
        assert document["grid"] == {"t_end": 1.0, "steps": 80, "cells": 100}
        assert document["kernel"] == {"kind": "exp", "params": [1.0, 1.0]}

    def test_resolve_without_preset(self):
        assert resolve_preset({"mode": "bench"}) == {"mode": "bench"}


class TestConfigValidation:
    def test_roundtrip_needs_kernel(self):
        with pytest.raises(ValidationError, match="kernel"):
            RunConfig.model_validate({"mode": "roundtrip"})

    def test_invert_needs_measurement(self):
        with pytest.raises(ValidationError, match="measurement"):
            RunConfig.model_validate({"mode": "invert"})

    def test_noise_needs_seed(self, preset_config):
        with pytest.raises(ValidationError, match="seed"):
            preset_config("exp_kernel", noise={"amplitude": 0.1})

    def test_unknown_field(self):
        with pytest.raises(ValidationError):
            RunConfig.model_validate({"mode": "verify", "colour": 1})


class TestFactory:
    """Tests for building problems from configs."""

    def test_grids_refined(self, preset_config):
        tgrid, sgrid = build_grids(preset_config("exp_kernel").grid, 2)
        assert (tgrid.steps, sgrid.cells) == (800, 200)

    def test_source_and_rate(self, preset_config):
        """Manufactured source (pi^2 - 1) exp(-t) sin(pi x) with its exact time derivative."""
        cfg = preset_config("manufactured")
        tgrid, sgrid = TimeGrid.uniform(1.0, 10), SpaceGrid(10)
        f, df = build_source(cfg.source, tgrid, sgrid)
        expected = (np.pi**2 - 1.0) * np.outer(np.exp(-tgrid.nodes), np.sin(np.pi * sgrid.nodes))
        np.testing.assert_allclose(f.values, expected, atol=1e-12)
        np.testing.assert_allclose(df.values, -expected, atol=1e-12)

    def test_compatible_flux_meets_boundary_conditions(self, preset_config):
        """Resolved q(0) and q'(0) make the boundary compatibility residuals vanish."""
        cfg = preset_config("exp_kernel", grid={"steps": 40, "cells": 20})
        tgrid, sgrid = build_grids(cfg.grid)
        resolution = resolve_flux(cfg, tgrid, sgrid)
        q, dq = build_flux(cfg.flux, tgrid, resolution)
        for i in range(2):
            assert q[i].values[0] == pytest.approx(resolution.q0[i])
            assert dq[i].values[0] == pytest.approx(resolution.q1[i])
        g = tgrid.nodes * 0.0
        problem = build_inverse_problem(cfg, tgrid, sgrid, q.left.with_values(g), resolution=resolution)
        report = {r.condition: r.residual for r in check_compatibility(problem)}
        assert report["boundary_left"] == pytest.approx(0.0, abs=1e-12)
        assert report["boundary_right"] == pytest.approx(0.0, abs=1e-12)

    def test_compatible_flux_requires_resolution(self, preset_config):
        cfg = preset_config("exp_kernel")
        with pytest.raises(ValueError, match="resolve_flux"):
            build_flux(cfg.flux, TimeGrid.uniform(1.0, 10))

    def test_explicit_flux(self, preset_config):
        cfg = preset_config("stationary")
        tgrid = TimeGrid.uniform(1.0, 10)
        assert resolve_flux(cfg, tgrid, SpaceGrid(10)) is None
        q, dq = build_flux(cfg.flux, tgrid)
        np.testing.assert_allclose(q.right.values, -2.0 - 2.0 * tgrid.nodes)
        np.testing.assert_allclose(dq.right.values, -2.0)

    def test_sampled_thermostat_falls_back_to_numeric(self, preset_config, tmp_path):
        (tmp_path / "ua.csv").write_text("t,value\n0,0.5\n1,1.5\n")
        cfg = preset_config("exp_kernel", thermostat={"u_A": {"kind": "csv", "path": "ua.csv"}})
        params = build_thermostat(cfg.thermostat, TimeGrid.uniform(1.0, 10), tmp_path)
        assert params.derivative_mode == "numeric"
        np.testing.assert_allclose(params.rates()[0].left.values, 1.0, atol=1e-10)

    def test_forward_problem_grids(self, preset_config, small_grids):
        cfg = preset_config("exp_kernel")
        problem = build_forward_problem(cfg, *small_grids, resolve_flux(cfg, *small_grids))
        assert problem.f.tgrid == small_grids[0]
        np.testing.assert_allclose(problem.h.values, np.exp(-small_grids[0].nodes))

    def test_measurement_closed_form_rates(self, preset_config):
        cfg = preset_config("exp_kernel", mode="invert", measurement={"g": {"kind": "exp", "params": [1.0, 2.0]}})
        tgrid = TimeGrid.uniform(1.0, 10)
        g, dg, ddg = measurement_from_config(cfg, tgrid)
        np.testing.assert_allclose(dg.values, -2.0 * g.values)
        np.testing.assert_allclose(ddg.values, 4.0 * g.values)

    def test_numeric_derivatives_discard_rates(self, preset_config, small_grids):
        cfg = preset_config("exp_kernel", controls={"derivatives": "numeric"})
        tgrid, sgrid = small_grids
        g = build_forward_problem(cfg, tgrid, sgrid, resolve_flux(cfg, tgrid, sgrid)).h
        problem = build_inverse_problem(cfg, tgrid, sgrid, g, g, g, resolution=resolve_flux(cfg, tgrid, sgrid))
        assert problem.df is None
        assert problem.dq is None
        assert problem.dg is None
