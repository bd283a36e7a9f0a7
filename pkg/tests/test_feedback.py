"""Tests for the thermostat closed forms, the feedback operator and Psi."""

import numpy as np
import pytest

from thermomem.core.errors import FeedbackDataError, GridMismatchError
from thermomem.numerics.feedback import (
    FeedbackTracker,
    ThermostatParams,
    apply_F,
    boundary_control,
    e0_series,
    e1_series,
    psi_eval,
    psi_lipschitz_ratio,
    psi_restart,
    thermostat_ode_solve,
)
from thermomem.numerics.grid import Boundary, SpaceGrid, SpaceTimeField, TimeGrid, TimeSeries
from thermomem.numerics.hysteresis import MemoryOperatorSpec
from thermomem.numerics.pde_ops import measure_M, measure_M_rows
from thermomem.presets.factory import build_thermostat, build_u0, build_weights

PLAY = MemoryOperatorSpec(kind="play", half_width=0.1)


@pytest.fixture
def feedback_data(preset_config):
    """Thermostat, weights and u0 of exp_kernel on a 40 x 10 grid."""
    cfg = preset_config("exp_kernel")
    tgrid, sgrid = TimeGrid.uniform(1.0, 40), SpaceGrid(10)
    return (
        build_thermostat(cfg.thermostat, tgrid),
        build_weights(cfg.weights, sgrid),
        build_u0(cfg.u0, sgrid),
    )


def _params(grid, phi0=0.0, eps=0.5, u_A=0.5, u_B=1.0, u_C=0.0, rates=True) -> ThermostatParams:
    const = lambda v: TimeSeries.constant(grid, v)  # noqa: E731
    zero = Boundary(const(0.0), const(0.0))
    return ThermostatParams(
        eps=eps,
        phi0=phi0,
        u_C=const(u_C),
        u_A=Boundary(const(u_A), const(u_A)),
        u_B=Boundary(const(u_B), const(u_B)),
        du_A=zero if rates else None,
        du_B=zero if rates else None,
    )


class TestThermostat:
    """Tests for the relaxation ODE and its kernels."""

    def test_relaxation_time_positive(self):
        with pytest.raises(FeedbackDataError, match="eps"):
            _params(TimeGrid.uniform(1.0, 10), eps=0.0)

    def test_free_decay(self):
        """Zero forcing leaves phi0*exp(-t/eps)."""
        grid = TimeGrid.uniform(1.0, 50)
        p = _params(grid, phi0=2.0)
        phi = thermostat_ode_solve(p, TimeSeries.zeros(grid)).values
        np.testing.assert_allclose(phi, 2.0 * np.exp(-grid.nodes / 0.5), atol=1e-14)

    def test_e1_kernel(self):
        grid = TimeGrid.uniform(1.0, 4)
        p = _params(grid, eps=0.25)
        np.testing.assert_allclose(e1_series(p, grid).values, 4.0 * np.exp(-4.0 * grid.nodes))

    def test_e0_unforced_is_u_B(self):
        grid = TimeGrid.uniform(1.0, 20)
        for side in e0_series(_params(grid), grid):
            np.testing.assert_allclose(side.values, 1.0)

    def test_e0_relaxes_to_u_C(self):
        """u_C = 1, u_A = 1, eps = 1 gives E0 = 1 - exp(-t)."""
        grid = TimeGrid.uniform(1.0, 1000)
        left, right = e0_series(_params(grid, eps=1.0, u_A=1.0, u_B=0.0, u_C=1.0))
        assert left.values[-1] == pytest.approx(1.0 - np.exp(-1.0), abs=1e-5)
        np.testing.assert_array_equal(left.values, right.values)

    def test_e0_is_feedback_of_zero(self):
        grid = TimeGrid.uniform(1.0, 30)
        p = _params(grid, phi0=0.7, u_C=0.4)
        for e0, f0 in zip(e0_series(p), apply_F(p, TimeSeries.zeros(grid))):
            np.testing.assert_allclose(e0.values, f0.values, atol=1e-14)

    def test_e0_grid_mismatch(self):
        with pytest.raises(GridMismatchError):
            e0_series(_params(TimeGrid.uniform(1.0, 20)), TimeGrid.uniform(1.0, 10))

    def test_control_matches_ode(self):
        """F(r) = phi u_A + u_B with phi solving the thermostat ODE."""
        grid = TimeGrid.uniform(1.0, 200)
        p = _params(grid, phi0=0.3)
        r = TimeSeries(grid, np.sin(3.0 * grid.nodes))
        phi = thermostat_ode_solve(p, r).values
        for side in apply_F(p, r):
            np.testing.assert_allclose(side.values, 0.5 * phi + 1.0, atol=1e-10)

    def test_ode_residual_first_order(self):
        """eps*phi' + phi - r vanishes as dt -> 0."""
        errors = []
        for steps in (100, 200):
            grid = TimeGrid.uniform(1.0, steps)
            p = _params(grid)
            r = TimeSeries(grid, np.sin(3.0 * grid.nodes))
            phi = thermostat_ode_solve(p, r).values
            dphi = np.gradient(phi, grid.dt, edge_order=2)
            errors.append(np.max(np.abs(0.5 * dphi + phi - r.values)))
        assert errors[1] < errors[0] / 1.5

    def test_missing_rates(self):
        """Analytic mode without D_t u_A, D_t u_B cannot evaluate Psi."""
        p = _params(TimeGrid.uniform(1.0, 10), rates=False)
        with pytest.raises(FeedbackDataError, match="numeric"):
            p.rates()

    def test_numeric_rates(self):
        """Numeric mode differentiates the samples."""
        grid = TimeGrid.uniform(1.0, 20)
        linear = TimeSeries(grid, 3.0 * grid.nodes)
        p = ThermostatParams(
            eps=1.0,
            phi0=0.0,
            u_C=TimeSeries.zeros(grid),
            u_A=Boundary(linear, linear),
            u_B=Boundary(linear, linear),
            derivative_mode="numeric",
        )
        du_A, _ = p.rates()
        np.testing.assert_allclose(du_A.left.values, 3.0, atol=1e-10)

    def test_grids_must_agree(self):
        a, b = TimeGrid.uniform(1.0, 10), TimeGrid.uniform(1.0, 20)
        with pytest.raises(GridMismatchError):
            ThermostatParams(
                eps=1.0,
                phi0=0.0,
                u_C=TimeSeries.zeros(a),
                u_A=Boundary(TimeSeries.zeros(b), TimeSeries.zeros(b)),
                u_B=Boundary(TimeSeries.zeros(a), TimeSeries.zeros(a)),
            )


class TestPsi:
    """Tests for Psi(v) = D_t F(W(M(u0 + 1*v)))."""

    @pytest.mark.parametrize("m", [1, 10, 20])
    def test_causal(self, feedback_data, m):
        """Inputs agreeing up to node m give Psi agreeing up to node m."""
        p, w, u0 = feedback_data
        tgrid, sgrid = p.grid, u0.grid
        rng = np.random.default_rng(m)
        for _ in range(5):
            v1 = rng.standard_normal((tgrid.size, sgrid.size))
            v2 = v1.copy()
            v2[m + 1 :] = rng.standard_normal((tgrid.size - m - 1, sgrid.size))
            a = psi_eval(p, PLAY, w, u0, SpaceTimeField(tgrid, sgrid, v1))
            b = psi_eval(p, PLAY, w, u0, SpaceTimeField(tgrid, sgrid, v2))
            for sa, sb in zip(a, b):
                np.testing.assert_allclose(sa.values[: m + 1], sb.values[: m + 1], atol=1e-12)

    def test_tracker_matches_batch(self, feedback_data):
        """Incremental Psi over one block equals the batch evaluation."""
        p, w, u0 = feedback_data
        tgrid, sgrid = p.grid, u0.grid
        v = np.outer(np.cos(tgrid.nodes), np.sin(np.pi * sgrid.nodes))
        batch = psi_eval(p, PLAY, w, u0, SpaceTimeField(tgrid, sgrid, v))
        mv = measure_M_rows(w, v)
        x = measure_M(w, u0) + np.concatenate([[0.0], np.cumsum(0.5 * tgrid.dt * (mv[:-1] + mv[1:]))])
        tracker = FeedbackTracker(p, PLAY, x[0])
        incremental = tracker.psi(x[1:])
        np.testing.assert_allclose(incremental[:, 0], batch.left.values[1:], atol=1e-12)
        np.testing.assert_allclose(incremental[:, 1], batch.right.values[1:], atol=1e-12)

    def test_tracker_control_matches_trajectory(self, feedback_data):
        """Node-by-node control with commits reproduces boundary_control."""
        p, w, u0 = feedback_data
        tgrid, sgrid = p.grid, u0.grid
        rng = np.random.default_rng(9)
        u = SpaceTimeField(tgrid, sgrid, np.cumsum(rng.normal(0, 0.3, (tgrid.size, sgrid.size)), axis=0))
        expected = boundary_control(p, PLAY, w, u)
        x = measure_M_rows(w, u.values)
        tracker = FeedbackTracker(p, PLAY, x[0])
        for n in range(1, tgrid.size):
            ue = tracker.control(x[n : n + 1])[0]
            assert ue[0] == pytest.approx(expected.left.values[n], abs=1e-12)
            assert ue[1] == pytest.approx(expected.right.values[n], abs=1e-12)
            tracker.commit(x[n : n + 1])

    def test_trial_does_not_commit(self, feedback_data):
        """Repeated trial evaluations see the same committed memory."""
        p, w, u0 = feedback_data
        tracker = FeedbackTracker(p, PLAY, 0.0)
        block = np.array([1.0, -1.0, 2.0])
        first = tracker.psi(block)
        second = tracker.psi(block)
        np.testing.assert_array_equal(first, second)
        assert tracker.committed == 0

    def test_restart_equals_full(self, feedback_data):
        """Psi of prefix+tail on the tail window equals Psi of the joined input."""
        p, w, u0 = feedback_data
        tgrid, sgrid = p.grid, u0.grid
        v = np.outer(1.0 + tgrid.nodes, np.cos(np.pi * sgrid.nodes))
        full = psi_eval(p, PLAY, w, u0, SpaceTimeField(tgrid, sgrid, v))
        tau = 15
        prefix = SpaceTimeField(tgrid.prefix(tau), sgrid, v[: tau + 1])
        tail = SpaceTimeField(tgrid.prefix(tgrid.steps - tau), sgrid, v[tau:])
        restarted = psi_restart(p, PLAY, w, u0, prefix, tail)
        np.testing.assert_allclose(restarted.left.values, full.left.values[tau:], atol=1e-12)

    def test_restart_junction_checked(self, feedback_data):
        p, w, u0 = feedback_data
        tgrid, sgrid = p.grid, u0.grid
        prefix = SpaceTimeField.zeros(tgrid.prefix(10), sgrid)
        tail = SpaceTimeField(tgrid.prefix(10), sgrid, np.ones((11, sgrid.size)))
        with pytest.raises(GridMismatchError, match="junction"):
            psi_restart(p, PLAY, w, u0, prefix, tail)

    def test_lipschitz_ratio_shrinks_with_horizon(self, feedback_data):
        """The Psi difference ratio decreases as the horizon shrinks."""
        p, w, u0 = feedback_data
        spec = MemoryOperatorSpec(kind="scaled_identity", gain=1.0)
        tgrid, sgrid = p.grid, u0.grid
        base = np.random.default_rng(2).standard_normal((tgrid.size, sgrid.size))
        v1 = SpaceTimeField(tgrid, sgrid, base)
        v2 = v1.with_values(base + 1.0)
        wide = psi_lipschitz_ratio(p, spec, w, u0, v1, v2, 20)
        narrow = psi_lipschitz_ratio(p, spec, w, u0, v1, v2, 5)
        assert narrow < wide

    @pytest.mark.parametrize("preset", ["exp_kernel", "preisach_feedback"])
    def test_preset_ratio_contracts_with_horizon(self, preset_config, preset):
        """With the preset thermostat and memory, the ratio never grows as tau shrinks.

        v2 - v1 is a constant rise, so the sensor gap grows linearly, the
        monotone memory output gap is nondecreasing and so is |Psi(v2) - Psi(v1)|.
        """
        cfg = preset_config(preset)
        tgrid, sgrid = TimeGrid.uniform(1.0, 40), SpaceGrid(10)
        p = build_thermostat(cfg.thermostat, tgrid)
        w, u0 = build_weights(cfg.weights, sgrid), build_u0(cfg.u0, sgrid)
        v1 = SpaceTimeField.zeros(tgrid, sgrid)
        v2 = v1.with_values(np.full(v1.values.shape, 0.5))
        ratios = [psi_lipschitz_ratio(p, cfg.memory, w, u0, v1, v2, m) for m in (5, 10, 20, 40)]
        assert all(narrow <= wide + 1e-12 for narrow, wide in zip(ratios, ratios[1:]))
        assert ratios[0] < ratios[-1]
