"""Tests for the discrete operators A, B, the measurement functionals and the step system."""

import numpy as np
import pytest
import scipy.sparse as sp

from thermomem.cli.verify import green_residuals
from thermomem.core.errors import CoefficientError, LinearSolveError, MeasurementWeightsError
from thermomem.numerics.grid import SpaceField, SpaceGrid
from thermomem.numerics.pde_ops import (
    Coefficients,
    MeasurementWeights,
    apply_A,
    apply_A_rows,
    apply_B,
    assemble_psi1,
    check_weights,
    factorize,
    measure_M,
    measure_Phi,
    step_matrix,
)

GRID = SpaceGrid(50)
X = GRID.nodes


def _coefficients(a=None, **kw) -> Coefficients:
    values = np.ones(GRID.size) if a is None else a
    return Coefficients(a=SpaceField(GRID, values), b1_left=kw.get("b1_left", -1.0), b1_right=kw.get("b1_right", 1.0),
                        b0_left=kw.get("b0_left", 0.0), b0_right=kw.get("b0_right", 0.0))


def _weights(omega=None) -> MeasurementWeights:
    omega = X**2 * (1 - X) ** 2 if omega is None else omega
    return MeasurementWeights(omega=SpaceField(GRID, omega), omega1=SpaceField(GRID, np.ones(GRID.size)))


class TestOperatorA:
    """Tests for A = D_x(a D_x)."""

    def test_constants_in_kernel(self):
        """A annihilates constants at every node, endpoints included."""
        out = apply_A(_coefficients(), SpaceField(GRID, np.full(GRID.size, 3.0))).values
        np.testing.assert_allclose(out, 0.0, atol=1e-9)

    def test_quadratic_exact(self):
        """A x^2 = 2 with a = 1."""
        out = apply_A(_coefficients(), SpaceField(GRID, X**2)).values
        np.testing.assert_allclose(out, 2.0, atol=1e-8)

    def test_variable_coefficient_linear(self):
        """(a u')' = 1 for a = 1 + x, u = x."""
        out = apply_A(_coefficients(a=1.0 + X), SpaceField(GRID, X.copy())).values
        np.testing.assert_allclose(out, 1.0, atol=1e-8)

    def test_rows_match_single_apply(self):
        c = _coefficients()
        rows = np.vstack([np.sin(X), X**3])
        out = apply_A_rows(c, rows)
        np.testing.assert_allclose(out[1], apply_A(c, SpaceField(GRID, X**3)).values)

    def test_symmetric_in_weighted_interior(self):
        """Green identity residual converges at second order for v = exp(x)."""
        r = green_residuals()
        assert 3.2 <= r[0] / r[1] <= 4.8
        assert 3.2 <= r[1] / r[2] <= 4.8


class TestOperatorB:
    """Tests for B = b1 D_x + b0 at the endpoints."""

    def test_outward_derivative(self):
        """b1 = (-1, 1) gives (-u'(0), u'(1)), exact for quadratics."""
        left, right = apply_B(_coefficients(), SpaceField(GRID, X**2))
        assert left == pytest.approx(0.0, abs=1e-10)
        assert right == pytest.approx(2.0, abs=1e-10)

    def test_zero_order_part(self):
        left, right = apply_B(_coefficients(b0_left=2.0), SpaceField(GRID, np.ones(GRID.size)))
        assert left == pytest.approx(2.0)
        assert right == pytest.approx(0.0, abs=1e-10)


class TestCoefficientValidation:
    def test_nonpositive_diffusivity(self):
        with pytest.raises(CoefficientError, match="positive"):
            _coefficients(a=X.copy())

    def test_missing_derivative_part(self):
        with pytest.raises(CoefficientError, match="b1"):
            _coefficients(b1_left=0.0)


class TestMeasurements:
    """Tests for Phi, M and the weight checks."""

    def test_phi_of_constant(self):
        """Phi(1) = integral of the bump = 1/30."""
        assert measure_Phi(_weights(), SpaceField(GRID, np.ones(GRID.size))) == pytest.approx(1 / 30, abs=1e-4)

    def test_sensor_traces(self):
        """M adds omega2-weighted boundary traces."""
        w = MeasurementWeights(
            omega=SpaceField(GRID, X**2 * (1 - X) ** 2),
            omega1=SpaceField(GRID, np.ones(GRID.size)),
            omega2_left=0.5,
        )
        assert measure_M(w, SpaceField(GRID, np.ones(GRID.size))) == pytest.approx(1.5)

    def test_sensor_explicit_traces(self):
        w = _weights()
        assert measure_M(w, SpaceField(GRID, np.zeros(GRID.size)), 1.0, 1.0) == pytest.approx(0.0)

    def test_bump_weight_accepted(self):
        check_weights(_weights())

    def test_weight_must_vanish(self):
        with pytest.raises(MeasurementWeightsError, match="left endpoint"):
            check_weights(_weights(np.ones(GRID.size)))

    def test_weight_slope_must_vanish(self):
        """x(1-x) vanishes but its slope does not."""
        with pytest.raises(MeasurementWeightsError, match="omega'"):
            check_weights(_weights(X * (1 - X)))

    def test_psi1_scales_A_omega(self):
        c, w = _coefficients(), _weights()
        psi1 = assemble_psi1(c, w, -1.5)
        np.testing.assert_allclose(psi1.values, -1.5 * (c.A @ w.omega.values))


class TestStepSystem:
    def test_step_rows(self):
        """Interior rows are I - dt*kappa*A, boundary rows kappa*B + I."""
        c = _coefficients()
        u = np.sin(X) + X
        out = step_matrix(c, 0.01, 1.2) @ u
        expected = u - 0.01 * 1.2 * (c.A @ u)
        np.testing.assert_allclose(out[1:-1], expected[1:-1])
        bu = c.B @ u
        assert out[0] == pytest.approx(1.2 * bu[0] + u[0])
        assert out[-1] == pytest.approx(1.2 * bu[1] + u[-1])

    def test_factorize_solves(self):
        matrix = step_matrix(_coefficients(), 0.01, 1.0)
        rhs = np.linspace(-1.0, 1.0, GRID.size)
        np.testing.assert_allclose(matrix @ factorize(matrix)(rhs), rhs, atol=1e-10)

    def test_singular_matrix(self):
        with pytest.raises(LinearSolveError):
            factorize(sp.csc_matrix((4, 4)))
