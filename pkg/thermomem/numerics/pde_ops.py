"""Discrete elliptic operators, boundary operator and measurement functionals.

A = D_x(a D_x) uses the conservative three-point stencil inside the domain
and second-order one-sided stencils of a*u'' + a'*u' at the endpoints.
B = b1*D_x + b0 uses the second-order one-sided derivative. Both are
assembled once per coefficient set as sparse matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.sparse.linalg import splu

from thermomem.core.config import OMEGA_EDGE_FACTOR
from thermomem.core.errors import CoefficientError, LinearSolveError, MeasurementWeightsError
from thermomem.numerics.grid import Boundary, SpaceField, SpaceGrid

# One-sided second-order stencils at x=0 (mirrored with sign flips at x=1)
_D1_LEFT = np.array([-3.0, 4.0, -1.0]) / 2.0
_D2_LEFT = np.array([2.0, -5.0, 4.0, -1.0])


@dataclass(frozen=True, eq=False)
class Coefficients:
    """Diffusivity a(x) and Robin-type boundary coefficients."""

    a: SpaceField
    b1_left: float
    b1_right: float
    b0_left: float = 0.0
    b0_right: float = 0.0

    def __post_init__(self):
        if float(self.a.values.min()) <= 0.0:
            raise CoefficientError(
                f"Diffusivity must be positive, min(a) = {self.a.values.min():.3e}"
            )
        if self.b1_left == 0.0 or self.b1_right == 0.0:
            raise CoefficientError(
                "b1 must be nonzero at both endpoints (B needs a derivative part), "
                f"got ({self.b1_left}, {self.b1_right})"
            )

    @property
    def grid(self) -> SpaceGrid:
        return self.a.grid

    @cached_property
    def A(self) -> sp.csr_matrix:
        return assemble_A(self)

    @cached_property
    def B(self) -> sp.csr_matrix:
        return assemble_B(self)


@dataclass(frozen=True, eq=False)
class MeasurementWeights:
    """omega (observation Phi) and omega1, omega2 (feedback functional M)."""

    omega: SpaceField
    omega1: SpaceField
    omega2_left: float = 0.0
    omega2_right: float = 0.0


def assemble_A(c: Coefficients) -> sp.csr_matrix:
    """Sparse matrix of A on all M+1 nodes."""
    a = c.a.values
    m = c.grid.cells
    dx = c.grid.dx
    half = 0.5 * (a[:-1] + a[1:])  # a_{i+1/2}, i = 0..M-1

    rows, cols, vals = [], [], []
    for i in range(1, m):
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [half[i - 1] / dx**2, -(half[i - 1] + half[i]) / dx**2, half[i] / dx**2]

    da_left = float(_D1_LEFT @ a[:3]) / dx
    da_right = -float(_D1_LEFT @ a[-1:-4:-1]) / dx
    for node, idx, da, sign in ((0, np.arange(4), da_left, 1.0), (m, m - np.arange(4), da_right, -1.0)):
        second = a[node] * _D2_LEFT / dx**2
        first = np.zeros(4)
        first[:3] = sign * da * _D1_LEFT / dx
        rows += [node] * 4
        cols += list(idx)
        vals += list(second + first)

    return sp.csr_matrix((vals, (rows, cols)), shape=(m + 1, m + 1))


def assemble_B(c: Coefficients) -> sp.csr_matrix:
    """2 x (M+1) matrix; row 0 evaluates B at x=0, row 1 at x=1."""
    m = c.grid.cells
    dx = c.grid.dx
    left = c.b1_left * _D1_LEFT / dx
    right = -c.b1_right * _D1_LEFT / dx
    rows = [0, 0, 0, 1, 1, 1]
    cols = [0, 1, 2, m, m - 1, m - 2]
    vals = list(left) + list(right)
    vals[0] += c.b0_left
    vals[3] += c.b0_right
    return sp.csr_matrix((vals, (rows, cols)), shape=(2, m + 1))


def apply_A(c: Coefficients, u: SpaceField) -> SpaceField:
    """A u on all nodes (one-sided at the endpoints)."""
    return u.with_values(c.A @ u.values)


def apply_A_rows(c: Coefficients, values: np.ndarray) -> np.ndarray:
    """A applied to every row of an (N+1) x (M+1) array."""
    return np.asarray((c.A @ values.T).T)


def apply_B(c: Coefficients, u: SpaceField) -> Boundary[float]:
    """B u at (x=0, x=1); orientation comes from the sign of b1."""
    left, right = c.B @ u.values
    return Boundary(float(left), float(right))


def apply_B_rows(c: Coefficients, values: np.ndarray) -> np.ndarray:
    """B applied to every row; returns an (N+1) x 2 array (left, right)."""
    return np.asarray((c.B @ values.T).T)


# ============================================================================
# Measurement functionals
# ============================================================================

def measure_M(
    w: MeasurementWeights,
    u_interior: SpaceField,
    u_trace_left: float | None = None,
    u_trace_right: float | None = None,
) -> float:
    """Feedback sensor: trapezoid(omega1*u) + omega2 traces.

    Traces default to the endpoint values of the field.
    """
    left = u_interior.values[0] if u_trace_left is None else u_trace_left
    right = u_interior.values[-1] if u_trace_right is None else u_trace_right
    body = trapezoid(w.omega1.values * u_interior.values, dx=u_interior.grid.dx)
    return float(body + w.omega2_left * left + w.omega2_right * right)


def measure_M_rows(w: MeasurementWeights, values: np.ndarray) -> np.ndarray:
    body = trapezoid(values * w.omega1.values, dx=w.omega1.grid.dx, axis=-1)
    return body + w.omega2_left * values[..., 0] + w.omega2_right * values[..., -1]


def measure_Phi(w: MeasurementWeights, u: SpaceField) -> float:
    """Observation: trapezoid(omega*u)."""
    return float(trapezoid(w.omega.values * u.values, dx=u.grid.dx))


def measure_Phi_rows(w: MeasurementWeights, values: np.ndarray) -> np.ndarray:
    return trapezoid(values * w.omega.values, dx=w.omega.grid.dx, axis=-1)


def check_weights(w: MeasurementWeights) -> None:
    """Raise unless omega and its one-sided slope vanish at both endpoints.

    Raises:
        MeasurementWeightsError: Naming the offending endpoint
    """
    omega = w.omega.values
    dx = w.omega.grid.dx
    scale = float(np.abs(omega).max()) + 1.0
    slope_tol = OMEGA_EDGE_FACTOR * dx**2 * scale
    slopes = (float(_D1_LEFT @ omega[:3]) / dx, -float(_D1_LEFT @ omega[-1:-4:-1]) / dx)
    for side, value, slope in (("left", omega[0], slopes[0]), ("right", omega[-1], slopes[1])):
        if abs(value) > 1e-12 * scale:
            raise MeasurementWeightsError(
                f"omega must vanish at the {side} endpoint, got {value:.3e}"
            )
        if abs(slope) > slope_tol:
            raise MeasurementWeightsError(
                f"omega' must vanish at the {side} endpoint: one-sided slope {slope:.3e} "
                f"exceeds {slope_tol:.3e}"
            )


def assemble_psi1(c: Coefficients, w: MeasurementWeights, chi: float) -> SpaceField:
    """psi1 = chi * A omega (A is symmetric for real a)."""
    check_weights(w)
    return w.omega.with_values(chi * (c.A @ w.omega.values))


def adjoint_residual(c: Coefficients, w: MeasurementWeights, v: SpaceField) -> float:
    """|(omega, A v) - (A omega, v)| with trapezoid inner products."""
    dx = v.grid.dx
    lhs = trapezoid(w.omega.values * (c.A @ v.values), dx=dx)
    rhs = trapezoid((c.A @ w.omega.values) * v.values, dx=dx)
    return float(abs(lhs - rhs))


# ============================================================================
# Implicit step system shared by the forward and inverse solvers
# ============================================================================

def step_matrix(c: Coefficients, dt: float, kappa: float) -> sp.csc_matrix:
    """System matrix of one implicit step with the diagonal memory weight folded in.

    Interior rows: u - dt*kappa*A u. Boundary rows: kappa*B u + u.
    kappa = 1 + dt*h_0/2 carries the trapezoid endpoint of the memory term.
    """
    m = c.grid.cells
    interior = (sp.identity(m + 1, format="csr") - dt * kappa * c.A)[1:m]
    boundary = kappa * c.B
    edge = sp.csr_matrix(([1.0, 1.0], ([0, 1], [0, m])), shape=(2, m + 1))
    boundary = boundary + edge
    return sp.vstack([boundary[0], interior, boundary[1]], format="csc")


def factorize(matrix: sp.csc_matrix) -> Callable[[np.ndarray], np.ndarray]:
    """Sparse LU factorization; returns a solve callable.

    Raises:
        LinearSolveError: If the matrix is singular
    """
    try:
        lu = splu(matrix)
    except RuntimeError as e:
        raise LinearSolveError(f"Step matrix factorization failed: {e}") from e
    return lu.solve
