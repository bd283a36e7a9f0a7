"""Exception hierarchy shared by the numerics, solvers and runner.

Every error carries the process exit code the runner maps it to:
- 2: invalid run configuration
- 3: solver error (degenerate data, divergence, failed linear solve)
- 4: invariant failure in verify mode
"""


class ThermoMemError(Exception):
    """Base class for all thermomem errors."""

    exit_code = 3


class ConfigError(ThermoMemError, ValueError):
    """Run configuration is missing, malformed or inconsistent."""

    exit_code = 2


class GridMismatchError(ThermoMemError, ValueError):
    """Two sampled objects do not live on the same grid."""


class CoefficientError(ThermoMemError, ValueError):
    """Diffusivity or boundary coefficients violate their sign conditions."""


class MeasurementWeightsError(ThermoMemError, ValueError):
    """Observation weight omega does not vanish to second order at the boundary."""


class FeedbackDataError(ThermoMemError, ValueError):
    """Thermostat data lacks the derivatives required by the requested mode."""


class SeriesTooShort(ThermoMemError, ValueError):
    """Series has too few samples for the requested smoothing window."""


class ChiSingular(ThermoMemError):
    """Phi(A u0) vanishes: the kernel is not identifiable from the measurement."""

    def __init__(self, value: float, tol: float):
        self.value = value
        self.tol = tol
        super().__init__(
            f"chi_nondegenerate violated: |Phi(A u0)| = {abs(value):.3e} <= tol_chi = {tol:.1e}.\n"
            "  The observation weight sees no diffusion of the initial state,\n"
            "  so the kernel cannot be recovered. Change u0 or omega."
        )


class VolterraSingular(ThermoMemError):
    """Second-kind diagonal 1 + weight*a is numerically zero at a node."""

    def __init__(self, node: int | None, denominator: float):
        self.node = node
        self.denominator = denominator
        where = f"node {node}" if node is not None else "unknown node"
        super().__init__(
            f"Volterra diagonal vanishes at {where}: |1 + weight*a| = {abs(denominator):.3e}.\n"
            "  Reduce dt or check (psi1, v0)."
        )


class PicardDiverged(ThermoMemError):
    """Fixed-point iteration did not reach tolerance within the iteration limit."""

    def __init__(self, step: int, residuals: list[float], solver: str = "inverse"):
        self.step = step
        self.residuals = list(residuals[-2:])
        self.solver = solver
        tail = ", ".join(f"{r:.3e}" for r in self.residuals)
        super().__init__(
            f"{solver} fixed point did not converge at step {step}; last residuals: [{tail}]"
        )


class LinearSolveError(ThermoMemError):
    """Sparse factorization or back-substitution failed."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message if step is None else f"{message} (step {step})")


class CompatibilityError(ThermoMemError):
    """Strict mode found data violating the compatibility conditions."""

    def __init__(self, conditions: dict[str, float], tol: float):
        self.conditions = dict(conditions)
        self.tol = tol
        listing = "\n".join(f"  {name}: residual {value:.3e}" for name, value in conditions.items())
        super().__init__(
            f"Compatibility conditions violated (tol_compat = {tol:.3e}):\n{listing}\n"
            "  The differentiated system is not equivalent to the original; aborting."
        )


class VerificationFailed(ThermoMemError):
    """One or more checks of the invariant battery failed."""

    exit_code = 4

    def __init__(self, failed: list[str]):
        self.failed = list(failed)
        super().__init__(f"{len(failed)} invariant check(s) failed: {', '.join(failed)}")
