"""Rate-independent memory operators W acting on sampled inputs.

Operators:
- generalized play: output projected into the band [x - r, x + r]
- Preisach: weighted sum of bistable relays (finite relay set); grid
  relays switch along a ramp one threshold spacing wide, which makes the
  sum Lipschitz, explicit relays switch sharply
- scaled identity: gain*x + offset, the memoryless reference operator

Each operator is driven through a small state object with update(x) and
copy(); trial evaluations work on copies so committed memory is never
touched until the caller decides.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from thermomem.core.logger import numerics_logger
from thermomem.models.models import MemoryOperatorSpec, PreisachGridSpec, RelaySpec
from thermomem.numerics.grid import TimeSeries, check_same_grid

__all__ = [
    "MemoryOperatorSpec",
    "RelaySpec",
    "PreisachGridSpec",
    "PlayState",
    "Relay",
    "PreisachState",
    "ScaledIdentityState",
    "make_state",
    "relay_arrays",
    "w_apply",
    "w_apply_prefix",
    "lipschitz_probe",
    "declared_lipschitz",
]


class HysteresisState(Protocol):
    output: float

    def update(self, x: float) -> float: ...

    def copy(self) -> HysteresisState: ...


@dataclass
class PlayState:
    """Generalized play memory: half-width r and last output w."""

    half_width: float
    output: float

    def update(self, x: float) -> float:
        self.output = min(max(self.output, x - self.half_width), x + self.half_width)
        return self.output

    def copy(self) -> PlayState:
        return replace(self)


@dataclass
class Relay:
    """Single relay with closed switching thresholds low < high.

    Not a valid W on its own (discontinuous); used inside Preisach sums.
    """

    low: float
    high: float
    state: int = -1

    def update(self, x: float) -> int:
        if x >= self.high:
            self.state = 1
        elif x <= self.low:
            self.state = -1
        return self.state

    @property
    def output(self) -> float:
        return float(self.state)

    def copy(self) -> Relay:
        return replace(self)


def _ramp_bounds(x: float, low: np.ndarray, high: np.ndarray, ramp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Admissible state interval of ramped relays at input x.

    The lower curve climbs from -1 to 1 on [high - ramp, high], the upper
    one on [low, low + ramp]; both have slope 2/ramp.
    """
    lower = np.clip(-1.0 + 2.0 * (x - high + ramp) / ramp, -1.0, 1.0)
    upper = np.clip(-1.0 + 2.0 * (x - low) / ramp, -1.0, 1.0)
    return lower, upper


class PreisachState:
    """Vectorized relay set; output = sum(weight * state).

    Relays with ramp 0 jump between -1 and 1 at their thresholds. A relay
    with ramp > 0 is a play between two ramp curves: its state is projected
    into [lower(x), upper(x)] at every node and takes values in [-1, 1].
    """

    def __init__(
        self, low: np.ndarray, high: np.ndarray, weight: np.ndarray, state: np.ndarray, ramp: np.ndarray
    ):
        self.low = low
        self.high = high
        self.weight = weight
        self.ramp = ramp
        self.state = state.astype(float)
        self._sharp = ramp == 0.0
        self._ramped = ~self._sharp
        self.output = float(self.weight @ self.state)

    @property
    def total_mass(self) -> float:
        return float(self.weight.sum())

    def update(self, x: float) -> float:
        sharp = self._sharp
        self.state[sharp & (x >= self.high)] = 1.0
        self.state[sharp & (x <= self.low)] = -1.0
        if self._ramped.any():
            r = self._ramped
            lower, upper = _ramp_bounds(x, self.low[r], self.high[r], self.ramp[r])
            self.state[r] = np.clip(self.state[r], lower, upper)
        self.output = float(self.weight @ self.state)
        return self.output

    def copy(self) -> PreisachState:
        return PreisachState(self.low, self.high, self.weight, self.state.copy(), self.ramp)


@dataclass
class ScaledIdentityState:
    gain: float
    offset: float
    output: float = 0.0

    def update(self, x: float) -> float:
        self.output = self.gain * x + self.offset
        return self.output

    def copy(self) -> ScaledIdentityState:
        return replace(self)


# ============================================================================
# Construction
# ============================================================================

def relay_arrays(spec: MemoryOperatorSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Expand explicit relays and the optional threshold grid.

    Returns:
        (low, high, weight, state, ramp) arrays; state is NaN where the
        relay state is to be set from the initial input, ramp is 0 for
        explicit relays and the grid spacing for grid relays
    """
    low, high, weight, state, ramp = [], [], [], [], []
    for relay in spec.relays:
        low.append(relay.low)
        high.append(relay.high)
        weight.append(relay.weight)
        state.append(np.nan if relay.state is None else float(relay.state))
        ramp.append(0.0)
    if spec.preisach_grid is not None:
        g = spec.preisach_grid
        alphas = np.linspace(g.low, g.high, g.levels)
        i, j = np.triu_indices(g.levels, k=1)
        low.extend(alphas[i])
        high.extend(alphas[j])
        weight.extend(np.full(i.size, g.total_mass / i.size))
        state.extend(np.full(i.size, np.nan))
        ramp.extend(np.full(i.size, (g.high - g.low) / (g.levels - 1)))
    return np.array(low), np.array(high), np.array(weight), np.array(state), np.array(ramp)


def make_state(spec: MemoryOperatorSpec, x0: float) -> HysteresisState:
    """Build the private memory state for an input starting at x0.

    Play without an initial value starts centered (w0 = x0); an explicit
    w0 outside [x0 - r, x0 + r] is clamped with a warning. Undetermined
    sharp relay states are +1 when x0 >= high, else -1; undetermined ramped
    relays start on their lower curve. The scaled identity's initial value,
    when given, fixes the offset so that W(x)(0) = initial.
    """
    if spec.kind == "play":
        r = spec.half_width
        w0 = x0 if spec.initial is None else spec.initial
        clamped = min(max(w0, x0 - r), x0 + r)
        if clamped != w0:
            numerics_logger.warning(
                f"Play initial output {w0} inconsistent with input {x0} and r={r}; clamped to {clamped}"
            )
        return PlayState(half_width=r, output=clamped)
    if spec.kind == "preisach":
        low, high, weight, state, ramp = relay_arrays(spec)
        sharp = np.isnan(state) & (ramp == 0.0)
        state[sharp] = np.where(x0 >= high[sharp], 1.0, -1.0)
        ramped = np.isnan(state)
        state[ramped] = _ramp_bounds(x0, low[ramped], high[ramped], ramp[ramped])[0]
        return PreisachState(low, high, weight, state, ramp)
    offset = 0.0 if spec.initial is None else spec.initial - spec.gain * x0
    return ScaledIdentityState(gain=spec.gain, offset=offset, output=spec.gain * x0 + offset)


# ============================================================================
# Evaluation
# ============================================================================

def w_apply(spec: MemoryOperatorSpec, x: TimeSeries) -> TimeSeries:
    """Evaluate W over the whole sampled input (fresh private state)."""
    values = x.values
    state = make_state(spec, float(values[0]))
    out = np.fromiter((state.update(float(v)) for v in values), dtype=float, count=values.size)
    return x.with_values(out)


def w_apply_prefix(spec: MemoryOperatorSpec, x: TimeSeries, m: int) -> TimeSeries:
    """W applied to the input truncated after node m."""
    if not 0 <= m <= x.grid.steps:
        raise IndexError(f"prefix index {m} outside 0..{x.grid.steps}")
    return w_apply(spec, x.prefix(m))


def lipschitz_probe(spec: MemoryOperatorSpec, x1: TimeSeries, x2: TimeSeries) -> float:
    """Sup-norm ratio ||W(x1) - W(x2)|| / ||x1 - x2|| (0 for identical inputs)."""
    check_same_grid(x1, x2, "Lipschitz ratio inputs")
    denominator = float(np.max(np.abs(x1.values - x2.values)))
    if denominator == 0.0:
        return 0.0
    numerator = float(np.max(np.abs(w_apply(spec, x1).values - w_apply(spec, x2).values)))
    return numerator / denominator


def declared_lipschitz(spec: MemoryOperatorSpec) -> float:
    """Sup-norm Lipschitz constant of the operator.

    A ramped relay moves its state by at most 2/ramp per unit of input, so
    a Preisach sum is bounded by sum(2*weight/ramp). Sharp relays with
    positive weight make the sum discontinuous and the constant infinite.
    """
    if spec.kind == "play":
        return 1.0
    if spec.kind == "scaled_identity":
        return abs(spec.gain)
    _, _, weight, _, ramp = relay_arrays(spec)
    if np.any((ramp == 0.0) & (weight > 0.0)):
        return float("inf")
    return float(np.sum(2.0 * weight / np.where(ramp > 0.0, ramp, 1.0)))
