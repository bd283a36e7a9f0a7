"""Evaluation of function specifications on grid nodes.

Time kinds (variable t):
    const [c]                       c
    poly  [c0, c1, ...]             sum c_k t^k
    sin   [amp, freq, phase, off]   amp*sin(freq*t + phase) + off
    exp   [amp, rate, off]          amp*exp(-rate*t) + off
    csv                             linear interpolation of (t, value) samples

Space kinds (variable x on [0, 1]):
    const, poly                     as above
    sin   [amp, k]                  amp*sin(k*pi*x)
    cos   [amp, k]                  amp*cos(k*pi*x)
    bump  [amp]                     amp*x^2*(1-x)^2
    csv                             linear interpolation of (x, value) samples

Derivatives of any order are exact for closed-form kinds; a spec holding a
csv term has no analytic derivative and evaluates to None for order > 0.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as P

from thermomem.core.errors import ConfigError
from thermomem.models.models import FunctionSpec, FunctionTerm
from thermomem.utils.utils import load_samples

TIME_KINDS = ("const", "poly", "sin", "exp", "csv")
SPACE_KINDS = ("const", "poly", "sin", "cos", "bump", "csv")

_BUMP = (0.0, 0.0, 1.0, -2.0, 1.0)  # x^2 - 2x^3 + x^4


def _params(term: FunctionTerm, defaults: tuple[float, ...], required: int) -> list[float]:
    if len(term.params) < required or len(term.params) > len(defaults):
        raise ConfigError(
            f"Function kind '{term.kind}' takes {required}..{len(defaults)} parameters, "
            f"got {term.params}"
        )
    return list(term.params) + list(defaults[len(term.params):])


def _poly(coeffs, nodes: np.ndarray, order: int) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if order:
        c = P.polyder(c, order) if c.size > order else np.zeros(1)
    return P.polyval(nodes, c) * np.ones_like(nodes)


def _csv(term: FunctionTerm, nodes: np.ndarray, base_dir: Path | None) -> np.ndarray:
    path = Path(term.path)
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    xs, ys = load_samples(path)
    if nodes[0] < xs[0] - 1e-12 or nodes[-1] > xs[-1] + 1e-12:
        raise ConfigError(
            f"Samples in {path} cover [{xs[0]}, {xs[-1]}], grid needs [{nodes[0]}, {nodes[-1]}]"
        )
    return np.interp(nodes, xs, ys)


def _time_term(term: FunctionTerm, t: np.ndarray, order: int, base_dir: Path | None) -> np.ndarray | None:
    kind = term.kind
    if kind == "const":
        (c,) = _params(term, (0.0,), 1)
        return np.full_like(t, c if order == 0 else 0.0)
    if kind == "poly":
        return _poly(term.params or [0.0], t, order)
    if kind == "sin":
        amp, freq, phase, off = _params(term, (1.0, 1.0, 0.0, 0.0), 1)
        values = amp * freq**order * np.sin(freq * t + phase + order * np.pi / 2)
        return values + (off if order == 0 else 0.0)
    if kind == "exp":
        amp, rate, off = _params(term, (1.0, 1.0, 0.0), 1)
        values = amp * (-rate) ** order * np.exp(-rate * t)
        return values + (off if order == 0 else 0.0)
    if kind == "csv":
        return _csv(term, t, base_dir) if order == 0 else None
    raise ConfigError(f"Unknown time function kind '{kind}'. Valid kinds: {', '.join(TIME_KINDS)}")


def _space_term(term: FunctionTerm, x: np.ndarray, order: int, base_dir: Path | None) -> np.ndarray | None:
    kind = term.kind
    if kind == "const":
        (c,) = _params(term, (0.0,), 1)
        return np.full_like(x, c if order == 0 else 0.0)
    if kind == "poly":
        return _poly(term.params or [0.0], x, order)
    if kind in ("sin", "cos"):
        amp, k = _params(term, (1.0, 1.0), 1)
        shift = 0.0 if kind == "sin" else np.pi / 2
        w = k * np.pi
        return amp * w**order * np.sin(w * x + shift + order * np.pi / 2)
    if kind == "bump":
        (amp,) = _params(term, (1.0,), 0)
        return amp * _poly(_BUMP, x, order)
    if kind == "csv":
        return _csv(term, x, base_dir) if order == 0 else None
    raise ConfigError(f"Unknown space function kind '{kind}'. Valid kinds: {', '.join(SPACE_KINDS)}")


def _evaluate(spec: FunctionSpec, nodes: np.ndarray, order: int, base_dir: Path | None, term_fn) -> np.ndarray | None:
    total = np.zeros_like(nodes, dtype=float)
    for term in spec.terms:
        values = term_fn(term, nodes, order, base_dir)
        if values is None:
            return None
        total = total + values
    return total


def eval_time(spec: FunctionSpec, t: np.ndarray, order: int = 0, base_dir: Path | None = None) -> np.ndarray | None:
    """Values (order 0) or exact derivatives of a time function at the nodes t."""
    return _evaluate(spec, np.asarray(t, dtype=float), order, base_dir, _time_term)


def eval_space(spec: FunctionSpec, x: np.ndarray, order: int = 0, base_dir: Path | None = None) -> np.ndarray | None:
    """Values (order 0) or exact derivatives of a space function at the nodes x."""
    return _evaluate(spec, np.asarray(x, dtype=float), order, base_dir, _space_term)
