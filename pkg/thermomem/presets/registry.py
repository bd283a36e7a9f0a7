"""Named problem presets.

A preset is a partial RunConfig document. User configs name one with
``"preset": "<name>"`` and override any key; dictionaries are merged
recursively, every other value replaces the preset's.

Presets:
    exp_kernel         h(t) = exp(-t), play feedback, compatible flux
    zero_kernel        same data with h = 0
    noisy_exp_kernel   exp_kernel with noisy g and smoothed differentiation
    preisach_feedback  exp_kernel with a Preisach thermostat input
    stationary         u = x^2 for all t with h = 1 (exact discrete solution)
    manufactured       u = exp(-t) sin(pi x), h = 0, frozen feedback
    chi_singular       Phi(A u0) = 0 by symmetry
    biased_sensor      sensor offset breaking Phi(u0) = g(0), strict mode
"""

import copy
import math
from typing import Any

from thermomem.core.errors import ConfigError
from thermomem.core.logger import cli_logger


def merge_config(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Recursive dict merge; override wins, inputs are not modified."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


# ============================================================================
# PRESET DOCUMENTS
# ============================================================================

_EXP_KERNEL: dict[str, Any] = {
    "grid": {"t_end": 1.0, "steps": 400, "cells": 100},
    "coefficients": {"a": 1.0, "b1_left": -1.0, "b1_right": 1.0},
    "weights": {"omega": {"kind": "bump", "params": [1.0]}, "omega1": 1.0},
    "thermostat": {"eps": 0.5, "phi0": 0.0, "u_C": 0.0, "u_A": 0.5, "u_B": 1.0},
    "memory": {"kind": "play", "half_width": 0.1},
    "kernel": {"kind": "exp", "params": [1.0, 1.0]},
    # 1 + 0.2 cos(pi x) + 10 x (1 - x): Phi(A u0) = -2/3
    "u0": [
        {"kind": "const", "params": [1.0]},
        {"kind": "cos", "params": [0.2, 1.0]},
        {"kind": "poly", "params": [0.0, 10.0, -10.0]},
    ],
    "flux": {"mode": "compatible"},
    "roundtrip": {"refinement": 2},
}


PRESETS: dict[str, dict[str, Any]] = {
    "exp_kernel": _EXP_KERNEL,
    "zero_kernel": merge_config(_EXP_KERNEL, {"kernel": 0.0}),
    "noisy_exp_kernel": merge_config(
        _EXP_KERNEL,
        {"noise": {"amplitude": 1e-4, "seed": 7}, "controls": {"smoothing_window": 21}},
    ),
    "preisach_feedback": merge_config(
        _EXP_KERNEL,
        {
            "memory": {
                "kind": "preisach",
                "preisach_grid": {"low": 2.0, "high": 3.5, "levels": 4, "total_mass": 0.5},
            }
        },
    ),
    "stationary": {
        "grid": {"t_end": 1.0, "steps": 100, "cells": 20},
        "coefficients": {"a": 1.0, "b1_left": -1.0, "b1_right": 1.0},
        "thermostat": {"eps": 0.5, "u_A": 0.0, "u_B": 1.0},
        "memory": {"kind": "play", "half_width": 0.1},
        "kernel": 1.0,
        "u0": {"kind": "poly", "params": [0.0, 0.0, 1.0]},
        "source": {"terms": [{"time": {"kind": "poly", "params": [-2.0, -2.0]}, "space": 1.0}]},
        "flux": {"values": {"left": 1.0, "right": {"kind": "poly", "params": [-2.0, -2.0]}}},
        "roundtrip": {"refinement": 1},
    },
    "manufactured": {
        "grid": {"t_end": 1.0, "steps": 400, "cells": 100},
        "coefficients": {"a": 1.0, "b1_left": -1.0, "b1_right": 1.0},
        "thermostat": {"eps": 0.5, "u_A": 0.0, "u_B": 0.0},
        "memory": {"kind": "play", "half_width": 0.1},
        "kernel": 0.0,
        "u0": {"kind": "sin", "params": [1.0, 1.0]},
        "source": {
            "terms": [
                {
                    "time": {"kind": "exp", "params": [1.0, 1.0]},
                    "space": {"kind": "sin", "params": [math.pi**2 - 1.0, 1.0]},
                }
            ]
        },
        "flux": {"values": {"kind": "exp", "params": [math.pi, 1.0]}},
        "roundtrip": {"refinement": 2},
    },
    "chi_singular": merge_config(
        _EXP_KERNEL,
        {"u0": [{"kind": "const", "params": [1.0]}, {"kind": "cos", "params": [0.2, 1.0]}]},
    ),
    "biased_sensor": merge_config(
        _EXP_KERNEL,
        {"noise": {"offset": 0.5}, "controls": {"strict": True}},
    ),
}


def list_presets() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> dict[str, Any]:
    """Return a deep copy of a preset document.

    Raises:
        ConfigError: If the preset does not exist
    """
    if name not in PRESETS:
        raise ConfigError(
            f"Preset not found: '{name}'.\n"
            f"  Available presets: {', '.join(list_presets())}"
        )
    cli_logger.debug(f"Loading preset '{name}'")
    return copy.deepcopy(PRESETS[name])


def resolve_preset(document: dict[str, Any]) -> dict[str, Any]:
    """Expand ``document["preset"]`` (if any) and merge the document over it."""
    name = document.get("preset")
    if name is None:
        return copy.deepcopy(document)
    return merge_config(get_preset(name), document)
