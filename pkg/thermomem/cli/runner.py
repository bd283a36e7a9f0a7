"""Command-line runner.

This module drives one run from a JSON config:
- Loads the document, expands its preset and applies CLI overrides
- Binds a run id (per-run log file, closed at the end and listed in report.json)
- Dispatches on mode: forward, invert, roundtrip, verify, bench
- Writes CSV artifacts, report.json and metrics.prom to the output directory
- Maps errors to exit codes (2 config, 3 solver or unexpected, 4 verify)
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from pydantic import ValidationError

from thermomem.cli.bench import run_bench
from thermomem.cli.verify import run_verify
from thermomem.core.config import METRICS_FILE, REPORT_FILE, get_output_dir
from thermomem.core.context import run_scope
from thermomem.core.errors import ConfigError, ThermoMemError, VerificationFailed
from thermomem.core.logger import cli_logger, finish_run_log, run_log_path
from thermomem.core.metrics import RUN_DURATION_HISTOGRAM, RUN_STATUS_COUNTER, SOLVER_ERROR_COUNTER, write_metrics
from thermomem.models.models import RunConfig, RunReport
from thermomem.presets.factory import (
    build_forward_problem,
    build_grids,
    build_inverse_problem,
    build_kernel,
    measurement_from_config,
    resolve_flux,
)
from thermomem.presets.registry import resolve_preset
from thermomem.solvers.forward_solver import emit_measurement, forward_solve
from thermomem.solvers.inverse_solver import InverseSolution, relative_l2, solve_inverse
from thermomem.solvers.roundtrip import convergence_study, roundtrip
from thermomem.utils.utils import inject_noise, save_field, save_series

MODES = ("forward", "invert", "roundtrip", "verify", "bench")


# ============================================================================
# CONFIG LOADING
# ============================================================================

def load_config(path: str | Path, mode: str | None = None, strict: bool = False) -> tuple[RunConfig, Path]:
    """Read, expand and validate a run config.

    Args:
        path: JSON config file
        mode: Overrides the document's mode when given
        strict: Forces controls.strict

    Returns:
        (RunConfig, directory of the config file for relative CSV paths)

    Raises:
        ConfigError: Missing file, invalid JSON, unknown preset or schema violation
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")

    document = resolve_preset(document)
    if mode is not None:
        document["mode"] = mode
    if strict:
        document.setdefault("controls", {})["strict"] = True

    try:
        cfg = RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"Invalid run config {path}:\n{e}") from e
    return cfg, path.resolve().parent


# ============================================================================
# MODE HANDLERS
# ============================================================================

def _record_solution(report: RunReport, solution: InverseSolution, out: Path) -> None:
    report.solvers["inverse"] = solution.report
    report.compatibility = solution.compatibility
    report.residuals = solution.residuals
    report.warnings.extend(solution.report.warnings)
    report.artifacts += [
        str(save_series(solution.h, out / "h.csv")),
        str(save_field(solution.u, out / "u.csv")),
        str(save_field(solution.v, out / "v.csv")),
    ]


def _forward(cfg: RunConfig, report: RunReport, out: Path, base_dir: Path) -> None:
    tgrid, sgrid = build_grids(cfg.grid)
    resolution = resolve_flux(cfg, tgrid, sgrid, base_dir)
    if resolution is not None:
        report.resolved["flux"] = resolution.as_dict()
    problem = build_forward_problem(cfg, tgrid, sgrid, resolution, base_dir)
    result = forward_solve(problem, cfg.controls)
    report.solvers["forward"] = result.report
    report.artifacts += [
        str(save_series(problem.h, out / "h.csv")),
        str(save_field(result.u, out / "u.csv")),
        str(save_series(emit_measurement(result.u, problem.weights), out / "g.csv")),
    ]


def _invert(cfg: RunConfig, report: RunReport, out: Path, base_dir: Path) -> None:
    tgrid, sgrid = build_grids(cfg.grid)
    g, dg, ddg = measurement_from_config(cfg, tgrid, base_dir)
    if cfg.noise.amplitude > 0 or cfg.noise.offset != 0:
        g = inject_noise(g, cfg.noise.amplitude, cfg.noise.seed, cfg.noise.offset)
        dg = ddg = None
    resolution = resolve_flux(cfg, tgrid, sgrid, base_dir)
    if resolution is not None:
        report.resolved["flux"] = resolution.as_dict()

    problem = build_inverse_problem(cfg, tgrid, sgrid, g, dg, ddg, resolution, base_dir)
    solution = solve_inverse(problem, cfg.controls)
    _record_solution(report, solution, out)
    report.artifacts.append(str(save_series(g, out / "g.csv")))
    if cfg.kernel is not None:
        report.resolved["rel_l2_h"] = relative_l2(solution.h, build_kernel(cfg.kernel, tgrid, base_dir))


def _roundtrip(cfg: RunConfig, report: RunReport, out: Path, base_dir: Path) -> None:
    outcome = roundtrip(cfg, cfg.grid.steps, cfg.grid.cells, base_dir)
    if outcome.resolution is not None:
        report.resolved["flux"] = outcome.resolution.as_dict()
    report.solvers["forward"] = outcome.forward.report
    _record_solution(report, outcome.solution, out)
    report.artifacts.append(str(save_series(outcome.g, out / "g.csv")))
    report.errors = outcome.errors
    if cfg.roundtrip.convergence_levels:
        report.convergence = convergence_study(cfg, cfg.roundtrip.convergence_levels, base_dir)


def _verify(cfg: RunConfig, report: RunReport, out: Path, base_dir: Path) -> None:
    report.checks = run_verify(cfg, base_dir)
    failed = [f"{c.suite}/{c.name}" for c in report.checks if not c.passed]
    passed = len(report.checks) - len(failed)
    print(f"verify: {passed}/{len(report.checks)} checks passed")
    for check in report.checks:
        print(f"  [{'PASS' if check.passed else 'FAIL'}] {check.suite}/{check.name} {check.detail}".rstrip())
    if failed:
        raise VerificationFailed(failed)


def _bench(cfg: RunConfig, report: RunReport, out: Path, base_dir: Path) -> None:
    report.bench = run_bench(cfg, base_dir)


HANDLERS = {
    "forward": _forward,
    "invert": _invert,
    "roundtrip": _roundtrip,
    "verify": _verify,
    "bench": _bench,
}


# ============================================================================
# ENTRY POINTS
# ============================================================================

def run(config_path: str | Path, out_dir: str | Path | None = None, mode: str | None = None, strict: bool = False) -> int:
    """Execute one run and return its exit code.

    Args:
        config_path: JSON config file
        out_dir: Output directory (overrides config.output_dir)
        mode: Mode override
        strict: Abort on any compatibility violation

    Returns:
        int: 0 success, 2 config error, 3 solver error, 4 verify failure

    Example:
        >>> run("configs/exp_kernel.json", out_dir="runs/exp")
        0
    """
    with run_scope() as run_id:
        started = time.perf_counter()
        try:
            cfg, base_dir = load_config(config_path, mode, strict)
        except ConfigError as e:
            cli_logger.error(f"Config error: {e}")
            RUN_STATUS_COUNTER.labels(mode=mode or "unknown", code=str(e.exit_code)).inc()
            finish_run_log(run_id)
            return e.exit_code

        out = Path(out_dir or cfg.output_dir or get_output_dir() / run_id)
        out.mkdir(parents=True, exist_ok=True)
        cli_logger.info(f"Run {run_id}: mode={cfg.mode}, output={out}")

        report = RunReport(run_id=run_id, mode=cfg.mode, config=cfg.model_dump(mode="json"))
        try:
            HANDLERS[cfg.mode](cfg, report, out, base_dir)
        except VerificationFailed as e:
            cli_logger.error(str(e))
            report.exit_code, report.error_message = e.exit_code, str(e)
        except ThermoMemError as e:
            cli_logger.error(f"{type(e).__name__}: {e}", exc_info=True)
            report.exit_code, report.error_message = e.exit_code, f"{type(e).__name__}: {e}"
        except Exception as e:
            cli_logger.error(f"Unexpected {type(e).__name__}: {e}", exc_info=True)
            SOLVER_ERROR_COUNTER.labels(error_type=type(e).__name__).inc()
            report.exit_code, report.error_message = ThermoMemError.exit_code, f"{type(e).__name__}: {e}"
        finally:
            report.wall_time = time.perf_counter() - started
            report_path = out / REPORT_FILE
            report.artifacts += [str(report_path), str(run_log_path(run_id))]
            report_path.write_text(report.model_dump_json(indent=2))
            RUN_STATUS_COUNTER.labels(mode=cfg.mode, code=str(report.exit_code)).inc()
            RUN_DURATION_HISTOGRAM.labels(mode=cfg.mode).observe(report.wall_time)
            write_metrics(out / METRICS_FILE)
            cli_logger.info(f"Run {run_id} finished with exit code {report.exit_code} in {report.wall_time:.2f}s")
            finish_run_log(run_id)
        return report.exit_code


def _parse_args(argv: list[str] | None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="thermomem",
        description="Forward and inverse solvers for heat conduction with memory and hysteretic thermostat feedback.",
    )
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="Output directory for artifacts and report.json")
    parser.add_argument("--mode", choices=MODES, default=None, help="Override the config's mode")
    parser.add_argument("--strict", action="store_true", help="Abort on any compatibility violation")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    return run(args.config, out_dir=args.out, mode=args.mode, strict=args.strict)
