"""Tests for the invariant battery."""

import pytest

from thermomem.cli import verify
from thermomem.cli.verify import SUITES, judge_equivalence, run_verify
from thermomem.core.errors import ConfigError
from thermomem.models.models import ResidualReport, RunConfig


def _cfg(*suites: str) -> RunConfig:
    return RunConfig.model_validate({"mode": "verify", "verify": {"suites": list(suites)}})


class TestRunVerify:
    """Tests for suite selection and failure handling."""

    @pytest.mark.parametrize("suite", ["convolution", "hysteresis", "pde_ops", "feedback"])
    def test_cheap_suites_pass(self, suite):
        results = run_verify(_cfg(suite))
        assert len(results) == len(SUITES[suite])
        failed = [(r.name, r.value, r.detail) for r in results if not r.passed]
        assert not failed

    def test_unknown_suite(self):
        with pytest.raises(ConfigError, match="available"):
            run_verify(_cfg("convolution", "nope"))

    def test_raising_check_recorded(self, monkeypatch):
        def _explodes(rng):
            raise RuntimeError("boom")

        monkeypatch.setitem(verify.SUITES, "convolution", [_explodes])
        (result,) = run_verify(_cfg("convolution"))
        assert not result.passed
        assert result.name == "explodes"
        assert result.detail == "boom"

    def test_seed_makes_runs_repeatable(self):
        a = run_verify(_cfg("convolution"))
        b = run_verify(_cfg("convolution"))
        assert [r.value for r in a] == [r.value for r in b]


def _report(value: float) -> ResidualReport:
    return ResidualReport(interior=value, boundary=value, measurement=value, derivative_identity=value)


class TestJudgeEquivalence:
    """Tests for the residual-versus-discretization-error acceptance rule."""

    def test_first_order_within_scale(self):
        scale, ratios, passed = judge_equivalence([_report(0.02), _report(0.01)], [0.004, 0.002])
        assert passed
        assert scale == pytest.approx(5.0)
        assert all(r == pytest.approx(2.0) for r in ratios.values())

    def test_residual_far_above_reference_fails(self):
        *_, passed = judge_equivalence([_report(0.2), _report(0.1)], [0.004, 0.002])
        assert not passed

    def test_mere_decrease_is_not_enough(self):
        """A ratio just above one is rejected; only first-order halving passes."""
        *_, passed = judge_equivalence([_report(0.012), _report(0.01)], [0.004, 0.002])
        assert not passed

    def test_superconvergence_outside_window_fails(self):
        *_, passed = judge_equivalence([_report(0.016), _report(0.004)], [0.004, 0.002])
        assert not passed

    def test_roundoff_residuals_skip_ratio(self):
        scale, ratios, passed = judge_equivalence([_report(1e-12), _report(3e-13)], [0.004, 0.002])
        assert passed
        assert set(ratios.values()) == {None}
        assert scale < 1e-8
