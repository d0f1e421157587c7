"""
Tests for the Distribution Optimizer
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.dist import harmonic, pow2
from src.errors import CapExceededError, UnknownStrategyError
from src.optimize import (
    OptimizerSettings,
    OptimizeReport,
    compare_strategies,
    equal_mass_point,
    expected_value,
    optimize_full_simplex,
    optimize_interval_weights,
)


def _best_iterate(report):
    return min(point.objective for point in report.trace[1:])


class TestOptimizerSettings:
    """Test settings validation."""

    def test_defaults(self):
        settings = OptimizerSettings()
        assert settings.iters == 200
        assert settings.eta0 == 0.5
        assert settings.mu1_floor == 1e-9

    @pytest.mark.parametrize("kwargs", [
        {"iters": -1},
        {"eta0": 0.0},
        {"fd_step": -1e-4},
        {"mu1_floor": 0.0},
        {"patience": 0},
        {"coords_per_iter": 0},
        {"workers": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            OptimizerSettings(**kwargs)


class TestExpectedValue:
    """Test the optimizer objective."""

    def test_matches_hitting_profile(self):
        assert expected_value(4, pow2(4).weights) == pytest.approx(2.625, abs=1e-12)
        assert expected_value(4, harmonic(4).weights) == pytest.approx(2.906566, abs=1e-6)

    def test_equal_mass_point(self):
        assert equal_mass_point(1).tolist() == [1.0]
        assert equal_mass_point(4).tolist() == [0.5, 0.5, 0.0]
        assert equal_mass_point(16) == pytest.approx([0.25, 0.25, 0.25, 0.25, 0.0])


class TestFullSimplex:
    """Test the exponentiated-gradient search over all of [1, n]."""

    def test_single_point(self):
        report = optimize_full_simplex(1, iters=10)
        assert report.best_value == pytest.approx(1.0)
        assert report.best_dist.weights.tolist() == [1.0]

    def test_two_points(self):
        report = optimize_full_simplex(2, iters=50)
        assert report.best_dist.weights[0] >= 0.99
        assert report.best_value == pytest.approx(1.5, rel=0.01)

    def test_search_beats_baselines_small(self):
        report = optimize_full_simplex(64, iters=20, seed=1)
        assert set(report.baseline_values) == {"harmonic", "pow2", "uniform"}
        named_best = min(report.baseline_values["harmonic"], report.baseline_values["pow2"])
        assert _best_iterate(report) < named_best
        assert report.best_value <= _best_iterate(report)

    @pytest.mark.slow
    def test_search_beats_baselines_sampled_coordinates(self):
        report = optimize_full_simplex(256, iters=3, seed=2)
        named_best = min(report.baseline_values["harmonic"], report.baseline_values["pow2"])
        assert _best_iterate(report) < named_best

    def test_best_value_matches_best_dist(self):
        report = optimize_full_simplex(32, iters=5, seed=0)
        assert expected_value(32, report.best_dist.weights) == pytest.approx(report.best_value, rel=1e-9)

    def test_trace_best_never_increases(self):
        report = optimize_full_simplex(32, iters=15, seed=0)
        bests = [point.best for point in report.trace]
        assert all(b <= a for a, b in zip(bests, bests[1:]))
        assert report.trace[0].iteration == 0
        assert len(report.trace) == report.iterations + 1

    def test_seeded_runs_are_deterministic(self):
        settings = OptimizerSettings(coords_per_iter=4)
        first = optimize_full_simplex(16, iters=5, seed=11, settings=settings)
        second = optimize_full_simplex(16, iters=5, seed=11, settings=settings)
        assert np.array_equal(first.best_dist.weights, second.best_dist.weights)
        assert first.trace == second.trace

    def test_worker_pool_gives_same_result(self):
        single = optimize_full_simplex(16, iters=3, seed=4, settings=OptimizerSettings(workers=1))
        pooled = optimize_full_simplex(16, iters=3, seed=4, settings=OptimizerSettings(workers=2))
        assert np.array_equal(single.best_dist.weights, pooled.best_dist.weights)
        assert single.best_value == pooled.best_value

    def test_caller_settings_untouched(self):
        settings = OptimizerSettings(iters=7)
        optimize_full_simplex(4, iters=2, settings=settings)
        assert settings.iters == 7

    def test_cap(self):
        with pytest.raises(CapExceededError):
            optimize_full_simplex(5000, iters=1)

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            optimize_full_simplex(0, iters=1)

    def test_report_dict(self):
        report = optimize_full_simplex(8, iters=2)
        assert isinstance(report, OptimizeReport)
        data = report.to_dict()
        assert data["family"] == "full"
        assert data["n"] == 8
        assert data["settings"]["iters"] == 2
        assert len(data["best_weights"]) == 8
        assert set(report.trace_rows()[0]) == set(OptimizeReport.CSV_FIELDS)


class TestIntervalWeights:
    """Test the search over the power-of-two interval family."""

    def test_zero_iterations_returns_equal_mass(self):
        report = optimize_interval_weights(4, iters=0)
        assert report.best_value == pytest.approx(2.625, abs=1e-12)
        assert report.best_dist.weights.tolist() == [0.5, 0.5, 0.0, 0.0]

    def test_stays_on_powers_of_two(self):
        report = optimize_interval_weights(64, iters=5)
        support = np.nonzero(report.best_dist.weights)[0] + 1
        assert set(support.tolist()) <= {1, 2, 4, 8, 16, 32, 64}

    def test_equal_mass_reported(self):
        report = optimize_interval_weights(16, iters=2)
        assert report.baseline_values["equal_mass"] == pytest.approx(report.baseline_values["pow2"])

    def test_improves_on_equal_mass(self):
        report = optimize_interval_weights(1024, iters=10)
        equal = report.baseline_values["equal_mass"]
        assert report.best_value < equal
        assert report.best_value >= 0.75 * equal


class TestCompareStrategies:
    """Test the strategy comparison table."""

    def test_small_table(self):
        rows = compare_strategies(4, ["harmonic", "pow2"])
        assert [row.name for row in rows] == ["harmonic", "pow2"]
        assert rows[0].e_value == pytest.approx(2.906566, abs=1e-6)
        assert rows[1].e_value == pytest.approx(2.625, abs=1e-12)
        assert rows[1].upper_bound == pytest.approx(10.0)
        assert all(row.lower_bound <= row.e_value for row in rows)

    def test_single_point(self):
        rows = compare_strategies(1, ["harmonic", "pow2", "uniform", "adversarial"])
        assert [row.e_value for row in rows] == pytest.approx([1.0] * 4)

    def test_unknown_strategy(self):
        with pytest.raises(UnknownStrategyError):
            compare_strategies(8, ["harmonic", "zipf"])

    def test_row_fields(self):
        row = compare_strategies(2, ["uniform"])[0]
        assert list(row.to_row()) == ["name", "e_value", "upper_bound", "lower_bound"]
