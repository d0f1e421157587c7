"""
Tests for Scale-Invariant Search on [0, 1]
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.chain import run_generator
from src.continuous import (
    ContinuousConfig,
    ContinuousRunStats,
    PrecisionRow,
    distance_trajectory,
    fit_scaling,
    precision_scaling,
    run_precision_row,
    sample_scale_invariant,
    scale_from_uniform,
    simulate_continuous,
)
from src.errors import AllCensoredError


class _FixedRng:
    """Generator stand-in that always returns the same uniform."""

    def __init__(self, value):
        self.value = value

    def random(self, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)


class TestScaleInvariantSizes:
    """Test the perturbation-size distribution."""

    def test_endpoints(self):
        assert scale_from_uniform(5.0, 0.0) == 1.0
        assert scale_from_uniform(5.0, 1.0) == pytest.approx(math.exp(-5.0))

    def test_array_input(self):
        sizes = scale_from_uniform(2.0, np.array([0.0, 0.5, 1.0]))
        assert sizes == pytest.approx([1.0, math.exp(-1.0), math.exp(-2.0)])

    def test_invalid_precision(self):
        with pytest.raises(ValueError):
            scale_from_uniform(0.0, 0.5)

    def test_median(self):
        sizes = sample_scale_invariant(6.0, np.random.default_rng(0), 100000)
        assert np.median(sizes) == pytest.approx(math.exp(-3.0), rel=0.02)

    def test_range(self):
        sizes = sample_scale_invariant(4.0, np.random.default_rng(1), 10000)
        assert np.all(sizes <= 1.0)
        assert np.all(sizes >= math.exp(-4.0))

    def test_mass_per_octave(self):
        draws = 100000
        sizes = sample_scale_invariant(5.0, np.random.default_rng(2), draws)
        fraction = np.mean((sizes >= 0.25) & (sizes <= 0.5))
        expected = math.log(2.0) / 5.0
        sigma = math.sqrt(expected * (1 - expected) / draws)
        assert abs(fraction - expected) <= 4 * sigma


class TestContinuousConfig:
    """Test search configuration."""

    def test_precision(self):
        assert ContinuousConfig(epsilon=math.exp(-3.0)).precision == pytest.approx(3.0)

    @pytest.mark.parametrize("kwargs", [
        {"epsilon": 0.0},
        {"epsilon": 1.0},
        {"epsilon": 0.01, "x0": 1.5},
        {"epsilon": 0.01, "max_steps": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ContinuousConfig(**kwargs)


class TestSingleSearch:
    """Test one search run."""

    def test_start_inside_target(self):
        cfg = ContinuousConfig(epsilon=0.01, x0=0.5)
        assert simulate_continuous(cfg, _FixedRng(0.5)) == ContinuousRunStats(0, 0, 0, True)

    def test_success(self):
        cfg = ContinuousConfig(epsilon=2.0 ** -8)
        stats = simulate_continuous(cfg, run_generator(0, 0))
        assert stats.succeeded
        assert stats.steps_to_success == stats.step_count_total
        assert 0 <= stats.halving_events <= stats.step_count_total

    def test_censored(self):
        cfg = ContinuousConfig(epsilon=2.0 ** -20, max_steps=1)
        stats = simulate_continuous(cfg, run_generator(8, 0))
        assert not stats.succeeded
        assert stats.steps_to_success is None
        assert stats.step_count_total == 1

    @pytest.mark.parametrize("run", range(5))
    def test_distance_never_increases(self, run):
        cfg = ContinuousConfig(epsilon=2.0 ** -10)
        distances = distance_trajectory(cfg, run_generator(21, run))
        stats = simulate_continuous(cfg, run_generator(21, run))
        assert len(distances) == stats.step_count_total + 1
        assert all(b <= a for a, b in zip(distances, distances[1:]))
        assert distances[-1] < 2 * cfg.epsilon

    def test_distance_never_increases_when_censored(self):
        cfg = ContinuousConfig(epsilon=2.0 ** -20, max_steps=40)
        distances = distance_trajectory(cfg, run_generator(5, 0))
        assert len(distances) == 41
        assert all(b <= a for a, b in zip(distances, distances[1:]))

    def test_reproducible(self):
        cfg = ContinuousConfig(epsilon=2.0 ** -10)
        assert simulate_continuous(cfg, run_generator(3, 4)) == simulate_continuous(cfg, run_generator(3, 4))

    def test_mean_below_bound(self):
        p = 5.0
        cfg = ContinuousConfig(epsilon=math.exp(-p))
        row = run_precision_row(cfg, runs=2000, row_seed=17)
        bound = (3.0 / math.log(2.0)) * p * math.log2(1.0 / cfg.epsilon)
        assert row.censored == 0
        assert row.mean_steps <= bound

    def test_all_censored(self):
        cfg = ContinuousConfig(epsilon=2.0 ** -20, max_steps=1)
        with pytest.raises(AllCensoredError):
            run_precision_row(cfg, runs=5, row_seed=0)


class TestPrecisionScaling:
    """Test the precision table and its fit."""

    EPS_LIST = [2.0 ** -k for k in range(5, 13)]

    def test_table(self):
        rows, fit = precision_scaling(self.EPS_LIST, runs=2000, seed=1)
        assert [row.epsilon for row in rows] == self.EPS_LIST
        # one coefficient c in mean ~ c ln(1/eps) log2(1/eps)
        assert fit.origin_max_relative_residual <= 0.25
        assert fit.max_relative_residual <= 0.25
        for a, b in zip(rows, rows[1:]):
            assert b.mean_steps >= a.mean_steps - 3 * (a.std_error + b.std_error)
        for row in rows:
            assert row.halving_rate >= math.log(2.0) / (4.0 * row.p)
            assert row.p == pytest.approx(-math.log(row.epsilon))

    def test_worker_invariance(self):
        eps = [2.0 ** -5, 2.0 ** -6]
        single, _ = precision_scaling(eps, runs=50, seed=3, workers=1)
        pooled, _ = precision_scaling(eps, runs=50, seed=3, workers=2)
        assert single == pooled

    @pytest.mark.parametrize("eps", [0.0, 0.25, 0.5])
    def test_invalid_epsilon(self, eps):
        with pytest.raises(ValueError):
            precision_scaling([eps], runs=10, seed=0)

    def test_invalid_runs(self):
        with pytest.raises(ValueError):
            precision_scaling([0.01], runs=0, seed=0)

    def test_fit_recovers_synthetic_law(self):
        rows = []
        for k in range(5, 13):
            eps = 2.0 ** -k
            p = -math.log(eps)
            mean = 2.0 * p * k + 3.0 * p
            rows.append(PrecisionRow(eps, p, mean, 0.0, 0.1, 100, 0))
        fit = fit_scaling(rows)
        assert fit.slope == pytest.approx(2.0, rel=1e-9)
        assert fit.offset == pytest.approx(3.0, rel=1e-9)
        assert fit.max_relative_residual <= 1e-9
        assert fit.origin_max_relative_residual > 0

    def test_row_fields(self):
        rows, fit = precision_scaling([2.0 ** -5], runs=20, seed=2)
        assert list(rows[0].to_row()) == list(PrecisionRow.CSV_FIELDS)
        assert rows[0].to_dict()["runs"] == 20
        assert fit.slope == fit.coefficient
