import math

import numpy as np
import pandas as pd
import pytest
from scipy.optimize import linprog

from exceptions import MeasureDomainError
from measure import (EmpiricalMeasure, MeasureFlow, abs_moment, exp_moment,
                     exp_moment_is_saturated, flow_sup_w1, mean_abs, w1, w2)


def transport_lp(m1, m2, power):
    """Brute-force optimal transport cost by linear programming."""
    n1, n2 = len(m1), len(m2)
    cost = np.abs(m1.positions[:, None] - m2.positions[None, :]) ** power
    rows = np.zeros((n1, n1 * n2))
    cols = np.zeros((n2, n1 * n2))
    for i in range(n1):
        rows[i, i * n2:(i + 1) * n2] = 1.0
    for j in range(n2):
        cols[j, j::n2] = 1.0
    result = linprog(cost.ravel(), A_eq=np.vstack([rows, cols]),
                     b_eq=np.concatenate([m1.weights, m2.weights]),
                     bounds=(0, None), method='highs')
    assert result.success
    return result.fun


def random_measure(rng, max_atoms=6):
    n = int(rng.integers(1, max_atoms + 1))
    raw = rng.uniform(0.1, 1.0, n)
    return EmpiricalMeasure.from_atoms(rng.normal(0.0, 2.0, n), raw / raw.sum())


def half_half(a, b):
    return EmpiricalMeasure.from_atoms([a, b], [0.5, 0.5])


# ============================================================================
# CONSTRUCTION
# ============================================================================

def test_from_atoms_sorts_positions_with_weights():
    m = EmpiricalMeasure.from_atoms([3.0, -1.0, 2.0], [0.5, 0.2, 0.3])
    assert m.positions.tolist() == [-1.0, 2.0, 3.0]
    assert m.weights.tolist() == [0.2, 0.3, 0.5]


def test_from_atoms_renormalizes_small_drift():
    m = EmpiricalMeasure.from_atoms([0.0, 1.0], [0.5, 0.5 + 5e-10])
    assert abs(m.weights.sum() - 1.0) < 1e-12


@pytest.mark.parametrize('positions, weights', [
    ([], []),
    ([0.0, 1.0], [0.5, 0.6]),
    ([0.0, 1.0], [1.0, 0.0]),
    ([0.0, 1.0], [1.5, -0.5]),
    ([np.nan], [1.0]),
])
def test_from_atoms_rejects_invalid_input(positions, weights):
    with pytest.raises(MeasureDomainError):
        EmpiricalMeasure.from_atoms(positions, weights)


def test_measures_are_read_only():
    m = EmpiricalMeasure.from_samples([1.0, 2.0])
    with pytest.raises(ValueError):
        m.positions[0] = 5.0


def test_mixture_blends_weights():
    m = EmpiricalMeasure.mixture(0.25, EmpiricalMeasure.dirac(0.0), EmpiricalMeasure.dirac(4.0))
    assert m.mean() == pytest.approx(3.0)


def test_quantile_is_left_continuous():
    m = half_half(0.0, 2.0)
    assert m.quantile([0.25, 0.5, 0.5000001, 1.0]).tolist() == [0.0, 0.0, 2.0, 2.0]


def test_frame_round_trip_keeps_atoms():
    m = EmpiricalMeasure.from_atoms([0.5, -1.0], [0.75, 0.25])
    back = EmpiricalMeasure.from_frame(m.to_frame())
    assert list(m.to_frame().columns) == ['position', 'weight']
    assert np.array_equal(back.positions, m.positions)
    assert np.allclose(back.weights, m.weights)


# ============================================================================
# TRANSPORT DISTANCES
# ============================================================================

def test_w1_examples():
    assert w1(EmpiricalMeasure.dirac(0.0), EmpiricalMeasure.dirac(1.0)) == 1.0
    m = half_half(-1.0, 3.0)
    assert w1(m, m) == 0.0
    assert w1(half_half(0.0, 2.0), half_half(1.0, 3.0)) == pytest.approx(1.0)


def test_w2_examples():
    assert w2(EmpiricalMeasure.dirac(0.0), EmpiricalMeasure.dirac(1.0)) == 1.0
    m = half_half(-1.0, 3.0)
    assert w2(m, m) == 0.0
    assert w2(half_half(0.0, 2.0), half_half(1.0, 3.0)) == pytest.approx(1.0)


def test_distances_reject_empty_measure():
    with pytest.raises(MeasureDomainError):
        w1(None, EmpiricalMeasure.dirac(0.0))


def test_distances_match_linear_program_oracle():
    rng = np.random.default_rng(11)
    for _ in range(200):
        m1, m2 = random_measure(rng), random_measure(rng)
        assert w1(m1, m2) == pytest.approx(transport_lp(m1, m2, 1), abs=1e-9)
        assert w2(m1, m2) ** 2 == pytest.approx(transport_lp(m1, m2, 2), abs=1e-9)


def test_equal_size_clouds_use_sorted_differences():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=50), rng.normal(1.0, 2.0, size=50)
    expected = np.mean(np.abs(np.sort(x) - np.sort(y)))
    assert w1(EmpiricalMeasure.from_samples(x), EmpiricalMeasure.from_samples(y)) == pytest.approx(expected)


def test_metric_properties_on_random_measures():
    rng = np.random.default_rng(5)
    for _ in range(100):
        a, b, c = random_measure(rng), random_measure(rng), random_measure(rng)
        for distance in (w1, w2):
            assert distance(a, b) == distance(b, a)
            assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-10
        assert w1(a, b) <= w2(a, b) + 1e-12


def test_coordinatewise_domination():
    rng = np.random.default_rng(8)
    for _ in range(50):
        x, y = rng.normal(size=20), rng.normal(size=20)
        bound = np.mean(np.abs(x - y))
        assert w1(EmpiricalMeasure.from_samples(x), EmpiricalMeasure.from_samples(y)) <= bound + 1e-12


def test_kantorovich_lower_bound():
    rng = np.random.default_rng(9)
    tests = [np.sin, np.abs, lambda x: np.minimum(x, 0.3), lambda x: -np.abs(x - 1.0)]
    for _ in range(50):
        a, b = random_measure(rng), random_measure(rng)
        for g in tests:
            assert a.integrate(g) - b.integrate(g) <= w1(a, b) + 1e-10


def test_translation_equivariance():
    rng = np.random.default_rng(10)
    a, b = random_measure(rng), random_measure(rng)
    assert w1(a.shift(2.5), b.shift(2.5)) == pytest.approx(w1(a, b), abs=1e-12)


# ============================================================================
# MOMENTS
# ============================================================================

def test_exp_moment_examples():
    assert exp_moment(EmpiricalMeasure.dirac(0.0), 3.0) == 1.0
    assert exp_moment(half_half(-1.0, 1.0), 1.0) == pytest.approx(math.e)
    grid = (np.arange(100) + 0.5) / 100
    assert exp_moment(EmpiricalMeasure.from_samples(grid), 1.0) == pytest.approx(math.e - 1.0, abs=0.01)


def test_exp_moment_saturates_instead_of_overflowing():
    value = exp_moment(EmpiricalMeasure.dirac(800.0), 1.0)
    assert value == math.inf
    assert exp_moment_is_saturated(value)
    assert not exp_moment_is_saturated(10.0)


def test_abs_moments():
    assert mean_abs(EmpiricalMeasure.dirac(0.0)) == 0.0
    assert abs_moment(half_half(-2.0, 2.0), 1) == 2.0
    with pytest.raises(MeasureDomainError):
        abs_moment(half_half(-2.0, 2.0), 0)


def test_fifth_moment_of_normal_samples_against_resampled_oracle():
    rng = np.random.default_rng(12)
    sample = rng.standard_normal(1000)
    estimate = abs_moment(EmpiricalMeasure.from_samples(sample), 5)
    oracle = float(np.mean(np.abs(rng.standard_normal(10**6)) ** 5))
    stderr = float(np.std(np.abs(sample) ** 5) / math.sqrt(sample.size))
    assert oracle == pytest.approx(8.0 * math.sqrt(2.0 / math.pi), rel=0.05)
    assert abs(estimate - oracle) <= 4.0 * stderr


# ============================================================================
# FLOWS
# ============================================================================

def test_flow_validates_grid_and_length():
    m = EmpiricalMeasure.dirac(0.0)
    with pytest.raises(MeasureDomainError):
        MeasureFlow(np.array([0.0, 0.0]), (m, m))
    with pytest.raises(MeasureDomainError):
        MeasureFlow(np.array([0.0, 1.0]), (m,))


def test_flow_sup_w1_examples():
    grid = np.array([0.0, 0.5, 1.0])
    base = half_half(0.0, 1.0)
    flow = MeasureFlow.constant(grid, base)
    assert flow_sup_w1(flow, flow) == 0.0
    shifted = MeasureFlow(grid, (base, base.shift(0.3), base))
    assert flow_sup_w1(flow, shifted) == pytest.approx(0.3)
    with pytest.raises(MeasureDomainError):
        flow_sup_w1(flow, MeasureFlow.constant(np.array([0.0, 1.0]), base))


def test_flow_sup_w1_matches_nodewise_oracle():
    rng = np.random.default_rng(13)
    grid = np.linspace(0.0, 1.0, 4)
    f1 = MeasureFlow(grid, tuple(random_measure(rng) for _ in grid))
    f2 = MeasureFlow(grid, tuple(random_measure(rng) for _ in grid))
    oracle = max(transport_lp(a, b, 1) for a, b in zip(f1.measures, f2.measures))
    assert flow_sup_w1(f1, f2) == pytest.approx(oracle, abs=1e-9)


def test_flow_slice_concat_and_frame():
    grid = np.linspace(0.0, 1.0, 5)
    states = np.arange(15, dtype=float).reshape(3, 5)
    flow = MeasureFlow.from_paths(grid, states)
    joined = flow.slice(0, 2).concat(flow.slice(2, 4))
    assert np.array_equal(joined.grid, grid)
    assert flow_sup_w1(joined, flow) == 0.0
    frame = flow.to_frame()
    assert list(frame.columns) == ['t', 'position', 'weight']
    assert len(frame) == 15
    back = MeasureFlow.from_frame(frame)
    assert flow_sup_w1(back, flow) == pytest.approx(0.0, abs=1e-15)
    assert isinstance(frame, pd.DataFrame)
