"""
Empirical Measures on the Real Line

EmpiricalMeasure is a weighted, sorted atom cloud; MeasureFlow is a time grid
with one measure per node. Transport distances are exact in dimension one:
the quantile coupling is optimal for every convex cost, so W1 and W2 are
computed by merging the two cumulative-weight partitions.

Author: meanjump Team
Purpose: Carriers for mu_t, mu^N_t and Picard iterates, plus metrics/moments
"""

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from exceptions import MeasureDomainError
from extensions import logger

WEIGHT_TOLERANCE = 1e-12
RENORMALIZE_TOLERANCE = 1e-9
SATURATION = 1e300


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """
    Weighted atomic probability measure on R.

    Invariants: positions sorted ascending, weights > 0, sum of weights is
    1 within 1e-12. Instances are immutable (arrays are read-only).
    """
    positions: np.ndarray
    weights: np.ndarray
    uniform: bool = False

    @classmethod
    def from_atoms(cls, positions, weights):
        """
        Build a measure from arbitrary (position, weight) pairs.

        Weights are sorted along with positions; a total within 1e-9 of one
        is renormalized, anything further away is rejected.

        Raises:
            MeasureDomainError: empty input, non-finite positions,
                non-positive weights or a total far from one
        """
        positions = np.asarray(positions, dtype=float).ravel()
        weights = np.asarray(weights, dtype=float).ravel()
        if positions.size == 0:
            raise MeasureDomainError("Empirical measure needs at least one atom")
        if positions.shape != weights.shape:
            raise MeasureDomainError(
                f"positions and weights differ in length: {positions.size} vs {weights.size}")
        if not np.all(np.isfinite(positions)):
            raise MeasureDomainError("Atom positions must be finite")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise MeasureDomainError("Atom weights must be finite and > 0")
        total = float(weights.sum())
        if abs(total - 1.0) > RENORMALIZE_TOLERANCE:
            raise MeasureDomainError(f"Weights sum to {total!r}, not 1")
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            weights = weights / total
        order = np.argsort(positions, kind='stable')
        return cls(_frozen(positions[order]), _frozen(weights[order]), False)

    @classmethod
    def from_samples(cls, samples):
        """Equal-weight cloud N^{-1} sum_k delta_{x_k}."""
        samples = np.asarray(samples, dtype=float).ravel()
        if samples.size == 0:
            raise MeasureDomainError("Empirical measure needs at least one atom")
        if not np.all(np.isfinite(samples)):
            raise MeasureDomainError("Atom positions must be finite")
        weights = np.full(samples.size, 1.0 / samples.size)
        return cls(_frozen(np.sort(samples)), _frozen(weights), True)

    @classmethod
    def dirac(cls, x):
        return cls.from_samples([x])

    @classmethod
    def mixture(cls, alpha, m1, m2):
        """alpha*m1 + (1-alpha)*m2 for 0 < alpha < 1."""
        if not 0.0 < alpha < 1.0:
            raise MeasureDomainError(f"Mixture weight must lie in (0, 1), got {alpha}")
        positions = np.concatenate([m1.positions, m2.positions])
        weights = np.concatenate([alpha * m1.weights, (1.0 - alpha) * m2.weights])
        return cls.from_atoms(positions, weights)

    def __len__(self):
        return int(self.positions.size)

    def shift(self, h):
        """Pushforward under x -> x + h."""
        return EmpiricalMeasure(_frozen(self.positions + h), self.weights, self.uniform)

    def integrate(self, g):
        """Sum_i w_i g(x_i) for a vectorized g."""
        return float(np.dot(self.weights, g(self.positions)))

    def mean(self):
        return float(np.dot(self.weights, self.positions))

    def cumulative(self):
        """Cumulative weights with the last entry pinned to exactly 1."""
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        return cdf

    def quantile(self, levels):
        """Left-continuous inverse CDF F^{-1}(q) = min{x : F(x) >= q}."""
        levels = np.asarray(levels, dtype=float)
        index = np.searchsorted(self.cumulative(), levels, side='left')
        return self.positions[np.clip(index, 0, len(self) - 1)]

    def to_frame(self):
        return pd.DataFrame({'position': self.positions, 'weight': self.weights})

    @classmethod
    def from_frame(cls, frame):
        return cls.from_atoms(frame['position'].to_numpy(), frame['weight'].to_numpy())


def _check_nonempty(*measures):
    for m in measures:
        if m is None or len(m) == 0:
            raise MeasureDomainError("Transport distance needs non-empty measures")


def _quantile_gaps(m1, m2):
    """
    Quantile coupling of two measures.

    Returns the masses of the merged cumulative-weight partition and the
    matching position gaps |F1^{-1}(q) - F2^{-1}(q)| on each piece.
    """
    if m1.uniform and m2.uniform and len(m1) == len(m2):
        return m1.weights, np.abs(m1.positions - m2.positions)
    c1 = m1.cumulative()
    c2 = m2.cumulative()
    cuts = np.union1d(c1, c2)
    mass = np.diff(cuts, prepend=0.0)
    keep = mass > 0
    cuts, mass = cuts[keep], mass[keep]
    mid = cuts - 0.5 * mass
    i1 = np.minimum(np.searchsorted(c1, mid, side='left'), len(m1) - 1)
    i2 = np.minimum(np.searchsorted(c2, mid, side='left'), len(m2) - 1)
    return mass, np.abs(m1.positions[i1] - m2.positions[i2])


def w1(m1, m2):
    """
    Exact first-order Wasserstein distance between two measures on R.

    Raises:
        MeasureDomainError: if either measure is empty
    """
    _check_nonempty(m1, m2)
    mass, gaps = _quantile_gaps(m1, m2)
    return float(np.dot(mass, gaps))


def w2(m1, m2):
    """Exact second-order Wasserstein distance (quantile coupling, squared cost)."""
    _check_nonempty(m1, m2)
    mass, gaps = _quantile_gaps(m1, m2)
    return float(math.sqrt(max(np.dot(mass, gaps * gaps), 0.0)))


def exp_moment(m, a):
    """
    Sum_i w_i exp(a |x_i|).

    Values above 1e300 saturate to +inf and are logged as an exceedance
    instead of overflowing.
    """
    _check_nonempty(m)
    if a <= 0:
        raise MeasureDomainError(f"Exponent a must be > 0, got {a}")
    log_value = logsumexp(a * np.abs(m.positions), b=m.weights)
    if log_value > math.log(SATURATION):
        logger.warning(f"Exponential moment saturated (log value {log_value:.3g}, a={a})")
        return math.inf
    return float(math.exp(log_value))


def exp_moment_is_saturated(value):
    return not math.isfinite(value) or value > SATURATION


def mean_abs(m):
    _check_nonempty(m)
    return float(np.dot(m.weights, np.abs(m.positions)))


def abs_moment(m, q):
    _check_nonempty(m)
    if q <= 0:
        raise MeasureDomainError(f"Moment order must be > 0, got {q}")
    return float(np.dot(m.weights, np.abs(m.positions) ** q))


@dataclass(frozen=True, eq=False)
class MeasureFlow:
    """
    Time grid plus one EmpiricalMeasure per grid node.

    Invariants: grid strictly increasing, len(measures) == len(grid).
    """
    grid: np.ndarray
    measures: tuple

    def __post_init__(self):
        grid = _frozen(self.grid)
        object.__setattr__(self, 'grid', grid)
        object.__setattr__(self, 'measures', tuple(self.measures))
        if grid.ndim != 1 or grid.size == 0:
            raise MeasureDomainError("Flow grid must be a non-empty 1-d array")
        if np.any(np.diff(grid) <= 0):
            raise MeasureDomainError("Flow grid must be strictly increasing")
        if len(self.measures) != grid.size:
            raise MeasureDomainError(
                f"Flow needs one measure per node: {len(self.measures)} measures, {grid.size} nodes")

    @classmethod
    def from_paths(cls, grid, states):
        """Flow of the empirical laws of the columns of a (particles, nodes) array."""
        states = np.asarray(states, dtype=float)
        return cls(grid, tuple(EmpiricalMeasure.from_samples(states[:, k])
                               for k in range(states.shape[1])))

    @classmethod
    def constant(cls, grid, measure):
        return cls(grid, tuple(measure for _ in range(len(grid))))

    def __len__(self):
        return len(self.measures)

    def slice(self, i0, i1):
        """Sub-flow on grid nodes i0..i1 inclusive."""
        return MeasureFlow(self.grid[i0:i1 + 1], self.measures[i0:i1 + 1])

    def concat(self, other):
        """Join two flows that share their boundary node."""
        if not np.isclose(self.grid[-1], other.grid[0], rtol=0.0, atol=1e-12):
            raise MeasureDomainError("Flows to concatenate must share their boundary node")
        return MeasureFlow(np.concatenate([self.grid, other.grid[1:]]),
                           self.measures + other.measures[1:])

    def to_frame(self):
        frames = []
        for t, m in zip(self.grid, self.measures):
            frame = m.to_frame()
            frame.insert(0, 't', t)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    @classmethod
    def from_frame(cls, frame):
        grid, measures = [], []
        for t, group in frame.groupby('t', sort=True):
            grid.append(float(t))
            measures.append(EmpiricalMeasure.from_frame(group))
        return cls(np.array(grid), tuple(measures))


def flow_sup_w1(f1, f2):
    """
    max over grid nodes of W1(f1_t, f2_t).

    Raises:
        MeasureDomainError: if the flows live on different grids
    """
    if f1.grid.shape != f2.grid.shape or not np.array_equal(f1.grid, f2.grid):
        raise MeasureDomainError("flow_sup_w1 needs flows on identical grids")
    return max(w1(a, b) for a, b in zip(f1.measures, f2.measures))
