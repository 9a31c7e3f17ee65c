"""
Reproducible Random Drivers

A NoiseBundle holds, per stream index i, the Brownian increments of W^i on
the grid and the candidate events of the Poisson measure pi^i restricted to
z <= Lambda: times of a homogeneous rate-Lambda process, uniform levels z
and the owner mark v^i. Every stream is generated from its own counter-based
key (seed, i), so enlarging N never changes streams that already exist, and
the per-target collective marks of an event are a deterministic function of
(seed, owner, event ordinal, target).

Author: meanjump Team
Purpose: Synchronous coupling of the particle system and its limit copies
"""

from dataclasses import dataclass, replace

import numpy as np

from exceptions import NoiseDomainError

BIT_GENERATORS = {
    'philox': np.random.Philox,
    'pcg64': np.random.PCG64,
    'sfc64': np.random.SFC64,
}

# substream tags
STREAM_TAG = 1
INITIAL_TAG = 2
COLLECTIVE_TAG = 3
COMPENSATOR_TAG = 4
INDEPENDENT_INITIAL_TAG = 5


def make_rng(seed, generator, *keys):
    """Generator keyed by (seed, keys); same inputs give the same stream bit for bit."""
    if generator not in BIT_GENERATORS:
        raise NoiseDomainError(f"Unknown generator family: {generator!r}")
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(BIT_GENERATORS[generator](sequence))


def derive_seed(seed, *keys):
    """Deterministic 63-bit child seed of (seed, keys); used for per-replica bundles."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _read_only(array, dtype=float):
    array = np.array(array, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class NoiseBundle:
    """
    Immutable random drivers for `n_streams` indices on a grid.

    Events of all streams are stored merged and sorted by (time, stream);
    `step_bounds[k]:step_bounds[k+1]` selects the events in (t_k, t_{k+1}].
    """
    seed: int
    generator: str
    grid: np.ndarray
    rate: float
    mark_law: object
    brownian: np.ndarray
    event_time: np.ndarray
    event_stream: np.ndarray
    event_level: np.ndarray
    event_mark: np.ndarray
    event_ordinal: np.ndarray
    step_bounds: np.ndarray
    step_offset: int = 0
    is_view: bool = False

    @property
    def n_streams(self):
        return int(self.brownian.shape[0])

    @property
    def n_steps(self):
        return int(self.brownian.shape[1])

    @property
    def horizon(self):
        return float(self.grid[-1])

    def step_events(self, k):
        """Slice of merged events falling in (t_k, t_{k+1}]."""
        return slice(int(self.step_bounds[k]), int(self.step_bounds[k + 1]))

    def stream_events(self, i):
        """(times, levels, marks) of stream i, in time order."""
        mask = self.event_stream == i
        return self.event_time[mask], self.event_level[mask], self.event_mark[mask]

    def event_marks(self, owner, ordinal, owner_mark, targets):
        """
        Mark coordinates v^i of one event of stream `owner` for the target
        streams `targets`; the owner's own coordinate is its owner mark.
        """
        targets = np.asarray(targets, dtype=np.int64)
        rng = make_rng(self.seed, self.generator, COLLECTIVE_TAG, owner, ordinal)
        marks = np.asarray(self.mark_law.sample(rng, int(targets.max()) + 1), dtype=float)
        marks[owner] = owner_mark
        return marks[targets]

    def compensator_marks(self, k, n):
        """n i.i.d. mark pairs for grid step k, from a dedicated substream."""
        rng = make_rng(self.seed, self.generator, COMPENSATOR_TAG, self.step_offset + k)
        first = np.asarray(self.mark_law.sample(rng, n), dtype=float)
        second = np.asarray(self.mark_law.sample(rng, n), dtype=float)
        return first, second

    def initial_states(self, law, streams=None, independent=False):
        """One draw of `law` per stream, keyed by (seed, stream)."""
        streams = range(self.n_streams) if streams is None else streams
        tag = INDEPENDENT_INITIAL_TAG if independent else INITIAL_TAG
        return np.array([float(law.sample(make_rng(self.seed, self.generator, tag, i), 1)[0])
                         for i in streams])

    def window(self, i0, i1):
        """Read-only view on grid steps i0..i1-1; event ordinals are kept."""
        if not 0 <= i0 < i1 <= self.n_steps:
            raise NoiseDomainError(f"Invalid window [{i0}, {i1}) for {self.n_steps} steps")
        lo, hi = int(self.step_bounds[i0]), int(self.step_bounds[i1])
        bounds = self.step_bounds[i0:i1 + 1] - lo
        return replace(
            self,
            grid=_read_only(self.grid[i0:i1 + 1]),
            brownian=_read_only(self.brownian[:, i0:i1]),
            event_time=self.event_time[lo:hi],
            event_stream=self.event_stream[lo:hi],
            event_level=self.event_level[lo:hi],
            event_mark=self.event_mark[lo:hi],
            event_ordinal=self.event_ordinal[lo:hi],
            step_bounds=_read_only(bounds, np.int64),
            step_offset=self.step_offset + i0,
            is_view=True,
        )

    def coarsen(self, factor):
        """
        The same noise on every `factor`-th grid node: Brownian increments
        are summed over groups of steps, events and marks are unchanged.

        Raises:
            NoiseDomainError: if factor does not divide the number of steps
        """
        factor = int(factor)
        if factor < 1 or self.n_steps % factor:
            raise NoiseDomainError(f"Cannot coarsen {self.n_steps} steps by {factor}")
        if factor == 1:
            return self
        coarse_steps = self.n_steps // factor
        brownian = self.brownian.reshape(self.n_streams, coarse_steps, factor).sum(axis=2)
        return replace(
            self,
            grid=_read_only(self.grid[::factor]),
            brownian=_read_only(brownian),
            step_bounds=_read_only(self.step_bounds[::factor], np.int64),
            step_offset=self.step_offset // factor,
        )


def build_bundle(seed, n, grid, rate, mark_law, generator='philox'):
    """
    Build the random drivers of n streams.

    Args:
        seed (int): non-negative 64-bit seed
        n (int): number of streams
        grid: time points starting at 0, strictly increasing
        rate (float): dominating intensity Lambda > 0
        mark_law: SamplingLaw of the mark coordinates
        generator (str): bit generator family

    Returns:
        NoiseBundle, a deterministic function of (seed, n, grid, rate, law)

    Raises:
        NoiseDomainError: if rate <= 0 or the grid does not start at 0
    """
    grid = np.asarray(grid, dtype=float)
    if rate <= 0:
        raise NoiseDomainError(f"Dominating rate must be > 0, got {rate}")
    if grid.ndim != 1 or grid.size < 2 or grid[0] != 0.0:
        raise NoiseDomainError("Grid must start at 0 and have at least one step")
    if np.any(np.diff(grid) <= 0):
        raise NoiseDomainError("Grid must be strictly increasing")
    if n < 1:
        raise NoiseDomainError(f"Need at least one stream, got {n}")

    horizon = float(grid[-1])
    scale = np.sqrt(np.diff(grid))
    brownian = np.empty((n, grid.size - 1))
    times, streams, levels, marks, ordinals = [], [], [], [], []
    for i in range(n):
        rng = make_rng(seed, generator, STREAM_TAG, i)
        brownian[i] = rng.standard_normal(grid.size - 1) * scale
        count = int(rng.poisson(rate * horizon))
        # horizon * (1 - U) lies in (0, horizon]
        times.append(np.sort(horizon * (1.0 - rng.random(count))))
        levels.append(rng.uniform(0.0, rate, count))
        marks.append(np.asarray(mark_law.sample(rng, count), dtype=float))
        streams.append(np.full(count, i, dtype=np.int64))
        ordinals.append(np.arange(count, dtype=np.int64))

    event_time = np.concatenate(times) if times else np.empty(0)
    event_stream = np.concatenate(streams) if streams else np.empty(0, dtype=np.int64)
    order = np.lexsort((event_stream, event_time))
    event_time = event_time[order]
    event_step = np.searchsorted(grid, event_time, side='left') - 1
    step_bounds = np.searchsorted(event_step, np.arange(grid.size), side='left')

    return NoiseBundle(
        seed=int(seed),
        generator=generator,
        grid=_read_only(grid),
        rate=float(rate),
        mark_law=mark_law,
        brownian=_read_only(brownian),
        event_time=_read_only(event_time),
        event_stream=_read_only(event_stream[order], np.int64),
        event_level=_read_only(np.concatenate(levels)[order]),
        event_mark=_read_only(np.concatenate(marks)[order]),
        event_ordinal=_read_only(np.concatenate(ordinals)[order], np.int64),
        step_bounds=_read_only(step_bounds, np.int64),
    )


def split_for_limit(bundle):
    """Read-only view exposing the same streams for the limit copies."""
    return replace(bundle, is_view=True)
