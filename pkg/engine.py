"""
Simulation Engine

Time stepping of the N-particle system with simultaneous jumps and of
i.i.d. copies of the limit system driven by a frozen measure flow.

Scheme on each grid step [t_k, t_{k+1}):
1. drift, diffusion (and the compensator drift for limit copies) are
   evaluated once at the start of the step
2. the step's Poisson events are processed in global time order; the left
   limit at an event time s is the Euler path interpolated to s plus the
   jumps already applied in this step
3. all displacements of one event come from the same pre-event state and
   are applied together

Both simulators share one loop, so with Theta = 0 and measure-independent
coefficients they follow the same arithmetic path.

Author: meanjump Team
Purpose: Pathwise simulation of the particle and limit systems
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from exceptions import MeasureDomainError, SimulationError
from extensions import logger
from measure import EmpiricalMeasure

DEFAULT_MARK_SAMPLES = 64
INCREMENT_SLACK = 1e-9


@dataclass
class JumpRecord:
    """One candidate event of the Poisson measure of `owner`."""
    time: float
    owner: int
    stream: int
    accepted: bool
    psi: float = 0.0
    theta: np.ndarray = None

    @property
    def theta_mean(self):
        return 0.0 if self.theta is None else float(np.mean(self.theta))


@dataclass
class PathEnsemble:
    """
    Per-particle trajectories on the grid plus the jump-event log.

    states[i, k] is particle i at grid node k (cadlag values at the nodes).
    """
    grid: np.ndarray
    states: np.ndarray
    streams: np.ndarray
    jump_log: list = field(default_factory=list)
    gn_path: np.ndarray = None

    @property
    def n_particles(self):
        return int(self.states.shape[0])

    @property
    def terminal(self):
        return self.states[:, -1]

    def accepted_events(self, owner=None):
        return [r for r in self.jump_log if r.accepted and (owner is None or r.owner == owner)]

    def to_frame(self):
        n, nodes = self.states.shape
        return pd.DataFrame({
            't': np.tile(self.grid, n),
            'particle': np.repeat(np.arange(n), nodes),
            'state': self.states.ravel(),
        })

    def jump_frame(self):
        return pd.DataFrame({
            't': [r.time for r in self.jump_log],
            'owner': [r.owner for r in self.jump_log],
            'accepted': [bool(r.accepted) for r in self.jump_log],
            'psi': [r.psi for r in self.jump_log],
            'theta_mean': [r.theta_mean for r in self.jump_log],
        }, columns=['t', 'owner', 'accepted', 'psi', 'theta_mean'])


def _as_vector(value, n):
    return np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()


def _check_grid(bundle, grid):
    grid = np.asarray(grid, dtype=float)
    if grid.shape != bundle.grid.shape or not np.array_equal(grid, bundle.grid):
        raise SimulationError("Simulation grid differs from the noise bundle grid")
    return grid


def _resolve_streams(bundle, n, streams):
    streams = np.arange(n, dtype=np.int64) if streams is None else np.asarray(streams, dtype=np.int64)
    if streams.size != n or np.unique(streams).size != n:
        raise SimulationError(f"Need {n} distinct stream indices, got {streams.tolist()}")
    if streams.min() < 0 or streams.max() >= bundle.n_streams:
        raise SimulationError(f"Bundle has {bundle.n_streams} streams, indices {streams.tolist()} requested")
    return streams


def _check_dominating_rate(spec, bundle):
    declared = spec.bounds.rate
    if spec.has_jumps and declared is not None and bundle.rate < declared:
        raise SimulationError(
            f"Bundle rate {bundle.rate} is below the declared ||f|| = {declared} of {spec.name!r}")


def compensator_drift(spec, measure, states, bundle, k, n_mark_samples=DEFAULT_MARK_SAMPLES):
    """
    D(y) = int int Theta(x, y, m, v1, v2) f(x, m) dnu(v) dm(x) for every y in states.

    Estimated with n nodes pairing the stratified quantiles
    x_s = F^{-1}((s + 1/2) / n) of the frozen measure with i.i.d. mark pairs
    from the bundle's compensator substream for step k.
    """
    n = int(n_mark_samples)
    atoms = measure.quantile((np.arange(n) + 0.5) / n)
    rates = _as_vector(spec.rate(atoms, measure), n)
    first, second = bundle.compensator_marks(k, n)
    theta = np.asarray(spec.collective_jump(atoms[None, :], np.asarray(states)[:, None], measure,
                                            first[None, :], second[None, :]), dtype=float)
    theta = np.broadcast_to(theta, (len(states), n))
    return (theta * rates).sum(axis=1) / n


def _abort_non_finite(values, time, states, drift, diffusion, jumps):
    bad = np.flatnonzero(~np.isfinite(values))
    p = int(bad[0])
    raise SimulationError("Non-finite state", time=time, particle=p, values={
        'state_before': float(states[p]), 'drift': float(drift[p]),
        'diffusion': float(diffusion[p]), 'jump': float(jumps[p])})


def _simulate(spec, x0, bundle, grid, streams, flow=None, collective=True,
              n_mark_samples=DEFAULT_MARK_SAMPLES, record_jumps=True, track_gn=False,
              check_increments=True):
    grid = _check_grid(bundle, grid)
    _check_dominating_rate(spec, bundle)
    x = np.array(x0, dtype=float)
    n = x.size
    if not np.all(np.isfinite(x)):
        _abort_non_finite(x, 0.0, x, np.zeros(n), np.zeros(n), np.zeros(n))

    n_steps = grid.size - 1
    dt = np.diff(grid)
    states = np.empty((n, n_steps + 1))
    states[:, 0] = x
    owner_of = np.full(bundle.n_streams, -1, dtype=np.int64)
    owner_of[streams] = np.arange(n)

    particle_system = flow is None
    with_theta = collective and spec.has_collective_jumps
    with_compensator = with_theta and not particle_system
    with_jumps = spec.has_jumps
    drift_cap = spec.bounds.drift if check_increments else None

    jump_log = []
    gn_path = np.zeros(n_steps + 1) if track_gn else None

    for k in range(n_steps):
        t_k, h = grid[k], dt[k]
        measure = EmpiricalMeasure.from_samples(x) if particle_system else flow.measures[k]
        drift = _as_vector(spec.drift(x, measure), n)
        diffusion = _as_vector(spec.diffusion(x, measure), n)
        d_w = bundle.brownian[streams, k]
        increment = drift * h + diffusion * d_w
        comp = None
        if with_compensator:
            comp = compensator_drift(spec, measure, x, bundle, k, n_mark_samples)
            increment = increment + comp * h

        gn_jump = 0.0
        if track_gn and with_theta:
            atoms_rate = _as_vector(spec.rate(x, measure), n)
            first, second = bundle.compensator_marks(k, n_mark_samples)
            theta = np.asarray(spec.collective_jump(x[:, None], x[0], measure,
                                                    first[None, :], second[None, :]), dtype=float)
            theta = np.broadcast_to(theta, (n, len(first)))
            gn_comp = float(np.dot(theta.mean(axis=1), atoms_rate)) / n
        else:
            gn_comp = 0.0

        jumps = np.zeros(n)
        abs_jumps = np.zeros(n)
        if with_jumps:
            events = bundle.step_events(k)
            for e in range(events.start, events.stop):
                stream = int(bundle.event_stream[e])
                p = int(owner_of[stream])
                if p < 0:
                    continue
                frac = (bundle.event_time[e] - t_k) / h
                if particle_system:
                    left = x + frac * increment + jumps
                    if not np.all(np.isfinite(left)):
                        _abort_non_finite(left, float(bundle.event_time[e]), x, drift, diffusion, jumps)
                    left_measure = EmpiricalMeasure.from_samples(left)
                    x_own = left[p]
                else:
                    left = None
                    left_measure = measure
                    x_own = x[p] + frac * increment[p] + jumps[p]
                mark = float(bundle.event_mark[e])
                accepted = bool(bundle.event_level[e] <= float(spec.rate(x_own, left_measure)))
                psi, theta = 0.0, None
                if accepted:
                    if spec.has_self_jumps:
                        psi = float(spec.self_jump(x_own, left_measure, mark))
                    if with_theta and particle_system:
                        marks = bundle.event_marks(stream, int(bundle.event_ordinal[e]), mark, streams)
                        theta = _as_vector(spec.collective_jump(x_own, left, left_measure, mark, marks), n) / n
                        jumps = jumps + theta
                        abs_jumps = abs_jumps + np.abs(theta)
                        gn_jump += float(theta[0])
                    jumps[p] += psi
                    abs_jumps[p] += abs(psi)
                if record_jumps:
                    jump_log.append(JumpRecord(float(bundle.event_time[e]), p, stream, accepted, psi, theta))

        new_x = x + increment + jumps
        if not np.all(np.isfinite(new_x)):
            _abort_non_finite(new_x, float(grid[k + 1]), x, drift, diffusion, jumps)
        if drift_cap is not None:
            allowed = drift_cap * h + np.abs(diffusion * d_w) + abs_jumps
            if comp is not None:
                allowed = allowed + np.abs(comp) * h
            excess = np.abs(new_x - x) - allowed * (1.0 + INCREMENT_SLACK) - INCREMENT_SLACK
            if np.any(excess > 0):
                p = int(np.argmax(excess))
                raise SimulationError("Increment exceeds the bounded-increment envelope",
                                      time=float(grid[k + 1]), particle=p,
                                      values={'increment': float(new_x[p] - x[p]),
                                              'envelope': float(allowed[p])})
        if track_gn:
            gn_path[k + 1] = gn_path[k] + gn_jump - gn_comp * h
        x = new_x
        states[:, k + 1] = x

    return PathEnsemble(grid=grid, states=states, streams=streams, jump_log=jump_log, gn_path=gn_path)


def simulate_particle_system(spec, n, bundle, grid, x0=None, streams=None,
                             record_jumps=True, check_increments=True):
    """
    Simulate the N-particle system with simultaneous mean-field jumps.

    Args:
        spec: ModelSpec
        n (int): number of particles N
        bundle: NoiseBundle with at least n streams and Lambda >= ||f||
        grid: simulation grid, equal to the bundle grid
        x0: initial states; defaults to one draw of the initial law per stream
        streams: stream index driving each particle (default 0..n-1)

    Returns:
        PathEnsemble

    Raises:
        SimulationError: grid mismatch, too few streams, non-finite states
    """
    streams = _resolve_streams(bundle, n, streams)
    if x0 is None:
        x0 = bundle.initial_states(spec.initial_law, streams)
    if len(x0) != n:
        raise SimulationError(f"Expected {n} initial states, got {len(x0)}")
    return _simulate(spec, x0, bundle, grid, streams, record_jumps=record_jumps,
                     check_increments=check_increments)


def simulate_limit_copies(spec, flow, k, bundle, grid, n_mark_samples=DEFAULT_MARK_SAMPLES,
                          x0=None, streams=None, collective=True, record_jumps=True,
                          check_increments=True):
    """
    Simulate k independent copies of the limit system against a frozen flow.

    Each copy follows drift b plus the mean-field compensator drift (when
    the model has collective jumps and `collective` is set), diffusion with
    its own Brownian stream, and own jumps by thinning of its own stream.

    Raises:
        MeasureDomainError: if the flow grid differs from the simulation grid
        SimulationError: as simulate_particle_system
    """
    grid = np.asarray(grid, dtype=float)
    if flow.grid.shape != grid.shape or not np.array_equal(flow.grid, grid):
        raise MeasureDomainError("Flow grid differs from the simulation grid")
    streams = _resolve_streams(bundle, k, streams)
    if x0 is None:
        x0 = bundle.initial_states(spec.initial_law, streams)
    if len(x0) != k:
        raise SimulationError(f"Expected {k} initial states, got {len(x0)}")
    return _simulate(spec, x0, bundle, grid, streams, flow=flow, collective=collective,
                     n_mark_samples=n_mark_samples, record_jumps=record_jumps,
                     check_increments=check_increments)


@dataclass
class GnEstimate:
    """Paths of G^N for particle 1 and the replica statistics of sup|G^N|^2."""
    n_particles: int
    grid: np.ndarray
    paths: np.ndarray
    sup_abs: np.ndarray

    @property
    def mean_sq_sup(self):
        return float(np.mean(self.sup_abs ** 2))

    @property
    def stderr_sq_sup(self):
        if self.sup_abs.size < 2:
            return 0.0
        return float(np.std(self.sup_abs ** 2, ddof=1) / np.sqrt(self.sup_abs.size))


def estimate_gn(spec, n, bundles, grid, n_mark_samples=DEFAULT_MARK_SAMPLES):
    """
    Accumulate the martingale G^N of particle 1 along particle-system runs.

    G^N_t = (collective jumps received by particle 1 up to t)
            - int_0^t (1/N) sum_j f(X^j_s) int Theta(X^j_s, X^1_s, mu^N_s, v1, v2) dnu ds

    Args:
        bundles: one NoiseBundle per replica

    Returns:
        GnEstimate with one path per replica
    """
    paths = []
    for bundle in bundles:
        streams = _resolve_streams(bundle, n, None)
        x0 = bundle.initial_states(spec.initial_law, streams)
        ensemble = _simulate(spec, x0, bundle, grid, streams, n_mark_samples=n_mark_samples,
                             record_jumps=False, track_gn=True)
        paths.append(ensemble.gn_path)
    paths = np.array(paths).reshape(len(paths), -1)
    logger.info(f"G^N estimated for N={n} over {len(paths)} replicas")
    return GnEstimate(n_particles=n, grid=np.asarray(grid, dtype=float), paths=paths,
                      sup_abs=np.max(np.abs(paths), axis=1) if paths.size else np.zeros(0))
