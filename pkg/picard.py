"""
Picard Iteration on Measure Flows

The limit law is computed by freezing a flow mu^[n], simulating M copies of
the resulting standard SDE with common random numbers, and taking the
empirical flow of the copies as mu^[n+1]. The horizon is processed window
by window (length min(1/(16 L^2), T0)), each window restarting from the
terminal samples of the previous one.

Author: meanjump Team
Purpose: Solve for t -> mu_t and expose W1 flow-distance diagnostics
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from engine import DEFAULT_MARK_SAMPLES, simulate_limit_copies
from exceptions import PicardError
from extensions import logger
from measure import SATURATION, EmpiricalMeasure, MeasureFlow, flow_sup_w1, w1
from noise import build_bundle

MIN_SAMPLES = 100


@dataclass
class WindowDiagnostics:
    """d_n sequence and outcome of one time window."""
    index: int
    t_start: float
    t_end: float
    distances: list = field(default_factory=list)
    regularity: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return len(self.distances)

    @property
    def achieved(self):
        return min(self.distances) if self.distances else math.inf

    def eventually_decreasing(self, tol):
        """d_{n+1} <= d_n from the first iterate with d_n < 10 tol onwards."""
        start = next((n for n, d in enumerate(self.distances) if d < 10.0 * tol), None)
        if start is None:
            return True
        tail = self.distances[start:]
        return all(b <= a for a, b in zip(tail, tail[1:]))

    @property
    def regularity_spread(self):
        """max / min regularity constant over the iterates of this window."""
        if not self.regularity or max(self.regularity) == 0.0:
            return 1.0
        low = min(self.regularity)
        return max(self.regularity) / low if low > 0 else math.inf

    def to_mapping(self):
        return {
            'index': self.index,
            't_start': self.t_start,
            't_end': self.t_end,
            'iterations': self.iterations,
            'converged': self.converged,
            'distances': list(self.distances),
            'regularity': list(self.regularity),
        }


@dataclass
class PicardDiagnostics:
    """
    Per-window d_n := flow_sup_w1(mu^[n+1], mu^[n]) sequences.

    converged is True only when every window converged; final_tolerance is
    the worst accepted distance over windows.
    """
    tol: float
    windows: list = field(default_factory=list)

    @property
    def distances(self):
        return [d for window in self.windows for d in window.distances]

    @property
    def iterations(self):
        return sum(window.iterations for window in self.windows)

    @property
    def converged(self):
        return bool(self.windows) and all(window.converged for window in self.windows)

    @property
    def final_tolerance(self):
        return max((window.achieved for window in self.windows), default=math.inf)

    @property
    def eventually_decreasing(self):
        return all(window.eventually_decreasing(self.tol) for window in self.windows)

    @property
    def regularity_spread(self):
        return max((window.regularity_spread for window in self.windows), default=1.0)

    def to_mapping(self):
        return {
            'tol': self.tol,
            'converged': self.converged,
            'iterations': self.iterations,
            'final_tolerance': self.final_tolerance,
            'eventually_decreasing': self.eventually_decreasing,
            'regularity_spread': self.regularity_spread,
            'windows': [window.to_mapping() for window in self.windows],
        }


def window_length(spec, horizon):
    """T_w = min(1 / (16 L^2), T0)."""
    return min(1.0 / (16.0 * spec.lipschitz_const ** 2), horizon)


def window_bounds(grid, length):
    """Consecutive (i0, i1) grid-index windows of time length about `length`."""
    grid = np.asarray(grid, dtype=float)
    n_steps = grid.size - 1
    bounds, i = [], 0
    while i < n_steps:
        j = int(np.searchsorted(grid, grid[i] + length - 1e-12 * grid[-1], side='left'))
        j = min(max(j, i + 1), n_steps)
        bounds.append((i, j))
        i = j
    return bounds


def flow_regularity_constant(flow):
    """Smallest C with W1(mu_{t_{k+1}}, mu_{t_k}) <= C (dt + sqrt(dt)) on the grid."""
    steps = np.diff(flow.grid)
    if steps.size == 0:
        return 0.0
    return max(w1(flow.measures[k + 1], flow.measures[k]) / (h + math.sqrt(h))
               for k, h in enumerate(steps))


def _start_flow(start, subgrid, samples, i0, i1):
    if isinstance(start, MeasureFlow):
        return start.slice(i0, i1)
    if start == 'initial':
        return MeasureFlow.constant(subgrid, EmpiricalMeasure.from_samples(samples))
    if isinstance(start, (tuple, list)) and len(start) == 2 and start[0] == 'dirac':
        return MeasureFlow.constant(subgrid, EmpiricalMeasure.dirac(float(start[1])))
    raise PicardError(f"Unknown start flow: {start!r}")


def _check_saturation(states, a, window, iteration, subgrid):
    n = states.shape[0]
    log_moments = logsumexp(a * np.abs(states), axis=0) - math.log(n)
    over = np.flatnonzero(log_moments > math.log(SATURATION))
    if over.size:
        time = float(subgrid[over[0]])
        raise PicardError(f"Exponential moment saturated at t={time:.6g}",
                          window=window, iteration=iteration, time=time)


def solve_flow(spec, grid, samples=5000, tol=0.02, max_iter=50, seed=0, generator='philox',
               start='initial', effective=False, n_mark_samples=DEFAULT_MARK_SAMPLES,
               initial_law=None):
    """
    Solve the McKean-Vlasov law on `grid` by windowed Picard iteration.

    Args:
        spec: ModelSpec
        grid: time grid covering [0, T0]
        samples (int): cloud size M (>= 100)
        tol (float): stopping threshold on flow_sup_w1 between iterates
        max_iter (int): iteration cap per window
        seed (int): seed of the single noise bundle shared by all iterations
        start: 'initial' (frozen initial law), ('dirac', x) or a MeasureFlow
        effective (bool): solve the limit dynamics of the particle system
            instead, with the collective-jump compensator drift added;
            by default collective jumps are dropped
        initial_law: law of X_0, defaults to spec.initial_law

    Returns:
        (MeasureFlow, PicardDiagnostics); a window that hits max_iter keeps
        its best iterate and the diagnostics report converged=False

    Raises:
        PicardError: invalid inputs or exponential-moment saturation
    """
    grid = np.asarray(grid, dtype=float)
    if samples < MIN_SAMPLES:
        raise PicardError(f"Picard solver needs at least {MIN_SAMPLES} samples, got {samples}")
    if tol <= 0:
        raise PicardError(f"tol must be > 0, got {tol}")
    if max_iter < 1:
        raise PicardError(f"max_iter must be >= 1, got {max_iter}")
    if grid.ndim != 1 or grid.size < 2 or grid[0] != 0.0:
        raise PicardError("Grid must start at 0 and have at least one step")

    effective = bool(effective)
    dynamics = spec if effective else spec.without_collective_jumps()
    rate = spec.dominating_rate() if spec.has_jumps else 1.0
    bundle = build_bundle(seed, samples, grid, rate, spec.mark_law, generator)
    x_start = bundle.initial_states(initial_law or spec.initial_law)
    a = spec.exp_exponent

    length = window_length(spec, float(grid[-1]))
    diagnostics = PicardDiagnostics(tol=tol)
    flow = None
    for w, (i0, i1) in enumerate(window_bounds(grid, length)):
        subgrid = grid[i0:i1 + 1]
        sub_bundle = bundle.window(i0, i1)
        current = _start_flow(start, subgrid, x_start, i0, i1)
        window = WindowDiagnostics(index=w, t_start=float(subgrid[0]), t_end=float(subgrid[-1]))
        best = None
        for iteration in range(max_iter):
            ensemble = simulate_limit_copies(dynamics, current, samples, sub_bundle, subgrid,
                                             n_mark_samples=n_mark_samples, x0=x_start,
                                             collective=effective, record_jumps=False)
            _check_saturation(ensemble.states, a, w, iteration, subgrid)
            new = MeasureFlow.from_paths(subgrid, ensemble.states)
            distance = flow_sup_w1(new, current)
            window.distances.append(distance)
            window.regularity.append(flow_regularity_constant(new))
            if best is None or distance < best[0]:
                best = (distance, new, ensemble.terminal.copy())
            current = new
            if distance < tol:
                window.converged = True
                break
        if not window.converged:
            logger.warning(f"Picard window {w} [{window.t_start:.4g}, {window.t_end:.4g}] "
                           f"hit max_iter={max_iter}; best d_n={best[0]:.4g}")
        else:
            logger.info(f"Picard window {w} converged in {window.iterations} iterations "
                        f"(d_n={window.distances[-1]:.4g})")
        if not window.eventually_decreasing(tol):
            logger.warning(f"Picard window {w}: d_n increased after dropping below 10 tol: "
                           f"{window.distances}")
        diagnostics.windows.append(window)
        _, window_flow, x_start = best
        flow = window_flow if flow is None else flow.concat(window_flow)
    return flow, diagnostics


@dataclass
class UniquenessReport:
    """Two Picard runs from different starting flows, same initial law and noise."""
    distance: float
    converged_a: bool
    converged_b: bool
    tol: float

    @property
    def conclusive(self):
        return self.converged_a and self.converged_b

    @property
    def passed(self):
        return self.conclusive and self.distance < 2.0 * self.tol

    def to_mapping(self):
        return {'distance': self.distance, 'converged_a': self.converged_a,
                'converged_b': self.converged_b, 'tol': self.tol,
                'conclusive': self.conclusive, 'passed': self.passed}


def uniqueness_probe(spec, grid, start_a='initial', start_b=('dirac', 0.0), samples=5000,
                     tol=0.02, max_iter=50, seed=0, generator='philox', effective=False,
                     n_mark_samples=DEFAULT_MARK_SAMPLES):
    """
    Law-level uniqueness check: both runs share X_0 draws and noise but start
    the iteration from different flows; they must land on the same flow.

    Returns:
        UniquenessReport; non-converged runs make the report inconclusive
    """
    kwargs = dict(samples=samples, tol=tol, max_iter=max_iter, seed=seed, generator=generator,
                  effective=effective, n_mark_samples=n_mark_samples)
    flow_a, diag_a = solve_flow(spec, grid, start=start_a, **kwargs)
    flow_b, diag_b = solve_flow(spec, grid, start=start_b, **kwargs)
    report = UniquenessReport(distance=flow_sup_w1(flow_a, flow_b), converged_a=diag_a.converged,
                              converged_b=diag_b.converged, tol=tol)
    if not report.conclusive:
        logger.warning("Uniqueness probe inconclusive: a Picard run did not converge")
    return report
