import numpy as np
import pytest

from catalog import build_model
from engine import compensator_drift, estimate_gn, simulate_limit_copies, simulate_particle_system
from exceptions import MeasureDomainError, SimulationError
from measure import EmpiricalMeasure, MeasureFlow
from noise import build_bundle

LOOSE_BOUNDS = {'drift': 1.0, 'diffusion': 0.7, 'rate': 1.0, 'phi_exp': 3.0, 'theta_exp': 3.0}


def inline(bounds=None, **coefficients):
    mapping = {'bounds': dict(LOOSE_BOUNDS, **(bounds or {}))}
    mapping.update(coefficients)
    return build_model(mapping, name='inline')


def dirac_flow(grid, x=0.0):
    return MeasureFlow.constant(grid, EmpiricalMeasure.dirac(x))


# ============================================================================
# PARTICLE SYSTEM
# ============================================================================

def test_constant_drift_moves_every_particle_by_c_t(grid, make_bundle):
    spec = inline(drift=1.5, bounds={'drift': 1.5})
    x0 = np.array([0.0, 1.0, -1.0])
    ensemble = simulate_particle_system(spec, 3, make_bundle(spec, 3), grid, x0=x0)
    assert np.allclose(ensemble.terminal, x0 + 1.5 * grid[-1], atol=1e-12)
    assert np.array_equal(ensemble.states[:, 0], x0)


def test_unit_self_jumps_count_stream_events(make_bundle):
    grid = np.linspace(0.0, 5.0, 51)
    spec = inline(rate=1.0, self_jump=1.0)
    bundle = make_bundle(spec, 4, grid=grid)
    ensemble = simulate_particle_system(spec, 4, bundle, grid, x0=np.zeros(4))
    counts = [bundle.stream_events(i)[0].size for i in range(4)]
    assert ensemble.terminal.tolist() == [float(c) for c in counts]
    assert len(ensemble.accepted_events()) == sum(counts)
    assert len(ensemble.accepted_events(owner=2)) == counts[2]


def test_unit_collective_jumps_move_everyone_by_events_over_n(make_bundle):
    grid = np.linspace(0.0, 5.0, 51)
    n = 5
    spec = inline(rate=1.0, collective_jump=1.0)
    bundle = make_bundle(spec, n, grid=grid)
    ensemble = simulate_particle_system(spec, n, bundle, grid, x0=np.zeros(n))
    total = bundle.event_time.size
    assert np.allclose(ensemble.terminal, total / n, atol=1e-12)


def test_unit_collective_jumps_average_to_rate_times_horizon():
    grid = np.linspace(0.0, 1.0, 11)
    n, rate = 3, 1.0
    spec = inline(rate=rate, collective_jump=1.0)
    displacements = []
    for seed in range(200):
        bundle = build_bundle(seed, n, grid, rate, spec.mark_law)
        ensemble = simulate_particle_system(spec, n, bundle, grid, record_jumps=False)
        displacements.append(ensemble.terminal[0] - ensemble.states[0, 0])
    stderr = np.std(displacements, ddof=1) / np.sqrt(len(displacements))
    assert abs(np.mean(displacements) - rate * grid[-1]) <= 3.0 * stderr


def test_initial_states_default_to_bundle_draws(lin_lip, grid, make_bundle):
    bundle = make_bundle(lin_lip, 3)
    ensemble = simulate_particle_system(lin_lip, 3, bundle, grid)
    assert np.array_equal(ensemble.states[:, 0], bundle.initial_states(lin_lip.initial_law))


def test_particle_system_is_exchangeable(lin_lip, grid, make_bundle):
    bundle = make_bundle(lin_lip, 3, seed=21)
    x0 = np.array([0.3, -0.2, 0.9])
    base = simulate_particle_system(lin_lip, 3, bundle, grid, x0=x0)
    order = np.array([2, 0, 1])
    permuted = simulate_particle_system(lin_lip, 3, bundle, grid, x0=x0[order], streams=order)
    assert np.array_equal(permuted.states, base.states[order])


def test_same_bundle_gives_identical_runs(lin_lip, grid, make_bundle):
    bundle = make_bundle(lin_lip, 4, seed=3)
    a = simulate_particle_system(lin_lip, 4, bundle, grid)
    b = simulate_particle_system(lin_lip, 4, bundle, grid)
    assert np.array_equal(a.states, b.states)


def test_frames_have_expected_columns(lin_lip, grid, make_bundle):
    ensemble = simulate_particle_system(lin_lip, 3, make_bundle(lin_lip, 3), grid)
    frame = ensemble.to_frame()
    assert list(frame.columns) == ['t', 'particle', 'state']
    assert len(frame) == 3 * grid.size
    jumps = ensemble.jump_frame()
    assert list(jumps.columns) == ['t', 'owner', 'accepted', 'psi', 'theta_mean']
    assert len(jumps) == len(ensemble.jump_log)


# ============================================================================
# FAILURES
# ============================================================================

def test_non_finite_initial_state_aborts(null_model, grid, make_bundle):
    with pytest.raises(SimulationError) as info:
        simulate_particle_system(null_model, 2, make_bundle(null_model, 2), grid,
                                 x0=np.array([0.0, np.nan]))
    assert info.value.particle == 1
    assert info.value.time == 0.0


def test_overflowing_drift_aborts_with_context(grid, make_bundle):
    spec = inline(drift={'terms': [[1.0, 'x2']]})
    with pytest.raises(SimulationError) as info:
        with np.errstate(over='ignore', invalid='ignore'):
            simulate_particle_system(spec, 2, make_bundle(spec, 2), grid, x0=np.array([0.0, 1e200]))
    assert info.value.particle == 1
    assert info.value.time == pytest.approx(grid[1])
    assert 'drift' in info.value.values


def test_increment_envelope_is_enforced(grid, make_bundle):
    spec = inline(drift=2.0, bounds={'drift': 1.0})
    bundle = make_bundle(spec, 2)
    with pytest.raises(SimulationError):
        simulate_particle_system(spec, 2, bundle, grid, x0=np.zeros(2))
    ensemble = simulate_particle_system(spec, 2, bundle, grid, x0=np.zeros(2), check_increments=False)
    assert np.allclose(ensemble.terminal, 2.0 * grid[-1])


def test_grid_and_stream_mismatches_are_rejected(lin_lip, grid, make_bundle):
    bundle = make_bundle(lin_lip, 2)
    with pytest.raises(SimulationError):
        simulate_particle_system(lin_lip, 2, bundle, grid[:-1])
    with pytest.raises(SimulationError):
        simulate_particle_system(lin_lip, 3, bundle, grid)
    with pytest.raises(SimulationError):
        simulate_particle_system(lin_lip, 2, bundle, grid, streams=[1, 1])


def test_bundle_rate_below_declared_bound_is_rejected(lin_lip, grid):
    bundle = build_bundle(1, 2, grid, 1.0, lin_lip.mark_law)
    with pytest.raises(SimulationError):
        simulate_particle_system(lin_lip, 2, bundle, grid)


# ============================================================================
# LIMIT COPIES
# ============================================================================

def test_limit_copies_of_null_model_stay_put(null_model, grid, make_bundle):
    x0 = np.array([0.5, -1.0, 2.0, 0.0])
    ensemble = simulate_limit_copies(null_model, dirac_flow(grid), 4, make_bundle(null_model, 4), grid, x0=x0)
    assert np.array_equal(ensemble.states, np.repeat(x0[:, None], grid.size, axis=1))


def test_constant_collective_jump_gives_theta_times_rate_drift(grid, make_bundle):
    spec = inline(rate=1.0, collective_jump=0.4)
    x0 = np.array([0.0, 1.0])
    ensemble = simulate_limit_copies(spec, dirac_flow(grid), 2, make_bundle(spec, 2), grid, x0=x0)
    assert np.allclose(ensemble.terminal, x0 + 0.4 * grid[-1], atol=1e-12)


def test_compensator_drift_against_two_atom_measure(grid, make_bundle):
    spec = inline(rate=2.0, collective_jump={'terms': [[1.0, 'src']]}, bounds={'rate': 2.0})
    measure = EmpiricalMeasure.from_atoms([-1.0, 3.0], [0.5, 0.5])
    drift = compensator_drift(spec, measure, np.array([0.0, 5.0, -7.0]), make_bundle(spec, 1), 0,
                              n_mark_samples=64)
    assert np.allclose(drift, 2.0)


def test_limit_copies_reject_flow_on_another_grid(null_model, grid, make_bundle):
    with pytest.raises(MeasureDomainError):
        simulate_limit_copies(null_model, dirac_flow(grid[:-1]), 2, make_bundle(null_model, 2), grid)


def test_particles_and_limit_copies_coincide_without_interaction(grid, make_bundle):
    spec = inline(
        drift={'terms': [[-1.0, 'tanh_x']]},
        diffusion={'constant': 0.5, 'terms': [[0.2, 'sin_x']]},
        rate={'constant': 1.0, 'terms': [[0.5, 'cos_x']]},
        self_jump={'terms': [[0.5, 'u']]},
        bounds={'rate': 1.5},
    )
    bundle = make_bundle(spec, 5, seed=17)
    particles = simulate_particle_system(spec, 5, bundle, grid)
    copies = simulate_limit_copies(spec, dirac_flow(grid), 5, bundle, grid)
    assert np.array_equal(particles.states, copies.states)


# ============================================================================
# G^N MARTINGALE
# ============================================================================

def test_gn_vanishes_without_collective_jumps(lin_lip, grid, make_bundle):
    spec = lin_lip.without_collective_jumps()
    bundles = [make_bundle(spec, 4, seed=s) for s in range(3)]
    estimate = estimate_gn(spec, 4, bundles, grid)
    assert estimate.paths.shape == (3, grid.size)
    assert estimate.mean_sq_sup == 0.0


def test_gn_vanishes_with_zero_rate(grid, make_bundle):
    spec = inline(collective_jump={'terms': [[1.0, 'v_tgt']]}, bounds={'rate': 0.0})
    bundles = [make_bundle(spec, 3, seed=s) for s in range(2)]
    estimate = estimate_gn(spec, 3, bundles, grid)
    assert np.all(estimate.sup_abs == 0.0)
    assert estimate.stderr_sq_sup == 0.0


def test_gn_starts_at_zero_and_is_finite(lin_lip, grid, make_bundle):
    bundles = [make_bundle(lin_lip, 6, seed=s) for s in range(4)]
    estimate = estimate_gn(lin_lip, 6, bundles, grid)
    assert np.all(estimate.paths[:, 0] == 0.0)
    assert np.all(np.isfinite(estimate.paths))
    assert estimate.mean_sq_sup > 0.0
