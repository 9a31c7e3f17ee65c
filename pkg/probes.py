"""
Numerical Probes for the Model Assumptions

Sampling-based checks of the locally Lipschitz, global sigma-Lipschitz,
boundedness and initial-moment conditions of a ModelSpec. A pass only
certifies the inequality on the probed set; every report says so.

Mark integrals are computed with the deterministic quantile rule of the
mark law; the z-integral of the thinned jump term is exact.

Author: meanjump Team
Purpose: Turn the model assumptions into reproducible, witnessable reports
"""

import math
from dataclasses import dataclass, field

import numpy as np

from extensions import logger
from measure import EmpiricalMeasure, exp_moment, w1

PROBE_NOTE = "sampling-based: a pass certifies the inequality on the probed set only"


@dataclass
class ProbeReport:
    """Outcome of one probe; `witness` describes the worst or first failing input."""
    name: str
    passed: bool
    max_ratio: float = 0.0
    n_checked: int = 0
    witness: dict = None
    details: dict = field(default_factory=dict)
    note: str = PROBE_NOTE

    def to_mapping(self):
        return {
            'name': self.name,
            'passed': bool(self.passed),
            'max_ratio': _json_float(self.max_ratio),
            'n_checked': int(self.n_checked),
            'witness': self.witness,
            'details': {key: _json_float(value) for key, value in self.details.items()},
            'note': self.note,
        }


def _json_float(value):
    if isinstance(value, float) and not math.isfinite(value):
        return 'inf' if value > 0 else ('-inf' if value < 0 else 'nan')
    return value


# ============================================================================
# SAMPLERS OVER (x, m) SPACE
# ============================================================================

@dataclass(frozen=True)
class StateSampler:
    """
    Draws states x in [-radius, radius] and equal-weight clouds of n_atoms
    atoms in the same box.

    Pairs share the measure a third of the time and the state a third of
    the time, so both directions of the inequality get exercised.
    """
    radius: float = 5.0
    n_atoms: int = 20

    def point(self, rng):
        x = float(rng.uniform(-self.radius, self.radius))
        m = EmpiricalMeasure.from_samples(rng.uniform(-self.radius, self.radius, self.n_atoms))
        return x, m

    def pair(self, rng):
        x1, m1 = self.point(rng)
        x2, m2 = self.point(rng)
        mode = rng.integers(3)
        if mode == 0:
            m2 = m1
        elif mode == 1:
            x2 = x1
        return (x1, m1), (x2, m2)


def _scalar(value):
    return float(np.asarray(value, dtype=float))


def _witness(x1, m1, x2=None, m2=None, **values):
    witness = {'x1': x1, 'm1_mean': m1.mean(), 'm1_atoms': len(m1)}
    if x2 is not None:
        witness.update({'x2': x2, 'm2_mean': m2.mean(), 'm2_atoms': len(m2)})
    witness.update({key: _json_float(float(value)) for key, value in values.items()})
    return witness


def _jump_difference(spec, x1, m1, x2, m2, nodes, weights, form):
    """int_E int_{R+} |Phi_1 1{z<=f_1} - Phi_2 1{z<=f_2}| dz drho (or the direct form)."""
    f1 = max(_scalar(spec.rate(x1, m1)), 0.0)
    f2 = max(_scalar(spec.rate(x2, m2)), 0.0)
    if spec.self_jump is None:
        return abs(f1 - f2) if form == 'direct' else 0.0
    p1 = np.asarray(spec.self_jump(x1, m1, nodes), dtype=float) * np.ones_like(nodes)
    p2 = np.asarray(spec.self_jump(x2, m2, nodes), dtype=float) * np.ones_like(nodes)
    if form == 'direct':
        return abs(f1 - f2) + float(np.dot(weights, np.abs(p1 - p2)))
    integrand = (min(f1, f2) * np.abs(p1 - p2)
                 + max(f1 - f2, 0.0) * np.abs(p1)
                 + max(f2 - f1, 0.0) * np.abs(p2))
    return float(np.dot(weights, integrand))


def probe_local_lipschitz(spec, sampler, n_pairs, seed=0, n_marks=64, form='integrated'):
    """
    Check the locally Lipschitz condition on sampled pairs.

    left  = |b1 - b2| + jump L1 difference
    right = L (1 + |x1| + |x2| + int e^{a|x|}dm1 + int e^{a|x|}dm2) (|x1 - x2| + W1(m1, m2))

    Args:
        spec: ModelSpec
        sampler: object with .pair(rng)
        n_pairs (int): number of pairs, >= 1
        form (str): 'integrated' (the condition itself) or 'direct'
            (the sufficient condition on f and Phi separately)

    Returns:
        ProbeReport with the max ratio left/right; a zero right side with a
        non-zero left side is reported as an infinite ratio.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    if form not in ('integrated', 'direct'):
        raise ValueError(f"Unknown probe form: {form!r}")
    rng = np.random.default_rng(seed)
    nodes, weights = spec.mark_law.quadrature(n_marks)
    a, L = spec.exp_exponent, spec.lipschitz_const

    max_ratio, witness, violation = 0.0, None, None
    for _ in range(n_pairs):
        (x1, m1), (x2, m2) = sampler.pair(rng)
        left = abs(_scalar(spec.drift(x1, m1)) - _scalar(spec.drift(x2, m2)))
        left += _jump_difference(spec, x1, m1, x2, m2, nodes, weights, form)
        right = L * (1.0 + abs(x1) + abs(x2) + exp_moment(m1, a) + exp_moment(m2, a)) \
            * (abs(x1 - x2) + w1(m1, m2))
        if right > 0:
            ratio = left / right
        else:
            ratio = math.inf if left > 0 else 0.0
        if ratio > max_ratio:
            max_ratio = ratio
            witness = _witness(x1, m1, x2, m2, left=left, right=right, ratio=ratio)
        if ratio > 1.0 and violation is None:
            violation = witness

    passed = violation is None
    if not passed:
        logger.warning(f"Local Lipschitz probe failed for {spec.name!r}: max ratio {max_ratio:.4g}")
    return ProbeReport(
        name=f'local_lipschitz[{form}]',
        passed=passed,
        max_ratio=max_ratio,
        n_checked=n_pairs,
        witness=violation if violation is not None else witness,
        details={'declared_L': L, 'certified_L': L * max_ratio},
    )


def probe_sigma_lipschitz(spec, sampler, n_pairs, seed=0):
    """|sigma1 - sigma2| <= L (|x1 - x2| + W1(m1, m2)) on sampled pairs."""
    rng = np.random.default_rng(seed)
    L = spec.lipschitz_const
    max_ratio, witness, violation = 0.0, None, None
    for _ in range(n_pairs):
        (x1, m1), (x2, m2) = sampler.pair(rng)
        left = abs(_scalar(spec.diffusion(x1, m1)) - _scalar(spec.diffusion(x2, m2)))
        right = L * (abs(x1 - x2) + w1(m1, m2))
        ratio = left / right if right > 0 else (math.inf if left > 0 else 0.0)
        if ratio > max_ratio:
            max_ratio = ratio
            witness = _witness(x1, m1, x2, m2, left=left, right=right, ratio=ratio)
        if ratio > 1.0 and violation is None:
            violation = witness
    return ProbeReport(
        name='sigma_lipschitz',
        passed=violation is None,
        max_ratio=max_ratio,
        n_checked=n_pairs,
        witness=violation if violation is not None else witness,
        details={'declared_L': L, 'certified_L': L * max_ratio},
    )


def probe_boundedness(spec, sampler, n_points, seed=0, n_marks=64):
    """
    Check declared sup-norms and exponential mark moments on sampled points.

    Checks |b| <= ||b||, |sigma| <= ||sigma||, 0 <= f <= ||f||,
    int e^{a|Phi|} drho <= phi_exp and int int e^{a|Theta|} dnu <= theta_exp.
    Undeclared bounds are skipped and listed in the details.

    Returns:
        ProbeReport; max_ratio is the largest observed/declared ratio and the
        witness names the first exceedance.
    """
    rng = np.random.default_rng(seed)
    bounds = spec.bounds
    a = spec.exp_exponent
    nodes, weights = spec.mark_law.quadrature(n_marks)
    v_src, v_tgt = np.meshgrid(nodes, nodes, indexing='ij')
    pair_weights = np.outer(weights, weights)

    observed = {'drift': 0.0, 'diffusion': 0.0, 'rate': 0.0, 'phi_exp': 0.0, 'theta_exp': 0.0}
    declared = bounds.to_mapping()
    violation = None
    negative_rate = None

    for _ in range(n_points):
        x, m = sampler.point(rng)
        y = float(rng.uniform(-abs(x) - 1.0, abs(x) + 1.0))
        values = {
            'drift': abs(_scalar(spec.drift(x, m))),
            'diffusion': abs(_scalar(spec.diffusion(x, m))),
            'rate': _scalar(spec.rate(x, m)),
        }
        if spec.self_jump is not None:
            jumps = np.asarray(spec.self_jump(x, m, nodes), dtype=float) * np.ones_like(nodes)
            values['phi_exp'] = float(np.dot(weights, np.exp(a * np.abs(jumps))))
        else:
            values['phi_exp'] = 1.0
        if spec.collective_jump is not None:
            theta = np.asarray(spec.collective_jump(x, y, m, v_src, v_tgt), dtype=float) * np.ones_like(v_src)
            values['theta_exp'] = float(np.sum(pair_weights * np.exp(a * np.abs(theta))))
        else:
            values['theta_exp'] = 1.0

        if values['rate'] < 0 and negative_rate is None:
            negative_rate = _witness(x, m, rate=values['rate'])
        for key, value in values.items():
            observed[key] = max(observed[key], abs(value) if key == 'rate' else value)
            limit = declared[key]
            if limit is not None and value > limit * (1.0 + 1e-12) and violation is None:
                violation = _witness(x, m, **{key: value, f'declared_{key}': limit})
                violation['check'] = key

    ratios = [observed[key] / declared[key] for key in observed
              if declared[key] is not None and declared[key] > 0]
    ratios += [math.inf for key in observed
               if declared[key] == 0 and observed[key] > 0 and key in ('drift', 'diffusion', 'rate')]
    details = {f'observed_{key}': value for key, value in observed.items()}
    details.update({f'declared_{key}': value for key, value in declared.items() if value is not None})
    undeclared = sorted(key for key, value in declared.items() if value is None)
    if undeclared:
        details['undeclared'] = ', '.join(undeclared)

    witness = violation
    if negative_rate is not None:
        witness = dict(negative_rate, check='rate_nonnegative')
    passed = violation is None and negative_rate is None
    if not passed:
        logger.warning(f"Boundedness probe failed for {spec.name!r}: {witness}")
    return ProbeReport(
        name='boundedness',
        passed=passed,
        max_ratio=max(ratios) if ratios else 0.0,
        n_checked=n_points,
        witness=witness,
        details=details,
    )


def probe_initial_condition(spec, n_nodes=4096):
    """E e^{a|X_0|} < infinity, by quantile quadrature of the initial law."""
    nodes, weights = spec.initial_law.quadrature(n_nodes)
    value = exp_moment(EmpiricalMeasure.from_atoms(nodes, weights), spec.exp_exponent)
    passed = math.isfinite(value)
    return ProbeReport(
        name='initial_condition',
        passed=passed,
        max_ratio=0.0,
        n_checked=n_nodes,
        witness=None if passed else {'exp_moment': 'inf'},
        details={'exp_moment_x0': value},
    )


def run_all_probes(spec, sampler=None, n_pairs=1000, seed=0, n_marks=64):
    """Every model probe in a fixed order; used by the validate command."""
    sampler = sampler or StateSampler()
    return [
        probe_local_lipschitz(spec, sampler, n_pairs, seed=seed, n_marks=n_marks),
        probe_sigma_lipschitz(spec, sampler, n_pairs, seed=seed + 1),
        probe_boundedness(spec, sampler, n_pairs, seed=seed + 2, n_marks=n_marks),
        probe_initial_condition(spec),
    ]
