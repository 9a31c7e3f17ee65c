"""
Model Definitions for meanjump

A McKean-Vlasov jump-diffusion is declared as data:
- ModelSpec holds the coefficient evaluators b, sigma, f, Phi/Psi, Theta,
  the constants L and a, the declared sup-norms and the mark/initial laws
- AffineCoefficient is the parametric coefficient family used by the
  catalog and by inline config models (constant + sum of c_i * basis_i)
- SamplingLaw is the concrete law type for marks and initial conditions

Evaluators are vectorized: they accept numpy arrays for the state slots
and broadcast, and they must be pure functions of their arguments.

Author: meanjump Team
Purpose: Define the model schema and coefficient behavior
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from exceptions import ConfigError, MeasureDomainError


# ============================================================================
# SAMPLING LAWS
# ============================================================================

LAW_KINDS = ('dirac', 'uniform', 'normal', 'laplace', 'two_point')


@dataclass(frozen=True)
class SamplingLaw:
    """
    A base distribution on R used for marks (rho, and the i.i.d.
    coordinates of nu) and for initial conditions.

    Kinds and parameters:
        dirac      value
        uniform    low, high
        normal     loc, scale
        laplace    loc, scale
        two_point  low, high   (each with probability 1/2)
    """
    kind: str = 'normal'
    params: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise ConfigError(f"Unknown law kind: {self.kind!r}")
        object.__setattr__(self, 'params', tuple(float(p) for p in self.params))
        expected = 1 if self.kind == 'dirac' else 2
        if len(self.params) != expected:
            raise ConfigError(f"Law {self.kind!r} takes {expected} parameter(s), got {self.params}")
        if self.kind in ('normal', 'laplace') and self.params[1] <= 0:
            raise ConfigError(f"Law {self.kind!r} needs a positive scale")
        if self.kind in ('uniform', 'two_point') and self.params[1] < self.params[0]:
            raise ConfigError(f"Law {self.kind!r} needs low <= high")

    @classmethod
    def dirac(cls, value=0.0):
        return cls('dirac', (value,))

    @classmethod
    def uniform(cls, low=0.0, high=1.0):
        return cls('uniform', (low, high))

    @classmethod
    def normal(cls, loc=0.0, scale=1.0):
        return cls('normal', (loc, scale))

    def sample(self, rng, size):
        """Draw `size` values; consumption is sequential so draws are prefix-stable."""
        if self.kind == 'dirac':
            return np.full(size, self.params[0])
        if self.kind == 'uniform':
            return rng.uniform(self.params[0], self.params[1], size)
        if self.kind == 'normal':
            return rng.normal(self.params[0], self.params[1], size)
        if self.kind == 'laplace':
            return rng.laplace(self.params[0], self.params[1], size)
        low, high = self.params
        return np.where(rng.random(size) < 0.5, low, high)

    def ppf(self, levels):
        levels = np.asarray(levels, dtype=float)
        if self.kind == 'dirac':
            return np.full(levels.shape, self.params[0])
        if self.kind == 'uniform':
            low, high = self.params
            return low + (high - low) * levels
        if self.kind == 'normal':
            return stats.norm.ppf(levels, loc=self.params[0], scale=self.params[1])
        if self.kind == 'laplace':
            return stats.laplace.ppf(levels, loc=self.params[0], scale=self.params[1])
        return np.where(levels <= 0.5, self.params[0], self.params[1])

    def quadrature(self, n):
        """
        Deterministic n-node rule: midpoint quantiles with equal weights.

        Exact for dirac and two-point laws (n even), second order for
        smooth integrands against continuous laws.
        """
        n = int(n)
        if n < 1:
            raise ConfigError("Quadrature needs at least one node")
        nodes = self.ppf((np.arange(n) + 0.5) / n)
        return nodes, np.full(n, 1.0 / n)

    def to_mapping(self):
        return {'kind': self.kind, 'params': list(self.params)}

    @classmethod
    def from_mapping(cls, mapping):
        if isinstance(mapping, SamplingLaw):
            return mapping
        try:
            return cls(mapping['kind'], tuple(mapping.get('params', ())))
        except (KeyError, TypeError) as e:
            raise ConfigError(f"Invalid law mapping {mapping!r}: {e}")


# ============================================================================
# BASIS EVALUATORS
# ============================================================================

def eval_true_mckean_drift(kernel, x, m):
    """
    Evaluate b(x, m) = integral of kernel(x, y) dm(y) for an atomic m.

    Args:
        kernel: vectorized function (x, y) -> real
        x: state, scalar or array
        m: EmpiricalMeasure

    Returns:
        The m-weighted average of kernel(x, .), with the shape of x

    Raises:
        MeasureDomainError: if m is empty
    """
    if m is None or len(m) == 0:
        raise MeasureDomainError("True McKean-Vlasov drift needs a non-empty measure")
    x = np.asarray(x, dtype=float)
    values = kernel(x[..., None], m.positions)
    result = np.asarray(values, dtype=float) @ m.weights
    return float(result) if result.ndim == 0 else result


# (x, m) -> real
STATE_BASES = {
    'x': lambda x, m: x,
    'x2': lambda x, m: x * x,
    'sin_x': lambda x, m: np.sin(x),
    'cos_x': lambda x, m: np.cos(x),
    'tanh_x': lambda x, m: np.tanh(x),
    'arctan_x': lambda x, m: np.arctan(x),
    'sin_x2': lambda x, m: np.sin(x * x),
    'mean': lambda x, m: m.mean(),
    'mean_arctan': lambda x, m: m.integrate(np.arctan),
    'mean_tanh': lambda x, m: m.integrate(np.tanh),
    'tanh_mean_minus_x': lambda x, m: np.tanh(m.mean() - x),
    'mean_sin_minus': lambda x, m: eval_true_mckean_drift(lambda a, b: np.sin(b - a), x, m),
}

# (x, m, u) -> real
JUMP_BASES = {
    'u': lambda x, m, u: u,
    'x': lambda x, m, u: x,
    'tanh_x': lambda x, m, u: np.tanh(x),
    'cos_x': lambda x, m, u: np.cos(x),
    'u_cos_x': lambda x, m, u: u * np.cos(x),
    'u_tanh_x': lambda x, m, u: u * np.tanh(x),
    'mean_tanh': lambda x, m, u: m.integrate(np.tanh),
}

# (x_src, x_tgt, m, v_src, v_tgt) -> real
COLLECTIVE_BASES = {
    'src': lambda xs, xt, m, vs, vt: xs,
    'tgt': lambda xs, xt, m, vs, vt: xt,
    'tanh_src': lambda xs, xt, m, vs, vt: np.tanh(xs),
    'tanh_tgt': lambda xs, xt, m, vs, vt: np.tanh(xt),
    'cos_src': lambda xs, xt, m, vs, vt: np.cos(xs),
    'v_src': lambda xs, xt, m, vs, vt: vs,
    'v_tgt': lambda xs, xt, m, vs, vt: vt,
    'sin_diff': lambda xs, xt, m, vs, vt: np.sin(xt - xs),
    'tanh_diff': lambda xs, xt, m, vs, vt: np.tanh(xs - xt),
}

BASES = {'state': STATE_BASES, 'jump': JUMP_BASES, 'collective': COLLECTIVE_BASES}
ARITY = {'state': 2, 'jump': 3, 'collective': 5}


@dataclass(frozen=True)
class AffineCoefficient:
    """
    Coefficient = constant + sum_i c_i * basis_i(args).

    `family` selects the signature: 'state' (x, m), 'jump' (x, m, u) or
    'collective' (x_src, x_tgt, m, v_src, v_tgt). Measure arguments are
    passed through untouched; every other argument broadcasts.
    """
    family: str = 'state'
    constant: float = 0.0
    terms: tuple = ()

    def __post_init__(self):
        if self.family not in BASES:
            raise ConfigError(f"Unknown coefficient family: {self.family!r}")
        terms = tuple((float(c), str(name)) for c, name in self.terms)
        for _, name in terms:
            if name not in BASES[self.family]:
                raise ConfigError(f"Unknown {self.family} basis: {name!r}")
        object.__setattr__(self, 'terms', terms)
        object.__setattr__(self, 'constant', float(self.constant))

    @classmethod
    def zero(cls, family='state'):
        return cls(family, 0.0, ())

    @property
    def is_zero(self):
        return self.constant == 0.0 and all(c == 0.0 for c, _ in self.terms)

    def __call__(self, *args):
        if len(args) != ARITY[self.family]:
            raise TypeError(f"{self.family} coefficient takes {ARITY[self.family]} arguments")
        arrays = [np.asarray(a, dtype=float) for i, a in enumerate(args)
                  if not self._is_measure_slot(i)]
        shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
        result = np.full(shape, self.constant)
        for coef, name in self.terms:
            result = result + coef * np.asarray(BASES[self.family][name](*args), dtype=float)
        return result

    def _is_measure_slot(self, index):
        return index == {'state': 1, 'jump': 1, 'collective': 2}[self.family]

    def to_mapping(self):
        return {'constant': self.constant, 'terms': [[c, name] for c, name in self.terms]}

    @classmethod
    def from_mapping(cls, family, mapping):
        if mapping is None:
            return cls.zero(family)
        if isinstance(mapping, (int, float)):
            return cls(family, float(mapping), ())
        try:
            return cls(family, mapping.get('constant', 0.0),
                       tuple(tuple(term) for term in mapping.get('terms', ())))
        except (AttributeError, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid {family} coefficient {mapping!r}: {e}")


# ============================================================================
# MODEL DEFINITION
# ============================================================================

@dataclass(frozen=True)
class Bounds:
    """
    Declared sup-norms. None means "not declared"; bound calculators
    refuse to certify anything that depends on an undeclared value.

    phi_exp   = sup_{x,m} int e^{a|Phi(x,m,u)|} d rho(u)
    theta_exp = sup int e^{a|Theta|} d nu
    """
    drift: float = None
    diffusion: float = None
    rate: float = None
    phi_exp: float = None
    theta_exp: float = None

    def to_mapping(self):
        return {'drift': self.drift, 'diffusion': self.diffusion, 'rate': self.rate,
                'phi_exp': self.phi_exp, 'theta_exp': self.theta_exp}


@dataclass(frozen=True)
class ModelSpec:
    """
    A McKean-Vlasov model as data.

    self_jump houses Phi (limit equation) and Psi (particle system);
    collective_jump houses Theta. None means the coefficient vanishes.
    Immutable and safe to share across threads.
    """
    name: str
    drift: object
    diffusion: object
    rate: object
    self_jump: object = None
    collective_jump: object = None
    mark_law: SamplingLaw = field(default_factory=lambda: SamplingLaw.uniform(-1.0, 1.0))
    initial_law: SamplingLaw = field(default_factory=lambda: SamplingLaw.normal(0.0, 0.5))
    lipschitz_const: float = 1.0
    exp_exponent: float = 1.0
    bounds: Bounds = field(default_factory=Bounds)

    def __post_init__(self):
        if self.lipschitz_const <= 0:
            raise ConfigError(f"Lipschitz constant must be > 0, got {self.lipschitz_const}")
        if self.exp_exponent <= 0:
            raise ConfigError(f"Exponent a must be > 0, got {self.exp_exponent}")

    @property
    def has_self_jumps(self):
        return self.self_jump is not None and not getattr(self.self_jump, 'is_zero', False)

    @property
    def has_collective_jumps(self):
        return self.collective_jump is not None and not getattr(self.collective_jump, 'is_zero', False)

    @property
    def has_jumps(self):
        return (self.has_self_jumps or self.has_collective_jumps) and not getattr(self.rate, 'is_zero', False)

    def dominating_rate(self):
        """Thinning intensity Lambda: the declared ||f||_inf (1.0 if f is identically 0)."""
        if self.bounds.rate is None:
            raise ConfigError(f"Model {self.name!r} declares no sup-norm for the jump rate")
        return self.bounds.rate if self.bounds.rate > 0 else 1.0

    def without_collective_jumps(self):
        """The limit-equation model: same coefficients, Theta = 0."""
        return ModelSpec(self.name, self.drift, self.diffusion, self.rate, self.self_jump, None,
                         self.mark_law, self.initial_law, self.lipschitz_const,
                         self.exp_exponent, self.bounds)

    def to_mapping(self):
        """
        Serialize an affine model (catalog or inline). Models built from
        arbitrary callables cannot be serialized.

        Raises:
            ConfigError: if a coefficient is not an AffineCoefficient
        """
        coefficients = {}
        for key, value in (('drift', self.drift), ('diffusion', self.diffusion),
                           ('rate', self.rate), ('self_jump', self.self_jump),
                           ('collective_jump', self.collective_jump)):
            if value is None:
                coefficients[key] = None
            elif isinstance(value, AffineCoefficient):
                coefficients[key] = value.to_mapping()
            else:
                raise ConfigError(f"Coefficient {key!r} of model {self.name!r} is not serializable")
        return {
            'name': self.name,
            **coefficients,
            'mark_law': self.mark_law.to_mapping(),
            'initial_law': self.initial_law.to_mapping(),
            'lipschitz_const': self.lipschitz_const,
            'exp_exponent': self.exp_exponent,
            'bounds': self.bounds.to_mapping(),
        }
