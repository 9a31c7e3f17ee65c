"""
Built-in Model Catalog

This module:
1. Declares the catalog entries as plain data (one mapping per model)
2. Builds ModelSpec objects from catalog ids or inline config mappings
3. Lists the available ids for the CLI

Catalog entries:
- 'lin-lip'    every coefficient globally Lipschitz and bounded
- 'loclip'     b(x,m) = sin(x^2) + int arctan(y) dm(y), genuinely local
- 'pure-drift' b(x,m) = -tanh(x), sigma = f = 0, exact ODE oracle
- 'null'       every coefficient zero

Author: meanjump Team
Purpose: Seed the library with models of known analytic behavior
"""

import math

from exceptions import ConfigError
from models import AffineCoefficient, Bounds, ModelSpec, SamplingLaw

# 2 (e^{1/2} - 1): int e^{|u|/2} du/2 over [-1, 1]
_HALF_UNIFORM_EXP = 2.0 * (math.exp(0.5) - 1.0)

CATALOG = {
    'lin-lip': {
        'drift': {'terms': [[1.0, 'tanh_mean_minus_x']]},
        'diffusion': {'constant': 0.5, 'terms': [[0.2, 'sin_x']]},
        'rate': {'constant': 1.0, 'terms': [[0.5, 'cos_x']]},
        'self_jump': {'terms': [[0.5, 'u']]},
        'collective_jump': {'terms': [[0.25, 'tanh_src'], [0.5, 'v_tgt']]},
        'mark_law': {'kind': 'uniform', 'params': [-1.0, 1.0]},
        'initial_law': {'kind': 'normal', 'params': [0.0, 0.5]},
        'lipschitz_const': 1.0,
        'exp_exponent': 1.0,
        'bounds': {
            'drift': 1.0,
            'diffusion': 0.7,
            'rate': 1.5,
            'phi_exp': round(_HALF_UNIFORM_EXP + 0.005, 2),
            'theta_exp': round(math.exp(0.25) * _HALF_UNIFORM_EXP + 0.005, 2),
        },
    },
    'loclip': {
        'drift': {'terms': [[1.0, 'sin_x2'], [1.0, 'mean_arctan']]},
        'diffusion': {'constant': 0.5},
        'rate': {'constant': 1.0, 'terms': [[0.5, 'cos_x']]},
        'self_jump': {'terms': [[0.5, 'u']]},
        'collective_jump': {'terms': [[0.25, 'tanh_src'], [0.5, 'v_tgt']]},
        'mark_law': {'kind': 'uniform', 'params': [-1.0, 1.0]},
        'initial_law': {'kind': 'normal', 'params': [0.0, 0.5]},
        'lipschitz_const': 1.0,
        'exp_exponent': 1.0,
        'bounds': {
            'drift': round(1.0 + math.pi / 2 + 0.005, 2),
            'diffusion': 0.5,
            'rate': 1.5,
            'phi_exp': round(_HALF_UNIFORM_EXP + 0.005, 2),
            'theta_exp': round(math.exp(0.25) * _HALF_UNIFORM_EXP + 0.005, 2),
        },
    },
    'pure-drift': {
        'drift': {'terms': [[-1.0, 'tanh_x']]},
        'diffusion': None,
        'rate': None,
        'self_jump': None,
        'collective_jump': None,
        'mark_law': {'kind': 'uniform', 'params': [-1.0, 1.0]},
        'initial_law': {'kind': 'dirac', 'params': [2.0]},
        'lipschitz_const': 1.0,
        'exp_exponent': 1.0,
        'bounds': {'drift': 1.0, 'diffusion': 0.0, 'rate': 0.0, 'phi_exp': 1.0, 'theta_exp': 1.0},
    },
    'null': {
        'drift': None,
        'diffusion': None,
        'rate': None,
        'self_jump': None,
        'collective_jump': None,
        'mark_law': {'kind': 'uniform', 'params': [-1.0, 1.0]},
        'initial_law': {'kind': 'normal', 'params': [0.0, 0.5]},
        'lipschitz_const': 1.0,
        'exp_exponent': 1.0,
        'bounds': {'drift': 0.0, 'diffusion': 0.0, 'rate': 0.0, 'phi_exp': 1.0, 'theta_exp': 1.0},
    },
}


def catalog_ids():
    """Sorted list of catalog model ids."""
    return sorted(CATALOG)


def build_model(mapping, name='inline'):
    """
    Build a ModelSpec from a parametric mapping.

    Args:
        mapping (dict): coefficient mappings (constant + terms), laws,
            constants and declared bounds, as in CATALOG
        name (str): model name used in reports

    Returns:
        ModelSpec

    Raises:
        ConfigError: on unknown keys, bases or malformed values
    """
    if not isinstance(mapping, dict):
        raise ConfigError(f"Inline model must be a mapping, got {type(mapping).__name__}")
    allowed = {'name', 'drift', 'diffusion', 'rate', 'self_jump', 'collective_jump',
               'mark_law', 'initial_law', 'lipschitz_const', 'exp_exponent', 'bounds'}
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"Unknown model keys: {sorted(unknown)}")

    bounds = mapping.get('bounds') or {}
    try:
        bounds = Bounds(**{key: (None if value is None else float(value))
                           for key, value in bounds.items()})
    except TypeError as e:
        raise ConfigError(f"Invalid bounds {bounds!r}: {e}")

    self_jump = mapping.get('self_jump')
    collective_jump = mapping.get('collective_jump')
    return ModelSpec(
        name=mapping.get('name', name),
        drift=AffineCoefficient.from_mapping('state', mapping.get('drift')),
        diffusion=AffineCoefficient.from_mapping('state', mapping.get('diffusion')),
        rate=AffineCoefficient.from_mapping('state', mapping.get('rate')),
        self_jump=None if self_jump is None else AffineCoefficient.from_mapping('jump', self_jump),
        collective_jump=(None if collective_jump is None
                         else AffineCoefficient.from_mapping('collective', collective_jump)),
        mark_law=SamplingLaw.from_mapping(mapping.get('mark_law') or {'kind': 'uniform', 'params': [-1, 1]}),
        initial_law=SamplingLaw.from_mapping(mapping.get('initial_law') or {'kind': 'normal', 'params': [0, 0.5]}),
        lipschitz_const=float(mapping.get('lipschitz_const', 1.0)),
        exp_exponent=float(mapping.get('exp_exponent', 1.0)),
        bounds=bounds,
    )


def get_model(model):
    """
    Resolve a catalog id or an inline mapping to a ModelSpec.

    Raises:
        ConfigError: if the id is not in the catalog
    """
    if isinstance(model, ModelSpec):
        return model
    if isinstance(model, str):
        if model not in CATALOG:
            raise ConfigError(f"Unknown model id {model!r}; available: {', '.join(catalog_ids())}")
        return build_model(CATALOG[model], name=model)
    return build_model(model)
