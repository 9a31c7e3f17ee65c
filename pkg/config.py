"""
Configuration Module for meanjump

This module keeps the configuration layout of a classic application config:
- Base Config class with defaults read from the environment
- QuickConfig, AcceptanceConfig and TestingConfig inherit from Config
- RunConfig is the resolved, validated set of parameters of one command

Resolution order for a run: profile defaults <- config file <- CLI flags.

Author: meanjump Team
Purpose: Centralized configuration management
"""

import os
from dataclasses import dataclass, field, fields, asdict

import numpy as np
import yaml

from exceptions import ConfigError

# Get the base directory of the application
basedir = os.path.abspath(os.path.dirname(__file__))

EXPERIMENTS = ('validate', 'solve', 'simulate', 'chaos', 'rates', 'bounds')
RATE_KINDS = ('fournier', 'gn', 'both')
SYSTEMS = ('particles', 'limit')
GENERATORS = ('philox', 'pcg64', 'sfc64')


def _env_list(name, default):
    raw = os.environ.get(name)
    if not raw:
        return list(default)
    return [int(item) for item in raw.split(',') if item.strip()]


TRUE_WORDS = ('true', 'yes', 'on', '1')
FALSE_WORDS = ('false', 'no', 'off', '0')


def _to_bool(value):
    """Strict flag parsing; YAML, env and JSON sources may hand over strings."""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)) and value in (0, 1):
        return bool(value)
    if isinstance(value, str):
        word = value.strip().lower()
        if word in TRUE_WORDS:
            return True
        if word in FALSE_WORDS:
            return False
    raise ValueError(f"not a boolean: {value!r}")


class Config:
    """
    Base Configuration Class

    Contains the defaults shared by every profile. Each value can be
    overridden through a MEANJUMP_* environment variable (a .env file is
    loaded by app.py before the profile is read).
    """

    # Reproducibility
    SEED = int(os.environ.get('MEANJUMP_SEED', 20240607))
    GENERATOR = os.environ.get('MEANJUMP_GENERATOR', 'philox')

    # Time grid
    HORIZON = float(os.environ.get('MEANJUMP_HORIZON', 1.0))
    DT = float(os.environ.get('MEANJUMP_DT', 1e-3))

    # Particle counts
    PARTICLES = int(os.environ.get('MEANJUMP_PARTICLES', 100))
    NS = _env_list('MEANJUMP_NS', (10, 40, 160, 640))

    # Picard solver
    SAMPLES = int(os.environ.get('MEANJUMP_SAMPLES', 5000))
    TOL = float(os.environ.get('MEANJUMP_TOL', 0.02))
    MAX_ITER = int(os.environ.get('MEANJUMP_MAX_ITER', 50))

    # Monte Carlo
    REPLICAS = int(os.environ.get('MEANJUMP_REPLICAS', 50))
    N_MARK_SAMPLES = int(os.environ.get('MEANJUMP_N_MARK_SAMPLES', 64))
    REFERENCE_SIZE = int(os.environ.get('MEANJUMP_REFERENCE_SIZE', 10**6))
    PROBE_PAIRS = int(os.environ.get('MEANJUMP_PROBE_PAIRS', 1000))

    # Execution
    WORKERS = int(os.environ.get('MEANJUMP_WORKERS', 1))
    OUTPUT_DIR = os.environ.get('MEANJUMP_OUTPUT_DIR') or os.path.join(basedir, 'runs')
    LOG_LEVEL = os.environ.get('MEANJUMP_LOG_LEVEL', 'INFO')


class QuickConfig(Config):
    """
    Desk-scale profile

    Coarser grid and smaller clouds so that every command finishes in seconds.
    """
    DT = 1e-2
    SAMPLES = 1000
    REPLICAS = 10
    NS = [10, 40, 160]
    REFERENCE_SIZE = 10**5
    PROBE_PAIRS = 200


class AcceptanceConfig(Config):
    """Acceptance-scale profile (the defaults, spelled out)."""
    DT = 1e-3
    SAMPLES = 5000
    REPLICAS = 50
    NS = [10, 40, 160, 640]


class TestingConfig(Config):
    """Used by the automated tests; tiny grids, deterministic seed."""
    SEED = 1234
    DT = 0.05
    SAMPLES = 200
    REPLICAS = 4
    NS = [5, 10]
    N_MARK_SAMPLES = 16
    REFERENCE_SIZE = 10**4
    PROBE_PAIRS = 50
    WORKERS = 1
    LOG_LEVEL = 'WARNING'


config = {
    'quick': QuickConfig,
    'acceptance': AcceptanceConfig,
    'testing': TestingConfig,
    'default': Config,
}


def get_config(config_name='default'):
    """
    Factory function to get a configuration profile

    Args:
        config_name (str): 'default', 'quick', 'acceptance' or 'testing'

    Returns:
        type: Configuration class
    """
    return config.get(config_name, config['default'])


@dataclass
class RunConfig:
    """
    Resolved parameters of one CLI command.

    `model` is either a catalog id or an inline parametric model mapping
    (see catalog.build_model).
    """
    experiment: str = 'validate'
    model: object = 'lin-lip'
    horizon: float = 1.0
    dt: float = 1e-3
    particles: int = 100
    ns: list = field(default_factory=lambda: [10, 40, 160, 640])
    samples: int = 5000
    tol: float = 0.02
    max_iter: int = 50
    replicas: int = 50
    n_mark_samples: int = 64
    reference_size: int = 10**6
    probe_pairs: int = 1000
    seed: int = 20240607
    generator: str = 'philox'
    workers: int = 1
    output_dir: str = 'runs'
    rates: str = 'both'
    law: str = 'normal'
    independent_initial: bool = False
    system: str = 'particles'
    full_flow: bool = False
    uniqueness: bool = False
    check_dt: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"Unknown experiment selector: {self.experiment!r}")
        if self.rates not in RATE_KINDS:
            raise ConfigError(f"Unknown rate kind: {self.rates!r}")
        if self.system not in SYSTEMS:
            raise ConfigError(f"Unknown system: {self.system!r}")
        if self.generator not in GENERATORS:
            raise ConfigError(f"Unknown generator family: {self.generator!r}")
        for name in ('particles', 'samples', 'max_iter', 'replicas',
                     'n_mark_samples', 'reference_size', 'probe_pairs', 'workers'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.ns or any(int(n) < 1 for n in self.ns):
            raise ConfigError(f"ns must be a non-empty list of counts >= 1, got {self.ns}")
        if self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.horizon <= 0:
            raise ConfigError(f"horizon must be > 0, got {self.horizon}")
        if self.tol <= 0:
            raise ConfigError(f"tol must be > 0, got {self.tol}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be in [0, 2**64), got {self.seed}")

    @classmethod
    def from_profile(cls, profile_name='default', **overrides):
        """Start from a Config profile, then apply overrides."""
        profile = get_config(profile_name)
        values = {
            'horizon': profile.HORIZON,
            'dt': profile.DT,
            'particles': profile.PARTICLES,
            'ns': list(profile.NS),
            'samples': profile.SAMPLES,
            'tol': profile.TOL,
            'max_iter': profile.MAX_ITER,
            'replicas': profile.REPLICAS,
            'n_mark_samples': profile.N_MARK_SAMPLES,
            'reference_size': profile.REFERENCE_SIZE,
            'probe_pairs': profile.PROBE_PAIRS,
            'seed': profile.SEED,
            'generator': profile.GENERATOR,
            'workers': profile.WORKERS,
            'output_dir': profile.OUTPUT_DIR,
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        values = dict(mapping)
        casts = {'horizon': float, 'dt': float, 'tol': float, 'particles': int,
                 'samples': int, 'max_iter': int, 'replicas': int,
                 'n_mark_samples': int, 'reference_size': int,
                 'probe_pairs': int, 'seed': int, 'workers': int,
                 'independent_initial': _to_bool, 'full_flow': _to_bool,
                 'uniqueness': _to_bool, 'check_dt': _to_bool}
        try:
            for key, cast in casts.items():
                if key in values:
                    values[key] = cast(values[key])
            if 'ns' in values:
                values['ns'] = [int(n) for n in values['ns']]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid config value: {e}")
        return cls(**values)

    def to_mapping(self):
        return asdict(self)

    def grid(self):
        """Uniform grid 0 = t_0 < ... < t_n = horizon with step dt."""
        n_steps = max(1, int(round(self.horizon / self.dt)))
        return np.linspace(0.0, self.horizon, n_steps + 1)


def load_config_file(path):
    """
    Read a YAML (or JSON) config file.

    A metadata.json written by a previous run is accepted as well: its
    'config' block is the full RunConfig mapping.

    Raises:
        ConfigError: if the file is missing or malformed
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}")
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed config file {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a mapping")
    if 'config' in data and isinstance(data['config'], dict):
        data = data['config']
    return data


def resolve_run_config(profile_name='default', file_path=None, **flags):
    """
    Merge profile defaults, the config file and flag overrides (flags win).

    Returns:
        RunConfig: validated run configuration
    """
    merged = {}
    if file_path:
        merged.update(load_config_file(file_path))
    merged.update({key: value for key, value in flags.items() if value is not None})
    return RunConfig.from_profile(profile_name, **merged)
