"""
Run Output Storage

Every command writes into one output directory:
- CSV tables (pandas, no index)
- JSON documents (sorted keys, indent 2)
- metadata.json holding the resolved RunConfig and the model

Files are first written to a temporary sibling directory which replaces the
target only when the command succeeds, so a failed run never leaves a
half-written directory behind. Nothing time-dependent is written.

Author: meanjump Team
Purpose: Byte-reproducible result files
"""

import json
import math
import os
import shutil

import numpy as np

from exceptions import ConfigError, OutputError
from extensions import logger

METADATA_FILE = 'metadata.json'


def to_jsonable(value):
    """Plain JSON types; numpy scalars/arrays unwrapped, non-finite floats as strings."""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    return value


def dumps(document):
    return json.dumps(to_jsonable(document), sort_keys=True, indent=2) + '\n'


def build_metadata(run_config, spec, grid):
    """
    Everything needed to rerun a command bit-exactly.

    The model is stored inline when it serializes, so an edited catalog
    cannot silently change a rerun.
    """
    mapping = run_config.to_mapping()
    try:
        model = spec.to_mapping()
    except ConfigError:
        model = None
    grid = np.asarray(grid, dtype=float)
    return {
        'config': mapping,
        'model_id': mapping['model'] if isinstance(mapping['model'], str) else spec.name,
        'model': model,
        'seed': run_config.seed,
        'generator': run_config.generator,
        'dt': run_config.dt,
        'grid': {'start': float(grid[0]), 'end': float(grid[-1]), 'nodes': int(grid.size)},
    }


class RunWriter:
    """
    Context manager collecting the files of one command.

    Usage:
        with RunWriter(path) as writer:
            writer.write_csv('flow', frame)
            writer.write_json('diagnostics', mapping)

    On a clean exit the temporary directory is renamed onto `path`; on an
    exception it is removed and `path` is left untouched.
    """

    def __init__(self, output_dir):
        self.output_dir = os.path.abspath(output_dir)
        self.staging_dir = self.output_dir + '.partial'
        self.written = []

    def __enter__(self):
        try:
            if os.path.exists(self.staging_dir):
                shutil.rmtree(self.staging_dir)
            os.makedirs(self.staging_dir)
        except OSError as e:
            raise OutputError(f"Cannot create output directory {self.staging_dir}: {e}")
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.staging_dir, ignore_errors=True)
            return False
        try:
            if os.path.exists(self.output_dir):
                shutil.rmtree(self.output_dir)
            os.replace(self.staging_dir, self.output_dir)
        except OSError as e:
            shutil.rmtree(self.staging_dir, ignore_errors=True)
            raise OutputError(f"Cannot publish results to {self.output_dir}: {e}")
        logger.info(f"Wrote {len(self.written)} files to {self.output_dir}")
        return False

    def _path(self, name, extension):
        filename = name if name.endswith(extension) else f"{name}{extension}"
        self.written.append(filename)
        return os.path.join(self.staging_dir, filename)

    def write_csv(self, name, frame):
        try:
            frame.to_csv(self._path(name, '.csv'), index=False)
        except OSError as e:
            raise OutputError(f"Error writing {name}: {e}")

    def write_json(self, name, document):
        try:
            with open(self._path(name, '.json'), 'w', encoding='utf-8') as f:
                f.write(dumps(document))
        except OSError as e:
            raise OutputError(f"Error writing {name}: {e}")

    def write_tables(self, tables):
        for name, frame in sorted(tables.items()):
            self.write_csv(name, frame)

    def write_metadata(self, run_config, spec, grid):
        self.write_json(METADATA_FILE, build_metadata(run_config, spec, grid))
