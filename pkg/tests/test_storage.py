import json
import math
import os

import numpy as np
import pandas as pd
import pytest

from exceptions import OutputError
from models import ModelSpec
from storage import METADATA_FILE, RunWriter, build_metadata, dumps, to_jsonable


def test_to_jsonable_unwraps_numpy_and_non_finite_values():
    document = {
        'inf': np.float64(math.inf),
        'neg': -math.inf,
        'nan': float('nan'),
        'count': np.int64(3),
        'flag': np.bool_(True),
        'array': np.array([1.5, 2.5]),
        'pair': (1, 2),
    }
    assert to_jsonable(document) == {
        'inf': 'inf', 'neg': '-inf', 'nan': 'nan', 'count': 3, 'flag': True,
        'array': [1.5, 2.5], 'pair': [1, 2],
    }


def test_dumps_is_sorted_and_newline_terminated():
    text = dumps({'b': 1, 'a': [np.float64(0.5)]})
    assert text.endswith('\n')
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {'a': [0.5], 'b': 1}


def test_writer_publishes_on_success(tmp_path):
    target = tmp_path / 'out'
    with RunWriter(str(target)) as writer:
        writer.write_json('summary', {'value': 1})
        writer.write_csv('table', pd.DataFrame({'x': [1, 2]}))
        assert not target.exists()
    assert sorted(os.listdir(target)) == ['summary.json', 'table.csv']
    assert not (tmp_path / 'out.partial').exists()
    assert (target / 'table.csv').read_text() == 'x\n1\n2\n'


def test_writer_replaces_previous_results(tmp_path):
    target = tmp_path / 'out'
    target.mkdir()
    (target / 'stale.json').write_text('{}')
    with RunWriter(str(target)) as writer:
        writer.write_json('fresh', {})
    assert os.listdir(target) == ['fresh.json']


def test_failed_run_leaves_target_untouched(tmp_path):
    target = tmp_path / 'out'
    target.mkdir()
    (target / 'old.json').write_text('{"kept": true}')
    with pytest.raises(RuntimeError):
        with RunWriter(str(target)) as writer:
            writer.write_json('new', {})
            raise RuntimeError('boom')
    assert os.listdir(target) == ['old.json']
    assert not (tmp_path / 'out.partial').exists()


def test_unwritable_location_is_an_output_error(tmp_path):
    blocker = tmp_path / 'blocker'
    blocker.write_text('not a directory')
    with pytest.raises(OutputError):
        with RunWriter(str(blocker / 'out')):
            pass


def test_write_tables_uses_table_names(tmp_path):
    target = tmp_path / 'out'
    with RunWriter(str(target)) as writer:
        writer.write_tables({'b_table': pd.DataFrame({'v': [1]}), 'a_table': pd.DataFrame({'v': [2]})})
        assert writer.written == ['a_table.csv', 'b_table.csv']


def test_metadata_records_model_and_grid(tmp_path, lin_lip, testing_config):
    grid = testing_config.grid()
    with RunWriter(str(tmp_path / 'out')) as writer:
        writer.write_metadata(testing_config, lin_lip, grid)
    metadata = json.loads((tmp_path / 'out' / METADATA_FILE).read_text())
    assert metadata['model_id'] == 'lin-lip'
    assert metadata['model'] == json.loads(dumps(lin_lip.to_mapping()))
    assert metadata['grid'] == {'start': 0.0, 'end': float(grid[-1]), 'nodes': grid.size}
    assert metadata['seed'] == testing_config.seed


def test_metadata_of_callable_model_omits_the_model(testing_config):
    spec = ModelSpec('custom', lambda x, m: -x, lambda x, m: 0.0 * x, lambda x, m: 0.0 * x)
    metadata = build_metadata(testing_config, spec, np.linspace(0.0, 1.0, 3))
    assert metadata['model'] is None
