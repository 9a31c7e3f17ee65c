import json
import os

import pandas as pd
import pytest

from app import EXIT_IO, EXIT_NON_CONVERGENCE, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, create_parser, main

FAST = ['--profile', 'testing', '--horizon', '0.2']


def cli(tmp_path, *args):
    return main([*args, *FAST, '--output', str(tmp_path / 'runs')])


def read_json(tmp_path, command, name):
    with open(tmp_path / 'runs' / command / name, encoding='utf-8') as f:
        return json.load(f)


def snapshot(directory):
    return {name: (directory / name).read_bytes() for name in sorted(os.listdir(directory))}


def test_parser_requires_a_subcommand():
    with pytest.raises(SystemExit):
        create_parser().parse_args([])


def test_validate_catalog_model(tmp_path):
    assert cli(tmp_path, 'validate', '--model', 'lin-lip') == EXIT_OK
    probes = read_json(tmp_path, 'validate', 'probes.json')
    assert probes['passed'] is True
    assert len(probes['probes']) == 4
    metadata = read_json(tmp_path, 'validate', 'metadata.json')
    assert metadata['model_id'] == 'lin-lip'
    assert metadata['config']['experiment'] == 'validate'


def test_validate_inline_model_with_violated_rate_bound(tmp_path):
    model_file = tmp_path / 'model.yaml'
    model_file.write_text(
        'rate: 2.0\n'
        'self_jump: {terms: [[1.0, u]]}\n'
        'bounds: {drift: 0.0, diffusion: 0.0, rate: 1.0, phi_exp: 2.0, theta_exp: 1.0}\n')
    assert cli(tmp_path, 'validate', '--model-file', str(model_file)) == EXIT_VALIDATION
    probes = read_json(tmp_path, 'validate', 'probes.json')
    assert probes['passed'] is False


def test_unknown_model_is_a_usage_error(tmp_path):
    assert cli(tmp_path, 'validate', '--model', 'no-such-model') == EXIT_USAGE
    assert not (tmp_path / 'runs' / 'validate').exists()


def test_invalid_flag_value_is_a_usage_error(tmp_path):
    assert cli(tmp_path, 'solve', '--model', 'null', '--dt', '-1') == EXIT_USAGE


def test_unwritable_output_is_an_io_error(tmp_path):
    blocker = tmp_path / 'blocker'
    blocker.write_text('')
    code = main(['validate', '--model', 'null', *FAST, '--output', str(blocker)])
    assert code == EXIT_IO


def test_solve_writes_flow_summary(tmp_path):
    assert cli(tmp_path, 'solve', '--model', 'null', '--full-flow', '--uniqueness') == EXIT_OK
    directory = tmp_path / 'runs' / 'solve'
    summary = pd.read_csv(directory / 'flow_summary.csv')
    assert list(summary.columns) == ['t', 'mean', 'mean_abs', 'exp_moment',
                                     'q05', 'q25', 'q50', 'q75', 'q95']
    assert len(summary) == 5
    assert read_json(tmp_path, 'solve', 'diagnostics.json')['converged'] is True
    assert read_json(tmp_path, 'solve', 'uniqueness.json')['passed'] is True
    assert (directory / 'flow.csv').exists()
    assert (directory / 'terminal_measure.csv').exists()


def test_solve_reports_non_convergence(tmp_path):
    code = cli(tmp_path, 'solve', '--model', 'lin-lip', '--max-iter', '1', '--tol', '1e-9')
    assert code == EXIT_NON_CONVERGENCE
    assert read_json(tmp_path, 'solve', 'diagnostics.json')['converged'] is False


@pytest.mark.parametrize('system', ['particles', 'limit'])
def test_simulate_writes_paths_and_jumps(tmp_path, system):
    assert cli(tmp_path, 'simulate', '--model', 'lin-lip', '--particles', '4',
               '--system', system, '--tol', '0.5') == EXIT_OK
    paths = pd.read_csv(tmp_path / 'runs' / 'simulate' / 'paths.csv')
    assert list(paths.columns) == ['t', 'particle', 'state']
    assert len(paths) == 4 * 5
    assert (tmp_path / 'runs' / 'simulate' / 'jumps.csv').exists()


def test_same_command_twice_gives_identical_files(tmp_path):
    args = ('simulate', '--model', 'lin-lip', '--particles', '6', '--seed', '11')
    assert cli(tmp_path, *args) == EXIT_OK
    first = snapshot(tmp_path / 'runs' / 'simulate')
    assert cli(tmp_path, *args) == EXIT_OK
    assert snapshot(tmp_path / 'runs' / 'simulate') == first


def test_chaos_on_null_model(tmp_path):
    assert cli(tmp_path, 'chaos', '--model', 'null', '--ns', '2,3,4', '--replicas', '2',
               '--samples', '100') == EXIT_OK
    summary = read_json(tmp_path, 'chaos', 'summary.json')
    assert summary['chaos']['mean_sup_error'] == [0.0, 0.0, 0.0]
    assert (tmp_path / 'runs' / 'chaos' / 'chaos_windows.csv').exists()


def test_chaos_with_unconverged_flow_exits_non_convergence(tmp_path):
    code = cli(tmp_path, 'chaos', '--model', 'lin-lip', '--ns', '2,3', '--replicas', '1',
               '--samples', '100', '--max-iter', '1', '--tol', '1e-9')
    assert code == EXIT_NON_CONVERGENCE


def test_rates_on_dirac_law(tmp_path):
    assert cli(tmp_path, 'rates', '--kind', 'fournier', '--law', 'dirac', '--ns', '10,20,40',
               '--replicas', '2', '--reference-size', '1000') == EXIT_OK
    summary = read_json(tmp_path, 'rates', 'summary.json')
    assert summary['fournier']['all_zero'] is True
    assert summary['fournier']['law'] == 'dirac'
    assert 'gn' not in summary


def test_bounds_on_null_model(tmp_path):
    assert cli(tmp_path, 'bounds', '--model', 'null') == EXIT_OK
    report = read_json(tmp_path, 'bounds', 'bounds.json')
    assert report['gronwall_constant'] == 0.0
    assert report['gronwall_constant_collective'] == 0.0
    assert report['moment_audit']['passed'] is True
    assert report['bound_at_horizon'] == pytest.approx(report['exp_moment_x0'])


def test_config_file_from_previous_run_reproduces_it(tmp_path):
    assert cli(tmp_path, 'simulate', '--model', 'pure-drift', '--particles', '3') == EXIT_OK
    first = snapshot(tmp_path / 'runs' / 'simulate')
    metadata = tmp_path / 'metadata.json'
    metadata.write_bytes(first['metadata.json'])
    assert main(['simulate', '--profile', 'testing', '--config', str(metadata)]) == EXIT_OK
    assert snapshot(tmp_path / 'runs' / 'simulate') == first


@pytest.mark.parametrize('seed', ['-1', str(2**64)])
def test_out_of_range_seed_is_a_usage_error(tmp_path, seed):
    assert cli(tmp_path, 'validate', '--model', 'null', '--seed', seed) == EXIT_USAGE
    assert not (tmp_path / 'runs' / 'validate').exists()
