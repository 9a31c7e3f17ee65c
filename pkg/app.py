"""
Command-Line Entry Point for meanjump

Subcommands:
- validate   run the model probes
- solve      Picard solver for the limit flow
- simulate   particle system (or limit copies) path ensemble
- chaos      propagation-of-chaos experiment
- rates      empirical-measure and G^N rate experiments
- bounds     Gronwall constant and exponential-moment audit

Every command resolves a RunConfig (profile <- config file <- flags) and
writes its files plus metadata.json into <output_dir>/<command>/.

Exit codes: 0 success, 2 validation failure, 3 non-convergence,
4 I/O error, 64 usage error.

Author: meanjump Team
Purpose: Scriptable, reproducible access to the library
"""

import argparse
import os
import sys

import numpy as np
import pandas as pd
import yaml
from dotenv import load_dotenv

# Load environment variables first
load_dotenv()

from analysis import gronwall_constant, gronwall_exp_moment_bound
from catalog import catalog_ids, get_model
from config import GENERATORS, RATE_KINDS, SYSTEMS, get_config, resolve_run_config
from engine import simulate_limit_copies, simulate_particle_system
from exceptions import (ConfigError, ExperimentError, MeanJumpError, OutputError,
                        PicardError)
from experiments import STANDARD_LAWS, run_chaos, run_dt_robustness, run_fournier_check, \
    run_gn_rate, run_moment_audit
from extensions import configure_logging, logger
from measure import exp_moment, mean_abs
from noise import build_bundle, derive_seed
from picard import solve_flow, uniqueness_probe
from probes import probe_initial_condition, run_all_probes
from storage import RunWriter

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NON_CONVERGENCE = 3
EXIT_IO = 4
EXIT_USAGE = 64

FLOW_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


# ============================================================================
# ARGUMENT PARSING
# ============================================================================

def _int_list(text):
    try:
        return [int(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_common(parser):
    """Flags shared by every subcommand; None means 'not given' so lower layers win."""
    parser.add_argument('--profile', default=os.environ.get('MEANJUMP_PROFILE', 'default'),
                        choices=('default', 'quick', 'acceptance', 'testing'))
    parser.add_argument('--config', dest='config_file', help='YAML/JSON config file (or a metadata.json)')
    parser.add_argument('--model', help=f"catalog id ({', '.join(catalog_ids())})")
    parser.add_argument('--model-file', help='YAML file with an inline parametric model')
    parser.add_argument('--output', dest='output_dir')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--generator', choices=GENERATORS)
    parser.add_argument('--workers', type=int, help='replica worker threads')
    parser.add_argument('--horizon', type=float)
    parser.add_argument('--dt', type=float)
    parser.add_argument('--particles', type=int)
    parser.add_argument('--ns', type=_int_list, help='comma-separated particle counts')
    parser.add_argument('--samples', type=int, help='Picard cloud size M')
    parser.add_argument('--tol', type=float)
    parser.add_argument('--max-iter', type=int)
    parser.add_argument('--replicas', type=int)
    parser.add_argument('--n-mark-samples', type=int)
    parser.add_argument('--log-level')


def create_parser():
    """
    Build the argparse command tree.

    Returns:
        argparse.ArgumentParser
    """
    parser = argparse.ArgumentParser(prog='meanjump',
                                     description='McKean-Vlasov jump-diffusion simulation toolkit')
    commands = parser.add_subparsers(dest='experiment', required=True)

    validate = commands.add_parser('validate', help='run the model probes')
    _add_common(validate)
    validate.add_argument('--probe-pairs', type=int)

    solve = commands.add_parser('solve', help='solve the limit flow by Picard iteration')
    _add_common(solve)
    solve.add_argument('--full-flow', action='store_const', const=True,
                       help='also write every atom of every flow measure')
    solve.add_argument('--uniqueness', action='store_const', const=True,
                       help='rerun from a Dirac start flow and compare')

    simulate = commands.add_parser('simulate', help='simulate a path ensemble')
    _add_common(simulate)
    simulate.add_argument('--system', choices=SYSTEMS)

    chaos = commands.add_parser('chaos', help='propagation-of-chaos experiment')
    _add_common(chaos)
    chaos.add_argument('--independent-initial', action='store_const', const=True)
    chaos.add_argument('--check-dt', action='store_const', const=True,
                       help='rerun at dt/2 and report relative changes')

    rates = commands.add_parser('rates', help='empirical-measure and G^N rates')
    _add_common(rates)
    rates.add_argument('--kind', dest='rates', choices=RATE_KINDS)
    rates.add_argument('--law', choices=sorted(STANDARD_LAWS))
    rates.add_argument('--reference-size', type=int)

    bounds = commands.add_parser('bounds', help='Gronwall bound and exp-moment audit')
    _add_common(bounds)
    return parser


def resolve_args(args):
    """Turn parsed arguments into a validated RunConfig."""
    flags = {key: value for key, value in vars(args).items()
             if key not in ('profile', 'config_file', 'model_file', 'log_level')}
    if args.model_file:
        try:
            with open(args.model_file, 'r', encoding='utf-8') as f:
                flags['model'] = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"Cannot read model file {args.model_file}: {e}")
    return resolve_run_config(args.profile, args.config_file, **flags)


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_validate(run_config, spec, writer):
    reports = run_all_probes(spec, n_pairs=run_config.probe_pairs, seed=run_config.seed,
                             n_marks=run_config.n_mark_samples)
    passed = all(report.passed for report in reports)
    writer.write_json('probes', {'model': spec.name, 'passed': passed,
                                 'probes': [report.to_mapping() for report in reports]})
    for report in reports:
        log = logger.info if report.passed else logger.error
        log(f"probe {report.name}: {'pass' if report.passed else 'FAIL'} "
            f"(max ratio {report.max_ratio:.4g})")
    return EXIT_OK if passed else EXIT_VALIDATION


def _flow_summary(flow, a):
    columns = {'t': flow.grid,
               'mean': [m.mean() for m in flow.measures],
               'mean_abs': [mean_abs(m) for m in flow.measures],
               'exp_moment': [exp_moment(m, a) for m in flow.measures]}
    quantiles = np.array([m.quantile(FLOW_QUANTILES) for m in flow.measures])
    for j, level in enumerate(FLOW_QUANTILES):
        columns[f'q{int(round(level * 100)):02d}'] = quantiles[:, j]
    return pd.DataFrame(columns)


def _solve(run_config, spec, grid):
    return solve_flow(spec, grid, samples=run_config.samples, tol=run_config.tol,
                      max_iter=run_config.max_iter, seed=run_config.seed,
                      generator=run_config.generator, n_mark_samples=run_config.n_mark_samples)


def cmd_solve(run_config, spec, writer):
    grid = run_config.grid()
    flow, diagnostics = _solve(run_config, spec, grid)
    writer.write_json('diagnostics', diagnostics.to_mapping())
    writer.write_csv('flow_summary', _flow_summary(flow, spec.exp_exponent))
    writer.write_csv('terminal_measure', flow.measures[-1].to_frame())
    if run_config.full_flow:
        writer.write_csv('flow', flow.to_frame())
    if run_config.uniqueness:
        report = uniqueness_probe(spec, grid, samples=run_config.samples, tol=run_config.tol,
                                  max_iter=run_config.max_iter, seed=run_config.seed,
                                  generator=run_config.generator,
                                  n_mark_samples=run_config.n_mark_samples)
        writer.write_json('uniqueness', report.to_mapping())
    if not diagnostics.converged:
        logger.error(f"Picard solver did not converge (best d_n {diagnostics.final_tolerance:.4g})")
        return EXIT_NON_CONVERGENCE
    return EXIT_OK


def cmd_simulate(run_config, spec, writer):
    grid = run_config.grid()
    n = run_config.particles
    rate = spec.dominating_rate() if spec.has_jumps else 1.0
    bundle = build_bundle(run_config.seed, n, grid, rate, spec.mark_law, run_config.generator)
    if run_config.system == 'limit':
        flow, diagnostics = solve_flow(spec, grid, samples=run_config.samples, tol=run_config.tol,
                                       max_iter=run_config.max_iter,
                                       seed=derive_seed(run_config.seed, 0),
                                       generator=run_config.generator, effective=True,
                                       n_mark_samples=run_config.n_mark_samples)
        writer.write_json('diagnostics', diagnostics.to_mapping())
        if not diagnostics.converged:
            logger.error("Limit flow did not converge; no paths written")
            return EXIT_NON_CONVERGENCE
        ensemble = simulate_limit_copies(spec, flow, n, bundle, grid,
                                         n_mark_samples=run_config.n_mark_samples)
    else:
        ensemble = simulate_particle_system(spec, n, bundle, grid)
    writer.write_csv('paths', ensemble.to_frame())
    writer.write_csv('jumps', ensemble.jump_frame())
    return EXIT_OK


def _experiment_kwargs(run_config):
    return dict(horizon=run_config.horizon, dt=run_config.dt, replicas=run_config.replicas,
                seed=run_config.seed, workers=run_config.workers, generator=run_config.generator)


def cmd_chaos(run_config, spec, writer):
    kwargs = _experiment_kwargs(run_config)
    picard = dict(samples=run_config.samples, tol=run_config.tol, max_iter=run_config.max_iter,
                  n_mark_samples=run_config.n_mark_samples)
    result = run_chaos(spec, run_config.ns, independent_initial=run_config.independent_initial,
                       **picard, **kwargs)
    writer.write_tables(result.tables())
    summary = {'chaos': result.summary()}
    if run_config.check_dt:
        robustness = run_dt_robustness(spec, run_config.ns, **picard, **kwargs)
        writer.write_tables(robustness.tables())
        summary['dt_robustness'] = robustness.summary()
    writer.write_json('summary', summary)
    return EXIT_OK


def cmd_rates(run_config, spec, writer):
    summary = {}
    if run_config.rates in ('fournier', 'both'):
        result = run_fournier_check(run_config.law, run_config.ns, replicas=run_config.replicas,
                                    seed=run_config.seed, reference_size=run_config.reference_size,
                                    generator=run_config.generator, workers=run_config.workers)
        writer.write_tables(result.tables())
        summary['fournier'] = dict(result.summary(), law=run_config.law)
    if run_config.rates in ('gn', 'both'):
        result = run_gn_rate(spec, run_config.ns, n_mark_samples=run_config.n_mark_samples,
                             **_experiment_kwargs(run_config))
        writer.write_tables(result.tables())
        summary['gn'] = result.summary()
    writer.write_json('summary', summary)
    return EXIT_OK


def cmd_bounds(run_config, spec, writer):
    e_exp_x0 = probe_initial_condition(spec).details['exp_moment_x0']
    report = {
        'model': spec.name,
        'exp_exponent': spec.exp_exponent,
        'gronwall_constant': gronwall_constant(spec),
        'gronwall_constant_collective': gronwall_constant(spec, collective=True),
        'exp_moment_x0': e_exp_x0,
        'bound_at_horizon': gronwall_exp_moment_bound(spec, e_exp_x0, run_config.horizon),
        'bound_at_horizon_collective': gronwall_exp_moment_bound(spec, e_exp_x0, run_config.horizon,
                                                                 collective=True),
    }
    audit = run_moment_audit(spec, run_config.ns, **_experiment_kwargs(run_config))
    report['moment_audit'] = audit.summary()
    writer.write_tables(audit.tables())
    writer.write_json('bounds', report)
    return EXIT_OK if audit.passed else EXIT_VALIDATION


COMMANDS = {
    'validate': cmd_validate,
    'solve': cmd_solve,
    'simulate': cmd_simulate,
    'chaos': cmd_chaos,
    'rates': cmd_rates,
    'bounds': cmd_bounds,
}


def run(run_config):
    """
    Execute one resolved command and publish its directory.

    Returns:
        int: exit code
    """
    spec = get_model(run_config.model)
    target = os.path.join(run_config.output_dir, run_config.experiment)
    with RunWriter(target) as writer:
        writer.write_metadata(run_config, spec, run_config.grid())
        status = COMMANDS[run_config.experiment](run_config, spec, writer)
    logger.info(f"{run_config.experiment} finished with exit code {status}")
    return status


def main(argv=None):
    """Parse argv, run the command and map library errors to exit codes."""
    parser = create_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level or get_config(args.profile).LOG_LEVEL)
    try:
        return run(resolve_args(args))
    except ConfigError as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except OutputError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except PicardError as e:
        logger.error(f"Picard solver aborted: {e}")
        return EXIT_NON_CONVERGENCE
    except ExperimentError as e:
        logger.error(f"Experiment refused: {e}")
        return EXIT_NON_CONVERGENCE if e.non_convergence else EXIT_VALIDATION
    except MeanJumpError as e:
        logger.error(f"Run failed: {e}")
        return EXIT_VALIDATION


if __name__ == '__main__':
    sys.exit(main())
