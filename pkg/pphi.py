#!/usr/bin/env python3
"""
P(phi)_2 zeros laboratory - command line
Subcommands run one experiment each; exit code 0 on success, 1 on a failed
check or numerical error, 2 on a configuration error.
"""

import argparse
import os
import sys
import warnings

from experiments import RUNNERS, RunContext
from pphi_config import load_run_config
from pphi_errors import ConfigurationError, ConvergenceWarning, PPhiError
from run_audit import RunAudit, log
from sample_store import SampleStore


EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2

SUBCOMMANDS = {
    'sample': 'Draw random sections per degree',
    'zeros': 'Find the zeros of sampled (or stored) sections',
    'equilibrium': 'Solve for the equilibrium measure on the support grid',
    'rate': 'Evaluate the rate functional',
    'jpc-check': 'Check the joint density of zeros',
    'gamma-check': 'Check Gamma_N against its bounds',
    'bernstein-check': 'Check Bernstein ratios and their growth',
    'kh-demo': 'Run the Kac-Hammersley example end to end',
    'eqdist': 'Distance of the mean zero measure to the equilibrium measure',
}


def _common_flags():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON run-config')
    common.add_argument('--seed', type=int, help='Master seed (unsigned 64-bit)')
    common.add_argument('--out', help='Run directory, or an output file whose directory becomes the run directory')
    common.add_argument('--threads', type=int, help='Worker threads')
    common.add_argument('--N', type=int, nargs='+', dest='degrees', help='Degrees, increasing')
    common.add_argument('--samples', type=int, help='Samples per degree')
    return common


def build_parser():
    common = _common_flags()
    # Shared flags are accepted after the subcommand
    parser = argparse.ArgumentParser(prog='pphi', description='Zeros of random P(phi)_2 polynomials')
    sub = parser.add_subparsers(dest='command', required=True)
    commands = {name: sub.add_parser(name, help=text, parents=[common]) for name, text in SUBCOMMANDS.items()}

    commands['zeros'].add_argument('--in', dest='samples_file', help='Samples file to read')
    commands['rate'].add_argument('--measure', help='Measure file (JSON) to evaluate')
    commands['rate'].add_argument('--max-atoms', type=int, help='Quantize larger measures to this many atoms')
    commands['jpc-check'].add_argument('--n-pairs', type=int, help='Random configuration pairs per degree')
    commands['jpc-check'].add_argument('--histogram-samples', type=int, help='Zeros in the N=1 histogram')
    commands['gamma-check'].add_argument('--k', type=int, help='Degree of the potential')
    commands['gamma-check'].add_argument('--c', type=float, nargs='+', help='Coefficients c_1..c_(k-1)')
    commands['gamma-check'].add_argument('--n-max', type=int, help='Largest N')
    commands['bernstein-check'].add_argument('--n-random', type=int, help='Random sections per degree')
    commands['eqdist'].add_argument('--max-atoms', type=int, help='Quantize larger measures to this many atoms')
    return parser


def _split_out(out):
    """(run directory, output file name or None)."""
    if out is None:
        return None, None
    if os.path.splitext(out)[1]:
        return os.path.dirname(out) or '.', os.path.basename(out)
    return out, None


def overrides_from_args(args):
    """Run-config overrides from the parsed command line."""
    experiment = args.command.replace('-', '_')
    out_dir, out_file = _split_out(args.out)
    options = {}
    for flag in ('n_pairs', 'histogram_samples', 'k', 'c', 'n_max', 'n_random', 'max_atoms'):
        value = getattr(args, flag, None)
        if value is not None:
            options[flag] = value
    for flag in ('samples_file', 'measure'):
        path = getattr(args, flag, None)
        if path is not None:
            options[flag] = os.path.abspath(path)
    overrides = {
        'experiment': experiment,
        'seed': args.seed,
        'threads': args.threads,
        'output_dir': out_dir,
        'N': args.degrees,
        'samples': args.samples,
        'options': options or None,
    }
    return overrides, out_file


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    overrides, out_file = overrides_from_args(args)

    try:
        cfg = load_run_config(args.config, overrides)
    except ConfigurationError as e:
        log(f"[PPHI] ❌ {e}")
        return EXIT_CONFIG_ERROR

    print("=" * 80, file=sys.stderr)
    print(f"pphi {args.command} - run directory {cfg.output_dir}", file=sys.stderr)
    print(f"Config hash: {cfg.hash()[:16]}  Seed: {cfg.seed}  N: {cfg.N}", file=sys.stderr)
    print("=" * 80, file=sys.stderr)

    audit = RunAudit(cfg.output_dir)
    store = SampleStore(cfg.output_dir, audit)
    audit.write_manifest(cfg, command=' '.join(['pphi'] + argv))
    audit.log_event('RUN_START', experiment=cfg.experiment, config_hash=cfg.hash())

    with warnings.catch_warnings():
        warnings.simplefilter('always', ConvergenceWarning)
        try:
            results = RUNNERS[cfg.experiment](RunContext(cfg, audit, store, out_file))
        except ConfigurationError as e:
            audit.log_event('RUN_FAILED', success=False, error_message=str(e))
            return EXIT_CONFIG_ERROR
        except PPhiError as e:
            audit.log_event('RUN_FAILED', success=False, error_message=f"{type(e).__name__}: {e}")
            return EXIT_CHECK_FAILED

    status = EXIT_OK if results['valid'] else EXIT_CHECK_FAILED
    audit.log_event('RUN_COMPLETE', success=status == EXIT_OK,
                    error_message=None if status == EXIT_OK else f"{results['error_count']} checks failed",
                    warnings=results['warning_count'])
    return status


if __name__ == '__main__':
    sys.exit(main())
