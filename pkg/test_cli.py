#!/usr/bin/env python3
"""
Tests for the pphi command line: exit codes, --out handling and written artifacts
"""

import json
import os
import tempfile

import pandas as pd

from pphi import EXIT_CHECK_FAILED, EXIT_CONFIG_ERROR, EXIT_OK, _split_out, main


GAMMA_COLUMNS = ['N', 'log_gamma', 'lower', 'upper', 'log_gamma_over_N2', 'stated_lower', 'stated_upper',
                 'log_gamma_kinetic_over_N2']


def test_split_out():
    assert _split_out(None) == (None, None)
    assert _split_out('runs/demo') == ('runs/demo', None)
    assert _split_out('runs/demo/table.csv') == ('runs/demo', 'table.csv')
    assert _split_out('report.json') == ('.', 'report.json')


def test_missing_config_is_exit_2():
    with tempfile.TemporaryDirectory() as tmp:
        assert main(['sample', '--config', os.path.join(tmp, 'absent.json'), '--out', tmp]) == EXIT_CONFIG_ERROR


def test_invalid_seed_is_exit_2():
    with tempfile.TemporaryDirectory() as tmp:
        assert main(['sample', '--seed', '-1', '--out', tmp]) == EXIT_CONFIG_ERROR


def test_gamma_check_wrong_coefficient_count_is_exit_2():
    with tempfile.TemporaryDirectory() as tmp:
        assert main(['gamma-check', '--k', '3', '--c', '0.5', '--n-max', '10', '--out', tmp]) == EXIT_CONFIG_ERROR
        with open(os.path.join(tmp, 'audit_log.jsonl'), encoding='utf-8') as f:
            events = [json.loads(line)['event_type'] for line in f]
        assert events[-1] == 'RUN_FAILED'


def test_gamma_check_writes_table():
    with tempfile.TemporaryDirectory() as tmp:
        status = main(['gamma-check', '--k', '2', '--c', '0.5', '--n-max', '20', '--out', tmp])
        assert status == EXIT_OK
        table = pd.read_csv(os.path.join(tmp, 'gamma.csv'))
        assert list(table.columns) == GAMMA_COLUMNS
        assert table['N'].tolist() == [5, 10, 15, 20]
        assert ((table['lower'] <= table['log_gamma']) & (table['log_gamma'] <= table['upper'])).all()
        with open(os.path.join(tmp, 'gamma_report.json'), encoding='utf-8') as f:
            report = json.load(f)
        assert report['valid'] is True
        with open(os.path.join(tmp, 'manifest.json'), encoding='utf-8') as f:
            manifest = json.load(f)
        assert manifest['config']['options']['c'] == [0.5]
        assert manifest['command'].startswith('pphi gamma-check')


def test_out_file_names_the_table():
    with tempfile.TemporaryDirectory() as tmp:
        target = os.path.join(tmp, 'my_gamma.csv')
        assert main(['gamma-check', '--n-max', '10', '--out', target]) == EXIT_OK
        assert os.path.exists(target)
        assert os.path.exists(os.path.join(tmp, 'gamma_report.json'))


def test_sample_then_zeros_from_file():
    with tempfile.TemporaryDirectory() as tmp:
        sample_dir = os.path.join(tmp, 'sample')
        assert main(['sample', '--N', '4', '--samples', '10', '--seed', '5', '--out', sample_dir]) == EXIT_OK
        samples_file = os.path.join(sample_dir, 'samples_gaussian_N4.json')
        assert os.path.exists(samples_file)

        zeros_dir = os.path.join(tmp, 'zeros')
        assert main(['zeros', '--in', samples_file, '--out', zeros_dir]) == EXIT_OK
        summary = pd.read_csv(os.path.join(zeros_dir, 'zeros_summary.csv'))
        assert summary['N'].tolist() == [4]
        assert summary['failures'].tolist() == [0]
        zeros = pd.read_csv(os.path.join(zeros_dir, 'zeros_gaussian_N4.csv'))
        assert len(zeros) == 40


def test_kh_demo_draws_its_figures():
    with tempfile.TemporaryDirectory() as tmp:
        status = main(['kh-demo', '--N', '20', '40', '--samples', '20', '--seed', '3', '--out', tmp])
        assert status in (EXIT_OK, EXIT_CHECK_FAILED)
        with open(os.path.join(tmp, 'audit_log.jsonl'), encoding='utf-8') as f:
            events = [json.loads(line)['event_type'] for line in f]
        assert 'RUN_FAILED' not in events
        for name in ('kh_demo_report.json', 'kh_demo.csv', 'kh_zeros.svg', 'kh_radial.svg', 'kh_eqdist.svg'):
            assert os.path.exists(os.path.join(tmp, name)), name


def test_equilibrium_checks_restart_and_convexity():
    with tempfile.TemporaryDirectory() as tmp:
        config = os.path.join(tmp, 'fs.json')
        with open(config, 'w', encoding='utf-8') as f:
            json.dump({'geometry': {'weight': 'fubini_study', 'nu': {'curvature': 8}, 'support': 'full'},
                       'options': {'convexity_pairs': 5}}, f)
        assert main(['equilibrium', '--config', config, '--out', tmp]) == EXIT_OK
        with open(os.path.join(tmp, 'equilibrium_report.json'), encoding='utf-8') as f:
            report = json.load(f)
        passed = {r['check'] for r in report['passed']}
        assert {'rate_at_equilibrium', 'rate_at_grid_equilibrium', 'restart_agreement', 'convexity'} <= passed
        assert abs(report['summary']['rate_at_equilibrium']['total']) < 1e-9


if __name__ == '__main__':
    print("=" * 80)
    print("CLI TESTS")
    print("=" * 80)
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            fn()
            print(f"✅ {name}")
    print("=" * 80)
