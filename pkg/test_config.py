#!/usr/bin/env python3
"""
Tests for run-config loading, validation and hashing
"""

import json
import os
import tempfile

from pphi_config import DEFAULT_GEOMETRY, build_run_config, config_hash, load_run_config
from pphi_errors import ConfigurationError


def _expect_problem(raw, fragment, overrides=None):
    try:
        build_run_config(raw, overrides)
        assert False, "expected ConfigurationError"
    except ConfigurationError as e:
        assert any(fragment in p for p in e.problems), e.problems


def test_defaults():
    cfg = build_run_config({})
    assert cfg.experiment == 'kh_demo'
    assert cfg.geometry['weight'] == DEFAULT_GEOMETRY['weight']
    assert cfg.potential == {'k': 1, 'c': [1.0], 'kinetic': False}
    assert cfg.options['radial_band'] == [0.85, 1.15]
    assert cfg.output_dir == os.path.join('runs', 'kh_demo')


def test_overrides_win_and_none_is_ignored():
    cfg = build_run_config({'seed': 1, 'N': [10]}, {'seed': 7, 'N': None, 'experiment': 'gamma_check',
                                                     'options': {'n_max': 50}})
    assert cfg.seed == 7
    assert cfg.N == [10]
    assert cfg.options['n_max'] == 50
    assert cfg.options['k'] == 2


def test_potential_coefficients_replace_defaults():
    cfg = build_run_config({'potential': {'k': 2, 'c': [0.5, 1.0], 'kinetic': True}})
    assert cfg.potential == {'k': 2, 'c': [0.5, 1.0], 'kinetic': True}


def test_invalid_values_are_collected():
    _expect_problem({'potential': {'k': 2, 'c': [0.5, 2.0]}}, 'c_k must equal 1')
    _expect_problem({'potential': {'k': 2, 'c': [1.0]}}, 'potential.c must list')
    _expect_problem({'N': [20, 10]}, 'strictly increasing')
    _expect_problem({'seed': -1}, 'unsigned 64-bit')
    _expect_problem({'experiment': 'bogus'}, 'experiment must be one of')
    _expect_problem({'geometry': {'weight': 'fubini_study', 'nu': {'lattice': 4}}}, 'Unknown geometry.nu')
    _expect_problem({'sampler': {'n_chains': 1}}, 'n_chains')
    _expect_problem({'solver': {'init': 'random'}}, 'solver.init')
    _expect_problem({}, 'missing file', {'experiment': 'rate', 'options': {'measure': '/no/such/measure.json'}})


def test_hash_ignores_output_dir_and_threads():
    a = build_run_config({'output_dir': 'a', 'threads': 1})
    b = build_run_config({'output_dir': 'b', 'threads': 8})
    c = build_run_config({'seed': 99})
    assert a.hash() == b.hash()
    assert a.hash() != c.hash()
    assert config_hash({'x': 1, 'y': 2}) == config_hash({'y': 2, 'x': 1})


def test_load_from_file():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, 'run.json')
        with open(path, 'w', encoding='utf-8') as f:
            json.dump({'experiment': 'bernstein_check', 'N': 5}, f)
        cfg = load_run_config(path)
        assert cfg.experiment == 'bernstein_check'
        assert cfg.N == [5]

        bad = os.path.join(tmp, 'bad.json')
        with open(bad, 'w', encoding='utf-8') as f:
            f.write('{not json')
        try:
            load_run_config(bad)
            assert False, "expected ConfigurationError"
        except ConfigurationError:
            pass
    try:
        load_run_config('/no/such/config.json')
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass


if __name__ == '__main__':
    print("=" * 80)
    print("CONFIG TESTS")
    print("=" * 80)
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            fn()
            print(f"✅ {name}")
    print("=" * 80)
