#!/usr/bin/env python3
"""
Tests for the sample store and the resumable pipeline
"""

import json
import os
import tempfile

import numpy as np
import pandas as pd

from ensemble import PolySection, PotentialSpec
from pipeline import Pipeline, derive_seed, spec_tag
from pphi_config import build_run_config
from pphi_errors import ConfigurationError, EmptyDataError
from run_audit import RunAudit
from sample_store import SampleStore
from zeros import ZeroConfig


SMALL_KH = {'weight': 'flat_disk', 'nu': {'circle': 32}, 'support': {'circle': True}, 'grid_size': 32}


def _pipeline(tmp, **raw):
    cfg = build_run_config(dict({'geometry': SMALL_KH, 'N': [4], 'samples': 20, 'seed': 11,
                                 'output_dir': tmp, 'experiment': 'eqdist'}, **raw))
    audit = RunAudit(tmp)
    return Pipeline(cfg, audit, SampleStore(tmp, audit))


def _events(tmp):
    with open(os.path.join(tmp, 'audit_log.jsonl'), encoding='utf-8') as f:
        return [json.loads(line)['event_type'] for line in f]


def test_derive_seed_streams_differ():
    assert derive_seed(1, 10, 0) == derive_seed(1, 10, 0)
    assert derive_seed(1, 10, 0) != derive_seed(1, 10, 1)
    assert derive_seed(1, 10, 0) != derive_seed(1, 20, 0)
    assert 0 <= derive_seed(2 ** 64 - 1, 5, 4) < 2 ** 64


def test_spec_tag():
    assert spec_tag(PotentialSpec((1.0,))) == 'gaussian'
    assert spec_tag(PotentialSpec((0.5, 1.0))) == 'k2'
    assert spec_tag(PotentialSpec((0.0, 0.0, 1.0), include_kinetic=True)) == 'k3_kinetic'


def test_store_zeros_with_failures_and_infinity():
    with tempfile.TemporaryDirectory() as tmp:
        store = SampleStore(tmp)
        configs = [ZeroConfig(np.array([1.0, 2j])), None, ZeroConfig(np.array([0.5]), 1)]
        store.save_zeros('z.csv', configs)
        back = store.load_zeros('z.csv', count=3)
        assert back[1] is None
        assert np.allclose(back[0].finite_zeros, [1.0, 2j])
        assert back[2].zeros_at_infinity == 1 and back[2].N == 2
        assert len(store.load_zeros('z.csv')) == 2


def test_store_samples_and_missing_files():
    with tempfile.TemporaryDirectory() as tmp:
        audit = RunAudit(tmp)
        store = SampleStore(tmp, audit)
        sections = [PolySection([1.0, -2j, 0.5])]
        store.save_samples('s.json', sections, {'N': 2, 'seed': np.uint64(3)})
        loaded, meta = store.load_samples('s.json')
        assert np.array_equal(loaded[0].coeffs, sections[0].coeffs)
        assert meta['count'] == 1 and meta['seed'] == 3
        with open(os.path.join(tmp, 'lineage.jsonl'), encoding='utf-8') as f:
            assert json.loads(f.readline())['data_type'] == 'samples'
        try:
            store.load_json('absent.json')
            assert False, "expected ConfigurationError"
        except ConfigurationError:
            pass


def test_tables_reload_bit_identical():
    rng = np.random.default_rng(19)
    df = pd.DataFrame({'w1': rng.random(500), 'log_gamma': -1e3 * rng.random(500),
                       'tiny': rng.random(500) * 1e-300})
    with tempfile.TemporaryDirectory() as tmp:
        store = SampleStore(tmp)
        store.save_table('t.csv', df)
        back = store.load_table('t.csv')
        for column in df.columns:
            assert np.array_equal(back[column].to_numpy(), df[column].to_numpy()), column


def test_stages_resume_with_identical_outputs():
    with tempfile.TemporaryDirectory() as tmp:
        first = _pipeline(tmp)
        sections, diagnostics = first.sample(4)
        configs, failures = first.zeros(4, sections)
        assert diagnostics == {'method': 'exact'}
        assert len(sections) == 20 and failures == 0
        assert 'STAGE_SKIPPED' not in _events(tmp)

        second = _pipeline(tmp)
        again, _ = second.sample(4)
        configs_again, _ = second.zeros(4, again)
        assert _events(tmp).count('STAGE_SKIPPED') == 2
        assert all(np.array_equal(a.coeffs, b.coeffs) for a, b in zip(sections, again))
        for a, b in zip(configs, configs_again):
            assert np.array_equal(a.finite_zeros, b.finite_zeros)


def test_changed_seed_recomputes():
    with tempfile.TemporaryDirectory() as tmp:
        sections, _ = _pipeline(tmp).sample(4)
        other, _ = _pipeline(tmp, seed=12).sample(4)
        assert 'STAGE_SKIPPED' not in _events(tmp)
        assert not np.array_equal(sections[0].coeffs, other[0].coeffs)


def test_equilibrium_reload_and_distance():
    with tempfile.TemporaryDirectory() as tmp:
        first = _pipeline(tmp)
        nu_eq, report = first.equilibrium()
        assert report['certified']
        reloaded, _ = _pipeline(tmp).equilibrium()
        assert np.allclose(reloaded.weights, nu_eq.weights)
        assert np.array_equal(reloaded.points, nu_eq.points)

        sections, _ = first.sample(4)
        configs, _ = first.zeros(4, sections)
        result = first.distance_to_equilibrium(configs + [None], max_atoms=1000)
        assert 0.0 < result['w1'] < 1.0
        assert result['quantization_radius'] == 0.0
        assert len(result['batch_w1']) == 10
        assert np.isfinite(result['std_error'])
        try:
            first.distance_to_equilibrium([None], max_atoms=1000)
            assert False, "expected EmptyDataError"
        except EmptyDataError:
            pass


def test_non_gaussian_potential_uses_metropolis():
    with tempfile.TemporaryDirectory() as tmp:
        pipe = _pipeline(tmp, potential={'k': 2, 'c': [0.5, 1.0]},
                         sampler={'burn_in': 200, 'thinning': 2, 'n_chains': 2})
        sections, diagnostics = pipe.sample(3, count=30)
        assert len(sections) == 30
        assert diagnostics['method'] == 'rwm'
        assert 0.0 < diagnostics['acceptance_rate'] < 1.0
        assert os.path.exists(os.path.join(tmp, 'samples_k2_N3.json'))


if __name__ == '__main__':
    print("=" * 80)
    print("PIPELINE TESTS")
    print("=" * 80)
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            fn()
            print(f"✅ {name}")
    print("=" * 80)
