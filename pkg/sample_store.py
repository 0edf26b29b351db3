#!/usr/bin/env python3
"""
Sample & Result Store
Samples as JSON, zero sets and tables as CSV, reports as JSON - the filesystem is the store
"""

import json
import os

import numpy as np
import pandas as pd

from ensemble import PolySection
from zeros import DiscreteMeasure, ZeroConfig
from pphi_errors import ConfigurationError
from run_audit import log


ZERO_COLUMNS = ['sample_id', 're', 'im', 'at_infinity']


class SampleStore:
    """
    Reads and writes every artifact of a run directory.

    Each write is recorded in the run's lineage when an audit trail is attached.
    """

    def __init__(self, out_dir, audit=None):
        self.out_dir = out_dir
        self.audit = audit
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        return name if os.path.isabs(name) else os.path.join(self.out_dir, name)

    def _lineage(self, data_type, path, **kwargs):
        if self.audit is not None:
            self.audit.record_data_lineage(data_type, path, **kwargs)

    # JSON ------------------------------------------------------------------

    def save_json(self, name, payload, data_type='report'):
        path = self.path(name)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
            f.write('\n')
        log(f"[STORE] Wrote {data_type}: {path}")
        self._lineage(data_type, path)
        return path

    def load_json(self, name):
        path = self.path(name)
        if not os.path.exists(path):
            raise ConfigurationError(f"File not found: {path}")
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)

    # Samples ---------------------------------------------------------------

    def save_samples(self, name, sections, meta):
        """Coefficient arrays (leading first) with the spec, geometry hash, seed and diagnostics."""
        payload = dict(meta)
        payload['count'] = len(sections)
        payload['samples'] = [
            {'re': s.coeffs.real.tolist(), 'im': s.coeffs.imag.tolist()} for s in sections
        ]
        return self.save_json(name, payload, data_type='samples')

    def load_samples(self, name):
        """(sections, meta) from a samples file."""
        payload = self.load_json(name)
        if 'samples' not in payload:
            raise ConfigurationError(f"{self.path(name)} is not a samples file (no 'samples' key)")
        sections = [PolySection(np.array(s['re']) + 1j * np.array(s['im'])) for s in payload['samples']]
        meta = {k: v for k, v in payload.items() if k != 'samples'}
        log(f"[STORE] Loaded {len(sections)} samples from {self.path(name)}")
        return sections, meta

    # Zeros -----------------------------------------------------------------

    def save_zeros(self, name, configs):
        """One row per zero; zeros at infinity have at_infinity = True and empty re/im."""
        rows = []
        for sample_id, zc in enumerate(configs):
            if zc is None:
                continue
            for z in zc.finite_zeros:
                rows.append((sample_id, z.real, z.imag, False))
            rows.extend((sample_id, np.nan, np.nan, True) for _ in range(zc.zeros_at_infinity))
        df = pd.DataFrame(rows, columns=ZERO_COLUMNS)
        return self.save_table(name, df, data_type='zeros')

    def load_zeros(self, name, count=None):
        """
        ZeroConfigs in sample_id order. With count, the list has one slot per
        sample and None where the sample has no rows (failed root finding).
        """
        df = self.load_table(name)
        missing = [c for c in ZERO_COLUMNS if c not in df.columns]
        if missing:
            raise ConfigurationError(f"{self.path(name)} lacks zero columns {missing}")
        by_id = {}
        for sample_id, group in df.groupby('sample_id', sort=True):
            at_inf = group['at_infinity'].astype(bool)
            finite = group[~at_inf]
            by_id[int(sample_id)] = ZeroConfig(finite['re'].to_numpy() + 1j * finite['im'].to_numpy(),
                                               int(at_inf.sum()))
        if count is None:
            return [by_id[i] for i in sorted(by_id)]
        return [by_id.get(i) for i in range(count)]

    # Measures --------------------------------------------------------------

    def save_measure(self, name, measure, **extra):
        payload = measure.to_dict()
        payload.update(extra)
        return self.save_json(name, payload, data_type='measure')

    def load_measure(self, name):
        return DiscreteMeasure.from_dict(self.load_json(name))

    # Tables ----------------------------------------------------------------

    def save_table(self, name, df, data_type='table'):
        path = self.path(name)
        df.to_csv(path, index=False, encoding='utf-8', lineterminator='\n', float_format='%.17g')
        log(f"[STORE] Wrote {data_type} ({len(df)} rows): {path}")
        self._lineage(data_type, path, rows=len(df))
        return path

    def load_table(self, name):
        path = self.path(name)
        if not os.path.exists(path):
            raise ConfigurationError(f"File not found: {path}")
        return pd.read_csv(path, encoding='utf-8', float_precision='round_trip')

    def exists(self, name):
        return os.path.exists(self.path(name))


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return str(value)
