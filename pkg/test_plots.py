#!/usr/bin/env python3
"""
Tests for SVG plot emission
"""

import os
import tempfile

import numpy as np

from plots import emit_plot
from pphi_errors import EmptyDataError, PlotWriteError


def test_empty_data_rejected():
    with tempfile.TemporaryDirectory() as tmp:
        for data, kind in ((np.array([]), 'scatter'), ([], 'histogram'), ({'x': [], 'y': []}, 'line')):
            try:
                emit_plot(data, kind, os.path.join(tmp, 'empty.svg'))
                assert False, "expected EmptyDataError"
            except EmptyDataError:
                pass
        assert not os.path.exists(os.path.join(tmp, 'empty.svg'))


def test_output_is_byte_stable():
    z = np.exp(2j * np.pi * np.arange(50) / 50) * np.linspace(0.5, 1.5, 50)
    with tempfile.TemporaryDirectory() as tmp:
        a = emit_plot(z, 'scatter', os.path.join(tmp, 'a.svg'), title='zeros')
        b = emit_plot(z, 'scatter', os.path.join(tmp, 'b.svg'), title='zeros')
        with open(a['path'], 'rb') as fa, open(b['path'], 'rb') as fb:
            assert fa.read() == fb.read()
        assert a['viewbox'] is not None and len(a['viewbox']) == 4
        assert a['xlim'][0] < z.real.min() and a['xlim'][1] > z.real.max()
        assert a['ylim'][0] < z.imag.min() and a['ylim'][1] > z.imag.max()


def test_line_and_histogram():
    with tempfile.TemporaryDirectory() as tmp:
        line = emit_plot({'x': [10, 20, 40], 'y': {'w1': [0.3, 0.2, 0.1]}, 'yerr': {'w1': [0.01, 0.01, 0.01]},
                          'logx': True}, 'line', os.path.join(tmp, 'line.svg'))
        assert line['ylim'][0] < 0.09 and line['ylim'][1] > 0.31
        hist = emit_plot({'values': np.abs(np.linspace(-1, 1, 101)), 'bins': 10}, 'histogram',
                         os.path.join(tmp, 'hist.svg'))
        assert hist['xlim'] == [0.0, 1.0]


def test_histogram_dicts():
    with tempfile.TemporaryDirectory() as tmp:
        try:
            emit_plot({'values': [], 'bins': 5}, 'histogram', os.path.join(tmp, 'none.svg'))
            assert False, "expected EmptyDataError"
        except EmptyDataError:
            pass
        # the shape the radial |z| figures are drawn with
        radii = np.abs(np.exp(2j * np.pi * np.arange(200) / 200) * np.linspace(0.9, 1.1, 200))
        out = emit_plot({'values': radii, 'bins': 80}, 'histogram', os.path.join(tmp, 'radial.svg'))
        assert os.path.exists(out['path'])
        assert out['xlim'][0] <= radii.min() and out['xlim'][1] >= radii.max()


def test_unwritable_path():
    try:
        emit_plot(np.array([1.0 + 1j]), 'scatter', '/nonexistent-dir/plot.svg')
        assert False, "expected PlotWriteError"
    except PlotWriteError:
        pass


def test_unknown_kind():
    try:
        emit_plot([1.0], 'pie', 'pie.svg')
        assert False, "expected ValueError"
    except ValueError:
        pass


if __name__ == '__main__':
    print("=" * 80)
    print("PLOT TESTS")
    print("=" * 80)
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            fn()
            print(f"✅ {name}")
    print("=" * 80)
