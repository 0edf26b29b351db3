#!/usr/bin/env python3
"""
Plot emission
Static SVG figures with byte-stable output for fixed input
"""

import os
import re

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

from pphi_errors import EmptyDataError, PlotWriteError
from run_audit import log


PLOT_KINDS = ('scatter', 'histogram', 'line')

# Fixed ids inside the SVG, no timestamp
SVG_SALT = 'pphi'
FIGSIZE = (6.4, 4.8)
MARGIN = 0.05


def _is_empty(data):
    if data is None:
        return True
    if isinstance(data, dict):
        if 'values' in data:
            return np.size(data['values']) == 0
        return len(data.get('y', data.get('x', []))) == 0
    return np.size(data) == 0


def _limits(values):
    lo, hi = float(np.min(values)), float(np.max(values))
    pad = MARGIN * (hi - lo) if hi > lo else 0.5
    return lo - pad, hi + pad


def _scatter(ax, data):
    if isinstance(data, dict):
        x, y = np.asarray(data['x'], dtype=float), np.asarray(data['y'], dtype=float)
    else:
        z = np.asarray(data, dtype=complex).ravel()
        z = z[np.isfinite(z)]
        x, y = z.real, z.imag
    ax.scatter(x, y, s=1.5, c='#1f4e79', linewidths=0, rasterized=False)
    ax.set_aspect('equal', adjustable='box')
    xlim, ylim = _limits(x), _limits(y)
    ax.set_xlim(*xlim)
    ax.set_ylim(*ylim)
    return xlim, ylim


def _histogram(ax, data):
    if isinstance(data, dict):
        values, bins = np.asarray(data['values'], dtype=float), data.get('bins', 50)
    else:
        values, bins = np.asarray(data, dtype=float).ravel(), 50
    counts, edges, _ = ax.hist(values, bins=bins, color='#1f4e79', edgecolor='white', linewidth=0.3)
    xlim = (float(edges[0]), float(edges[-1]))
    ylim = (0.0, float(counts.max()) * (1.0 + MARGIN) or 1.0)
    ax.set_xlim(*xlim)
    ax.set_ylim(*ylim)
    return xlim, ylim


def _line(ax, data):
    x = np.asarray(data['x'], dtype=float)
    series = data['y'] if isinstance(data['y'], dict) else {'': data['y']}
    errors = data.get('yerr') or {}
    if not isinstance(errors, dict):
        errors = {'': errors}
    stacked = []
    for label, y in series.items():
        y = np.asarray(y, dtype=float)
        yerr = errors.get(label)
        if yerr is not None:
            ax.errorbar(x, y, yerr=yerr, marker='o', markersize=3, capsize=2, label=label or None)
            stacked.extend([y - np.asarray(yerr), y + np.asarray(yerr)])
        else:
            ax.plot(x, y, marker='o', markersize=3, label=label or None)
            stacked.append(y)
    if data.get('logx'):
        ax.set_xscale('log')
    if data.get('logy'):
        ax.set_yscale('log')
    if len(series) > 1:
        ax.legend(frameon=False)
    xlim, ylim = _limits(x), _limits(np.concatenate(stacked))
    if not data.get('logx'):
        ax.set_xlim(*xlim)
    if not data.get('logy'):
        ax.set_ylim(*ylim)
    return xlim, ylim


_DRAW = {'scatter': _scatter, 'histogram': _histogram, 'line': _line}


def emit_plot(data, kind, path, title=None, xlabel=None, ylabel=None):
    """
    Write a self-contained SVG.

    data:
        scatter    complex array, or {'x': [...], 'y': [...]}
        histogram  values, or {'values': [...], 'bins': n or edges}
        line       {'x': [...], 'y': [...] or {label: [...]}, 'yerr': ..., 'logx', 'logy'}

    Returns {'path', 'xlim', 'ylim', 'viewbox'}.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"Unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    if _is_empty(data):
        raise EmptyDataError(f"Refusing to draw an empty {kind} plot ({path})")

    with plt.rc_context({'svg.hashsalt': SVG_SALT, 'svg.fonttype': 'path'}):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        try:
            xlim, ylim = _DRAW[kind](ax, data)
            if title:
                ax.set_title(title)
            if xlabel:
                ax.set_xlabel(xlabel)
            if ylabel:
                ax.set_ylabel(ylabel)
            fig.tight_layout()
            try:
                fig.savefig(path, format='svg', metadata={'Date': None})
            except OSError as e:
                raise PlotWriteError(f"Cannot write plot to {path}: {e}")
        finally:
            plt.close(fig)

    with open(path, 'r', encoding='utf-8') as f:
        match = re.search(r'viewBox="([^"]+)"', f.read())
    viewbox = [float(v) for v in match.group(1).split()] if match else None
    log(f"[PLOT] {kind} -> {os.path.basename(path)}")
    return {'path': path, 'xlim': list(xlim), 'ylim': list(ylim), 'viewbox': viewbox}
