#!/usr/bin/env python3
"""
EXPERIMENT RUNNERS
One runner per subcommand; each runs its pipeline, records every check
in a CheckSuite and writes a JSON report plus CSV tables and SVG plots.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from scipy import special

from checks import CheckSuite
from ensemble import (PotentialSpec, bernstein_constant, bernstein_ratio,
                      growth_exponent, kinetic_energy, kinetic_matrix, l2_condition_constant,
                      norm_matrix, weighted_norm_sq)
from geometry import fubini_study_geometry, grid_spacing, kac_hammersley_geometry, t_coordinate
from jpc import (GammaInput, beta, gamma_sandwich, jpc_log_density, log_gamma_N,
                 main1_residual, stated_lower_bound, stated_upper_bound, total_variation,
                 zero_density_on_bins, zero_histogram)
from measures import (calibrate_Eh, covers_sphere, equilibrium_solve, quantize_measure, rate_functional,
                      reference_equilibrium, wasserstein)
from pipeline import Pipeline, derive_seed, spec_tag
from plots import emit_plot
from pphi_errors import ConfigurationError
from run_audit import log
from sampler import ChainConfig, complex_normal, make_rng, sample_gaussian, sample_mcmc
from zeros import (DiscreteMeasure, ZeroConfig, angular_fourier_modes, radial_mass_fraction,
                   reconstruction_error)


RHAT_ACCEPT = 1.05
SCATTER_MAX_POINTS = 10000
STRICT_ROUND_TRIP_MAX_N = 100
STRICT_ROUND_TRIP_TOL = 1e-8
CONVEXITY_FRACTIONS = (0.25, 0.5, 0.75)
CONVEXITY_TOL = 1e-8
GAUSSIAN = PotentialSpec((1.0,))

# Random streams used by the check runners, next to the per-N sampling stream 0
STREAM_CONFIGS = 1
STREAM_HISTOGRAM = 2
STREAM_SECTIONS = 3
STREAM_BETAS = 4


@dataclass
class RunContext:
    """What a runner needs: config, audit trail, store and the optional output file name."""

    cfg: object
    audit: object
    store: object
    out_file: Optional[str] = None
    _pipeline: Optional[Pipeline] = None

    @property
    def pipeline(self):
        if self._pipeline is None:
            self._pipeline = Pipeline(self.cfg, self.audit, self.store)
        return self._pipeline

    @property
    def options(self):
        return self.cfg.options

    def artifact(self, default):
        return self.out_file or default

    def table_artifacts(self, default_csv, default_report):
        """(table, report) names; an --out file ending in .csv names the table."""
        if self.out_file and self.out_file.endswith('.csv'):
            return self.out_file, default_report
        return default_csv, self.artifact(default_report)


def _finish(ctx, suite, report_name, **summary):
    results = suite.summarize(**summary)
    ctx.store.save_json(report_name, results)
    return results


def _plot(ctx, data, kind, name, **labels):
    info = emit_plot(data, kind, ctx.store.path(name), **labels)
    ctx.audit.record_data_lineage('plot', info['path'], kind=kind)
    return info


def _is_kac_hammersley(geom):
    return geom.weight_kind == 'flat_disk' and geom.nu.kind == 'circle'


def _record_diagnostics(suite, N, diagnostics):
    if diagnostics.get('method') != 'rwm':
        return
    suite.check_max(f"rhat_N{N}", diagnostics['rhat_max'], RHAT_ACCEPT,
                    label=f"split R-hat at N={N}", severity='WARNING')
    for message in diagnostics.get('warnings', []):
        suite.check(f"sampler_N{N}", False, message, severity='WARNING')


# ---------------------------------------------------------------------------
# sample / zeros
# ---------------------------------------------------------------------------

def run_sample(ctx):
    """Draw cfg.samples sections per degree and store them with their diagnostics."""
    suite = CheckSuite('sample', ctx.audit)
    rows = []
    for N in ctx.cfg.N:
        sections, diagnostics = ctx.pipeline.sample(N)
        _record_diagnostics(suite, N, diagnostics)
        suite.check(f"count_N{N}", len(sections) == ctx.cfg.samples,
                    f"{len(sections)} samples at N={N}", len(sections), ctx.cfg.samples)
        rows.append({
            'N': N,
            'count': len(sections),
            'method': diagnostics.get('method'),
            'acceptance_rate': diagnostics.get('acceptance_rate', float('nan')),
            'rhat_max': diagnostics.get('rhat_max', float('nan')),
            'ess_min': diagnostics.get('ess_min', float('nan')),
        })
    ctx.store.save_table('samples_summary.csv', pd.DataFrame(rows))
    return _finish(ctx, suite, ctx.artifact('sample_report.json'),
                   degrees=list(ctx.cfg.N), spec=ctx.pipeline.spec.to_config())


def round_trip_tolerance(N, root_tol):
    """Coefficient round-trip bound: STRICT_ROUND_TRIP_TOL through degree STRICT_ROUND_TRIP_MAX_N."""
    if N <= STRICT_ROUND_TRIP_MAX_N:
        return min(STRICT_ROUND_TRIP_TOL, root_tol)
    return root_tol


def _zeros_for(ctx, suite, N, sections):
    configs, failures = ctx.pipeline.zeros(N, sections)
    errors = [reconstruction_error(s, zc) for s, zc in zip(sections, configs) if zc is not None]
    suite.check(f"root_failures_N{N}", failures == 0,
                f"{failures} of {len(sections)} polynomials failed root finding at N={N}",
                failures, 0, severity='WARNING')
    if errors:
        suite.check_max(f"reconstruction_N{N}", max(errors), round_trip_tolerance(N, ctx.cfg.root_tol),
                        label=f"max coefficient round-trip error at N={N}")
    return configs, failures, max(errors) if errors else float('nan')


def run_zeros(ctx):
    """Zeros of stored samples (options.samples_file) or of fresh samples per degree."""
    suite = CheckSuite('zeros', ctx.audit)
    rows = []
    batches = []
    samples_file = ctx.options.get('samples_file')
    if samples_file:
        sections, meta = ctx.store.load_samples(samples_file)
        ctx.audit.record_data_lineage('samples_input', ctx.store.path(samples_file))
        batches.append((int(meta.get('N', sections[0].degree)), sections))
    else:
        for N in ctx.cfg.N:
            batches.append((N, ctx.pipeline.sample(N)[0]))

    last = None
    for N, sections in batches:
        configs, failures, worst = _zeros_for(ctx, suite, N, sections)
        valid = [zc for zc in configs if zc is not None]
        rows.append({
            'N': N,
            'samples': len(sections),
            'failures': failures,
            'max_reconstruction_error': worst,
            'zeros_at_infinity': sum(zc.zeros_at_infinity for zc in valid),
        })
        last = valid or last

    ctx.store.save_table('zeros_summary.csv', pd.DataFrame(rows))
    if last:
        points = np.concatenate([zc.finite_zeros for zc in last])[:SCATTER_MAX_POINTS]
        if points.size:
            _plot(ctx, points, 'scatter', 'zeros_scatter.svg', title=f"Zeros, N={last[0].N}",
                  xlabel='Re z', ylabel='Im z')
    return _finish(ctx, suite, ctx.artifact('zeros_report.json'), degrees=[r['N'] for r in rows])


# ---------------------------------------------------------------------------
# equilibrium / rate
# ---------------------------------------------------------------------------

def _grid_reference(geom):
    """The closed-form equilibrium measure carried by the support grid cells, when there is one."""
    grid = geom.support_grid
    if covers_sphere(grid) and geom.weight_kind != 'flat_disk':
        density = geom.weight.mass_density(t_coordinate(grid.nodes))
        return DiscreteMeasure.from_reweighted(grid, grid.cell_sizes * density)
    return reference_equilibrium(geom)


def _worst_convexity_excess(geom, eh, pairs, seed):
    """Largest I(t b + (1-t) a) - (t I(b) + (1-t) I(a)) over random grid measures a, b."""
    grid = geom.support_grid
    rng = make_rng(seed)

    def rate(w):
        return rate_functional(DiscreteMeasure.from_reweighted(grid, w), geom, eh=eh).total

    worst = -np.inf
    for _ in range(pairs):
        wa = rng.dirichlet(np.ones(len(grid)))
        wb = rng.dirichlet(np.ones(len(grid)))
        ia, ib = rate(wa), rate(wb)
        for t in CONVEXITY_FRACTIONS:
            worst = max(worst, rate(t * wb + (1.0 - t) * wa) - (t * ib + (1.0 - t) * ia))
    return float(worst)


def _equilibrium_profile(mu, on_circle):
    """Mass against angle on a circle grid, mass per ring (against t) otherwise."""
    if on_circle:
        order = np.argsort(np.angle(mu.points))
        return {'x': np.angle(mu.points)[order], 'y': mu.weights[order] * len(mu)}
    t = np.round(t_coordinate(mu.points), 12)
    rings, inverse = np.unique(t, return_inverse=True)
    return {'x': rings, 'y': np.bincount(inverse.ravel(), weights=mu.weights)}


def run_equilibrium(ctx):
    """Solve for nu_eq on the support grid and check it against what is known about it."""
    suite = CheckSuite('equilibrium', ctx.audit)
    geom = ctx.pipeline.geom
    nu_eq, report = ctx.pipeline.equilibrium()
    suite.check('certified', report['certified'],
                f"optimality gap {report['gap']:.3e} after {report['iterations']} iterations",
                report['gap'], ctx.cfg.solver['tol'])
    suite.info('support_size', f"{report['support_size']} of {len(nu_eq)} grid points carry mass",
               report['support_size'])

    spacing = grid_spacing(geom.support_grid)
    reference = _grid_reference(geom)
    summary = {'grid_points': len(nu_eq), 'grid_spacing': spacing}
    if reference is not None:
        distance = wasserstein(nu_eq, reference)
        suite.check_max('w1_to_reference', distance, 2.0 * spacing,
                        label="W1 to the known equilibrium measure")
        summary['w1_to_reference'] = distance
    else:
        suite.info('w1_to_reference', f"no closed-form equilibrium for {geom.name}")

    eh = calibrate_Eh(geom, solver_cfg=ctx.cfg.solver)
    exact = reference_equilibrium(geom) if covers_sphere(geom.support_grid) else None
    at_eq = rate_functional(exact if exact is not None else nu_eq, geom, eh=eh)
    suite.check_range('rate_at_equilibrium', at_eq.total, -1e-6, 1e-6, label="I(nu_eq)")
    if exact is not None:
        grid_rate = rate_functional(nu_eq, geom, eh=eh).total
        suite.check_min('rate_at_grid_equilibrium', grid_rate, -1e-6, label="I of the solved grid measure")
        summary['rate_at_grid_equilibrium'] = grid_rate
    other_init = 'vertex' if ctx.cfg.solver['init'] == 'uniform' else 'uniform'
    restarted, _ = equilibrium_solve(geom, solver_cfg=dict(ctx.cfg.solver, init=other_init))
    restart_distance = wasserstein(nu_eq, restarted)
    suite.check_max('restart_agreement', restart_distance, 2.0 * spacing,
                    label=f"W1 between the {ctx.cfg.solver['init']} and {other_init} starts")
    summary['w1_between_starts'] = restart_distance

    pairs = int(ctx.options.get('convexity_pairs', 100))
    violation = _worst_convexity_excess(geom, eh, pairs, derive_seed(ctx.cfg.seed, 0, STREAM_CONFIGS))
    suite.check_max('convexity', violation, CONVEXITY_TOL,
                    label=f"worst excess over the chord at t in {CONVEXITY_FRACTIONS}, {pairs} pairs")

    summary.update({'eh_constant': eh, 'rate_at_equilibrium': at_eq.to_dict(), 'solver': report})
    _plot(ctx, _equilibrium_profile(nu_eq, geom.support_grid.kind == 'circle'), 'line',
          'equilibrium.svg', title='Equilibrium measure')
    return _finish(ctx, suite, ctx.artifact('equilibrium_report.json'), **summary)


def run_rate(ctx):
    """
    Rate functional of a stored measure (options.measure), or of the mean
    empirical measure of the zeros at every configured degree.
    """
    suite = CheckSuite('rate', ctx.audit)
    geom = ctx.pipeline.geom
    max_atoms = int(ctx.options.get('max_atoms', 4000))
    eh = calibrate_Eh(geom, solver_cfg=ctx.cfg.solver)

    measures = []
    measure_file = ctx.options.get('measure')
    if measure_file:
        measures.append((measure_file, ctx.store.load_measure(measure_file)))
        ctx.audit.record_data_lineage('measure_input', ctx.store.path(measure_file))
    else:
        for N in ctx.cfg.N:
            sections, _ = ctx.pipeline.sample(N)
            configs, _ = ctx.pipeline.zeros(N, sections)
            measures.append((f"mean_zeros_N{N}", ctx.pipeline.mean_measure(configs)))

    rows = []
    for label, mu in measures:
        mu, radius = quantize_measure(mu, max_atoms)
        value = rate_functional(mu, geom, eh=eh)
        suite.check_min(f"rate_{label}", value.total, -1e-6, label=f"I({label})", severity='WARNING')
        rows.append(dict(value.to_dict(), label=label, atoms=len(mu), quantization_radius=radius))
    ctx.store.save_table('rate.csv', pd.DataFrame(rows, columns=[
        'label', 'atoms', 'energy', 'sup_potential', 'eh_constant', 'total',
        'smoothing_radius', 'quantization_radius']))
    return _finish(ctx, suite, ctx.artifact('rate_report.json'), eh_constant=eh, values=rows)


# ---------------------------------------------------------------------------
# eqdist / kh-demo
# ---------------------------------------------------------------------------

def _distance_series(ctx, suite, spec, max_atoms):
    pipeline = ctx.pipeline
    rows = []
    configs_by_N = {}
    sections_by_N = {}
    for N in ctx.cfg.N:
        sections, diagnostics = pipeline.sample(N, spec=spec)
        _record_diagnostics(suite, N, diagnostics)
        configs, failures = pipeline.zeros(N, sections, spec=spec)
        configs_by_N[N] = [zc for zc in configs if zc is not None]
        sections_by_N[N] = sections
        distance = pipeline.distance_to_equilibrium(configs, max_atoms)
        log(f"[EQDIST] {spec_tag(spec)} N={N}: W1 = {distance['w1']:.5f} ± {distance['std_error']:.5f}")
        rows.append({
            'N': N,
            'w1': distance['w1'],
            'std_error': distance['std_error'],
            'quantization_radius': distance['quantization_radius'],
            'samples': len(sections),
            'failures': failures,
            'rhat_max': diagnostics.get('rhat_max', float('nan')),
            'acceptance_rate': diagnostics.get('acceptance_rate', float('nan')),
        })
    return pd.DataFrame(rows), configs_by_N, sections_by_N


def _check_trend(suite, table, strict, label):
    w1 = table['w1'].to_numpy()
    if w1.size < 2:
        return
    if strict:
        suite.check(f"{label}_decreasing", bool(np.all(np.diff(w1) < 0)),
                    f"W1 strictly decreasing in N: {np.round(w1, 5).tolist()}", w1, 'decreasing')
    else:
        suite.check(f"{label}_last_below_first", bool(w1[-1] <= w1[0]),
                    f"W1 at N={table['N'].iloc[-1]} ({w1[-1]:.5f}) <= W1 at N={table['N'].iloc[0]} ({w1[0]:.5f})",
                    w1[-1], f"<= {w1[0]}")


def run_eqdist(ctx):
    """W1 between the mean empirical measure of zeros and nu_eq, per degree."""
    suite = CheckSuite('eqdist', ctx.audit)
    spec = ctx.pipeline.spec
    max_atoms = int(ctx.options.get('max_atoms', 40000))
    table, _, _ = _distance_series(ctx, suite, spec, max_atoms)
    _check_trend(suite, table, spec.is_gaussian, spec_tag(spec))

    final_max = ctx.options.get('w1_final_max')
    if final_max is not None:
        suite.check_max('w1_final', float(table['w1'].iloc[-1]), float(final_max),
                        label=f"W1 at N={table['N'].iloc[-1]}")

    series = {spec_tag(spec): table['w1'].tolist()}
    errors = {spec_tag(spec): table['std_error'].tolist()}
    if not spec.is_gaussian and ctx.options.get('compare_gaussian', True):
        gaussian, _, _ = _distance_series(ctx, suite, GAUSSIAN, max_atoms)
        table['w1_gaussian'] = gaussian['w1'].to_numpy()
        table['std_error_gaussian'] = gaussian['std_error'].to_numpy()
        series['gaussian'] = gaussian['w1'].tolist()
        errors['gaussian'] = gaussian['std_error'].tolist()
        ratio = float(table['w1'].iloc[-1] / table['w1_gaussian'].iloc[-1])
        suite.check_max('w1_vs_gaussian', ratio, 2.0,
                        label=f"W1 ratio to the Gaussian ensemble at N={table['N'].iloc[-1]}")

    csv_name, report = ctx.table_artifacts('eqdist.csv', 'eqdist_report.json')
    ctx.store.save_table(csv_name, table)
    _plot(ctx, {'x': table['N'].tolist(), 'y': series, 'yerr': errors, 'logx': True},
          'line', 'eqdist.svg', title='Distance to the equilibrium measure', xlabel='N', ylabel='W1')
    return _finish(ctx, suite, report, table=table.to_dict(orient='records'))


def _norm_identities(suite, sections, geom, N):
    """On the unit circle: ||s||^2 = sum |a_j|^2 and ||nabla s||^2 = sum j^2 |a_j|^2."""
    j2 = np.arange(N + 1) ** 2
    worst_norm = worst_kinetic = 0.0
    worst_ratio = 0.0
    for s in sections:
        a2 = np.abs(s.ascending) ** 2
        norm = weighted_norm_sq(s, geom)
        worst_norm = max(worst_norm, abs(norm - a2.sum()) / a2.sum())
        worst_kinetic = max(worst_kinetic, abs(kinetic_energy(s, geom) - j2 @ a2) / max(j2 @ a2, 1e-300))
        worst_ratio = max(worst_ratio, bernstein_ratio(s, geom))
    suite.check_max(f"norm_identity_N{N}", worst_norm, 1e-10, label="relative error of ||s||^2")
    suite.check_max(f"kinetic_identity_N{N}", worst_kinetic, 1e-10, label="relative error of ||nabla s||^2")
    suite.check_max(f"bernstein_N{N}", worst_ratio, N ** 2 * (1.0 + 1e-12),
                    label=f"largest Bernstein ratio (N^2 = {N ** 2})")
    return worst_ratio


def run_kh_demo(ctx):
    """The Kac-Hammersley ensemble end to end: norms, Bernstein, radial and angular statistics, W1."""
    suite = CheckSuite('kh_demo', ctx.audit)
    geom = ctx.pipeline.geom
    if not _is_kac_hammersley(geom):
        raise ConfigurationError("kh-demo needs the Kac-Hammersley geometry (flat_disk weight, nu on the circle)")
    opts = ctx.options
    lo, hi = opts.get('radial_band', [0.85, 1.15])
    max_atoms = int(ctx.options.get('max_atoms', 40000))

    table, configs_by_N, sections_by_N = _distance_series(ctx, suite, GAUSSIAN, max_atoms)
    _check_trend(suite, table, True, 'gaussian')
    rows = []
    for N, configs in configs_by_N.items():
        sections = sections_by_N[N]
        largest_ratio = _norm_identities(suite, sections, geom, N)
        mass = radial_mass_fraction(configs, lo, hi)
        suite.check_min(f"radial_mass_N{N}", mass, opts.get('radial_mass_min', 0.9),
                        label=f"share of zeros with {lo} <= |z| <= {hi}")
        modes = angular_fourier_modes(configs, opts.get('fourier_modes', 4))
        for row in modes:
            suite.check_max(f"fourier_mode{row['mode']}_N{N}", row['modulus'], 3.0 * row['std_error'],
                            label=f"|mean e^(i{row['mode']} theta)| vs 3 standard errors")
        rows.append({'N': N, 'radial_mass': mass, 'max_bernstein_ratio': largest_ratio,
                     'fourier': modes})

    table['radial_mass'] = [r['radial_mass'] for r in rows]
    table['max_bernstein_ratio'] = [r['max_bernstein_ratio'] for r in rows]
    ctx.store.save_table('kh_demo.csv', table)

    N_last = max(configs_by_N)
    last = configs_by_N[N_last]
    points = np.concatenate([zc.finite_zeros for zc in last])
    _plot(ctx, points[:SCATTER_MAX_POINTS], 'scatter', 'kh_zeros.svg',
          title=f"Kac-Hammersley zeros, N={N_last}", xlabel='Re z', ylabel='Im z')
    _plot(ctx, {'values': np.abs(points[np.isfinite(points)]), 'bins': 80}, 'histogram',
          'kh_radial.svg', title=f"|z| of zeros, N={N_last}", xlabel='|z|', ylabel='count')
    if len(table) > 1:
        _plot(ctx, {'x': table['N'].tolist(), 'y': table['w1'].tolist(),
                    'yerr': table['std_error'].tolist(), 'logx': True},
              'line', 'kh_eqdist.svg', title='W1 to the uniform circle measure', xlabel='N', ylabel='W1')
    return _finish(ctx, suite, ctx.artifact('kh_demo_report.json'), per_degree=rows,
                   table=table.to_dict(orient='records'))


# ---------------------------------------------------------------------------
# jpc-check
# ---------------------------------------------------------------------------

def _random_config(rng, N):
    return ZeroConfig(complex_normal(rng, N))


def _single_zeros(ctx, spec, geom, count, seed):
    """Zeros of `count` degree-1 sections, z = -a_1/a_0."""
    if spec.is_gaussian:
        sections = sample_gaussian(geom, 1, count, seed)
    else:
        chain_cfg = ChainConfig.from_config(ctx.cfg.sampler, seed, count)
        sections, _ = sample_mcmc(spec, geom, 1, chain_cfg, threads=ctx.cfg.threads)
        sections = sections[:count]
    coeffs = np.array([s.coeffs for s in sections])
    return [ZeroConfig(np.array([-a1 / a0])) if a0 != 0 else ZeroConfig(np.array([]), 1)
            for a0, a1 in coeffs]


def run_jpc_check(ctx):
    """Joint density of zeros: the two-configuration identity, symmetries and the N=1 histogram."""
    suite = CheckSuite('jpc_check', ctx.audit)
    opts = ctx.options
    spec = ctx.pipeline.spec
    geom = ctx.pipeline.geom
    n_pairs = int(opts.get('n_pairs', 100))
    tol = float(opts.get('residual_tol', 1e-6))

    rows = []
    worst_beta = 0.0
    worst_swap = worst_rotation = 0.0
    rotation_exact = geom.nu.kind == 'circle'
    for N in range(1, int(opts.get('max_degree', 5)) + 1):
        rng = make_rng(derive_seed(ctx.cfg.seed, N, STREAM_CONFIGS))
        for pair in range(n_pairs):
            zc1, zc2 = _random_config(rng, N), _random_config(rng, N)
            residual = main1_residual(zc1, zc2, spec, geom)
            rows.append({'N': N, 'pair': pair, 'residual': residual})
            for i in range(1, spec.k):
                worst_beta = max(worst_beta, beta(i, zc1, geom, spec.k))
            if pair < 5:
                value = jpc_log_density(zc1, spec, geom)
                scale = max(1.0, abs(value))
                swapped = ZeroConfig(zc1.finite_zeros[::-1])
                worst_swap = max(worst_swap, abs(jpc_log_density(swapped, spec, geom) - value) / scale)
                if rotation_exact:
                    theta = float(rng.uniform(0.0, 2.0 * np.pi))
                    rotated = jpc_log_density(zc1.rotated(theta), spec, geom)
                    worst_rotation = max(worst_rotation, abs(rotated - value) / scale)

    residuals = pd.DataFrame(rows)
    ctx.store.save_table('main1_residuals.csv', residuals)
    max_residual = float(residuals['residual'].abs().max())
    suite.check_max('main1_residual', max_residual, tol,
                    label=f"max |residual| over {len(residuals)} configuration pairs")
    suite.check_max('exchangeable', worst_swap, 1e-10, label="relative change under relabeling")
    if rotation_exact:
        suite.check_max('rotation_invariant', worst_rotation, 1e-10, label="relative change under rotation")
    if spec.k > 1:
        suite.check_max('beta_holder', worst_beta, 1.0 + 1e-10, label="largest beta_i")

    count = int(opts.get('histogram_samples', 1000000))
    t_edges = np.linspace(0.0, 1.0, int(opts.get('t_bins', 8)) + 1)
    theta_edges = np.linspace(-np.pi, np.pi, int(opts.get('theta_bins', 8)) + 1)
    configs = _single_zeros(ctx, spec, geom, count, derive_seed(ctx.cfg.seed, 1, STREAM_HISTOGRAM))
    empirical = zero_histogram(configs, t_edges, theta_edges)
    predicted = zero_density_on_bins(spec, geom, t_edges, theta_edges)
    tv = total_variation(empirical, predicted)
    limit = opts.get('tv_gaussian', 0.02) if spec.is_gaussian else opts.get('tv_mcmc', 0.05)
    suite.check_max('density_histogram_tv', tv, limit,
                    label=f"total variation, {count} zeros vs the N=1 density")

    return _finish(ctx, suite, ctx.artifact('jpc_check_report.json'),
                   spec=spec.to_config(), max_residual=max_residual, total_variation=tv,
                   histogram={'empirical': empirical, 'predicted': predicted})


# ---------------------------------------------------------------------------
# gamma-check
# ---------------------------------------------------------------------------

def _closed_form_checks(suite):
    worst_k1 = max(abs(log_gamma_N(GammaInput(k=1, N=N)) - special.gammaln(N + 1)) / max(special.gammaln(N + 1), 1.0)
                   for N in range(0, 171))
    suite.check_max('closed_form_k1', worst_k1, 1e-10, label="relative error against log N!")
    worst_k2 = 0.0
    for N in range(0, 171):
        exact = math.log(0.5) + special.gammaln((N + 1) / 2.0)
        value = log_gamma_N(GammaInput(k=2, c=(0.0,), N=N))
        worst_k2 = max(worst_k2, abs(value - exact) / max(abs(exact), 1.0))
    suite.check_max('closed_form_k2', worst_k2, 1e-10, label="relative error against log(Gamma((N+1)/2)/2)")


def run_gamma_check(ctx):
    """log Gamma_N over a range of N against the sandwich bounds and the 1/N^2 normalization."""
    suite = CheckSuite('gamma_check', ctx.audit)
    opts = ctx.options
    k = int(opts.get('k', 2))
    c = tuple(float(v) for v in opts.get('c', [0.0] * (k - 1)))
    if len(c) != k - 1:
        raise ConfigurationError(f"gamma-check with k={k} needs {k - 1} coefficients c_1..c_(k-1), got {list(c)}")
    degrees = list(range(int(opts.get('n_min', 5)), int(opts.get('n_max', 400)) + 1, int(opts.get('n_step', 5))))
    rng = make_rng(derive_seed(ctx.cfg.seed, 0, STREAM_BETAS))
    n_random = int(opts.get('n_random', 20))

    rows = []
    outside = []
    for N in degrees:
        inp = GammaInput(k=k, c=c, N=N)
        value = log_gamma_N(inp)
        lower, upper = gamma_sandwich(inp)
        kinetic = log_gamma_N(GammaInput(k=k, c=c, N=N, eta_over_alpha=float(N ** 2)))
        rows.append({
            'N': N,
            'log_gamma': value,
            'lower': lower,
            'upper': upper,
            'log_gamma_over_N2': value / N ** 2,
            'stated_lower': stated_lower_bound(inp),
            'stated_upper': stated_upper_bound(inp),
            'log_gamma_kinetic_over_N2': kinetic / N ** 2,
        })
        for _ in range(n_random):
            betas = tuple(rng.uniform(0.0, 1.0, size=k - 1))
            trial = GammaInput(k=k, c=c, betas=betas, N=N)
            lo, hi = gamma_sandwich(trial)
            v = log_gamma_N(trial)
            if not lo <= v <= hi:
                outside.append({'N': N, 'betas': list(betas), 'value': v, 'lower': lo, 'upper': hi})
        if not lower <= value <= upper:
            outside.append({'N': N, 'betas': [1.0] * (k - 1), 'value': value, 'lower': lower, 'upper': upper})

    table = pd.DataFrame(rows)
    suite.check('sandwich', not outside,
                f"{len(outside)} of {len(degrees) * (n_random + 1)} values outside the bounds",
                outside[:5], [])
    stated_misses = int(((table['log_gamma'] < table['stated_lower']) | (table['log_gamma'] > table['stated_upper'])).sum())
    suite.info('stated_bounds', f"printed bounds miss log Gamma_N at {stated_misses} of {len(table)} degrees",
               stated_misses)

    by_N = table.set_index('N')
    for column, limit_200, limit_400, label in (('log_gamma_over_N2', 0.03, None, 'Gamma_N'),
                                                ('log_gamma_kinetic_over_N2', None, 0.05, 'kinetic Gamma_N')):
        if limit_200 is not None and 200 in by_N.index:
            suite.check_max(f"{column}_200", abs(by_N.loc[200, column]), limit_200,
                            label=f"|log {label}|/N^2 at N=200")
        if limit_400 is not None and 400 in by_N.index:
            suite.check_max(f"{column}_400", abs(by_N.loc[400, column]), limit_400,
                            label=f"|log {label}|/N^2 at N=400")
        if 100 in by_N.index and 400 in by_N.index:
            a, b = abs(by_N.loc[100, column]), abs(by_N.loc[400, column])
            suite.check(f"{column}_decreasing", b < a,
                        f"|log {label}|/N^2 falls from {a:.5f} (N=100) to {b:.5f} (N=400)", b, f"< {a}")
    _closed_form_checks(suite)

    csv_name, report = ctx.table_artifacts('gamma.csv', 'gamma_report.json')
    ctx.store.save_table(csv_name, table)
    _plot(ctx, {'x': degrees, 'y': {'potential': table['log_gamma_over_N2'].tolist(),
                                    'kinetic': table['log_gamma_kinetic_over_N2'].tolist()}},
          'line', 'gamma.svg', title=f"log Gamma_N / N^2, k={k}", xlabel='N', ylabel='log Gamma_N / N^2')
    return _finish(ctx, suite, report, k=k, c=list(c), degrees=[degrees[0], degrees[-1]])


# ---------------------------------------------------------------------------
# bernstein-check
# ---------------------------------------------------------------------------

def _random_ratios(geom, N, count, rng):
    """Bernstein ratios of `count` sections with i.i.d. complex normal coefficients."""
    C = complex_normal(rng, (N + 1, count))
    K = kinetic_matrix(geom, N)
    H = norm_matrix(geom, N)
    kinetic = np.real(np.einsum('in,ij,jn->n', C.conj(), K, C))
    norm = np.real(np.einsum('in,ij,jn->n', C.conj(), H, C))
    return kinetic / norm


def run_bernstein_check(ctx):
    """Bernstein ratio <= N^2 on the circle, and the growth exponent of the sup for Fubini-Study."""
    suite = CheckSuite('bernstein_check', ctx.audit)
    opts = ctx.options
    count = int(opts.get('n_random', 10000))
    rows = []

    kh = kac_hammersley_geometry()
    for N in opts.get('N', [10, 20, 40, 80, 120, 160, 200]):
        rng = make_rng(derive_seed(ctx.cfg.seed, N, STREAM_SECTIONS))
        ratios = _random_ratios(kh, N, count, rng)
        sup = bernstein_constant(kh, N)
        suite.check_max(f"kh_bernstein_N{N}", float(ratios.max()), N ** 2 * (1.0 + 1e-12),
                        label=f"largest of {count} ratios at N={N}")
        suite.check_range(f"kh_constant_N{N}", sup, N ** 2 * (1.0 - 1e-9), N ** 2 * (1.0 + 1e-9),
                          label=f"Bernstein constant at N={N}")
        rows.append({'geometry': 'kac_hammersley', 'N': N, 'max_ratio': float(ratios.max()),
                     'constant': sup, 'l2_condition_constant': float('nan')})

    fs = fubini_study_geometry()
    fs_degrees = list(opts.get('fs_N', [10, 20, 40, 80, 120, 160, 200]))
    maxima, constants = [], []
    for N in fs_degrees:
        rng = make_rng(derive_seed(ctx.cfg.seed, N, STREAM_SECTIONS))
        ratios = _random_ratios(fs, N, count, rng)
        maxima.append(float(ratios.max()))
        constants.append(bernstein_constant(fs, N))
        rows.append({'geometry': 'fubini_study', 'N': N, 'max_ratio': maxima[-1],
                     'constant': constants[-1], 'l2_condition_constant': l2_condition_constant(fs, N)})

    exponent = growth_exponent(fs_degrees, maxima)
    suite.check_max('fs_growth_exponent', exponent, float(opts.get('max_exponent', 2.1)),
                    label="slope of log(max ratio) against log N")
    suite.info('fs_constant_exponent', f"slope of the Bernstein constant: {growth_exponent(fs_degrees, constants):.4f}",
               growth_exponent(fs_degrees, constants))

    table = pd.DataFrame(rows)
    ctx.store.save_table('bernstein.csv', table)
    _plot(ctx, {'x': fs_degrees, 'y': {'max ratio': maxima, 'constant': constants},
                'logx': True, 'logy': True},
          'line', 'bernstein.svg', title='Fubini-Study Bernstein ratios', xlabel='N', ylabel='ratio')
    return _finish(ctx, suite, ctx.artifact('bernstein_report.json'), fs_growth_exponent=exponent)


RUNNERS = {
    'sample': run_sample,
    'zeros': run_zeros,
    'equilibrium': run_equilibrium,
    'rate': run_rate,
    'jpc_check': run_jpc_check,
    'gamma_check': run_gamma_check,
    'bernstein_check': run_bernstein_check,
    'kh_demo': run_kh_demo,
    'eqdist': run_eqdist,
}
