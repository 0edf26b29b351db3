#!/usr/bin/env python3
"""
Run configuration for the P(phi)_2 zeros laboratory
Defaults, JSON run-config loading and validation
"""

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List

from pphi_errors import ConfigurationError


# Geometry used when the run-config has no "geometry" section
DEFAULT_GEOMETRY = {
    'weight': 'flat_disk',
    'nu': {'circle': 64},
    'support': {'circle': True},
    'grid_size': 256,
}

# Gaussian potential P(x) = x
DEFAULT_POTENTIAL = {
    'k': 1,
    'c': [1.0],
    'kinetic': False,
}

# Random-walk Metropolis settings; n_steps is derived from the sample count when absent
DEFAULT_SAMPLER = {
    'n_steps': None,
    'burn_in': 4000,
    'n_chains': 4,
    'target_accept': 0.234,
    'thinning': 20,
}

# Frank-Wolfe equilibrium solver
DEFAULT_SOLVER = {
    'tol': 1e-7,
    'max_iter': 200000,
    'init': 'uniform',
}

DEFAULT_EXPERIMENT = {
    'experiment': 'kh_demo',
    'N': [100],
    'samples': 200,
    'seed': 20240229,
    'output_dir': 'runs',
    'threads': 1,
    'root_tol': 1e-6,
}

# Per-experiment knobs
DEFAULT_OPTIONS = {
    'jpc_check': {'n_pairs': 100, 'max_degree': 5, 'histogram_samples': 1000000,
                  't_bins': 8, 'theta_bins': 8, 'tv_gaussian': 0.02, 'tv_mcmc': 0.05,
                  'residual_tol': 1e-6},
    'gamma_check': {'k': 2, 'c': [0.5], 'n_min': 5, 'n_max': 400, 'n_step': 5, 'n_random': 20},
    'bernstein_check': {'n_random': 10000, 'N': [10, 20, 40, 80, 120, 160, 200],
                        'fs_N': [10, 20, 40, 80, 120, 160, 200], 'max_exponent': 2.1},
    'kh_demo': {'radial_band': [0.85, 1.15], 'radial_mass_min': 0.9, 'fourier_modes': 4},
    'eqdist': {'max_atoms': 40000, 'w1_final_max': None},
}

# Leading coefficient below this fraction of the largest one counts as a zero at infinity
ZERO_LEADING_RTOL = 1e-12

DEFAULT_ROOT_TOL = 1e-6

# Dense Green-matrix cap for the equilibrium solver
MAX_GRID_POINTS = 8000

# Split R-hat above this raises a convergence warning
RHAT_WARN = 1.1

EXPERIMENT_KINDS = ('kh_demo', 'eqdist', 'jpc_check', 'gamma_check',
                    'bernstein_check', 'equilibrium', 'sample', 'zeros', 'rate')

WEIGHT_KINDS = ('fubini_study', 'flat_disk')


@dataclass
class RunConfig:
    """Validated run configuration shared by every subcommand."""

    geometry: Dict[str, Any]
    potential: Dict[str, Any]
    N: List[int]
    sampler: Dict[str, Any]
    experiment: str
    output_dir: str
    seed: int
    samples: int = 200
    threads: int = 1
    root_tol: float = DEFAULT_ROOT_TOL
    solver: Dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_SOLVER))
    options: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self):
        return {
            'geometry': self.geometry,
            'potential': self.potential,
            'N': list(self.N),
            'sampler': self.sampler,
            'experiment': self.experiment,
            'output_dir': self.output_dir,
            'seed': self.seed,
            'samples': self.samples,
            'threads': self.threads,
            'root_tol': self.root_tol,
            'solver': self.solver,
            'options': self.options,
        }

    def hash(self):
        # output_dir and threads do not change results
        payload = self.to_dict()
        payload.pop('output_dir')
        payload.pop('threads')
        return config_hash(payload)


def config_hash(obj):
    """SHA-256 of the canonical (sorted-key) JSON form of obj."""
    text = json.dumps(obj, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def _merge(defaults, overrides):
    merged = copy.deepcopy(defaults)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def validate_geometry_config(geometry, problems):
    """Structural checks of the geometry section; numeric checks happen at build time."""
    weight = geometry.get('weight')
    if isinstance(weight, dict):
        coeffs = weight.get('radial')
        if not isinstance(coeffs, list) or not all(isinstance(b, (int, float)) for b in coeffs):
            problems.append(f"geometry.weight.radial must be a list of numbers, got {coeffs!r}")
    elif weight not in WEIGHT_KINDS:
        problems.append(f"geometry.weight must be one of {WEIGHT_KINDS} or {{'radial': [...]}}, got {weight!r}")

    nu = geometry.get('nu')
    if not isinstance(nu, dict) or len(nu) != 1:
        problems.append(f"geometry.nu must have exactly one of circle/curvature/sphere_grid, got {nu!r}")
    else:
        (kind, value), = nu.items()
        if kind in ('circle', 'curvature'):
            if not isinstance(value, int) or value < 1:
                problems.append(f"geometry.nu.{kind} must be a positive integer, got {value!r}")
        elif kind == 'sphere_grid':
            if (not isinstance(value, list) or len(value) != 2
                    or not all(isinstance(v, int) and v >= 1 for v in value)):
                problems.append(f"geometry.nu.sphere_grid must be [n_theta, n_phi], got {value!r}")
        else:
            problems.append(f"Unknown geometry.nu kind {kind!r}")

    support = geometry.get('support', 'full')
    if support != 'full':
        if not isinstance(support, dict):
            problems.append(f"geometry.support must be 'full' or a dict, got {support!r}")
        elif 'circle' in support:
            if support['circle'] is not True:
                problems.append("geometry.support.circle must be true")
        elif 'disk_radius' in support:
            radius = support['disk_radius']
            if not isinstance(radius, (int, float)) or radius <= 0:
                problems.append(f"geometry.support.disk_radius must be positive, got {radius!r}")
        else:
            problems.append(f"Unknown geometry.support {support!r}")

    grid_size = geometry.get('grid_size')
    if grid_size is not None and (not isinstance(grid_size, int) or grid_size < 2):
        problems.append(f"geometry.grid_size must be an integer >= 2, got {grid_size!r}")

    metric = geometry.get('metric')
    if metric is not None and metric not in ('fubini_study', 'flat'):
        problems.append(f"geometry.metric must be 'fubini_study' or 'flat', got {metric!r}")


def validate_potential_config(potential, problems):
    k = potential.get('k')
    c = potential.get('c')
    if not isinstance(k, int) or k < 1:
        problems.append(f"potential.k must be an integer >= 1, got {k!r}")
        return
    if not isinstance(c, list) or len(c) != k:
        problems.append(f"potential.c must list c_1..c_k ({k} numbers), got {c!r}")
        return
    if not all(isinstance(v, (int, float)) for v in c):
        problems.append(f"potential.c must contain numbers, got {c!r}")
        return
    if c[-1] != 1:
        problems.append(f"potential.c_k must equal 1, got {c[-1]!r}")
    if not isinstance(potential.get('kinetic', False), bool):
        problems.append("potential.kinetic must be true or false")


def validate_sampler_config(sampler, problems):
    n_chains = sampler.get('n_chains')
    if not isinstance(n_chains, int) or n_chains < 2:
        problems.append(f"sampler.n_chains must be an integer >= 2, got {n_chains!r}")
    target = sampler.get('target_accept')
    if not isinstance(target, (int, float)) or not 0 < target < 1:
        problems.append(f"sampler.target_accept must lie in (0, 1), got {target!r}")
    thinning = sampler.get('thinning')
    if not isinstance(thinning, int) or thinning < 1:
        problems.append(f"sampler.thinning must be a positive integer, got {thinning!r}")
    burn_in = sampler.get('burn_in')
    if not isinstance(burn_in, int) or burn_in < 0:
        problems.append(f"sampler.burn_in must be a nonnegative integer, got {burn_in!r}")
    n_steps = sampler.get('n_steps')
    if n_steps is not None:
        if not isinstance(n_steps, int) or n_steps < 1:
            problems.append(f"sampler.n_steps must be a positive integer, got {n_steps!r}")
        elif isinstance(burn_in, int) and burn_in >= n_steps:
            problems.append(f"sampler.burn_in ({burn_in}) must be smaller than n_steps ({n_steps})")


def build_run_config(raw, overrides=None):
    """Merge defaults, raw config and CLI overrides into a validated RunConfig."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    raw = _merge(raw or {}, overrides)
    problems = []

    experiment = raw.get('experiment', DEFAULT_EXPERIMENT['experiment'])
    if experiment not in EXPERIMENT_KINDS:
        problems.append(f"experiment must be one of {EXPERIMENT_KINDS}, got {experiment!r}")

    geometry = _merge(DEFAULT_GEOMETRY, {}) if 'geometry' not in raw else copy.deepcopy(raw['geometry'])
    geometry.setdefault('support', 'full')
    validate_geometry_config(geometry, problems)

    potential = _merge(DEFAULT_POTENTIAL, raw.get('potential'))
    if 'potential' in raw and 'c' in raw['potential']:
        potential['c'] = list(raw['potential']['c'])
    validate_potential_config(potential, problems)

    sampler = _merge(DEFAULT_SAMPLER, raw.get('sampler'))
    validate_sampler_config(sampler, problems)

    solver = _merge(DEFAULT_SOLVER, raw.get('solver'))
    if not isinstance(solver.get('tol'), (int, float)) or solver['tol'] <= 0:
        problems.append(f"solver.tol must be positive, got {solver.get('tol')!r}")
    if not isinstance(solver.get('max_iter'), int) or solver['max_iter'] < 1:
        problems.append(f"solver.max_iter must be a positive integer, got {solver.get('max_iter')!r}")
    if solver.get('init') not in ('uniform', 'vertex'):
        problems.append(f"solver.init must be 'uniform' or 'vertex', got {solver.get('init')!r}")

    degrees = raw.get('N', DEFAULT_EXPERIMENT['N'])
    if isinstance(degrees, int):
        degrees = [degrees]
    if (not isinstance(degrees, list) or not degrees
            or not all(isinstance(n, int) and n >= 1 for n in degrees)):
        problems.append(f"N must be a nonempty list of positive integers, got {degrees!r}")
    elif any(b <= a for a, b in zip(degrees, degrees[1:])):
        problems.append(f"N must be strictly increasing, got {degrees!r}")

    seed = raw.get('seed', DEFAULT_EXPERIMENT['seed'])
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        problems.append(f"seed must be an unsigned 64-bit integer, got {seed!r}")

    samples = raw.get('samples', DEFAULT_EXPERIMENT['samples'])
    if not isinstance(samples, int) or samples < 1:
        problems.append(f"samples must be a positive integer, got {samples!r}")

    threads = raw.get('threads', DEFAULT_EXPERIMENT['threads'])
    if not isinstance(threads, int) or threads < 1:
        problems.append(f"threads must be a positive integer, got {threads!r}")

    root_tol = raw.get('root_tol', DEFAULT_EXPERIMENT['root_tol'])
    if not isinstance(root_tol, (int, float)) or root_tol <= 0:
        problems.append(f"root_tol must be positive, got {root_tol!r}")

    options = _merge(DEFAULT_OPTIONS.get(experiment, {}), raw.get('options'))
    for key in ('measure', 'samples_file'):
        path = options.get(key)
        if path is not None and not os.path.exists(path):
            problems.append(f"options.{key} refers to a missing file: {path}")

    if problems:
        raise ConfigurationError("Invalid run configuration", problems)

    return RunConfig(
        geometry=geometry,
        potential=potential,
        N=list(degrees),
        sampler=sampler,
        experiment=experiment,
        output_dir=raw.get('output_dir', os.path.join(DEFAULT_EXPERIMENT['output_dir'], experiment)),
        seed=seed,
        samples=samples,
        threads=threads,
        root_tol=float(root_tol),
        solver=solver,
        options=options,
    )


def load_run_config(path=None, overrides=None):
    """Read a JSON run-config from path (or use defaults) and validate it."""
    raw = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigurationError(f"Config file not found: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Config file {path} is not valid JSON: {e}")
        if not isinstance(raw, dict):
            raise ConfigurationError(f"Config file {path} must contain a JSON object")
    return build_run_config(raw, overrides)
