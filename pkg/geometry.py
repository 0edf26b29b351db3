#!/usr/bin/env python3
"""
Geometry of CP^1 for the P(phi)_2 ensembles
Weights, metrics, quadrature rules, chordal distance and the Green's function G_h
"""

import dataclasses
import numbers
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, Optional

import numpy as np
from scipy import integrate

from pphi_config import MAX_GRID_POINTS, config_hash
from pphi_errors import ConfigurationError, DiagonalEvaluationError
from run_audit import log


INFINITY = complex(np.inf, 0.0)

# Radii at which the Green calibration is re-checked
CALIBRATION_RADII = (0.5, 1.0, 2.0, 10.0)
CALIBRATION_TOL = 1e-6

FD_STEP = 1e-5


@dataclass(frozen=True)
class CP1Point:
    """A point of CP^1: a finite complex number, or infinity when z is None."""

    z: Optional[complex] = None

    @classmethod
    def finite(cls, z):
        return cls(complex(z))

    @classmethod
    def infinity(cls):
        return cls(None)

    @property
    def is_infinity(self):
        return self.z is None

    def as_complex(self):
        return INFINITY if self.z is None else complex(self.z)


def as_points(values):
    """Complex array view of CP1Point / complex inputs; infinity becomes inf."""
    if isinstance(values, CP1Point):
        return np.array([values.as_complex()])
    arr = np.asarray(values)
    if arr.dtype == object:
        arr = np.array([v.as_complex() if isinstance(v, CP1Point) else complex(v)
                        for v in arr.ravel()]).reshape(arr.shape)
    arr = np.asarray(arr, dtype=complex)
    return np.where(np.isfinite(arr), arr, INFINITY)


def is_infinite(z):
    return ~np.isfinite(np.asarray(z, dtype=complex))


def _is_scalar(value):
    return isinstance(value, (CP1Point, numbers.Number))


def fs_weight(z):
    """Fubini-Study weight log(1 + |z|^2)."""
    out = np.log1p(np.abs(as_points(z)) ** 2)
    return float(np.ravel(out)[0]) if _is_scalar(z) else out


def t_coordinate(z):
    """t = |z|^2 / (1 + |z|^2), the omega_FS-mass of the disk of radius |z|; 1 at infinity."""
    z = np.asarray(z, dtype=complex)
    inf = is_infinite(z)
    a = np.abs(np.where(inf, 0, z)) ** 2
    return np.where(inf, 1.0, a / (1.0 + a))


def chordal_dist(p, q):
    """|z - w| / sqrt((1+|z|^2)(1+|w|^2)), extended to infinity; broadcasts over arrays."""
    scalar = _is_scalar(p) and _is_scalar(q)
    z = as_points(p)
    w = as_points(q)
    zi, wi = is_infinite(z), is_infinite(w)
    zf = np.where(zi, 0, z)
    wf = np.where(wi, 0, w)
    d = np.abs(zf - wf) / np.sqrt((1.0 + np.abs(zf) ** 2) * (1.0 + np.abs(wf) ** 2))
    d = np.where(zi & ~wi, 1.0 / np.sqrt(1.0 + np.abs(wf) ** 2), d)
    d = np.where(wi & ~zi, 1.0 / np.sqrt(1.0 + np.abs(zf) ** 2), d)
    d = np.where(zi & wi, 0.0, d)
    d = np.minimum(d, 1.0)
    if scalar:
        return float(d.ravel()[0])
    return d


# ---------------------------------------------------------------------------
# Quadrature rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Quadrature:
    """
    Nodes and nonnegative weights realizing a measure on CP^1.

    cell_sizes holds, per node, the size of the cell it stands for: the
    omega_FS-mass of an areal cell (dimension 2) or the chordal length of
    an arc cell (dimension 1). Ring-structured rules (equal weights on
    equispaced points of each circle |z| = r) set rotation_invariant.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str = 'custom'
    dimension: int = 0
    cell_sizes: Optional[np.ndarray] = None
    rotation_invariant: bool = False
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=complex).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if nodes.shape != weights.shape:
            raise ValueError(f"Quadrature has {nodes.size} nodes but {weights.size} weights")
        if np.any(weights < 0):
            raise ValueError("Quadrature weights must be nonnegative")
        object.__setattr__(self, 'nodes', nodes)
        object.__setattr__(self, 'weights', weights)
        if self.cell_sizes is not None:
            object.__setattr__(self, 'cell_sizes', np.asarray(self.cell_sizes, dtype=float).ravel())
        for arr in (self.nodes, self.weights, self.cell_sizes):
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self):
        return self.nodes.size

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def integrate(self, values):
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def _circle_rule(n, radius=1.0):
    angles = 2.0 * np.pi * np.arange(n) / n
    nodes = radius * np.exp(1j * angles)
    weights = np.full(n, 1.0 / n)
    arc = 2.0 * np.pi * radius / (n * (1.0 + radius ** 2))
    return Quadrature(nodes, weights, kind='circle', dimension=1,
                      cell_sizes=np.full(n, arc), rotation_invariant=True,
                      params={'n': n, 'radius': radius})


def _ring_nodes(t, count, offset=0.0):
    r = np.sqrt(t / (1.0 - t))
    angles = 2.0 * np.pi * (np.arange(count) + offset) / count
    return r * np.exp(1j * angles)


def _sphere_grid_rule(n_theta, n_phi, t_max=1.0):
    t = t_max * (np.arange(n_theta) + 0.5) / n_theta
    nodes = np.concatenate([_ring_nodes(ti, n_phi) for ti in t])
    count = n_theta * n_phi
    return Quadrature(nodes, np.full(count, 1.0 / count), kind='sphere_grid', dimension=2,
                      cell_sizes=np.full(count, t_max / count), rotation_invariant=True,
                      params={'n_theta': n_theta, 'n_phi': n_phi, 't_max': t_max})


def _equal_area_rule(n_rings, t_max=1.0):
    # Rings of equal omega_FS-mass, each split into near-square cells
    t = t_max * (np.arange(n_rings) + 0.5) / n_rings
    counts = np.maximum(3, np.rint(4.0 * np.pi * n_rings * t * (1.0 - t) / t_max).astype(int))
    nodes, weights, cells = [], [], []
    for i, (ti, ni) in enumerate(zip(t, counts)):
        nodes.append(_ring_nodes(ti, ni, offset=0.5 * (i % 2)))
        weights.append(np.full(ni, 1.0 / (n_rings * ni)))
        cells.append(np.full(ni, t_max / (n_rings * ni)))
    return Quadrature(np.concatenate(nodes), np.concatenate(weights), kind='equal_area',
                      dimension=2, cell_sizes=np.concatenate(cells), rotation_invariant=True,
                      params={'n_rings': n_rings, 't_max': t_max})


def _curvature_rule(weight, n, n_angles=None):
    n_angles = n_angles or 2 * n
    if weight.kind == 'flat_disk':
        rule = _circle_rule(n_angles)
        return dataclasses.replace(rule, kind='curvature',
                                   params={'n': n, 'n_angles': n_angles})
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (x + 1.0)
    radial = 0.5 * w * weight.mass_density(t)
    radial = radial / radial.sum()
    nodes = np.concatenate([_ring_nodes(ti, n_angles) for ti in t])
    weights = np.repeat(radial / n_angles, n_angles)
    cells = np.repeat(0.5 * w / n_angles, n_angles)
    return Quadrature(nodes, weights, kind='curvature', dimension=2, cell_sizes=cells,
                      rotation_invariant=True, params={'n': n, 'n_angles': n_angles})


def build_quadrature(kind, n=None, *, n_theta=None, n_phi=None, weight=None,
                     n_angles=None, radius=1.0, t_max=1.0):
    """
    Build one of the built-in rules.

    circle(n)                 n equispaced points on |z| = radius, weights 1/n
    sphere_grid(n_theta, n_phi)  midpoint rule in t times equispaced angles
    equal_area(n)             n equal-mass rings with ~square cells
    curvature(weight, n)      Gauss-Legendre in t weighted by omega_h
    """
    if kind == 'sphere_grid':
        if not n_theta or not n_phi or n_theta < 1 or n_phi < 1:
            raise ConfigurationError(f"sphere_grid needs positive n_theta, n_phi; got {n_theta}, {n_phi}")
        return _sphere_grid_rule(int(n_theta), int(n_phi), t_max)
    if n is None or n < 1:
        raise ConfigurationError(f"Quadrature size must be positive, got {n!r}")
    n = int(n)
    if kind == 'circle':
        return _circle_rule(n, radius)
    if kind == 'equal_area':
        return _equal_area_rule(n, t_max)
    if kind == 'curvature':
        if weight is None:
            raise ConfigurationError("curvature quadrature needs the weight")
        return _curvature_rule(weight, n, n_angles)
    raise ConfigurationError(f"Unknown quadrature kind {kind!r}")


def grid_spacing(q):
    """Largest nearest-neighbour chordal distance among the nodes of q."""
    nodes = q.nodes
    if nodes.size < 2:
        return 0.0
    nearest = np.empty(nodes.size)
    for start in range(0, nodes.size, 1024):
        block = chordal_dist(nodes[start:start + 1024, None], nodes[None, :])
        rows = np.arange(block.shape[0])
        block[rows, start + rows] = np.inf
        nearest[start:start + 1024] = block.min(axis=1)
    return float(nearest.max())


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RadialWeight:
    """
    Local weight phi with h = e^{-phi}, a radial perturbation of Fubini-Study:
    phi(z) = log(1+|z|^2) + psi~(t), t = |z|^2/(1+|z|^2).

    fubini_study: psi~ = 0
    flat_disk:    phi = log max(1, |z|^2), flat on the closed unit disk
    radial:       psi~(t) = sum_m b_m t^m
    """

    kind: str = 'fubini_study'
    coeffs: tuple = ()

    def __post_init__(self):
        if self.kind not in ('fubini_study', 'flat_disk', 'radial'):
            raise ConfigurationError(f"Unknown weight kind {self.kind!r}")
        if self.kind == 'radial':
            object.__setattr__(self, 'coeffs', tuple(float(b) for b in self.coeffs))
            density = self.mass_density(np.linspace(0.0, 1.0, 2001))
            if not np.all(np.isfinite(density)) or density.min() <= 0:
                raise ConfigurationError(
                    f"Radial weight {list(self.coeffs)} does not have positive curvature "
                    f"(min density {density.min():.3g})")

    def __call__(self, z):
        return self.phi(z)

    @property
    def _psi_poly(self):
        # Ascending coefficients of psi~(t), zero constant term
        return np.polynomial.Polynomial((0.0,) + tuple(self.coeffs))

    def psi_t(self, t):
        if self.kind != 'radial':
            return np.zeros_like(np.asarray(t, dtype=float))
        return self._psi_poly(np.asarray(t, dtype=float))

    def phi(self, z):
        z = np.asarray(z, dtype=complex)
        inf = is_infinite(z)
        a = np.abs(np.where(inf, 0, z)) ** 2
        if self.kind == 'flat_disk':
            with np.errstate(divide='ignore'):
                out = np.where(a > 1.0, np.log(np.where(a > 1.0, a, 1.0)), 0.0)
        else:
            out = np.log1p(a)
            if self.kind == 'radial':
                out = out + self.psi_t(a / (1.0 + a))
        return np.where(inf, np.inf, out)

    def psi(self, z):
        """phi - log(1+|z|^2), smooth on CP^1 and finite at infinity."""
        z = np.asarray(z, dtype=complex)
        inf = is_infinite(z)
        a = np.abs(np.where(inf, 0, z)) ** 2
        if self.kind == 'fubini_study':
            return np.zeros(z.shape)
        if self.kind == 'flat_disk':
            with np.errstate(divide='ignore'):
                inv = np.where(a > 1.0, 1.0 / np.where(a > 1.0, a, 1.0), 0.0)
            out = np.where(a > 1.0, -np.log1p(inv), -np.log1p(a))
            return np.where(inf, 0.0, out)
        return self.psi_t(np.where(inf, 1.0, a / (1.0 + a)))

    def connection(self, z):
        """The Chern connection coefficient d(phi)/dz."""
        z = np.asarray(z, dtype=complex)
        if self.kind == 'fubini_study':
            return np.conj(z) / (1.0 + np.abs(z) ** 2)
        if self.kind == 'flat_disk':
            # the unit circle itself belongs to the flat side
            outside = np.abs(z) > 1.0 + 1e-12
            return np.where(outside, 1.0 / np.where(outside, z, 1.0), 0.0)
        # central differences, d/dz = (d/dx - i d/dy) / 2
        dx = (self.phi(z + FD_STEP) - self.phi(z - FD_STEP)) / (2 * FD_STEP)
        dy = (self.phi(z + 1j * FD_STEP) - self.phi(z - 1j * FD_STEP)) / (2 * FD_STEP)
        return 0.5 * (dx - 1j * dy)

    def mass_profile(self, t):
        """M(t): omega_h-mass of {|w|^2/(1+|w|^2) <= t}."""
        t = np.asarray(t, dtype=float)
        if self.kind == 'flat_disk':
            return np.where(t >= 0.5, 1.0, 0.0)
        out = t.copy()
        if self.kind == 'radial':
            out = out + t * (1.0 - t) * self._psi_poly.deriv()(t)
        return out

    def mass_density(self, t):
        """dM/dt, the density of omega_h in the t coordinate."""
        t = np.asarray(t, dtype=float)
        if self.kind == 'flat_disk':
            raise ValueError("flat_disk curvature is a point mass in t")
        if self.kind == 'fubini_study':
            return np.ones_like(t)
        d1 = self._psi_poly.deriv()
        d2 = d1.deriv()
        return 1.0 + (1.0 - 2.0 * t) * d1(t) + t * (1.0 - t) * d2(t)

    def describe(self):
        if self.kind == 'radial':
            return {'radial': list(self.coeffs)}
        return self.kind


def fs_metric(z):
    """|dz|^2_g for the Fubini-Study metric."""
    return (1.0 + np.abs(np.asarray(z, dtype=complex)) ** 2) ** 2


def flat_metric(z):
    return np.ones(np.shape(z))


def _green_average(weight, r2, c):
    """Integral of G_h(z, .) against omega_h for |z|^2 = r2, using the exact angular average."""
    t_z = r2 / (1.0 + r2)
    phi_z = float(np.log1p(r2) + weight.psi_t(t_z))

    def integrand(s):
        # log max(|z|^2, |w|^2) - phi(w) with |w|^2 = s/(1-s)
        if s < t_z:
            value = np.log(r2) + np.log1p(-s)
        else:
            value = np.log(s)
        return (value - float(weight.psi_t(s))) * float(weight.mass_density(s))

    points = [t_z] if 0.0 < t_z < 1.0 else None
    value, _ = integrate.quad(integrand, 0.0, 1.0, points=points, limit=400,
                              epsabs=1e-13, epsrel=1e-13)
    return value - phi_z + c


def calibrate_green_constant(weight):
    """c_h such that the Green potential of omega_h vanishes; constancy is re-checked."""
    if weight.kind == 'flat_disk':
        # omega = delta_{S^1}; U(z) = log max(|z|^2,1) - phi(z) - phi(1) + c = c
        return 0.0
    # for Fubini-Study the integral of log t over [0, 1] gives exactly 1
    c = 1.0 if weight.kind == 'fubini_study' else -_green_average(weight, 0.0, 0.0)
    for radius in CALIBRATION_RADII:
        drift = _green_average(weight, radius ** 2, c)
        if abs(drift) > CALIBRATION_TOL:
            raise ConfigurationError(
                f"Green calibration is not constant for weight {weight.describe()}: "
                f"potential {drift:.3e} at |z| = {radius}")
    return float(c)


# ---------------------------------------------------------------------------
# Weighted geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WeightedGeometry:
    """Everything needed to integrate over CP^1: weight, omega_h, metric, nu and K."""

    weight: RadialWeight
    curvature_quadrature: Quadrature
    nu: Quadrature
    base_metric: Callable
    support_grid: Quadrature
    green_constant: float
    name: str = 'custom'
    config: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for label, q in (('nu', self.nu), ('curvature_quadrature', self.curvature_quadrature)):
            if abs(q.total_mass - 1.0) > 1e-12:
                raise ConfigurationError(f"{label} has total mass {q.total_mass!r}, expected 1")
            if not np.all(np.isfinite(self.weight.phi(q.nodes))):
                raise ConfigurationError(f"weight is not finite on every node of {label}")

    @property
    def weight_kind(self):
        return self.weight.kind

    def phi(self, z):
        return self.weight.phi(z)

    def psi(self, z):
        return self.weight.psi(z)

    def connection(self, z):
        return self.weight.connection(z)

    def metric_factor(self, z):
        return self.base_metric(z)

    def hash(self):
        return config_hash(self.config or {'name': self.name})

    def with_green_constant(self, c):
        return dataclasses.replace(self, green_constant=float(c))

    @lru_cache(maxsize=64)
    def nu_rule(self, degree):
        """
        nu refined so that |p|^2 e^{-N phi}-type integrands of total degree
        `degree` (k*N for |p|^{2k}) are integrated exactly; rules without an
        exactness guarantee are returned unchanged.
        """
        return refine_rule(self.weight, self.nu, degree)

    @lru_cache(maxsize=64)
    def curvature_rule(self, degree):
        return refine_rule(self.weight, self.curvature_quadrature, degree)


def refine_rule(weight, q, degree):
    need_angles = 2 * int(degree) + 2
    if q.kind == 'circle':
        if len(q) >= need_angles:
            return q
        return _circle_rule(need_angles, q.params.get('radius', 1.0))
    if q.kind == 'curvature':
        n = max(q.params['n'], int(degree) // 2 + 2)
        n_angles = max(q.params['n_angles'], need_angles)
        if n == q.params['n'] and n_angles == q.params['n_angles']:
            return q
        return _curvature_rule(weight, n, n_angles)
    return q


def green_matrix(geom, P, Q):
    """G_h between two point sets; -inf where points coincide."""
    P = as_points(P).ravel()
    Q = as_points(Q).ravel()
    d = chordal_dist(P[:, None], Q[None, :])
    with np.errstate(divide='ignore'):
        out = 2.0 * np.log(d)
    return out - geom.psi(P)[:, None] - geom.psi(Q)[None, :] + geom.green_constant


def green_function(geom, z, w):
    """G_h(z, w) = log(|z-w|^2 e^{-phi(z)} e^{-phi(w)}) + c_h."""
    zp = np.atleast_1d(as_points(z)).ravel()[:1]
    wp = np.atleast_1d(as_points(w)).ravel()[:1]
    if chordal_dist(zp[0], wp[0]) == 0.0:
        raise DiagonalEvaluationError(f"Green's function evaluated on the diagonal at {zp[0]}")
    return float(green_matrix(geom, zp, wp)[0, 0])


def _metric_for(name):
    return {'fubini_study': fs_metric, 'flat': flat_metric}[name]


def build_geometry(config):
    """WeightedGeometry from the run-config geometry section."""
    weight_cfg = config.get('weight', 'fubini_study')
    if isinstance(weight_cfg, dict):
        weight = RadialWeight('radial', tuple(weight_cfg.get('radial', ())))
    else:
        weight = RadialWeight(weight_cfg)

    nu_cfg = config.get('nu', {'curvature': 32})
    (nu_kind, nu_value), = nu_cfg.items()
    if nu_kind == 'circle':
        nu = build_quadrature('circle', nu_value)
    elif nu_kind == 'curvature':
        nu = build_quadrature('curvature', nu_value, weight=weight)
    elif nu_kind == 'sphere_grid':
        nu = build_quadrature('sphere_grid', n_theta=nu_value[0], n_phi=nu_value[1])
    else:
        raise ConfigurationError(f"Unknown nu kind {nu_kind!r}")

    support_cfg = config.get('support', 'full')
    grid_size = config.get('grid_size')
    if support_cfg == 'full':
        support = build_quadrature('equal_area', grid_size or 24)
    elif 'circle' in support_cfg:
        support = build_quadrature('circle', grid_size or 256)
    elif 'disk_radius' in support_cfg:
        r2 = float(support_cfg['disk_radius']) ** 2
        support = build_quadrature('equal_area', grid_size or 24, t_max=r2 / (1.0 + r2))
    else:
        raise ConfigurationError(f"Unknown support {support_cfg!r}")
    if len(support) > MAX_GRID_POINTS:
        raise ConfigurationError(
            f"Support grid has {len(support)} points, above the cap of {MAX_GRID_POINTS}")

    metric_name = config.get('metric') or ('flat' if weight.kind == 'flat_disk' else 'fubini_study')
    curvature = build_quadrature('curvature', max(len(nu) // 8, 32), weight=weight)
    c_h = calibrate_green_constant(weight)

    name = {'fubini_study': 'fubini_study', 'flat_disk': 'kac_hammersley'}.get(weight.kind, 'radial')
    if weight.kind == 'flat_disk' and nu_kind != 'circle':
        name = 'flat_disk'
    geom = WeightedGeometry(
        weight=weight,
        curvature_quadrature=curvature,
        nu=nu,
        base_metric=_metric_for(metric_name),
        support_grid=support,
        green_constant=c_h,
        name=name,
        config=dict(config),
    )
    log(f"[GEOMETRY] {name}: weight={weight.describe()}, nu={nu.kind}({len(nu)}), "
        f"support={support.kind}({len(support)}), c_h={c_h:.12g}")
    return geom


def kac_hammersley_geometry(n=64, grid_size=256):
    """Flat weight on the unit disk, nu = delta_{S^1}, K = S^1."""
    return build_geometry({'weight': 'flat_disk', 'nu': {'circle': n},
                           'support': {'circle': True}, 'grid_size': grid_size})


def fubini_study_geometry(nu='curvature', n=32, grid_size=24):
    """Fubini-Study weight and metric, K = CP^1."""
    nu_cfg = {'sphere_grid': list(n)} if nu == 'sphere_grid' else {nu: n}
    return build_geometry({'weight': 'fubini_study', 'nu': nu_cfg,
                           'support': 'full', 'grid_size': grid_size})
