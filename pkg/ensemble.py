#!/usr/bin/env python3
"""
Polynomial sections and the P(phi)_2 action
Weighted norms, kinetic energy, potential term and Bernstein ratios
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from pphi_errors import ConfigurationError, DegenerateMeasureError, DegenerateSectionError


# Cache the evaluated basis only below this many entries
BASIS_CACHE_ENTRIES = 4_000_000
CHUNK_NODES = 4096


@dataclass(frozen=True, eq=False)
class PolySection:
    """
    Degree-N polynomial s(z) = sum_j a_{N-j} z^j, stored leading coefficient first.

    The zero polynomial is representable (norms and actions of it are 0);
    operations that need a nonzero section reject it explicitly.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex).ravel()
        if coeffs.size < 2:
            raise ValueError(f"A section needs degree N >= 1, got {coeffs.size} coefficients")
        coeffs.setflags(write=False)
        object.__setattr__(self, 'coeffs', coeffs)

    @classmethod
    def from_ascending(cls, ascending):
        return cls(np.asarray(ascending, dtype=complex)[::-1])

    @property
    def degree(self):
        return self.coeffs.size - 1

    @property
    def ascending(self):
        """Coefficient of z^j at index j."""
        return self.coeffs[::-1]

    @property
    def leading(self):
        return complex(self.coeffs[0])

    def is_zero(self):
        return not np.any(self.coeffs)

    def scaled(self, factor):
        return PolySection(self.coeffs * factor)

    def monic(self):
        if self.leading == 0:
            raise DegenerateSectionError("Leading coefficient is zero, no monic form")
        return PolySection(self.coeffs / self.leading)

    def __call__(self, z):
        return np.polyval(self.coeffs, z)


@dataclass(frozen=True)
class PotentialSpec:
    """P(x) = sum_j c_j x^j with c_k = 1, optionally with the kinetic term."""

    c: tuple
    include_kinetic: bool = False

    def __post_init__(self):
        c = tuple(float(v) for v in self.c)
        if not c:
            raise ConfigurationError("Potential needs at least one coefficient (k >= 1)")
        if c[-1] != 1.0:
            raise ConfigurationError(f"Potential leading coefficient c_k must be 1, got {c[-1]}")
        object.__setattr__(self, 'c', c)

    @property
    def k(self):
        return len(self.c)

    @property
    def is_gaussian(self):
        return self.k == 1 and not self.include_kinetic

    @classmethod
    def from_config(cls, cfg):
        c = list(cfg.get('c', []))
        k = cfg.get('k', len(c))
        if k != len(c):
            raise ConfigurationError(f"potential.k = {k} but {len(c)} coefficients given")
        return cls(tuple(c), bool(cfg.get('kinetic', False)))

    def to_config(self):
        return {'k': self.k, 'c': list(self.c), 'kinetic': self.include_kinetic}

    def P(self, x):
        """Potential evaluated at x >= 0."""
        return np.polyval(list(self.c[::-1]) + [0.0], x)


# ---------------------------------------------------------------------------
# Weighted monomial bases
# ---------------------------------------------------------------------------

def _weighted_powers(z, exponents, log_scale):
    """z^e * exp(log_scale) in log space, with 0^0 = 1."""
    with np.errstate(divide='ignore'):
        log_abs = np.log(np.abs(z))
    arg = np.angle(z)
    e = exponents[None, :]
    with np.errstate(invalid='ignore'):
        magnitude = np.where(e == 0, 0.0, e * log_abs[:, None])
    return np.exp(magnitude + log_scale[:, None]) * np.exp(1j * e * arg[:, None])


def weighted_basis(geom, nodes, N):
    """B[n, j] = z_n^j e^{-N phi(z_n)/2}."""
    log_scale = -0.5 * N * geom.phi(nodes)
    return _weighted_powers(nodes, np.arange(N + 1), log_scale)


def derivative_basis(geom, nodes, N):
    """
    D[n, j]: the Chern derivative of z^j in the frame e^{-N phi/2},
    (j z^{j-1} - N (d phi/dz) z^j) e^{-N phi/2}, times |dz|_g.
    """
    j = np.arange(N + 1)
    log_scale = -0.5 * N * geom.phi(nodes)
    lowered = _weighted_powers(nodes, np.maximum(j - 1, 0), log_scale) * j[None, :]
    connection_term = N * geom.connection(nodes)[:, None] * _weighted_powers(nodes, j, log_scale)
    return (lowered - connection_term) * np.sqrt(geom.metric_factor(nodes))[:, None]


_BASES = {'value': weighted_basis, 'derivative': derivative_basis}


@lru_cache(maxsize=32)
def _cached_basis(geom, q, N, which):
    return _BASES[which](geom, q.nodes, N)


def _basis_chunks(geom, q, N, which):
    """Yield (weights, basis block) over node chunks; small bases come from the cache."""
    if len(q) * (N + 1) <= BASIS_CACHE_ENTRIES:
        yield q.weights, _cached_basis(geom, q, N, which)
        return
    for start in range(0, len(q), CHUNK_NODES):
        stop = start + CHUNK_NODES
        yield q.weights[start:stop], _BASES[which](geom, q.nodes[start:stop], N)


@lru_cache(maxsize=128)
def _hermitian_matrix(geom, q, N, which):
    # H[i, j] = sum_n w_n conj(B[n, i]) B[n, j]; the quadratic form c^H H c
    H = np.zeros((N + 1, N + 1), dtype=complex)
    for w, block in _basis_chunks(geom, q, N, which):
        H += block.conj().T @ (w[:, None] * block)
    H = 0.5 * (H + H.conj().T)
    H.setflags(write=False)
    return H


def norm_matrix(geom, N):
    """Hermitian H with weighted_norm_sq(s) = c^H H c (c ascending)."""
    return _hermitian_matrix(geom, geom.nu_rule(N), N, 'value')


def kinetic_matrix(geom, N):
    """Hermitian K with kinetic_energy(s) = c^H K c (c ascending)."""
    return _hermitian_matrix(geom, geom.nu_rule(N + 1), N, 'derivative')


def curvature_norm_matrix(geom, N):
    """The same Gram form against omega_h instead of nu."""
    return _hermitian_matrix(geom, geom.curvature_rule(N), N, 'value')


def _quadratic(H, s):
    c = s.ascending
    return float(np.real(np.vdot(c, H @ c)))


def section_values(s, geom, q):
    """s(z) e^{-N phi(z)/2} on the nodes of q."""
    c = s.ascending
    parts = [block @ c for _, block in _basis_chunks(geom, q, s.degree, 'value')]
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Norms and the action
# ---------------------------------------------------------------------------

def weighted_norm_sq(s, geom):
    """||s||^2 = integral of |p|^2 e^{-N phi} d nu."""
    return max(_quadratic(norm_matrix(geom, s.degree), s), 0.0)


def kinetic_energy(s, geom):
    """||nabla s||^2 for the Chern connection, integrated against nu."""
    return max(_quadratic(kinetic_matrix(geom, s.degree), s), 0.0)


def potential_energy(s, spec, geom):
    """Integral of P(|s|^2_{h^N}) d nu."""
    q = geom.nu_rule(spec.k * s.degree)
    x = np.abs(section_values(s, geom, q)) ** 2
    return float(q.weights @ spec.P(x))


def action(s, spec, geom):
    """S(s) = [kinetic] ||nabla s||^2 + integral of P(|s|^2_{h^N}) d nu."""
    value = potential_energy(s, spec, geom)
    if spec.include_kinetic:
        value += kinetic_energy(s, geom)
    return value


def bernstein_ratio(s, geom):
    norm = weighted_norm_sq(s, geom)
    if norm <= 0:
        raise DegenerateSectionError("Bernstein ratio of a zero-norm section")
    return kinetic_energy(s, geom) / norm


def l2_condition_ratio(s, geom):
    """(integral of |p|^2 e^{-N phi} omega_h) / (integral of |p|^2 e^{-N phi} d nu)."""
    norm = weighted_norm_sq(s, geom)
    if norm <= 0:
        raise DegenerateSectionError("L2-condition ratio of a zero-norm section")
    return _quadratic(curvature_norm_matrix(geom, s.degree), s) / norm


def _largest_generalized_eigenvalue(A, B, label):
    try:
        values = linalg.eigh(A, B, eigvals_only=True)
    except linalg.LinAlgError as e:
        raise DegenerateMeasureError(f"{label}: Gram matrix is not positive definite ({e})")
    return float(values[-1])


def bernstein_constant(geom, N):
    """Supremum of bernstein_ratio over all degree-N sections."""
    return _largest_generalized_eigenvalue(kinetic_matrix(geom, N), norm_matrix(geom, N),
                                           f"Bernstein constant at N={N}")


def l2_condition_constant(geom, N):
    """Supremum of l2_condition_ratio over all degree-N sections."""
    return _largest_generalized_eigenvalue(curvature_norm_matrix(geom, N), norm_matrix(geom, N),
                                           f"L2-condition constant at N={N}")


def growth_exponent(degrees, values):
    """Least-squares slope of log(value) against log(N)."""
    degrees = np.asarray(degrees, dtype=float)
    values = np.asarray(values, dtype=float)
    slope, _ = np.polyfit(np.log(degrees), np.log(values), 1)
    return float(slope)
