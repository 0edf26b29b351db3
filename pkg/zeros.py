#!/usr/bin/env python3
"""
ZEROS OF POLYNOMIAL SECTIONS
Aberth-Ehrlich root finding with a companion-matrix fallback, the zeros map,
reconstruction from zeros and empirical measures on CP^1
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ensemble import PolySection
from geometry import CP1Point, INFINITY, as_points
from pphi_config import DEFAULT_ROOT_TOL, ZERO_LEADING_RTOL
from pphi_errors import DegenerateSectionError, RootFinderError, UnrepresentablePolynomialError
from run_audit import log


ABERTH_MAX_ITER = 500
ABERTH_STEP_TOL = 1e-14
POLISH_STEPS = 3


@dataclass(frozen=True, eq=False)
class ZeroConfig:
    """Unordered zeros of a degree-N section; zeros at infinity are only counted."""

    finite_zeros: np.ndarray
    zeros_at_infinity: int = 0

    def __post_init__(self):
        zeros = np.asarray(self.finite_zeros, dtype=complex).ravel()
        if not np.all(np.isfinite(zeros)):
            raise ValueError("finite_zeros contains non-finite values; count them as zeros_at_infinity")
        if self.zeros_at_infinity < 0:
            raise ValueError(f"zeros_at_infinity must be >= 0, got {self.zeros_at_infinity}")
        zeros.setflags(write=False)
        object.__setattr__(self, 'finite_zeros', zeros)

    @property
    def N(self):
        return self.finite_zeros.size + self.zeros_at_infinity

    def points(self):
        """All N zeros as a complex array, infinity as inf."""
        return np.concatenate([self.finite_zeros, np.full(self.zeros_at_infinity, INFINITY)])

    def rotated(self, theta):
        return ZeroConfig(self.finite_zeros * np.exp(1j * theta), self.zeros_at_infinity)

    def conjugate(self):
        return ZeroConfig(np.conj(self.finite_zeros), self.zeros_at_infinity)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """
    Probability measure with finitely many atoms on CP^1.

    A measure built from a quadrature rule keeps the rule's cell sizes and
    dimension so that energies can be evaluated without the diagonal
    singularity; empirical measures have cells = None.
    """

    points: np.ndarray
    weights: np.ndarray
    cells: Optional[np.ndarray] = None
    dimension: int = 0
    rotation_invariant: bool = False

    def __post_init__(self):
        points = as_points(self.points).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if points.shape != weights.shape:
            raise ValueError(f"{points.size} points but {weights.size} weights")
        if np.any(weights < 0):
            raise ValueError("Measure weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"Measure weights sum to {weights.sum()!r}, expected 1")
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'weights', weights)
        if self.cells is not None:
            object.__setattr__(self, 'cells', np.asarray(self.cells, dtype=float).ravel())
        for arr in (self.points, self.weights, self.cells):
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self):
        return self.points.size

    @property
    def is_atomic(self):
        return self.cells is None

    @classmethod
    def from_quadrature(cls, q):
        return cls(q.nodes, q.weights, cells=q.cell_sizes, dimension=q.dimension,
                   rotation_invariant=q.rotation_invariant)

    @classmethod
    def from_reweighted(cls, q, weights):
        """Measure on the nodes of q with new weights, keeping the cell structure."""
        weights = np.asarray(weights, dtype=float)
        return cls(q.nodes, weights / weights.sum(), cells=q.cell_sizes, dimension=q.dimension)

    @classmethod
    def mixture(cls, measures):
        """Uniform mixture of atomic measures (the mean empirical measure)."""
        if not measures:
            raise ValueError("mixture of no measures")
        points = np.concatenate([m.points for m in measures])
        weights = np.concatenate([m.weights for m in measures]) / len(measures)
        return cls(points, weights / weights.sum()).merged()

    def merged(self):
        """Identical atoms combined; atoms sorted, so the result is order independent."""
        unique, inverse = np.unique(self.points, return_inverse=True)
        weights = np.bincount(inverse.ravel(), weights=self.weights, minlength=unique.size)
        return DiscreteMeasure(unique, weights / weights.sum())

    def cp1_points(self):
        return [CP1Point.infinity() if not np.isfinite(p) else CP1Point.finite(p) for p in self.points]

    def to_dict(self):
        finite = np.isfinite(self.points)
        return {
            're': np.where(finite, self.points.real, 0.0).tolist(),
            'im': np.where(finite, self.points.imag, 0.0).tolist(),
            'at_infinity': (~finite).tolist(),
            'weights': self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        points = np.array(data['re']) + 1j * np.array(data['im'])
        points = np.where(np.array(data.get('at_infinity', [False] * points.size)), INFINITY, points)
        weights = np.asarray(data['weights'], dtype=float)
        return cls(points, weights / weights.sum())


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------

def _log_derivative(a, z):
    """p'(z)/p(z), evaluated through the reversed polynomial outside the unit disk."""
    n = a.size - 1
    da = np.polyder(a)
    inside = np.abs(z) <= 1.0
    out = np.empty(z.shape, dtype=complex)
    with np.errstate(divide='ignore', invalid='ignore'):
        zi = z[inside]
        out[inside] = np.polyval(da, zi) / np.polyval(a, zi)
        w = 1.0 / z[~inside]
        rev = a[::-1]
        out[~inside] = w * (n - w * np.polyval(np.polyder(rev), w) / np.polyval(rev, w))
    return out


def _log_abs_value(a, z):
    n = a.size - 1
    inside = np.abs(z) <= 1.0
    out = np.empty(z.shape)
    with np.errstate(divide='ignore'):
        out[inside] = np.log(np.abs(np.polyval(a, z[inside])))
        zo = z[~inside]
        out[~inside] = n * np.log(np.abs(zo)) + np.log(np.abs(np.polyval(a[::-1], 1.0 / zo)))
    return out


def _aberth(a):
    """Simultaneous Aberth-Ehrlich iteration; None when it stalls."""
    n = a.size - 1
    radius = np.abs(a[-1] / a[0]) ** (1.0 / n)
    z = radius * np.exp(1j * (2.0 * np.pi * np.arange(n) / n + 0.4))
    for _ in range(ABERTH_MAX_ITER):
        ratio = _log_derivative(a, z)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        with np.errstate(divide='ignore', invalid='ignore'):
            inv = 1.0 / diff
            np.fill_diagonal(inv, 0.0)
            step = 1.0 / (ratio - inv.sum(axis=1))
        step = np.where(np.isfinite(ratio), step, 0.0)
        if not np.all(np.isfinite(step)):
            return None
        z = z - step
        if np.all(np.abs(step) <= ABERTH_STEP_TOL * np.maximum(1.0, np.abs(z))):
            return z
    return None


def _companion_roots(a):
    return np.roots(a)


def _newton_polish(a, z):
    for _ in range(POLISH_STEPS):
        with np.errstate(divide='ignore', invalid='ignore'):
            candidate = z - 1.0 / _log_derivative(a, z)
        ok = np.isfinite(candidate)
        better = ok & (_log_abs_value(a, np.where(ok, candidate, z)) < _log_abs_value(a, z))
        if not np.any(better):
            break
        z = np.where(better, candidate, z)
    return z


def leja_order(points):
    """Leja ordering: each next point maximizes the product of distances to the previous ones."""
    points = np.asarray(points, dtype=complex)
    n = points.size
    if n == 0:
        return points
    order = np.empty(n, dtype=int)
    order[0] = int(np.argmax(np.abs(points)))
    taken = np.zeros(n, dtype=bool)
    taken[order[0]] = True
    with np.errstate(divide='ignore'):
        score = np.log(np.abs(points - points[order[0]]))
    for i in range(1, n):
        masked = np.where(taken, -np.inf, score)
        nxt = int(np.argmax(masked))
        if taken[nxt]:
            nxt = int(np.flatnonzero(~taken)[0])
        order[i] = nxt
        taken[nxt] = True
        with np.errstate(divide='ignore'):
            score = score + np.log(np.abs(points - points[nxt]))
    return points[order]


def expand_product(roots):
    """Coefficients (leading first) of prod (z - r), multiplied in Leja order."""
    coeffs = np.array([1.0 + 0j])
    for r in leja_order(roots):
        coeffs = np.convolve(coeffs, np.array([1.0, -r]))
    return coeffs


def _residual(b, roots):
    scale = np.max(np.abs(b))
    rebuilt = b[0] * expand_product(roots)
    return float(np.max(np.abs(rebuilt - b)) / scale)


def _split_degenerate(coeffs):
    """(deflated coefficients, zeros at infinity, exact zeros at 0)."""
    scale = np.max(np.abs(coeffs))
    n_inf = 0
    while n_inf < coeffs.size - 1 and abs(coeffs[n_inf]) < ZERO_LEADING_RTOL * scale:
        n_inf += 1
    core = coeffs[n_inf:]
    n_zero = 0
    while n_zero < core.size - 1 and core[core.size - 1 - n_zero] == 0:
        n_zero += 1
    return core[:core.size - n_zero], n_inf, n_zero


def find_roots(s, tol=DEFAULT_ROOT_TOL):
    """All N zeros of s with multiplicity; the reconstruction residual is at most tol."""
    if s.is_zero():
        raise DegenerateSectionError("The zero section has no zero set")
    b, n_inf, n_zero = _split_degenerate(s.coeffs)
    if b.size <= 1:
        return ZeroConfig(np.zeros(n_zero, dtype=complex), n_inf)

    candidates = []
    roots = _aberth(b)
    if roots is not None:
        roots = _newton_polish(b, roots)
        candidates.append((_residual(b, roots), roots))
    if roots is None or candidates[0][0] > tol:
        roots = _newton_polish(b, _companion_roots(b))
        candidates.append((_residual(b, roots), roots))
    residual, roots = min(candidates, key=lambda pair: pair[0])
    if not residual <= tol:
        raise RootFinderError(
            f"Root finder did not reach tolerance {tol:g} on a degree-{s.degree} polynomial",
            coeffs=s.coeffs, residual=residual)
    finite = np.concatenate([roots, np.zeros(n_zero, dtype=complex)])
    return ZeroConfig(finite, n_inf)


def find_roots_many(sections, tol=DEFAULT_ROOT_TOL, threads=1):
    """
    Zeros of many sections, in input order.

    Returns (configs, failures): configs[i] is None where root finding failed,
    failures lists (index, RootFinderError).
    """
    def one(s):
        try:
            return find_roots(s, tol), None
        except RootFinderError as e:
            return None, e

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(one, sections))
    configs = [zc for zc, _ in results]
    failures = [(i, err) for i, (_, err) in enumerate(results) if err is not None]
    if failures:
        log(f"[ZEROS] ⚠️  {len(failures)} of {len(sections)} polynomials failed root finding")
    return configs, failures


def reconstruct(zc, a0):
    """a0 * prod (z - zeta_j) as a PolySection."""
    if zc.zeros_at_infinity:
        raise UnrepresentablePolynomialError(
            f"{zc.zeros_at_infinity} zeros at infinity cannot be written as a degree-{zc.N} product")
    return PolySection(complex(a0) * expand_product(zc.finite_zeros))


def reconstruction_error(s, zc):
    """Relative max-norm coefficient error of s against its rebuilt form."""
    coeffs = s.coeffs
    core = coeffs[zc.zeros_at_infinity:]
    rebuilt = core[0] * expand_product(zc.finite_zeros)
    return float(np.max(np.abs(rebuilt - core)) / np.max(np.abs(coeffs)))


# ---------------------------------------------------------------------------
# Empirical measures
# ---------------------------------------------------------------------------

def empirical_measure(zc):
    """Z_s = (1/N) sum of Dirac masses at the zeros, infinity included."""
    points = zc.points()
    return DiscreteMeasure(points, np.full(points.size, 1.0 / zc.N)).merged()


def angular_fourier_modes(configs, modes=4):
    """
    Per mode m: |mean of e^{i m theta}| over all finite nonzero zeros and its
    Monte-Carlo standard error across samples.
    """
    rows = []
    for m in range(1, modes + 1):
        per_sample = []
        for zc in configs:
            z = zc.finite_zeros[zc.finite_zeros != 0]
            if z.size:
                per_sample.append(np.mean((z / np.abs(z)) ** m))
        per_sample = np.array(per_sample)
        if per_sample.size < 2:
            rows.append({'mode': m, 'modulus': float('nan'), 'std_error': float('nan')})
            continue
        se = np.sqrt((per_sample.real.var(ddof=1) + per_sample.imag.var(ddof=1)) / per_sample.size)
        rows.append({'mode': m, 'modulus': float(np.abs(per_sample.mean())), 'std_error': float(se)})
    return rows


def radial_mass_fraction(configs, lo, hi):
    """Share of all zeros (infinite ones included in the count) with lo <= |z| <= hi."""
    inside = sum(int(np.count_nonzero((np.abs(zc.finite_zeros) >= lo) & (np.abs(zc.finite_zeros) <= hi)))
                 for zc in configs)
    total = sum(zc.N for zc in configs)
    return inside / total if total else float('nan')
