#!/usr/bin/env python3
"""
Potential theory on CP^1
Green energy and potential, exact W1, the rate functional and the equilibrium solver
"""

import math
from dataclasses import dataclass, asdict, field
from functools import lru_cache
from typing import Any, Dict, Optional

import numpy as np
import ot
from scipy import integrate, special

from geometry import build_quadrature, calibrate_green_constant, chordal_dist, green_matrix, t_coordinate
from pphi_config import DEFAULT_SOLVER, MAX_GRID_POINTS
from pphi_errors import ConfigurationError, DiagonalEvaluationError, SolverError
from run_audit import log
from zeros import DiscreteMeasure


ROW_BLOCK = 2048
EMD_MAX_ITER = 10_000_000
SUPPORT_FLOOR = 1e-14


@dataclass
class RateValue:
    energy: float
    sup_potential: float
    eh_constant: float
    total: float
    smoothing_radius: Optional[float] = None

    def to_dict(self):
        return asdict(self)


@dataclass
class SolverReport:
    iterations: int
    gap: float
    support_size: int
    support_spread: float
    off_support_excess: float
    polished: bool
    certified: bool
    history: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def _self_energy(geom, points, cells, dimension):
    """Energy of a cell with itself: uniform measure on a small cap or arc."""
    psi = geom.psi(points)
    if dimension == 1:
        return 2.0 * np.log(cells) - 3.0 - 2.0 * psi + geom.green_constant
    return np.log(cells) - 0.5 - 2.0 * psi + geom.green_constant


def kernel_matrix(geom, q):
    """Green matrix on the nodes of q with cell self-energies on the diagonal."""
    n = len(q)
    if n > MAX_GRID_POINTS:
        raise ConfigurationError(f"Kernel matrix for {n} points exceeds the cap of {MAX_GRID_POINTS}")
    if q.cell_sizes is None:
        raise ConfigurationError("kernel_matrix needs a rule with cell sizes")
    A = np.empty((n, n))
    for start in range(0, n, ROW_BLOCK):
        stop = min(start + ROW_BLOCK, n)
        A[start:stop] = green_matrix(geom, q.nodes[start:stop], q.nodes)
    idx = np.arange(n)
    A[idx, idx] = _self_energy(geom, q.nodes, q.cell_sizes, q.dimension)
    return A


def _ring_structure(mu):
    """
    (t per ring, mass per ring, t-cell edges) for rotation-invariant measures.

    Rings of a two-dimensional rule tile [0, t_max] by the t-widths of their
    cells, each ring inside its own cell; edges is None when they do not.
    """
    t = t_coordinate(mu.points)
    keys, inverse = np.unique(np.round(t, 12), return_inverse=True)
    inverse = inverse.ravel()
    masses = np.bincount(inverse, weights=mu.weights, minlength=keys.size)
    if mu.dimension != 2 or mu.cells is None:
        return keys, masses, None
    widths = np.bincount(inverse, weights=mu.cells, minlength=keys.size)
    edges = np.concatenate([[0.0], np.cumsum(widths)])
    inside = np.all(edges[:-1] <= keys + 1e-12) and np.all(keys <= edges[1:] + 1e-12)
    if not inside or np.any(widths <= 0) or edges[-1] > 1.0 + 1e-9:
        return keys, masses, None
    return keys, masses, np.minimum(edges, 1.0)


def _ring_kernel(t1, t2):
    # angular average of log |z-w|^2 - log(1+|z|^2) - log(1+|w|^2) over both circles
    with np.errstate(divide='ignore'):
        return np.log(np.maximum(t1, t2)) + np.log1p(-np.minimum(t1, t2))


def _int_log(x):
    return special.xlogy(x, x) - x


def _int_log1m(x):
    return -special.xlogy(1.0 - x, 1.0 - x) - x


def _int_xlog(x):
    return 0.5 * special.xlogy(x * x, x) - 0.25 * x * x


def _int_int_log1m(x):
    return 0.5 * special.xlogy((1.0 - x) ** 2, 1.0 - x) - 0.25 * (1.0 - x) ** 2 - 0.5 * x * x


def _ring_kernel_cell(t, a, b):
    """Ring kernel at t averaged over s uniform in the t-cell [a, b]."""
    lo = np.clip(t, a, b)
    total = (special.xlogy(lo - a, t) + _int_log1m(lo) - _int_log1m(a)
             + _int_log(b) - _int_log(lo) + special.xlogy(b - lo, 1.0 - t))
    return total / (b - a)


def _ring_energy_matrix(edges):
    """Ring kernel averaged over pairs of t-cells; cells are sorted and disjoint."""
    a, b = edges[:-1], edges[1:]
    w = b - a
    mean_log1m = (_int_log1m(b) - _int_log1m(a)) / w
    mean_log = (_int_log(b) - _int_log(a)) / w
    upper = np.triu(mean_log1m[:, None] + mean_log[None, :], 1)
    K = upper + upper.T
    # 2 * integral over a < s < u < b of log u + log(1 - s)
    self_pairs = 2.0 * (_int_xlog(b) - _int_xlog(a) - a * (_int_log(b) - _int_log(a))
                        + _int_int_log1m(b) - _int_int_log1m(a) - w * _int_log1m(a))
    K[np.diag_indices_from(K)] = self_pairs / w ** 2
    return K


def _psi_of_t(geom, t):
    r2 = np.where(t < 1.0, t / np.where(t < 1.0, 1.0 - t, 1.0), np.inf)
    return geom.psi(np.sqrt(r2).astype(complex))


# ---------------------------------------------------------------------------
# Potentials and energies
# ---------------------------------------------------------------------------

def potential_on(mu, geom, z):
    """
    U^mu_h at an array of points. At a node of a cell measure the value is
    the potential averaged over that node's cell (so U = A mu on the grid);
    atoms of an atomic measure give -inf.
    """
    z = np.asarray(z, dtype=complex).ravel()
    if mu.rotation_invariant:
        t_ring, m_ring, edges = _ring_structure(mu)
        psi_ring = _psi_of_t(geom, t_ring)
        t_z = t_coordinate(z)
        if edges is None:
            K = _ring_kernel(t_z[:, None], t_ring[None, :])
        else:
            K = _ring_kernel_cell(t_z[:, None], edges[None, :-1], edges[None, 1:])
        return K @ m_ring - m_ring @ psi_ring - geom.psi(z) + geom.green_constant

    out = np.empty(z.size)
    for start in range(0, z.size, ROW_BLOCK):
        block = z[start:start + ROW_BLOCK]
        G = green_matrix(geom, block, mu.points)
        if not mu.is_atomic:
            hit = chordal_dist(block[:, None], mu.points[None, :]) == 0.0
            if np.any(hit):
                rows, cols = np.nonzero(hit)
                G[rows, cols] = _self_energy(geom, mu.points[cols], mu.cells[cols], mu.dimension)
        out[start:start + ROW_BLOCK] = G @ mu.weights
    return out


def green_potential(mu, geom, z):
    """U^mu_h(z) = integral of G_h(z, w) d mu(w) at a single point."""
    value = float(potential_on(mu, geom, np.atleast_1d(np.asarray(z, dtype=complex)))[0])
    if value == -np.inf:
        raise DiagonalEvaluationError(f"Green potential evaluated at an atom ({z})")
    return value


def green_energy(mu, geom, mode='full'):
    """
    full:          double integral of G_h against mu x mu
    off_diagonal:  sum over i != j of w_i w_j G_h(zeta_i, zeta_j) for atomic mu
    """
    if mode == 'off_diagonal':
        if not mu.is_atomic:
            raise ValueError("off_diagonal energy is defined for atomic measures only")
        G = green_matrix(geom, mu.points, mu.points)
        np.fill_diagonal(G, 0.0)
        if np.any(np.isneginf(G)):
            raise DiagonalEvaluationError("Coincident atoms in off-diagonal energy")
        return float(mu.weights @ G @ mu.weights)
    if mode != 'full':
        raise ValueError(f"Unknown energy mode {mode!r}")
    if mu.is_atomic:
        raise DiagonalEvaluationError(
            "Full Green energy of an atomic measure diverges; smooth it or use off_diagonal")
    if mu.rotation_invariant:
        t_ring, m_ring, edges = _ring_structure(mu)
        K = _ring_kernel(t_ring[:, None], t_ring[None, :]) if edges is None else _ring_energy_matrix(edges)
        psi_ring = _psi_of_t(geom, t_ring)
        return float(m_ring @ K @ m_ring - 2.0 * m_ring @ psi_ring + geom.green_constant)

    total = 0.0
    for start in range(0, len(mu), ROW_BLOCK):
        stop = min(start + ROW_BLOCK, len(mu))
        G = green_matrix(geom, mu.points[start:stop], mu.points)
        idx = np.arange(stop - start)
        G[idx, start + idx] = _self_energy(geom, mu.points[start:stop], mu.cells[start:stop], mu.dimension)
        total += float(mu.weights[start:stop] @ G @ mu.weights)
    return total


# ---------------------------------------------------------------------------
# Smoothing of atomic measures by chordal caps
# ---------------------------------------------------------------------------

def smoothing_radius(N):
    """Cap radius 2/sqrt(N), the natural spacing scale of N zeros."""
    return 2.0 / math.sqrt(N)


def _cap_potential(tau, a):
    """
    Mean of log d(z, u)^2 over u uniform (for omega_FS) in a cap of mass a
    centered at w, as a function of tau = d(z, w)^2.
    """
    tau = np.asarray(tau, dtype=float)

    def A(t):
        return special.xlogy(t, t) - t

    def B(t):
        return -special.xlogy(1.0 - t, 1.0 - t) - t

    with np.errstate(divide='ignore', invalid='ignore'):
        outside = np.log(tau) + B(a) / a
        ts = np.minimum(tau, a)
        inside = (special.xlogy(ts, ts) + (A(a) - A(ts)) - (B(a) - B(ts))
                  + (a - ts) * np.log1p(-ts) + B(a)) / a
    return np.where(tau >= a, outside, inside)


@lru_cache(maxsize=256)
def _cap_self_energy(a):
    value, _ = integrate.quad(lambda tau: float(_cap_potential(tau, a)), 0.0, a,
                              limit=200, epsabs=1e-12, epsrel=1e-12)
    return value / a


def _smoothed_kernel(geom, P, Q, a):
    tau = chordal_dist(P[:, None], Q[None, :]) ** 2
    return (_cap_potential(tau, a) - geom.psi(P)[:, None] - geom.psi(Q)[None, :]
            + geom.green_constant)


def smoothed_energy(mu, geom, epsilon):
    """Full energy of mu with every atom spread over a chordal cap of radius epsilon."""
    a = min(epsilon ** 2, 1.0)
    total = 0.0
    for start in range(0, len(mu), ROW_BLOCK):
        stop = min(start + ROW_BLOCK, len(mu))
        K = _smoothed_kernel(geom, mu.points[start:stop], mu.points, a)
        idx = np.arange(stop - start)
        K[idx, start + idx] = (_cap_self_energy(a) - 2.0 * geom.psi(mu.points[start:stop])
                               + geom.green_constant)
        total += float(mu.weights[start:stop] @ K @ mu.weights)
    return total


def smoothed_potential_on(mu, geom, z, epsilon):
    a = min(epsilon ** 2, 1.0)
    z = np.asarray(z, dtype=complex).ravel()
    out = np.empty(z.size)
    for start in range(0, z.size, ROW_BLOCK):
        out[start:start + ROW_BLOCK] = _smoothed_kernel(geom, z[start:start + ROW_BLOCK], mu.points, a) @ mu.weights
    return out


# ---------------------------------------------------------------------------
# Wasserstein distance
# ---------------------------------------------------------------------------

def quantize_measure(mu, max_atoms):
    """
    Merge atoms on a (t-quantile, angle) lattice of at most max_atoms cells;
    each cell becomes one atom at its mass-weighted centroid.

    Returns (measure, radius) with radius the largest chordal distance
    from an original atom to its representative.
    """
    if len(mu) <= max_atoms:
        return mu, 0.0
    finite = np.isfinite(mu.points)
    z = mu.points[finite]
    w = mu.weights[finite]
    n_t = max(1, int(math.sqrt(max_atoms / 4.0)))
    n_theta = max(1, (max_atoms - 1) // n_t)
    t = t_coordinate(z)
    edges = np.unique(np.quantile(t, np.linspace(0.0, 1.0, n_t + 1)))
    t_bin = np.clip(np.searchsorted(edges, t, side='right') - 1, 0, max(edges.size - 2, 0))
    theta_bin = np.floor((np.angle(z) + np.pi) / (2 * np.pi) * n_theta).astype(int) % n_theta
    cell = t_bin * n_theta + theta_bin
    keys, inverse = np.unique(cell, return_inverse=True)
    inverse = inverse.ravel()
    mass = np.bincount(inverse, weights=w, minlength=keys.size)
    centroid = (np.bincount(inverse, weights=w * z.real, minlength=keys.size)
                + 1j * np.bincount(inverse, weights=w * z.imag, minlength=keys.size)) / mass
    radius = float(np.max(chordal_dist(z, centroid[inverse]))) if z.size else 0.0
    points, weights = centroid, mass
    if not np.all(finite):
        points = np.append(points, np.inf + 0j)
        weights = np.append(weights, mu.weights[~finite].sum())
    return DiscreteMeasure(points, weights / weights.sum()), radius


def wasserstein(mu, nu):
    """Exact W1 under the chordal metric (network simplex)."""
    M = chordal_dist(mu.points[:, None], nu.points[None, :])
    a = mu.weights / mu.weights.sum()
    b = nu.weights / nu.weights.sum()
    return max(float(ot.emd2(a, b, M, numItermax=EMD_MAX_ITER)), 0.0)


def wasserstein_quantized(mu, nu, max_atoms):
    """
    W1 after quantizing both measures to at most max_atoms atoms.
    Returns (value, radius); the exact distance is within radius of value.
    """
    mu, r_mu = quantize_measure(mu, max_atoms)
    nu, r_nu = quantize_measure(nu, max_atoms)
    radius = r_mu + r_nu
    if radius:
        log(f"[MEASURES] W1 on quantized measures, radius {radius:.3e}")
    return wasserstein(mu, nu), radius


# ---------------------------------------------------------------------------
# Equilibrium measure
# ---------------------------------------------------------------------------

def _support_rule(geom, K, grid_size):
    K = K if K is not None else geom.support_grid
    if grid_size is None or grid_size == K.params.get('n') or grid_size == K.params.get('n_rings'):
        return K
    if K.kind == 'circle':
        return build_quadrature('circle', grid_size, radius=K.params.get('radius', 1.0))
    if K.kind == 'equal_area':
        return build_quadrature('equal_area', grid_size, t_max=K.params.get('t_max', 1.0))
    raise ConfigurationError(f"Cannot resize a {K.kind} support grid")


def _certificate(U, mu):
    support = mu > SUPPORT_FLOOR
    top = U[support].max()
    low = U[support].min()
    off = U[~support].max() - low if np.any(~support) else -np.inf
    return U.max() - low, top - low, off


def _polish(A, mu):
    """Solve the support equations A_SS x = lambda 1, sum x = 1."""
    S = np.flatnonzero(mu > SUPPORT_FLOOR)
    m = S.size
    system = np.zeros((m + 1, m + 1))
    system[:m, :m] = A[np.ix_(S, S)]
    system[:m, m] = -1.0
    system[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    try:
        solution = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        return None
    x = solution[:m]
    if np.any(x < 0):
        return None
    out = np.zeros_like(mu)
    out[S] = x
    return out / out.sum()


def _frank_wolfe(A, mu, U, max_iter, tol):
    """Away-step Frank-Wolfe ascent on mu^T A mu / 2; returns (mu, U, iterations)."""
    diag = np.diag(A)
    for it in range(max_iter):
        support = np.flatnonzero(mu > SUPPORT_FLOOR)
        s = int(np.argmax(U))
        v = support[int(np.argmin(U[support]))]
        muU = float(mu @ U)
        fw_gap = U[s] - muU
        away_gap = muU - U[v]
        if U[s] - U[v] <= tol:
            return mu, U, it
        if fw_gap >= away_gap:
            AD = A[:, s] - U
            slope = fw_gap
            curvature = diag[s] - 2.0 * U[s] + muU
            gamma_max = 1.0
        else:
            AD = U - A[:, v]
            slope = away_gap
            curvature = muU - 2.0 * U[v] + diag[v]
            gamma_max = mu[v] / (1.0 - mu[v]) if mu[v] < 1.0 else 1e12
        gamma = gamma_max if curvature >= 0 else min(gamma_max, -slope / curvature)
        if fw_gap >= away_gap:
            mu = (1.0 - gamma) * mu
            mu[s] += gamma
        else:
            mu = (1.0 + gamma) * mu
            mu[v] -= gamma
            if gamma == gamma_max:
                mu[v] = 0.0
        mu = np.maximum(mu, 0.0)
        U = U + gamma * AD
        if it % 1000 == 999:
            # drift control
            U = A @ mu
    return mu, U, max_iter


def equilibrium_solve(geom, K=None, grid_size=None, solver_cfg=None):
    """
    Maximize the grid energy over probability vectors on K.

    The result is certified when the grid potential is within tol of its
    support minimum everywhere: constant on the support, not larger off it.
    """
    cfg = dict(DEFAULT_SOLVER, **(solver_cfg or {}))
    K = _support_rule(geom, K, grid_size)
    A = kernel_matrix(geom, K)
    n = len(K)
    if cfg['init'] == 'vertex':
        mu = np.zeros(n)
        mu[int(np.argmax(np.diag(A)))] = 1.0
    elif cfg['init'] == 'uniform':
        mu = np.full(n, 1.0 / n)
    else:
        raise ConfigurationError(f"Unknown solver init {cfg['init']!r}")

    tol = float(cfg['tol'])
    U = A @ mu
    inner_tol = max(tol * 1e3, 1e-4)
    iterations = 0
    polished = False
    rounds = 8
    per_round = max(1, cfg['max_iter'] // rounds)
    for _ in range(rounds):
        mu, U, used = _frank_wolfe(A, mu, U, per_round, inner_tol)
        iterations += used
        candidate = _polish(A, mu)
        if candidate is not None:
            U_candidate = A @ candidate
            if _certificate(U_candidate, candidate)[0] <= tol:
                mu, U, polished = candidate, U_candidate, True
                break
        U = A @ mu
        if _certificate(U, mu)[0] <= tol:
            break
        inner_tol = max(inner_tol / 10.0, tol)

    gap, spread, off = _certificate(U, mu)
    report = SolverReport(
        iterations=iterations,
        gap=float(gap),
        support_size=int(np.count_nonzero(mu > SUPPORT_FLOOR)),
        support_spread=float(spread),
        off_support_excess=float(max(off, 0.0)),
        polished=polished,
        certified=bool(gap <= tol),
        history={'grid_points': n, 'init': cfg['init'], 'tol': tol},
    )
    if not report.certified:
        raise SolverError(
            f"Equilibrium not certified after {iterations} iterations: gap {gap:.3e} > tol {tol:.1e}",
            report=report.to_dict())
    log(f"[MEASURES] ✅ Equilibrium on {K.kind}({n}): {iterations} iterations, "
        f"support {report.support_size}, gap {gap:.2e}")
    return DiscreteMeasure.from_reweighted(K, mu), report


@lru_cache(maxsize=16)
def _cached_equilibrium(geom, K, grid_size, tol, max_iter, init):
    return equilibrium_solve(geom, K, grid_size, {'tol': tol, 'max_iter': max_iter, 'init': init})


def _solver_key(solver_cfg):
    cfg = dict(DEFAULT_SOLVER, **(solver_cfg or {}))
    return float(cfg['tol']), int(cfg['max_iter']), cfg['init']


def equilibrium_measure(geom, K=None, grid_size=None, solver_cfg=None):
    """The Green equilibrium measure of K on its grid."""
    measure, _ = _cached_equilibrium(geom, K, grid_size, *_solver_key(solver_cfg))
    return measure


# ---------------------------------------------------------------------------
# Rate functional
# ---------------------------------------------------------------------------

def _grid(geom, K):
    return K if K is not None else geom.support_grid


def _energy_and_sup(mu, geom, K, epsilon=None):
    nodes = _grid(geom, K).nodes
    if mu.is_atomic:
        return (smoothed_energy(mu, geom, epsilon),
                float(np.max(smoothed_potential_on(mu, geom, nodes, epsilon))))
    return green_energy(mu, geom, 'full'), float(np.max(potential_on(mu, geom, nodes)))


def covers_sphere(q):
    """True for two-dimensional rules spread over all of CP^1."""
    return (q.dimension == 2 and q.kind in ('equal_area', 'sphere_grid', 'curvature')
            and q.params.get('t_max', 1.0) >= 1.0)


@lru_cache(maxsize=16)
def _cached_eh(geom, K, tol, max_iter, init):
    if covers_sphere(_grid(geom, K)):
        # nu_eq = omega_h, whose potential is the constant c_h - c_h(calibrated)
        return -0.5 * (geom.green_constant - calibrate_green_constant(geom.weight))
    nu_eq, _ = _cached_equilibrium(geom, K, None, tol, max_iter, init)
    energy, sup = _energy_and_sup(nu_eq, geom, K)
    return 0.5 * energy - sup


def calibrate_Eh(geom, K=None, solver_cfg=None):
    """
    E(h) chosen so that the rate functional vanishes at the equilibrium measure.
    On K = CP^1 the equilibrium measure is omega_h and E(h) is known in closed
    form; on a smaller K it comes from the solved grid equilibrium.
    """
    return _cached_eh(geom, K, *_solver_key(solver_cfg))


def reference_equilibrium(geom, K=None):
    """The equilibrium measure in closed form, or None when K has none."""
    grid = _grid(geom, K)
    if covers_sphere(grid):
        return DiscreteMeasure.from_quadrature(geom.curvature_quadrature)
    if geom.weight_kind == 'flat_disk' and grid.kind == 'circle' and grid.params.get('radius', 1.0) == 1.0:
        return DiscreteMeasure.from_quadrature(grid)
    return None


def rate_functional(mu, geom, K=None, eh=None, solver_cfg=None, epsilon=None):
    """
    I(mu) = -E(mu)/2 + sup_K U^mu + E(h). Atomic measures are smoothed by
    chordal caps of radius epsilon (default 2/sqrt(number of atoms)).
    """
    if eh is None:
        eh = calibrate_Eh(geom, K, solver_cfg)
    if mu.is_atomic and epsilon is None:
        epsilon = smoothing_radius(len(mu))
    energy, sup = _energy_and_sup(mu, geom, K, epsilon)
    return RateValue(
        energy=energy,
        sup_potential=sup,
        eh_constant=float(eh),
        total=-0.5 * energy + sup + float(eh),
        smoothing_radius=epsilon if mu.is_atomic else None,
    )
