#!/usr/bin/env python3
"""
Tests for measures: energies, potentials, W1 and the equilibrium / rate functional
"""

import numpy as np

from geometry import build_quadrature, fubini_study_geometry, grid_spacing, kac_hammersley_geometry
from measures import (calibrate_Eh, equilibrium_measure, equilibrium_solve, green_energy, green_potential,
                      potential_on, quantize_measure, rate_functional, reference_equilibrium, smoothing_radius,
                      wasserstein, wasserstein_quantized)
from pphi_errors import DiagonalEvaluationError
from zeros import DiscreteMeasure


FS = fubini_study_geometry(grid_size=8)
KH = kac_hammersley_geometry(n=64, grid_size=32)
FS_FINE = fubini_study_geometry()


def _atoms(points, weights=None):
    points = np.asarray(points, dtype=complex)
    if weights is None:
        weights = np.full(points.size, 1.0 / points.size)
    return DiscreteMeasure(points, np.asarray(weights, dtype=float))


def test_wasserstein_between_antipodes():
    assert abs(wasserstein(_atoms([0.0]), _atoms([np.inf])) - 1.0) < 1e-12
    mu = _atoms([0.0, 1.0, 2j])
    assert wasserstein(mu, mu) < 1e-12


def test_wasserstein_quantized_small_measures_are_exact():
    mu = _atoms([0.0, 1.0])
    nu = _atoms([1j, -1.0])
    value, radius = wasserstein_quantized(mu, nu, max_atoms=100)
    assert radius == 0.0
    assert abs(value - wasserstein(mu, nu)) < 1e-15


def test_quantize_measure_keeps_mass():
    rng = np.random.default_rng(3)
    points = rng.standard_normal(400) + 1j * rng.standard_normal(400)
    mu = _atoms(np.append(points, np.inf))
    q, radius = quantize_measure(mu, 40)
    assert len(q) <= 41
    assert abs(q.weights.sum() - 1.0) < 1e-12
    assert 0.0 < radius <= 1.0
    # the atom at infinity keeps its mass
    assert abs(q.weights[np.isinf(q.points)].sum() - 1.0 / 401) < 1e-15


def test_off_diagonal_energy_of_two_atoms():
    mu = _atoms([1.0, -1.0])
    assert abs(green_energy(mu, FS, mode='off_diagonal') - 0.5) < 1e-14
    try:
        green_energy(mu, FS)
        assert False, "expected DiagonalEvaluationError"
    except DiagonalEvaluationError:
        pass


def test_potential_of_point_mass():
    delta = _atoms([1.0])
    assert abs(green_potential(delta, FS, -1.0) - 1.0) < 1e-14
    try:
        green_potential(delta, FS, 1.0)
        assert False, "expected DiagonalEvaluationError"
    except DiagonalEvaluationError:
        pass
    assert np.isneginf(potential_on(delta, FS, np.array([1.0]))[0])


def test_curvature_measure_has_vanishing_fs_potential():
    omega = DiscreteMeasure.from_quadrature(FS.curvature_quadrature)
    values = potential_on(omega, FS, np.array([0.0, 0.3 + 0.4j, 5.0, np.inf]))
    assert np.all(np.abs(values) < 1e-6)
    assert abs(green_energy(omega, FS)) < 1e-6
    assert calibrate_Eh(FS) == 0.0
    assert abs(rate_functional(omega, FS).total) < 1e-9


def test_fs_potential_vanishes_at_every_curvature_size():
    for n in (4, 9, 16):
        omega = DiscreteMeasure.from_quadrature(build_quadrature('curvature', n, weight=FS.weight))
        assert np.all(np.abs(potential_on(omega, FS, FS.support_grid.nodes)) < 1e-9)
        assert abs(green_energy(omega, FS)) < 1e-9


def test_kac_hammersley_equilibrium_is_uniform():
    nu_eq, report = equilibrium_solve(KH, solver_cfg={'init': 'uniform'})
    assert report.certified
    assert len(nu_eq) == 32
    assert np.allclose(nu_eq.weights, 1.0 / 32, atol=1e-10)
    assert np.allclose(np.abs(nu_eq.points), 1.0)


def test_fubini_study_equilibrium_certified():
    nu_eq, report = equilibrium_solve(FS)
    assert report.certified
    assert report.gap <= 1e-7
    U = potential_on(nu_eq, FS, FS.support_grid.nodes)
    support = nu_eq.weights > 1e-14
    assert U.max() - U[support].min() <= 1e-6
    assert abs(nu_eq.weights.sum() - 1.0) < 1e-12


def test_fubini_study_equilibrium_is_near_omega():
    nu_eq, _ = equilibrium_solve(FS)
    omega = DiscreteMeasure.from_quadrature(FS.support_grid)
    assert wasserstein(nu_eq, omega) <= 2.0 * grid_spacing(FS.support_grid)


def test_equilibrium_independent_of_start():
    uniform, _ = equilibrium_solve(FS, solver_cfg={'init': 'uniform'})
    vertex, _ = equilibrium_solve(FS, solver_cfg={'init': 'vertex'})
    assert abs(green_energy(uniform, FS) - green_energy(vertex, FS)) < 1e-6
    assert wasserstein(uniform, vertex) < 1e-3


def test_rate_vanishes_at_equilibrium():
    nu_eq = equilibrium_measure(KH)
    assert abs(rate_functional(nu_eq, KH).total) < 1e-12
    assert abs(rate_functional(reference_equilibrium(FS_FINE), FS_FINE).total) < 1e-9
    # the grid maximizer sits half its grid energy above zero
    grid_rate = rate_functional(equilibrium_measure(FS_FINE), FS_FINE).total
    assert 0.0 <= grid_rate < 1e-2


def test_rate_nonnegative_on_grid_measures():
    rng = np.random.default_rng(29)
    grid = FS_FINE.support_grid
    for _ in range(10):
        mu = DiscreteMeasure.from_reweighted(grid, rng.dirichlet(np.full(len(grid), 0.5)))
        assert rate_functional(mu, FS_FINE).total >= -1e-6
    corner = np.zeros(len(grid))
    corner[:5] = 1.0
    assert rate_functional(DiscreteMeasure.from_reweighted(grid, corner), FS_FINE).total > 0.1


def test_rate_positive_off_equilibrium():
    ring = DiscreteMeasure.from_quadrature(build_quadrature('circle', 64, radius=2.0))
    assert rate_functional(ring, FS).total > 0.1


def test_rate_invariant_under_green_constant_shift():
    shifted = FS.with_green_constant(FS.green_constant + 2.5)
    ring = DiscreteMeasure.from_quadrature(build_quadrature('circle', 64, radius=2.0))
    assert abs(rate_functional(ring, FS).total - rate_functional(ring, shifted).total) < 1e-6
    assert abs(calibrate_Eh(shifted) - calibrate_Eh(FS) + 1.25) < 1e-6


def test_atomic_measures_are_smoothed():
    mu = _atoms(np.exp(2j * np.pi * np.arange(16) / 16))
    value = rate_functional(mu, KH)
    assert value.smoothing_radius == smoothing_radius(16) == 0.5
    assert np.isfinite(value.total)


if __name__ == '__main__':
    print("=" * 80)
    print("MEASURES TESTS")
    print("=" * 80)
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            fn()
            print(f"✅ {name}")
    print("=" * 80)
