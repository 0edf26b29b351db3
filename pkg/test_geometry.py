#!/usr/bin/env python3
"""
Tests for geometry: chordal distance, quadrature rules, weights and the Green's function
"""

import math

import numpy as np

from geometry import (CP1Point, RadialWeight, as_points, build_geometry, build_quadrature,
                      calibrate_green_constant, chordal_dist, fubini_study_geometry, green_function,
                      green_matrix, grid_spacing, kac_hammersley_geometry, t_coordinate)
from pphi_errors import ConfigurationError, DiagonalEvaluationError


def test_chordal_distance_values():
    assert chordal_dist(0, CP1Point.infinity()) == 1.0
    assert abs(chordal_dist(1, -1) - 1.0) < 1e-15
    assert abs(chordal_dist(0, 1) - 1 / math.sqrt(2)) < 1e-15
    assert chordal_dist(CP1Point.infinity(), CP1Point.infinity()) == 0.0
    # symmetric and bounded by 1
    z = np.array([0.3 + 2j, -5.0, 1e6j])
    d = chordal_dist(z[:, None], z[None, :])
    assert np.allclose(d, d.T)
    assert np.all(d <= 1.0)


def test_t_coordinate():
    assert t_coordinate(1.0) == 0.5
    assert t_coordinate(0.0) == 0.0
    assert t_coordinate(np.inf) == 1.0


def test_quadrature_masses():
    assert abs(build_quadrature('circle', 17).total_mass - 1.0) < 1e-14
    assert abs(build_quadrature('sphere_grid', n_theta=5, n_phi=7).total_mass - 1.0) < 1e-14
    assert abs(build_quadrature('equal_area', 12).total_mass - 1.0) < 1e-14
    fs = build_quadrature('curvature', 16, weight=RadialWeight('fubini_study'))
    assert abs(fs.total_mass - 1.0) < 1e-14


def test_circle_rule_monomials_orthonormal():
    q = build_quadrature('circle', 22)
    z = q.nodes
    for i in range(6):
        for j in range(6):
            value = q.integrate(z ** i * np.conj(z) ** j)
            assert abs(value - (1.0 if i == j else 0.0)) < 1e-13


def test_unknown_quadrature_rejected():
    try:
        build_quadrature('hexagonal', 4)
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass


def test_grid_spacing_circle():
    q = build_quadrature('circle', 64)
    assert abs(grid_spacing(q) - math.sin(math.pi / 64)) < 1e-12


def test_green_constants():
    assert calibrate_green_constant(RadialWeight('fubini_study')) == 1.0
    assert calibrate_green_constant(RadialWeight('flat_disk')) == 0.0


def test_flat_disk_weight():
    w = RadialWeight('flat_disk')
    assert w.phi(0.5) == 0.0
    assert abs(w.phi(2.0) - math.log(4.0)) < 1e-15
    assert w.connection(0.5) == 0.0
    assert abs(w.connection(2.0) - 0.5) < 1e-15


def test_radial_mass_profile_total():
    w = RadialWeight('radial', (0.3, -0.1))
    assert abs(float(w.mass_profile(1.0)) - 1.0) < 1e-15
    assert float(w.mass_profile(0.0)) == 0.0


def test_green_function_symmetric_and_diagonal():
    geom = fubini_study_geometry(grid_size=6)
    a, b = 0.2 + 0.7j, -1.5
    assert abs(green_function(geom, a, b) - green_function(geom, b, a)) < 1e-14
    # G_FS(1, -1) = 2 log(chordal) + c_h = 0 + 1
    assert abs(green_function(geom, 1.0, -1.0) - 1.0) < 1e-14
    try:
        green_function(geom, a, a)
        assert False, "expected DiagonalEvaluationError"
    except DiagonalEvaluationError:
        pass
    G = green_matrix(geom, np.array([a, b]), np.array([a]))
    assert np.isneginf(G[0, 0])


def test_green_function_scalar_inputs():
    geom = fubini_study_geometry(grid_size=6)
    value = green_function(geom, 0.0, 1.0)
    assert isinstance(value, float)
    assert abs(value - (math.log(0.5) + 1.0)) < 1e-14
    far = CP1Point.infinity()
    assert abs(green_function(geom, 0.5j, far) - green_function(geom, far, 0.5j)) < 1e-14
    try:
        green_function(geom, 2.0 + 0j, 2.0)
        assert False, "expected DiagonalEvaluationError"
    except DiagonalEvaluationError:
        pass


def test_chordal_triangle_inequality():
    rng = np.random.default_rng(3)
    z = np.concatenate([rng.standard_normal(40) + 1j * rng.standard_normal(40),
                        10.0 ** rng.uniform(-4, 4, 20) * np.exp(2j * np.pi * rng.random(20))])
    points = np.concatenate([z, as_points([CP1Point.infinity()])])
    d = chordal_dist(points[:, None], points[None, :])
    # d[i, k] <= d[i, j] + d[j, k] for every triple
    assert np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :] + 1e-14)


def test_fubini_study_green_is_rotation_invariant():
    geom = fubini_study_geometry(grid_size=6)
    rng = np.random.default_rng(8)
    for _ in range(20):
        z, w = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        u = np.exp(2j * np.pi * rng.random())
        assert abs(green_function(geom, u * z, u * w) - green_function(geom, z, w)) < 1e-12


def test_kac_hammersley_geometry():
    geom = kac_hammersley_geometry(n=16, grid_size=32)
    assert geom.name == 'kac_hammersley'
    assert geom.green_constant == 0.0
    assert len(geom.support_grid) == 32
    # refined so that degree-10 integrands are exact
    assert len(geom.nu_rule(10)) >= 22
    assert geom.nu_rule(3) is geom.nu


def test_build_geometry_rejects_unknown_nu():
    try:
        build_geometry({'weight': 'fubini_study', 'nu': {'lattice': 3}})
        assert False, "expected ConfigurationError"
    except ConfigurationError:
        pass


if __name__ == '__main__':
    print("=" * 80)
    print("GEOMETRY TESTS")
    print("=" * 80)
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            fn()
            print(f"✅ {name}")
    print("=" * 80)
