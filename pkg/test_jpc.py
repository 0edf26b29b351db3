#!/usr/bin/env python3
"""
Tests for jpc: alpha/beta, the Gamma integrals and their bounds, the density of zeros
"""

import math

import numpy as np
from scipy import integrate, special

from ensemble import PolySection, PotentialSpec
from geometry import fubini_study_geometry, green_matrix, kac_hammersley_geometry
from jpc import (GammaInput, alpha, approx_rate, beta, eta_term, gamma_sandwich, jpc_log_density,
                 kinetic_lower_log_gamma, log_gamma_N, log_vandermonde_sq, lp_potential_norm, main1_residual,
                 saddle_log_gamma, steepest_descent_log_gamma, total_variation, zero_density_on_bins,
                 zero_histogram)
from pphi_errors import DegenerateSectionError, DiagonalEvaluationError, UnrepresentablePolynomialError
from zeros import ZeroConfig


KH = kac_hammersley_geometry()
FS = fubini_study_geometry(grid_size=6)
QUARTIC = PotentialSpec((0.5, 1.0))


def _random_config(rng, N):
    return ZeroConfig(rng.standard_normal(N) + 1j * rng.standard_normal(N))


def test_alpha_on_the_circle():
    assert abs(alpha(1, ZeroConfig(np.zeros(3)), KH)) < 1e-12
    assert abs(alpha(2, ZeroConfig(np.zeros(3)), KH)) < 1e-12
    # mean of |e^{i theta} - 2|^2 over the circle
    assert abs(alpha(1, ZeroConfig(np.array([2.0])), KH) - math.log(5.0)) < 1e-12


def test_beta_bounded_by_one():
    rng = np.random.default_rng(1)
    zc = _random_config(rng, 6)
    assert abs(beta(2, zc, FS, 2) - 1.0) < 1e-12
    assert 0.0 < beta(1, zc, FS, 2) <= 1.0 + 1e-10
    assert 0.0 < beta(1, zc, KH, 3) <= 1.0 + 1e-10


def test_alpha_needs_finite_zeros():
    try:
        alpha(1, ZeroConfig(np.array([1.0]), 1), KH)
        assert False, "expected UnrepresentablePolynomialError"
    except UnrepresentablePolynomialError:
        pass


def test_eta_of_monomial():
    N = 6
    s = PolySection(np.eye(N + 1)[0])
    assert abs(eta_term(s, KH) - N ** 2) < 1e-9
    try:
        eta_term(PolySection([0.0, 1.0, 1.0]), KH)
        assert False, "expected DegenerateSectionError"
    except DegenerateSectionError:
        pass


def test_log_vandermonde():
    assert abs(log_vandermonde_sq(ZeroConfig(np.array([0.0, 1.0, 2.0]))) - math.log(4.0)) < 1e-14
    assert log_vandermonde_sq(ZeroConfig(np.array([3.0]))) == 0.0
    try:
        log_vandermonde_sq(ZeroConfig(np.array([1.0, 1.0])))
        assert False, "expected DiagonalEvaluationError"
    except DiagonalEvaluationError:
        pass


def test_gamma_input_validation():
    try:
        GammaInput(k=2)
        assert False, "expected ValueError"
    except ValueError:
        pass
    inp = GammaInput(k=3, c=(-2.0, 0.5), N=4)
    assert inp.betas == (1.0, 1.0)
    assert inp.C == 2.0


def test_log_gamma_closed_forms():
    for N in (0, 1, 10, 200):
        assert abs(log_gamma_N(GammaInput(k=1, N=N)) - special.gammaln(N + 1)) < 1e-10 * max(1.0, N)
        expected = special.gammaln((N + 1) / 2) - math.log(2.0)
        assert abs(log_gamma_N(GammaInput(k=2, c=(0.0,), N=N)) - expected) < 1e-10 * max(1.0, N)


def test_log_gamma_against_trapezoid():
    rho = np.linspace(0.0, 12.0, 200001)
    values = rho ** 10 * np.exp(-rho ** 2 - 0.5 * rho)
    oracle = math.log(integrate.trapezoid(values, rho))
    assert abs(log_gamma_N(GammaInput(k=2, c=(0.5,), N=10)) - oracle) < 1e-8


def test_sandwich_holds_for_all_betas():
    for N in (5, 50, 400):
        for b in (0.0, 0.3, 1.0):
            inp = GammaInput(k=2, c=(0.5,), betas=(b,), N=N)
            lower, upper = gamma_sandwich(inp)
            value = log_gamma_N(inp)
            assert lower <= value <= upper
    inp = GammaInput(k=4, c=(-1.5, 0.2, 2.0), betas=(0.5, 1.0, 0.1), N=30)
    lower, upper = gamma_sandwich(inp)
    assert lower <= log_gamma_N(inp) <= upper


def test_sandwich_rejects_kinetic_input():
    try:
        gamma_sandwich(GammaInput(k=2, c=(0.5,), N=5, eta_over_alpha=1.0))
        assert False, "expected ValueError"
    except ValueError:
        pass


def test_steepest_descent_matches_stirling():
    N = 50
    laplace = steepest_descent_log_gamma(GammaInput(k=1, N=N))
    assert abs(laplace - special.gammaln(N + 1)) < 0.005
    assert abs(saddle_log_gamma(0.0, N, 1) + 0.5 * math.log(2 * math.pi * N) - laplace) < 1e-8


def test_kinetic_lower_bound():
    inp = GammaInput(k=2, c=(-0.5,), betas=(0.4,), N=10, eta_over_alpha=0.3)
    assert kinetic_lower_log_gamma(inp, C=1.0, n=1) <= log_gamma_N(inp)


def test_density_is_exchangeable_and_rotation_invariant():
    rng = np.random.default_rng(2)
    zc = _random_config(rng, 5)
    base = jpc_log_density(zc, QUARTIC, KH)
    permuted = ZeroConfig(zc.finite_zeros[::-1])
    assert abs(jpc_log_density(permuted, QUARTIC, KH) - base) < 1e-9
    assert abs(jpc_log_density(zc.rotated(0.7), QUARTIC, KH) - base) < 1e-9 * max(1.0, abs(base))


def test_main1_expression_is_constant():
    rng = np.random.default_rng(3)
    for geom, spec in ((FS, QUARTIC), (KH, PotentialSpec((0.5, 1.0), include_kinetic=True))):
        zc1, zc2 = _random_config(rng, 5), _random_config(rng, 5)
        assert abs(main1_residual(zc1, zc2, spec, geom)) < 1e-8
    try:
        main1_residual(_random_config(rng, 3), _random_config(rng, 4), QUARTIC, FS)
        assert False, "expected ValueError"
    except ValueError:
        pass


def test_approx_rate_of_antipodal_pair():
    rate = approx_rate(ZeroConfig(np.array([1.0, -1.0])), FS, 2)
    assert abs(rate.E_N - 0.5) < 1e-14
    assert abs(rate.I_N - (-0.25 + 1.5 * rate.J_N)) < 1e-14


def test_j_matches_naive_sum_at_small_degree():
    rng = np.random.default_rng(21)
    for N in (1, 3, 5):
        zc = _random_config(rng, N)
        k = 2
        q = FS.nu_rule(k * N)
        U = green_matrix(FS, q.nodes, zc.finite_zeros).sum(axis=1) / N
        naive = math.log(float(np.sum(q.weights * np.exp(k * N * U)))) / (k * N)
        assert abs(approx_rate(zc, FS, k).J_N - naive) < 1e-10


def test_lp_norm_rises_toward_the_sup():
    rng = np.random.default_rng(4)
    zc = _random_config(rng, 6)
    q = FS.curvature_quadrature
    U = green_matrix(FS, q.nodes, zc.finite_zeros).sum(axis=1) / zc.N
    values = [lp_potential_norm(U, q.weights, 2 * N) for N in (10, 20, 50, 100, 200, 400)]
    assert np.all(np.diff(values) >= -1e-12)
    assert values[-1] <= U.max() + 1e-12
    assert values[-1] > values[0]


def test_single_zero_density_is_uniform_in_t():
    t_edges = np.linspace(0.0, 1.0, 5)
    theta_edges = np.linspace(-np.pi, np.pi, 5)
    masses = zero_density_on_bins(PotentialSpec((1.0,)), KH, t_edges, theta_edges)
    assert masses.shape == (4, 4)
    assert np.allclose(masses, 1.0 / 16, atol=1e-6)


def test_histogram_and_total_variation():
    configs = [ZeroConfig(np.array([0.5, -0.5j])), ZeroConfig(np.array([2.0]))]
    hist = zero_histogram(configs, np.linspace(0.0, 1.0, 3), np.linspace(-np.pi, np.pi, 3))
    assert abs(hist.sum() - 1.0) < 1e-15
    assert abs(hist[0].sum() - 2.0 / 3) < 1e-15
    assert total_variation([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert total_variation(hist, hist) == 0.0


if __name__ == '__main__':
    print("=" * 80)
    print("JPC TESTS")
    print("=" * 80)
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            fn()
            print(f"✅ {name}")
    print("=" * 80)
