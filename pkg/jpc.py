#!/usr/bin/env python3
"""
JOINT PROBABILITY CURRENT OF ZEROS
alpha_i, beta_i, the Gamma integrals, eta, the log-density of zeros and the
approximate rate functional, with the bound and identity checks built on them
"""

import math
from dataclasses import dataclass, asdict
from typing import Tuple

import numpy as np
from scipy import integrate, optimize, special

from ensemble import kinetic_energy
from geometry import green_matrix, t_coordinate
from pphi_errors import DegenerateSectionError, DiagonalEvaluationError, UnrepresentablePolynomialError
from run_audit import log
from zeros import ZeroConfig, reconstruct


# The integrand is cut where it falls this far (in log) below its peak
LOG_WINDOW = 60.0
SCAN_POINTS = 4001
BIN_NODES = 6


@dataclass(frozen=True)
class GammaInput:
    """Parameters of Gamma_N: exponent rho^k + sum beta_j c_j rho^j + (eta/alpha_k^{1/k}) rho."""

    k: int
    c: Tuple[float, ...] = ()
    betas: Tuple[float, ...] = ()
    N: int = 0
    eta_over_alpha: float = 0.0

    def __post_init__(self):
        c = tuple(float(v) for v in self.c)
        betas = tuple(float(b) for b in self.betas) if self.betas else (1.0,) * len(c)
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if len(c) != self.k - 1 or len(betas) != self.k - 1:
            raise ValueError(f"k={self.k} needs {self.k - 1} coefficients c_1..c_(k-1) and betas, "
                             f"got {len(c)} and {len(betas)}")
        if self.N < 0:
            raise ValueError(f"N must be >= 0, got {self.N}")
        if self.eta_over_alpha < 0:
            raise ValueError(f"eta_over_alpha must be >= 0, got {self.eta_over_alpha}")
        object.__setattr__(self, 'c', c)
        object.__setattr__(self, 'betas', betas)

    def V(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = rho ** self.k + self.eta_over_alpha * rho
        for j, (b, cj) in enumerate(zip(self.betas, self.c), start=1):
            out = out + b * cj * rho ** j
        return out

    def rho_dV(self, rho):
        """rho * V'(rho)."""
        rho = np.asarray(rho, dtype=float)
        out = self.k * rho ** self.k + self.eta_over_alpha * rho
        for j, (b, cj) in enumerate(zip(self.betas, self.c), start=1):
            out = out + j * b * cj * rho ** j
        return out

    def rho2_d2V(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = self.k * (self.k - 1) * rho ** self.k
        for j, (b, cj) in enumerate(zip(self.betas, self.c), start=1):
            out = out + j * (j - 1) * b * cj * rho ** j
        return out

    @property
    def C(self):
        """max(1, |c_j|), the constant of the comparison bounds."""
        return max([1.0] + [abs(v) for v in self.c])


# ---------------------------------------------------------------------------
# alpha, beta, eta
# ---------------------------------------------------------------------------

def _monic_log_modulus_sq(zc, z):
    """sum_j log |z - zeta_j|^2 at the points z."""
    with np.errstate(divide='ignore'):
        return np.sum(np.log(np.abs(z[:, None] - zc.finite_zeros[None, :]) ** 2), axis=1)


def _require_finite(zc, what):
    if zc.zeros_at_infinity:
        raise UnrepresentablePolynomialError(
            f"{what} needs the monic form; this configuration has {zc.zeros_at_infinity} zeros at infinity")


def alpha(i, zc, geom):
    """log alpha_i = log of the integral of |prod (z - zeta_j)|^{2i} e^{-i N phi} d nu."""
    _require_finite(zc, "alpha")
    if i < 1:
        raise ValueError(f"alpha index must be >= 1, got {i}")
    N = zc.N
    q = geom.nu_rule(i * N)
    log_integrand = i * (_monic_log_modulus_sq(zc, q.nodes) - N * geom.phi(q.nodes))
    return float(special.logsumexp(log_integrand, b=q.weights))


def beta(i, zc, geom, k):
    """alpha_i / alpha_k^{i/k}, at most 1 for probability nu (Hoelder)."""
    return math.exp(alpha(i, zc, geom) - (i / k) * alpha(k, zc, geom))


def eta_term(s, geom):
    """|a_0|^{-2} ||nabla s||^2, the kinetic energy of the monic polynomial."""
    a0 = s.leading
    if a0 == 0:
        raise DegenerateSectionError("eta is undefined when the leading coefficient vanishes")
    return kinetic_energy(s, geom) / abs(a0) ** 2


def log_vandermonde_sq(zc):
    """log |Delta(zeta)|^2 = sum over i < j of log |zeta_i - zeta_j|^2."""
    z = zc.finite_zeros
    if z.size < 2:
        return 0.0
    i, j = np.triu_indices(z.size, 1)
    d = np.abs(z[i] - z[j])
    if np.any(d == 0):
        raise DiagonalEvaluationError("Coincident zeros: log |Delta|^2 is -inf")
    return float(np.sum(2.0 * np.log(d)))


# ---------------------------------------------------------------------------
# Gamma integrals
# ---------------------------------------------------------------------------

def _log_integrand(inp, log_rho_star):
    # integrand in x = log(rho / rho_star), Jacobian rho included
    def g(x):
        log_rho = log_rho_star + x
        return (inp.N + 1) * log_rho - inp.V(np.exp(log_rho))
    return g


def _mode(inp):
    """log rho at the peak of rho^{N+1} e^{-V(rho)}, the root of rho V'(rho) = N + 1."""
    target = inp.N + 1
    hi = 2.0 * (target / inp.k + sum(abs(v) for v in inp.c) + inp.eta_over_alpha + 1.0)
    grid = np.linspace(-30.0, math.log(hi), SCAN_POINTS)
    values = target * grid - inp.V(np.exp(grid))
    best = int(np.argmax(values))
    lo_idx, hi_idx = max(best - 1, 0), min(best + 1, grid.size - 1)

    def stationarity(x):
        return float(inp.rho_dV(math.exp(x))) - target

    a, b = grid[lo_idx], grid[hi_idx]
    if stationarity(a) < 0 < stationarity(b):
        return optimize.brentq(stationarity, a, b, xtol=1e-14, rtol=1e-15), grid, values
    return grid[best], grid, values


def log_gamma_N(inp):
    """
    log of the integral over rho > 0 of e^{-V(rho)} rho^N, by adaptive
    quadrature in x = log(rho / rho*) on a window around the mode.
    """
    x_star, grid, values = _mode(inp)
    g = _log_integrand(inp, x_star)
    g0 = float(g(0.0))

    inside = grid[values >= values.max() - LOG_WINDOW] - x_star
    lo = min(-1.0, float(inside.min()) - 1.0)
    hi = max(1.0, float(inside.max()) + 1.0)
    while g(lo) > g0 - LOG_WINDOW:
        lo *= 2.0
    while g(hi) > g0 - LOG_WINDOW:
        hi *= 2.0

    value, _ = integrate.quad(lambda x: math.exp(float(g(x)) - g0), lo, hi, points=[0.0],
                              limit=500, epsabs=0.0, epsrel=1e-13)
    return g0 + math.log(value)


def _threshold_rho(inp):
    """Smallest rho_k with sum |c_j| / rho^{k-j} <= 1/2 for all rho >= rho_k."""
    if not any(inp.c):
        return 0.0

    def excess(rho):
        return sum(abs(cj) / rho ** (inp.k - j) for j, cj in enumerate(inp.c, start=1)) - 0.5

    hi = 1.0
    while excess(hi) > 0:
        hi *= 2.0
    lo = hi / 2.0
    while excess(lo) <= 0:
        lo /= 2.0
    return optimize.brentq(excess, lo, hi, xtol=1e-15)


def _log_Ck(inp, rho_k):
    if rho_k == 0.0:
        return -np.inf

    def integrand(rho):
        return math.exp(-(rho ** inp.k - sum(abs(cj) * rho ** j for j, cj in enumerate(inp.c, start=1))))

    value, _ = integrate.quad(integrand, 0.0, rho_k, epsabs=0.0, epsrel=1e-12, limit=200)
    return math.log(value)


def gamma_sandwich(inp):
    """
    (lower, upper) in log scale with lower <= log Gamma_N <= upper for all
    betas in [0, 1]. C = max(1, |c_j|):

    lower = e^{-Ck}/(N+1) + (Ck)^{-(N+1)/k} Gamma((N+1)/k, Ck) / k
    upper = rho_k^N C_k + 2^{(N+1)/k} Gamma((N+1)/k) / k
    """
    if inp.eta_over_alpha:
        raise ValueError("The sandwich bounds hold for the potential-only case (eta = 0)")
    k, N = inp.k, inp.N
    s = (N + 1) / k
    Ck = inp.C * k
    tail = (-s * math.log(Ck) + math.log(special.gammaincc(s, Ck)) + special.gammaln(s) - math.log(k))
    lower = float(np.logaddexp(-Ck - math.log(N + 1), tail))

    rho_k = _threshold_rho(inp)
    with np.errstate(divide='ignore'):
        head = N * math.log(rho_k) + _log_Ck(inp, rho_k) if rho_k > 0 else -np.inf
    upper = float(np.logaddexp(head, s * math.log(2.0) + special.gammaln(s) - math.log(k)))
    return lower, upper


def stated_lower_bound(inp):
    """The lower bound in its printed form, (Ck)^{-(N+1)/k} + e^{-Ck}/(N+1)."""
    Ck = inp.C * inp.k
    return float(np.logaddexp(-(inp.N + 1) / inp.k * math.log(Ck), -Ck - math.log(inp.N + 1)))


def stated_upper_bound(inp):
    """The upper bound in its printed form, rho_k^N C_k + N^{(N+1)/k} e^{N(log(1/k) - 1)/k} / sqrt(N)."""
    k, N = inp.k, max(inp.N, 1)
    rho_k = _threshold_rho(inp)
    head = N * math.log(rho_k) + _log_Ck(inp, rho_k) if rho_k > 0 else -np.inf
    tail = (N + 1) / k * math.log(N) + N * (math.log(1.0 / k) - 1.0) / k - 0.5 * math.log(N)
    return float(np.logaddexp(head, tail))


def saddle_log_gamma(log_alpha_k, N, k):
    """-inf over rho of (alpha_k rho^k - N log rho), without the half-order term."""
    return -(N / k) * log_alpha_k + (N / k) * (math.log(N / k) - 1.0)


def steepest_descent_log_gamma(inp):
    """Laplace approximation of log Gamma_N at the mode of rho^N e^{-V}."""
    N = inp.N
    if N < 1:
        raise ValueError("steepest descent needs N >= 1")

    def stationarity(x):
        return float(inp.rho_dV(math.exp(x))) - N

    hi = math.log(2.0 * (N / inp.k + sum(abs(v) for v in inp.c) + inp.eta_over_alpha + 1.0))
    grid = np.linspace(-30.0, hi, SCAN_POINTS)
    best = int(np.argmax(N * grid - inp.V(np.exp(grid))))
    a, b = grid[max(best - 1, 0)], grid[min(best + 1, grid.size - 1)]
    x = optimize.brentq(stationarity, a, b, xtol=1e-14) if stationarity(a) < 0 < stationarity(b) else grid[best]
    rho = math.exp(x)
    h = N * x - float(inp.V(rho))
    curvature = (N + float(inp.rho2_d2V(rho))) / rho ** 2
    return h + 0.5 * math.log(2.0 * math.pi / curvature)


def kinetic_lower_log_gamma(inp, C, n):
    """log Gamma with |c_j| and eta/alpha^{1/k} replaced by C N^n: a lower bound for tilde Gamma_N."""
    bound = GammaInput(k=inp.k, c=tuple(abs(v) for v in inp.c), betas=(1.0,) * len(inp.c),
                       N=inp.N, eta_over_alpha=C * inp.N ** n)
    return log_gamma_N(bound)


# ---------------------------------------------------------------------------
# Density of zeros
# ---------------------------------------------------------------------------

def jpc_components(zc, spec, geom):
    """Every piece of the joint probability current at one configuration."""
    _require_finite(zc, "jpc")
    k, N = spec.k, zc.N
    log_alphas = [alpha(i, zc, geom) for i in range(1, k + 1)]
    log_alpha_k = log_alphas[-1]
    betas = [math.exp(log_alphas[i - 1] - (i / k) * log_alpha_k) for i in range(1, k)]

    eta_over_alpha = 0.0
    if spec.include_kinetic:
        eta = eta_term(reconstruct(zc, 1.0), geom)
        eta_over_alpha = eta * math.exp(-log_alpha_k / k)

    inp = GammaInput(k=k, c=spec.c[:-1], betas=tuple(betas), N=N, eta_over_alpha=eta_over_alpha)
    log_gamma = log_gamma_N(inp)
    log_delta = log_vandermonde_sq(zc)
    return {
        'N': N,
        'k': k,
        'log_alpha': log_alphas,
        'betas': betas,
        'eta_over_alpha': eta_over_alpha,
        'log_gamma': log_gamma,
        'log_vandermonde_sq': log_delta,
        'log_density': log_gamma + log_delta - (N + 1) / k * log_alpha_k,
    }


def jpc_log_density(zc, spec, geom):
    """log Gamma_N + log |Delta|^2 - ((N+1)/k) log alpha_k, up to -log Z_N(h)."""
    return jpc_components(zc, spec, geom)['log_density']


def lp_potential_norm(U, weights, p):
    """(1/p) log of the integral of e^{pU}, stabilized by log-sum-exp."""
    return float(special.logsumexp(p * np.asarray(U), b=weights)) / p


@dataclass
class ApproxRate:
    E_N: float
    J_N: float
    I_N: float

    def to_dict(self):
        return asdict(self)


def approx_rate(zc, geom, k):
    """
    E_N = (1/N^2) sum over i != j of G_h(zeta_i, zeta_j)
    J_N = (1/kN) log of the integral of e^{kN U} d nu, U the potential of the zeros
    I_N = -E_N/2 + ((N+1)/N) J_N
    """
    _require_finite(zc, "approx_rate")
    z = zc.finite_zeros
    N = zc.N
    G = green_matrix(geom, z, z)
    np.fill_diagonal(G, 0.0)
    if np.any(np.isneginf(G)):
        raise DiagonalEvaluationError("Coincident zeros in the approximate rate")
    E_N = float(G.sum()) / N ** 2

    q = geom.nu_rule(k * N)
    U = green_matrix(geom, q.nodes, z).sum(axis=1) / N
    J_N = lp_potential_norm(U, q.weights, k * N)
    return ApproxRate(E_N=E_N, J_N=J_N, I_N=-0.5 * E_N + (N + 1) / N * J_N)


def _main1_expression(zc, spec, geom):
    parts = jpc_components(zc, spec, geom)
    rate = approx_rate(zc, geom, spec.k)
    phi_sum = float(np.sum(geom.phi(zc.finite_zeros)))
    return parts['log_density'] - parts['log_gamma'] + zc.N ** 2 * rate.I_N + 2.0 * phi_sum


def main1_residual(zc1, zc2, spec, geom):
    """
    Difference between two configurations of
    log K - log Gamma + N^2 I_N + 2 sum phi(zeta_j), which is constant in the zeros.
    """
    if zc1.N != zc2.N:
        raise ValueError(f"Configurations have different degrees ({zc1.N} vs {zc2.N})")
    return _main1_expression(zc1, spec, geom) - _main1_expression(zc2, spec, geom)


# ---------------------------------------------------------------------------
# Histogram oracle for N = 1
# ---------------------------------------------------------------------------

def zero_density_on_bins(spec, geom, t_edges, theta_edges):
    """
    Probability of each (t, theta) bin for the single zero of a degree-1
    section, from exp(jpc_log_density) normalized over the sphere.
    """
    x, w = np.polynomial.legendre.leggauss(BIN_NODES)
    t_edges = np.asarray(t_edges, dtype=float)
    theta_edges = np.asarray(theta_edges, dtype=float)
    masses = np.zeros((t_edges.size - 1, theta_edges.size - 1))
    for a in range(t_edges.size - 1):
        t_lo, t_hi = t_edges[a], t_edges[a + 1]
        t = t_lo + 0.5 * (x + 1.0) * (t_hi - t_lo)
        wt = 0.5 * w * (t_hi - t_lo)
        for b in range(theta_edges.size - 1):
            th_lo, th_hi = theta_edges[b], theta_edges[b + 1]
            theta = th_lo + 0.5 * (x + 1.0) * (th_hi - th_lo)
            wth = 0.5 * w * (th_hi - th_lo)
            total = 0.0
            for ti, wti in zip(t, wt):
                r = math.sqrt(ti / (1.0 - ti))
                # d^2 zeta = dt dtheta / (2 (1-t)^2)
                jac = 1.0 / (2.0 * (1.0 - ti) ** 2)
                for thj, wthj in zip(theta, wth):
                    zc = ZeroConfig(np.array([r * complex(math.cos(thj), math.sin(thj))]))
                    total += wti * wthj * jac * math.exp(jpc_log_density(zc, spec, geom))
            masses[a, b] = total
    log(f"[JPC] Density on {masses.size} bins, raw mass {masses.sum():.6g}")
    return masses / masses.sum()


def zero_histogram(configs, t_edges, theta_edges):
    """Normalized (t, theta) histogram of all finite zeros."""
    z = np.concatenate([zc.finite_zeros for zc in configs])
    counts, _, _ = np.histogram2d(t_coordinate(z), np.angle(z), bins=[t_edges, theta_edges])
    return counts / counts.sum()


def total_variation(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())
