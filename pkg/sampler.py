#!/usr/bin/env python3
"""
Sampling from gamma_N = e^{-S(s)} ds
Exact draws in the Gaussian case, adaptive random-walk Metropolis otherwise
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from functools import lru_cache
from typing import List

import numpy as np
from scipy import linalg, optimize

from ensemble import PolySection, kinetic_matrix, norm_matrix, _cached_basis, BASIS_CACHE_ENTRIES, section_values
from pphi_config import RHAT_WARN
from pphi_errors import ConfigurationError, ConvergenceWarning, DegenerateMeasureError
from run_audit import log


NOISE_BLOCK = 1024
ADAPT_EXPONENT = 0.6


@dataclass(frozen=True)
class ChainConfig:
    n_steps: int
    burn_in: int
    n_chains: int = 4
    target_accept: float = 0.234
    seed: int = 0
    thinning: int = 1

    def __post_init__(self):
        problems = []
        if self.n_steps < 1:
            problems.append(f"n_steps must be positive, got {self.n_steps}")
        if not 0 <= self.burn_in < self.n_steps:
            problems.append(f"burn_in ({self.burn_in}) must lie in [0, n_steps={self.n_steps})")
        if self.n_chains < 2:
            problems.append(f"n_chains must be >= 2 for diagnostics, got {self.n_chains}")
        if not 0 < self.target_accept < 1:
            problems.append(f"target_accept must lie in (0, 1), got {self.target_accept}")
        if self.thinning < 1:
            problems.append(f"thinning must be positive, got {self.thinning}")
        if problems:
            raise ConfigurationError("Invalid chain configuration", problems)

    @property
    def kept_per_chain(self):
        return (self.n_steps - self.burn_in) // self.thinning

    @classmethod
    def from_config(cls, sampler_cfg, seed, samples):
        """Chain settings for `samples` kept states; n_steps is derived when not given."""
        n_chains = sampler_cfg['n_chains']
        thinning = sampler_cfg['thinning']
        burn_in = sampler_cfg['burn_in']
        n_steps = sampler_cfg.get('n_steps')
        if n_steps is None:
            n_steps = burn_in + math.ceil(samples / n_chains) * thinning
        return cls(n_steps=n_steps, burn_in=burn_in, n_chains=n_chains,
                   target_accept=sampler_cfg['target_accept'], seed=seed, thinning=thinning)


@dataclass
class ChainDiagnostics:
    acceptance_rate: float
    rhat_max: float
    ess_min: float
    chain_acceptance: List[float] = field(default_factory=list)
    proposal_scales: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def make_rng(seed):
    """Counter-based generator; seeds may be ints or SeedSequences."""
    return np.random.Generator(np.random.Philox(seed))


def complex_normal(rng, shape):
    """Standard complex Gaussians, E|xi|^2 = 1."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


# ---------------------------------------------------------------------------
# Gaussian part
# ---------------------------------------------------------------------------

def gram_matrix(geom, N):
    """G[i, j] = integral of z^i conj(z)^j e^{-N phi} d nu."""
    q = geom.nu_rule(N)
    support = q.nodes[q.weights > 0]
    distinct = np.unique(np.round(support, 12)).size
    if distinct < N + 1:
        raise DegenerateMeasureError(
            f"nu has {distinct} distinct support points, degree {N} needs at least {N + 1}")
    H = norm_matrix(geom, N)
    eigenvalues = np.linalg.eigvalsh(H)
    if eigenvalues[0] <= 1e-13 * max(eigenvalues[-1], 1e-300):
        raise DegenerateMeasureError(
            f"Gram matrix at N={N} is rank deficient (smallest eigenvalue {eigenvalues[0]:.3e})")
    return np.array(H.T)


@lru_cache(maxsize=64)
def _precision_factor(geom, N):
    """Lower Cholesky factor L of the norm form, c^H H c with H = L L^H."""
    gram_matrix(geom, N)
    return np.linalg.cholesky(norm_matrix(geom, N))


def _free_field_draws(L, xi):
    # c = L^{-H} xi has covariance H^{-1}
    return linalg.solve_triangular(L.conj().T, xi, lower=False)


def sample_gaussian(geom, N, count, seed):
    """i.i.d. draws with density proportional to e^{-||s||^2}."""
    if count == 0:
        return []
    L = _precision_factor(geom, N)
    rng = make_rng(seed)
    xi = complex_normal(rng, (N + 1, count))
    coeffs = _free_field_draws(L, xi)
    return [PolySection.from_ascending(coeffs[:, i]) for i in range(count)]


# ---------------------------------------------------------------------------
# Random-walk Metropolis
# ---------------------------------------------------------------------------

class ActionTarget:
    """log density -S(s) on ascending coefficient vectors."""

    def __init__(self, spec, geom, N):
        self.spec = spec
        self.geom = geom
        self.N = N
        self.rule = geom.nu_rule(spec.k * N)
        self.kinetic = kinetic_matrix(geom, N) if spec.include_kinetic else None
        self.basis = None
        if len(self.rule) * (N + 1) <= BASIS_CACHE_ENTRIES:
            self.basis = _cached_basis(geom, self.rule, N, 'value')

    def action(self, c):
        if self.basis is not None:
            values = self.basis @ c
        else:
            values = section_values(PolySection.from_ascending(c), self.geom, self.rule)
        value = float(self.rule.weights @ self.spec.P(np.abs(values) ** 2))
        if self.kinetic is not None:
            value += float(np.real(np.vdot(c, self.kinetic @ c)))
        return value

    def __call__(self, c):
        return -self.action(c)


def metropolis_log_ratio(log_target, current, proposal):
    """log pi(proposal) - log pi(current) for a symmetric proposal."""
    return log_target(proposal) - log_target(current)


def radial_warm_start(log_target, c0):
    """Rescale c0 to the mode of the target along its ray (radial Jacobian r^{2N+1} included)."""
    jacobian_power = 2 * c0.size - 1

    def objective(u):
        return -(log_target(np.exp(u) * c0) + jacobian_power * u)

    result = optimize.minimize_scalar(objective, bounds=(-30.0, 30.0), method='bounded',
                                      options={'xatol': 1e-6})
    return np.exp(result.x) * c0


def _run_chain(target, L, cfg, seed_seq, chain_index):
    rng = make_rng(seed_seq)
    dim = L.shape[0]
    c = _free_field_draws(L, complex_normal(rng, dim))
    c = radial_warm_start(target, c)
    log_p = target(c)
    log_scale = math.log(2.38 / math.sqrt(2 * dim))

    draws = []
    accepted = 0
    step = 0
    while step < cfg.n_steps:
        block = min(NOISE_BLOCK, cfg.n_steps - step)
        noise = _free_field_draws(L, complex_normal(rng, (dim, block))).T
        log_u = np.log(rng.random(block))
        for b in range(block):
            proposal = c + math.exp(log_scale) * noise[b]
            log_p_new = target(proposal)
            log_ratio = log_p_new - log_p
            if log_u[b] < log_ratio:
                c, log_p = proposal, log_p_new
                if step >= cfg.burn_in:
                    accepted += 1
            if step < cfg.burn_in:
                # Robbins-Monro on the log step size, frozen after burn-in
                accept_prob = math.exp(min(0.0, log_ratio)) if np.isfinite(log_ratio) else 0.0
                log_scale += (step + 1) ** -ADAPT_EXPONENT * (accept_prob - cfg.target_accept)
            elif (step - cfg.burn_in + 1) % cfg.thinning == 0:
                draws.append(c.copy())
            step += 1

    rate = accepted / (cfg.n_steps - cfg.burn_in)
    log(f"[SAMPLER] chain {chain_index}: acceptance {rate:.3f}, scale {math.exp(log_scale):.4g}, "
        f"{len(draws)} draws")
    return np.array(draws).reshape(len(draws), dim), rate, math.exp(log_scale)


def _draw_features(draws):
    # real coordinates plus the log squared norm
    features = [draws.real, draws.imag, np.log(np.sum(np.abs(draws) ** 2, axis=-1, keepdims=True))]
    return np.concatenate(features, axis=-1)


def split_rhat(chains):
    """Split R-hat per coordinate for chains shaped (n_chains, n_draws, n_dims)."""
    chains = np.asarray(chains, dtype=float)
    n = chains.shape[1] // 2
    if n < 2:
        return np.full(chains.shape[2], np.nan)
    halves = np.concatenate([chains[:, :n], chains[:, -n:]], axis=0)
    within = halves.var(axis=1, ddof=1).mean(axis=0)
    between = n * halves.mean(axis=1).var(axis=0, ddof=1)
    var_plus = (n - 1) / n * within + between / n
    with np.errstate(divide='ignore', invalid='ignore'):
        rhat = np.sqrt(var_plus / within)
    return np.where(within > 0, rhat, 1.0)


def _autocovariance(x):
    n = x.size
    size = 1 << (2 * n - 1).bit_length()
    centered = x - x.mean()
    spectrum = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n]
    return acov / n


def effective_sample_size(chains):
    """Multi-chain ESS per coordinate with Geyer's initial positive sequence."""
    chains = np.asarray(chains, dtype=float)
    m, n, d = chains.shape
    if n < 4:
        return np.full(d, np.nan)
    ess = np.empty(d)
    for dim in range(d):
        acov = np.array([_autocovariance(chains[i, :, dim]) for i in range(m)])
        chain_var = acov[:, 0] * n / (n - 1)
        within = chain_var.mean()
        var_plus = within * (n - 1) / n
        if m > 1:
            var_plus += chains[:, :, dim].mean(axis=1).var(ddof=1)
        if var_plus <= 0:
            ess[dim] = m * n
            continue
        rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
        rho[0] = 1.0
        tau = -1.0
        previous = np.inf
        for k in range(0, n - 1, 2):
            pair = rho[k] + rho[k + 1]
            if pair <= 0:
                break
            pair = min(pair, previous)
            tau += 2.0 * pair
            previous = pair
        ess[dim] = m * n / max(tau, 1e-12)
    return ess


def sample_mcmc(spec, geom, N, cfg, threads=1):
    """Adaptive RWM draws from e^{-S(s)}, preconditioned by the free-field covariance."""
    L = _precision_factor(geom, N)
    target = ActionTarget(spec, geom, N)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)

    log(f"[SAMPLER] N={N}, k={spec.k}, kinetic={spec.include_kinetic}: "
        f"{cfg.n_chains} chains x {cfg.n_steps} steps (burn-in {cfg.burn_in}, thinning {cfg.thinning})")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda i: _run_chain(target, L, cfg, seeds[i], i), range(cfg.n_chains)))

    chains = np.array([draws for draws, _, _ in results])
    features = _draw_features(chains)
    rhat = split_rhat(features)
    ess = effective_sample_size(features)
    diagnostics = ChainDiagnostics(
        acceptance_rate=float(np.mean([rate for _, rate, _ in results])),
        rhat_max=float(np.nanmax(rhat)) if np.any(np.isfinite(rhat)) else float('nan'),
        ess_min=float(np.nanmin(ess)) if np.any(np.isfinite(ess)) else float('nan'),
        chain_acceptance=[float(rate) for _, rate, _ in results],
        proposal_scales=[float(scale) for _, _, scale in results],
    )
    if not diagnostics.rhat_max <= RHAT_WARN:
        message = (f"split R-hat {diagnostics.rhat_max:.3f} exceeds {RHAT_WARN} at N={N} "
                   f"after {cfg.n_steps} steps")
        diagnostics.warnings.append(message)
        warnings.warn(message, ConvergenceWarning)
        log(f"[SAMPLER] ⚠️  {message}")

    samples = [PolySection.from_ascending(c) for chain in chains for c in chain]
    return samples, diagnostics
