"""Latent AR(1) process on the Fisher's-Z scale: priors, log densities, simulation.

The latent state s_t is the Fisher's Z transform of Kendall's tau at time t.
A trajectory covers s_0 .. s_T (length T+1); s_0 is latent-only, observations
start at t = 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .families import fisher_z

LOG2PI = math.log(2.0 * math.pi)


@dataclass
class Ar1Params:
    """Mean, persistence and innovation scale of the latent AR(1) process."""

    mu: float
    phi: float
    sigma: float

    def validate(self) -> "Ar1Params":
        if not abs(self.phi) < 1.0:
            raise ValueError("phi must satisfy |phi| < 1")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        return self

    @property
    def stationary_var(self) -> float:
        return self.sigma**2 / (1.0 - self.phi**2)


@dataclass(frozen=True)
class HyperPrior:
    """Priors for (mu, phi, sigma): vague normal on mu, Beta on (phi+1)/2
    favouring persistence, and a Gamma prior on sigma^2 with mass near zero."""

    mu_var: float = 100.0
    phi_beta_a: float = 5.0
    phi_beta_b: float = 1.5
    sigma2_shape: float = 0.5
    sigma2_rate: float = 0.5


DEFAULT_HYPER_PRIOR = HyperPrior()


def log_prior_states(states: np.ndarray, params: Ar1Params) -> float:
    """Log density of the AR(1) trajectory given (mu, phi, sigma)."""
    params.validate()
    s = np.ascontiguousarray(states, dtype=float)
    if s.ndim != 1 or s.shape[0] < 1:
        raise ValueError("states must be a 1-d vector of length >= 1")
    return float(_kernels.ar1_logpdf_sum(s, params.mu, params.phi, params.sigma))


def log_prior_mu(mu: float, prior: HyperPrior = DEFAULT_HYPER_PRIOR) -> float:
    return -0.5 * (LOG2PI + math.log(prior.mu_var) + mu * mu / prior.mu_var)


def log_prior_phi(phi: float, prior: HyperPrior = DEFAULT_HYPER_PRIOR) -> float:
    """Beta prior on (phi+1)/2, including the Jacobian of the rescaling."""
    if not -1.0 < phi < 1.0:
        return -math.inf
    a, b = prior.phi_beta_a, prior.phi_beta_b
    x = 0.5 * (phi + 1.0)
    log_beta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - log_beta + math.log(0.5)


def log_prior_sigma(sigma: float, prior: HyperPrior = DEFAULT_HYPER_PRIOR) -> float:
    """Gamma prior on sigma^2, including the Jacobian d(sigma^2)/d(sigma)."""
    if not sigma > 0.0:
        return -math.inf
    a, b = prior.sigma2_shape, prior.sigma2_rate
    s2 = sigma * sigma
    log_gamma_pdf = a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(s2) - b * s2
    return log_gamma_pdf + math.log(2.0 * sigma)


def log_prior_hyper(params: Ar1Params, prior: HyperPrior = DEFAULT_HYPER_PRIOR) -> float:
    """Joint log prior of (mu, phi, sigma); -inf outside the support."""
    return (
        log_prior_mu(params.mu, prior)
        + log_prior_phi(params.phi, prior)
        + log_prior_sigma(params.sigma, prior)
    )


def sample_prior_trajectory(params: Ar1Params, T: int, rng: np.random.Generator) -> np.ndarray:
    """Draw s_0 .. s_T from the stationary AR(1) law (length T+1)."""
    params.validate()
    if T < 0:
        raise ValueError("T must be >= 0")
    eta = rng.standard_normal(T + 1)
    return _kernels.ar1_path(eta, params.mu, params.phi, params.sigma)


def stationary_tau_density(tau, params: Ar1Params):
    """Stationary density of Kendall's tau implied by the AR(1) state law."""
    params.validate()
    t = np.asarray(tau, dtype=float)
    if np.any(np.abs(t) >= 1.0):
        raise ValueError("tau must lie in (-1, 1)")
    z = fisher_z(t)
    v = params.stationary_var
    norm = np.exp(-0.5 * (np.asarray(z) - params.mu) ** 2 / v) / math.sqrt(2.0 * math.pi * v)
    out = norm / (1.0 - t * t)
    return float(out) if np.ndim(tau) == 0 else out
