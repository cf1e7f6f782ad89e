"""Compiled inner loops for the samplers.

These duplicate the copula log-density formulas from :mod:`dynvine.families`
in scalar-loop form so the MCMC sweeps avoid numpy dispatch overhead; the
agreement of the two implementations is asserted in the test suite.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG2PI = math.log(2.0 * math.pi)
TAU_MAX = 1.0 - 1e-6
TAU_MIN_ARCH = 1e-4
HALF_PI = 0.5 * math.pi


@njit(cache=True, inline="always")
def _clamp_ell(tau):
    if tau > TAU_MAX:
        return TAU_MAX
    if tau < -TAU_MAX:
        return -TAU_MAX
    return tau


@njit(cache=True, inline="always")
def _clamp_arch(tau):
    a = abs(tau)
    if a > TAU_MAX:
        a = TAU_MAX
    elif a < TAU_MIN_ARCH:
        a = TAU_MIN_ARCH
    if tau < 0.0:
        return -a
    return a


@njit(cache=True, inline="always")
def _gauss_term(x, y, tau):
    rho = math.sin(HALF_PI * _clamp_ell(tau))
    om = 1.0 - rho * rho
    return -0.5 * math.log(om) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * om)


@njit(cache=True)
def gauss_loglik_sum(x, y, tau):
    s = 0.0
    for i in range(x.shape[0]):
        s += _gauss_term(x[i], y[i], tau[i])
    return s


@njit(cache=True)
def gauss_loglik_vec(x, y, tau, out):
    for i in range(x.shape[0]):
        out[i] = _gauss_term(x[i], y[i], tau[i])


@njit(cache=True, inline="always")
def _t_term(x, y, lmarg, tau, df, const):
    rho = math.sin(HALF_PI * _clamp_ell(tau))
    om = 1.0 - rho * rho
    q = (x * x - 2.0 * rho * x * y + y * y) / (df * om)
    return const - 0.5 * math.log(om) - 0.5 * (df + 2.0) * math.log1p(q) + lmarg


@njit(cache=True)
def t_loglik_sum(x, y, lmarg, tau, df, const):
    s = 0.0
    for i in range(x.shape[0]):
        s += _t_term(x[i], y[i], lmarg[i], tau[i], df, const)
    return s


@njit(cache=True)
def t_loglik_vec(x, y, lmarg, tau, df, const, out):
    for i in range(x.shape[0]):
        out[i] = _t_term(x[i], y[i], lmarg[i], tau[i], df, const)


@njit(cache=True, inline="always")
def _clayton_term(lu, lru, lv, tau):
    tc = _clamp_arch(tau)
    a = abs(tc)
    th = 2.0 * a / (1.0 - a)
    l1 = lru if tc < 0.0 else lu
    alpha = -th * l1
    beta = -th * lv
    m = alpha if alpha > beta else beta
    ls = m + math.log(math.exp(alpha - m) + math.exp(beta - m) - math.exp(-m))
    return math.log1p(th) - (th + 1.0) * (l1 + lv) - (2.0 + 1.0 / th) * ls


@njit(cache=True)
def clayton_loglik_sum(lu, lru, lv, tau):
    s = 0.0
    for i in range(lu.shape[0]):
        s += _clayton_term(lu[i], lru[i], lv[i], tau[i])
    return s


@njit(cache=True)
def clayton_loglik_vec(lu, lru, lv, tau, out):
    for i in range(lu.shape[0]):
        out[i] = _clayton_term(lu[i], lru[i], lv[i], tau[i])


@njit(cache=True, inline="always")
def _gumbel_term(xt, lxt, xtr, lxtr, yt, lyt, tau):
    tc = _clamp_arch(tau)
    a = abs(tc)
    th = 1.0 / (1.0 - a)
    if tc < 0.0:
        x1, lx1 = xtr, lxtr
    else:
        x1, lx1 = xt, lxt
    p = th * lx1
    q = th * lyt
    m = p if p > q else q
    ls = m + math.log(math.exp(p - m) + math.exp(q - m))
    big_a = math.exp(ls / th)
    return (
        -big_a
        + (th - 1.0) * (lx1 + lyt)
        + (x1 + yt)
        + (1.0 / th - 2.0) * ls
        + math.log(big_a + th - 1.0)
    )


@njit(cache=True)
def gumbel_loglik_sum(xt, lxt, xtr, lxtr, yt, lyt, tau):
    s = 0.0
    for i in range(xt.shape[0]):
        s += _gumbel_term(xt[i], lxt[i], xtr[i], lxtr[i], yt[i], lyt[i], tau[i])
    return s


@njit(cache=True)
def gumbel_loglik_vec(xt, lxt, xtr, lxtr, yt, lyt, tau, out):
    for i in range(xt.shape[0]):
        out[i] = _gumbel_term(xt[i], lxt[i], xtr[i], lxtr[i], yt[i], lyt[i], tau[i])


@njit(cache=True)
def ar1_logpdf_sum(s, mu, phi, sigma):
    """Log density of the AR(1) path: stationary start plus transitions."""
    n = s.shape[0]
    v0 = sigma * sigma / (1.0 - phi * phi)
    lp = -0.5 * (LOG2PI + math.log(v0) + (s[0] - mu) * (s[0] - mu) / v0)
    acc = 0.0
    for t in range(1, n):
        r = s[t] - mu - phi * (s[t - 1] - mu)
        acc += r * r
    lp += -0.5 * (n - 1) * (LOG2PI + 2.0 * math.log(sigma)) - acc / (2.0 * sigma * sigma)
    return lp


@njit(cache=True)
def ar1_path(eta, mu, phi, sigma):
    """Trajectory from standard-normal noise; eta[0] seeds the stationary start."""
    n = eta.shape[0]
    out = np.empty(n)
    out[0] = mu + sigma / math.sqrt(1.0 - phi * phi) * eta[0]
    for t in range(1, n):
        out[t] = mu + phi * (out[t - 1] - mu) + sigma * eta[t]
    return out
