"""MCMC for dynamic and static bivariate copulas with Bayesian family selection.

One dynamic sweep is: model-indicator update from its full conditional, an
elliptical slice sampling update of the latent trajectory, then adaptive
random-walk updates of (mu, phi, sigma) interweaved between the centered and
the non-centered (standardized states) parameterizations.  The static model
replaces the trajectory by a scalar state with a flat-Kendall's-tau prior.

Samplers run in k-sweep bursts so a chain can be resumed against changing
pseudo data (the collapsed Gibbs pattern used by the sequential vine fit).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .ar1 import (
    Ar1Params,
    log_prior_mu,
    log_prior_phi,
    log_prior_sigma,
)
from .families import (
    Family,
    check_family_set,
    clip_unit,
    default_family_set,
    student_t_quantile,
)
from scipy.special import ndtri

_ESS_MAX_ITER = 500


@dataclass
class SamplerConfig:
    """Run-length and candidate-set settings shared by both samplers.

    R stored draws are produced from R*k sweeps (thinning factor k); the
    first ``burnin`` stored draws are discarded by downstream summaries.
    """

    R: int = 1100
    k: int = 25
    burnin: int = 100
    seed: int = 0
    family_set: list[Family] = field(default_factory=default_family_set)
    adapt_target: float = 0.44

    def validate(self) -> "SamplerConfig":
        if not (self.R > self.burnin >= 0):
            raise ValueError("need R > burnin >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        check_family_set(self.family_set)
        if not 0.0 < self.adapt_target < 1.0:
            raise ValueError("adapt_target must be in (0, 1)")
        return self


@dataclass
class AdaptiveScale:
    """Robbins-Monro proposal scale targeting a fixed acceptance rate.

    The adaptation step decays as 1/n so the chain keeps diminishing
    adaptation (ergodicity is preserved).
    """

    log_scale: float = math.log(0.1)
    target: float = 0.44
    rate: float = 4.0
    offset: float = 20.0
    n: int = 0
    n_accepted: int = 0

    def sd(self) -> float:
        return math.exp(self.log_scale)

    def update(self, accepted: bool) -> None:
        self.n += 1
        self.n_accepted += int(accepted)
        step = self.rate / (self.offset + self.n)
        self.log_scale += step * ((1.0 if accepted else 0.0) - self.target)
        self.log_scale = min(max(self.log_scale, -15.0), 6.0)

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n if self.n else math.nan


def _log_prior_static_state(s: float) -> float:
    # induced by a uniform Kendall's tau on (-1, 1): 0.5 * (1 - tanh(s)^2)
    a = abs(s)
    log_cosh = a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0)
    return math.log(0.5) - 2.0 * log_cosh


class PairCache:
    """Per-dataset transforms reused across many likelihood evaluations.

    Quantile/log transforms of the data are computed once per (data, family
    set); every sweep then only pays for the tau-dependent part.
    """

    def __init__(self, u1: np.ndarray, u2: np.ndarray, family_set: list[Family]):
        u1c = np.ascontiguousarray(clip_unit(u1))
        u2c = np.ascontiguousarray(clip_unit(u2))
        if u1c.shape != u2c.shape or u1c.ndim != 1:
            raise ValueError("u1 and u2 must be 1-d arrays of equal length")
        self.T = u1c.shape[0]
        self.family_set = list(family_set)
        self._prep = []
        c = np.ascontiguousarray
        for fam in family_set:
            if fam.kind == "independence":
                self._prep.append(("independence",))
            elif fam.kind == "gaussian":
                self._prep.append(("gaussian", c(ndtri(u1c)), c(ndtri(u2c))))
            elif fam.kind == "student_t":
                df = float(fam.df)
                x = student_t_quantile(u1c, fam.df)
                y = student_t_quantile(u2c, fam.df)
                lmarg = 0.5 * (df + 1.0) * (np.log1p(x * x / df) + np.log1p(y * y / df))
                const = _t_const_cached(fam.df)
                self._prep.append(("student_t", c(x), c(y), c(lmarg), df, const))
            elif fam.kind == "eclayton":
                self._prep.append(
                    ("eclayton", c(np.log(u1c)), c(np.log1p(-u1c)), c(np.log(u2c)))
                )
            elif fam.kind == "egumbel":
                xt = -np.log(u1c)
                xtr = -np.log1p(-u1c)
                yt = -np.log(u2c)
                self._prep.append(
                    ("egumbel", c(xt), c(np.log(xt)), c(xtr), c(np.log(xtr)), c(yt), c(np.log(yt)))
                )
            else:  # pragma: no cover
                raise ValueError(fam.kind)

    def loglik_sum(self, idx: int, tau: np.ndarray) -> float:
        p = self._prep[idx]
        kind = p[0]
        if kind == "independence":
            return 0.0
        if kind == "gaussian":
            return _kernels.gauss_loglik_sum(p[1], p[2], tau)
        if kind == "student_t":
            return _kernels.t_loglik_sum(p[1], p[2], p[3], tau, p[4], p[5])
        if kind == "eclayton":
            return _kernels.clayton_loglik_sum(p[1], p[2], p[3], tau)
        return _kernels.gumbel_loglik_sum(p[1], p[2], p[3], p[4], p[5], p[6], tau)

    def loglik_vec(self, idx: int, tau: np.ndarray) -> np.ndarray:
        out = np.empty(self.T)
        p = self._prep[idx]
        kind = p[0]
        if kind == "independence":
            out[:] = 0.0
        elif kind == "gaussian":
            _kernels.gauss_loglik_vec(p[1], p[2], tau, out)
        elif kind == "student_t":
            _kernels.t_loglik_vec(p[1], p[2], p[3], tau, p[4], p[5], out)
        elif kind == "eclayton":
            _kernels.clayton_loglik_vec(p[1], p[2], p[3], tau, out)
        else:
            _kernels.gumbel_loglik_vec(p[1], p[2], p[3], p[4], p[5], p[6], tau, out)
        return out

    def all_loglik_sums(self, tau: np.ndarray) -> np.ndarray:
        return np.array([self.loglik_sum(i, tau) for i in range(len(self.family_set))])


_T_CONSTS: dict[int, float] = {}


def _t_const_cached(df: int) -> float:
    if df not in _T_CONSTS:
        _T_CONSTS[df] = (
            math.lgamma((df + 2.0) / 2.0)
            + math.lgamma(df / 2.0)
            - 2.0 * math.lgamma((df + 1.0) / 2.0)
        )
    return _T_CONSTS[df]


def _tau_from_states(cache: PairCache, state) -> np.ndarray:
    s = np.asarray(state, dtype=float)
    if s.ndim == 0:
        s = np.full(cache.T, float(s))
    elif s.shape[0] == cache.T + 1:
        s = s[1:]
    elif s.shape[0] != cache.T:
        raise ValueError("state length must be T, T+1 or scalar")
    return np.ascontiguousarray(np.tanh(s))


def family_full_conditional(u1, u2, state, family_set: list[Family]) -> np.ndarray:
    """Posterior probabilities of the model indicator given the shared state.

    ``state`` is a scalar (static model), a length-T state vector, or a full
    trajectory of length T+1 whose leading latent-only entry is dropped.
    """
    check_family_set(family_set)
    cache = PairCache(np.asarray(u1, dtype=float), np.asarray(u2, dtype=float), family_set)
    tau = _tau_from_states(cache, state)
    return _family_probs(cache.all_loglik_sums(tau))


def _family_probs(logliks: np.ndarray) -> np.ndarray:
    ll = np.where(np.isnan(logliks), -np.inf, logliks)
    m = np.max(ll)
    if not np.isfinite(m):
        raise RuntimeError("all candidate families have zero likelihood")
    w = np.exp(ll - m)
    return w / w.sum()


def _sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(probs)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right").clip(0, len(probs) - 1))


# ---------------------------------------------------------------------------
# chain states and initialization


@dataclass
class DynamicChainState:
    traj: np.ndarray
    params: Ar1Params
    family_idx: int
    scales: dict[str, AdaptiveScale]
    rng: np.random.Generator


@dataclass
class StaticChainState:
    s: float
    family_idx: int
    scale: AdaptiveScale
    rng: np.random.Generator


def _new_scales(target: float) -> dict[str, AdaptiveScale]:
    names = ("c_mu", "c_phi", "c_sigma", "nc_mu", "nc_phi", "nc_sigma")
    return {name: AdaptiveScale(target=target) for name in names}


def _rolling_state_init(u1: np.ndarray, u2: np.ndarray, width: int = 50, stride: int = 10) -> np.ndarray:
    """Fisher's Z of a rolling-window empirical Kendall's tau (warm start)."""
    from .structure import empirical_kendall_tau

    T = u1.shape[0]
    if T <= width:
        tau = np.clip(empirical_kendall_tau(u1, u2), -0.95, 0.95)
        return np.full(T + 1, math.atanh(tau))
    half = width // 2
    centers = np.arange(half, T - half + 1, stride)
    taus = np.array(
        [empirical_kendall_tau(u1[c - half : c + half], u2[c - half : c + half]) for c in centers]
    )
    taus = np.clip(taus, -0.95, 0.95)
    s_t = np.interp(np.arange(T), centers, np.arctanh(taus))
    return np.concatenate([[s_t[0]], s_t])


def init_dynamic_chain(
    u1: np.ndarray, u2: np.ndarray, config: SamplerConfig, rng: np.random.Generator
) -> DynamicChainState:
    """Deterministic warm start; the generator is only consumed by the sweeps."""
    traj = _rolling_state_init(u1, u2)
    params = Ar1Params(mu=float(np.mean(traj[1:])), phi=0.9, sigma=0.1)
    cache = PairCache(u1, u2, config.family_set)
    tau = np.ascontiguousarray(np.tanh(traj[1:]))
    fam = int(np.argmax(cache.all_loglik_sums(tau)))
    return DynamicChainState(
        traj=traj, params=params, family_idx=fam, scales=_new_scales(config.adapt_target), rng=rng
    )


def init_static_chain(
    u1: np.ndarray, u2: np.ndarray, config: SamplerConfig, rng: np.random.Generator
) -> StaticChainState:
    from .structure import empirical_kendall_tau

    tau = float(np.clip(empirical_kendall_tau(u1, u2), -0.95, 0.95))
    s = math.atanh(tau)
    cache = PairCache(u1, u2, config.family_set)
    fam = int(np.argmax(cache.all_loglik_sums(np.full(cache.T, tau))))
    return StaticChainState(
        s=s, family_idx=fam, scale=AdaptiveScale(target=config.adapt_target), rng=rng
    )


# ---------------------------------------------------------------------------
# sweep components (dynamic model)


def _update_family_dynamic(chain: DynamicChainState, cache: PairCache) -> None:
    tau = np.ascontiguousarray(np.tanh(chain.traj[1:]))
    probs = _family_probs(cache.all_loglik_sums(tau))
    chain.family_idx = _sample_index(probs, chain.rng)


def _ess_update(traj, params: Ar1Params, loglik_fn, rng: np.random.Generator):
    nu = _kernels.ar1_path(rng.standard_normal(traj.shape[0]), params.mu, params.phi, params.sigma)
    log_y = loglik_fn(traj) + math.log(rng.random())
    angle = rng.random() * 2.0 * math.pi
    lo, hi = angle - 2.0 * math.pi, angle
    mu = params.mu
    for _ in range(_ESS_MAX_ITER):
        prop = (traj - mu) * math.cos(angle) + (nu - mu) * math.sin(angle) + mu
        if loglik_fn(prop) > log_y:
            return prop
        if angle < 0.0:
            lo = angle
        else:
            hi = angle
        angle = lo + rng.random() * (hi - lo)
    return traj  # slice shrank to numerical zero; keep the current trajectory


def update_states_ess(
    chain: DynamicChainState, u1, u2, family_set: list[Family] | None = None,
    cache: PairCache | None = None,
) -> DynamicChainState:
    """Elliptical slice update of the latent trajectory given (mu, phi, sigma, m)."""
    if cache is None:
        fams = check_family_set(family_set) if family_set else default_family_set()
        cache = PairCache(np.asarray(u1, float), np.asarray(u2, float), fams)
    _update_states_cached(chain, cache)
    return chain


def _update_states_cached(chain: DynamicChainState, cache: PairCache) -> None:
    idx = chain.family_idx

    def ll(traj):
        return cache.loglik_sum(idx, np.ascontiguousarray(np.tanh(traj[1:])))

    chain.traj = _ess_update(chain.traj, chain.params, ll, chain.rng)


def _mh_step(scale: AdaptiveScale, cur_target: float, prop_target: float, rng) -> bool:
    accept = math.log(rng.random()) < (prop_target - cur_target)
    scale.update(accept)
    return accept


def _update_hyper_cached(chain: DynamicChainState, cache: PairCache) -> None:
    rng = chain.rng
    p = chain.params
    traj = chain.traj
    idx = chain.family_idx

    def prior_traj(mu, phi, sigma):
        return _kernels.ar1_logpdf_sum(traj, mu, phi, sigma)

    # --- centered stage: states fixed, likelihood does not involve hypers ---
    sc = chain.scales["c_mu"]
    prop = p.mu + sc.sd() * rng.standard_normal()
    if _mh_step(
        sc,
        prior_traj(p.mu, p.phi, p.sigma) + log_prior_mu(p.mu),
        prior_traj(prop, p.phi, p.sigma) + log_prior_mu(prop),
        rng,
    ):
        p.mu = prop

    sc = chain.scales["c_phi"]
    psi = math.atanh(p.phi)
    prop_psi = psi + sc.sd() * rng.standard_normal()
    prop_phi = math.tanh(prop_psi)
    if _mh_step(
        sc,
        prior_traj(p.mu, p.phi, p.sigma) + log_prior_phi(p.phi) + math.log1p(-p.phi * p.phi),
        prior_traj(p.mu, prop_phi, p.sigma)
        + log_prior_phi(prop_phi)
        + math.log1p(-prop_phi * prop_phi),
        rng,
    ):
        p.phi = prop_phi

    sc = chain.scales["c_sigma"]
    lam = math.log(p.sigma)
    prop_sigma = math.exp(lam + sc.sd() * rng.standard_normal())
    if _mh_step(
        sc,
        prior_traj(p.mu, p.phi, p.sigma) + log_prior_sigma(p.sigma) + math.log(p.sigma),
        prior_traj(p.mu, p.phi, prop_sigma) + log_prior_sigma(prop_sigma) + math.log(prop_sigma),
        rng,
    ):
        p.sigma = prop_sigma

    # --- non-centered stage: standardized states fixed, likelihood enters ---
    st = (traj - p.mu) / p.sigma
    st1 = st[1:]

    def ll(mu, sigma):
        return cache.loglik_sum(idx, np.ascontiguousarray(np.tanh(mu + sigma * st1)))

    cur_ll = ll(p.mu, p.sigma)

    sc = chain.scales["nc_mu"]
    prop = p.mu + sc.sd() * rng.standard_normal()
    prop_ll = ll(prop, p.sigma)
    if _mh_step(sc, cur_ll + log_prior_mu(p.mu), prop_ll + log_prior_mu(prop), rng):
        p.mu = prop
        cur_ll = prop_ll

    sc = chain.scales["nc_phi"]
    psi = math.atanh(p.phi)
    prop_psi = psi + sc.sd() * rng.standard_normal()
    prop_phi = math.tanh(prop_psi)
    if _mh_step(
        sc,
        _kernels.ar1_logpdf_sum(st, 0.0, p.phi, 1.0)
        + log_prior_phi(p.phi)
        + math.log1p(-p.phi * p.phi),
        _kernels.ar1_logpdf_sum(st, 0.0, prop_phi, 1.0)
        + log_prior_phi(prop_phi)
        + math.log1p(-prop_phi * prop_phi),
        rng,
    ):
        p.phi = prop_phi

    sc = chain.scales["nc_sigma"]
    lam = math.log(p.sigma)
    prop_sigma = math.exp(lam + sc.sd() * rng.standard_normal())
    prop_ll = ll(p.mu, prop_sigma)
    if _mh_step(
        sc,
        cur_ll + log_prior_sigma(p.sigma) + math.log(p.sigma),
        prop_ll + log_prior_sigma(prop_sigma) + math.log(prop_sigma),
        rng,
    ):
        p.sigma = prop_sigma

    chain.traj = p.mu + p.sigma * st


def update_hyper_interweaved(
    chain: DynamicChainState, u1, u2, family_set: list[Family] | None = None,
    cache: PairCache | None = None,
) -> DynamicChainState:
    """Adaptive MH update of (mu, phi, sigma), centered then non-centered."""
    if cache is None:
        fams = check_family_set(family_set) if family_set else default_family_set()
        cache = PairCache(np.asarray(u1, float), np.asarray(u2, float), fams)
    _update_hyper_cached(chain, cache)
    return chain


def _sweep_dynamic(chain: DynamicChainState, cache: PairCache) -> None:
    _update_family_dynamic(chain, cache)
    _update_states_cached(chain, cache)
    _update_hyper_cached(chain, cache)


# ---------------------------------------------------------------------------
# sweep components (static model)


def _sweep_static(chain: StaticChainState, cache: PairCache) -> None:
    tau = np.full(cache.T, math.tanh(chain.s))
    probs = _family_probs(cache.all_loglik_sums(tau))
    chain.family_idx = _sample_index(probs, chain.rng)

    idx = chain.family_idx
    sc = chain.scale
    prop = chain.s + sc.sd() * chain.rng.standard_normal()
    cur = cache.loglik_sum(idx, tau) + _log_prior_static_state(chain.s)
    new = cache.loglik_sum(idx, np.full(cache.T, math.tanh(prop))) + _log_prior_static_state(prop)
    if _mh_step(sc, cur, new, chain.rng):
        chain.s = prop


# ---------------------------------------------------------------------------
# bursts, runs and stored draws


@dataclass
class BivariateDraws:
    """Stored posterior draws of a bivariate sampler.

    ``loglik[r, t]`` is the pointwise log likelihood at the r-th stored state
    and is recomputable bit-for-bit from the stored states and families.
    """

    dynamic: bool
    family_set: list[Family]
    families: np.ndarray
    states: np.ndarray
    hyper: np.ndarray | None
    loglik: np.ndarray
    final_state: DynamicChainState | StaticChainState | None = None

    @property
    def R(self) -> int:
        return self.families.shape[0]

    def family_mode(self, burnin: int = 0) -> Family:
        counts = np.bincount(self.families[burnin:], minlength=len(self.family_set))
        return self.family_set[int(np.argmax(counts))]

    def tau_draws(self, burnin: int = 0) -> np.ndarray:
        """Kendall's tau draws: (R', T+1) for dynamic, (R',) for static."""
        return np.tanh(self.states[burnin:])


def _validate_pair_data(u1: np.ndarray, u2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    for u in (u1, u2):
        if not np.all(np.isfinite(u)):
            raise ValueError("data contains non-finite values")
        if np.any(u < 0.0) or np.any(u > 1.0):
            raise ValueError("data values must lie in [0, 1] before clipping")
    if u1.shape != u2.shape:
        raise ValueError("margins must have equal length")
    return u1, u2


def _split_data(data) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("data must be a T x 2 matrix")
    return _validate_pair_data(arr[:, 0], arr[:, 1])


def resume_k_steps(chain, u1, u2, k: int, cache: PairCache | None = None, family_set=None):
    """Run exactly k sweeps from ``chain`` on the given data; return the k-th state.

    Composing bursts is bit-identical to one long run because the chain owns
    its generator and the sweeps are the only consumers of randomness.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    dynamic = isinstance(chain, DynamicChainState)
    if cache is None:
        fams = check_family_set(family_set) if family_set else default_family_set()
        cache = PairCache(np.asarray(u1, float), np.asarray(u2, float), fams)
    for _ in range(k):
        if dynamic:
            _sweep_dynamic(chain, cache)
        else:
            _sweep_static(chain, cache)
    if dynamic:
        tau = np.ascontiguousarray(np.tanh(chain.traj[1:]))
        draw = (
            chain.family_idx,
            chain.traj.copy(),
            np.array([chain.params.mu, chain.params.phi, chain.params.sigma]),
            cache.loglik_vec(chain.family_idx, tau),
        )
    else:
        tau = np.full(cache.T, math.tanh(chain.s))
        draw = (chain.family_idx, chain.s, None, cache.loglik_vec(chain.family_idx, tau))
    return chain, draw


def _run_bursts(chain, cache: PairCache, config: SamplerConfig, dynamic: bool) -> BivariateDraws:
    R, T = config.R, cache.T
    families = np.zeros(R, dtype=np.int64)
    loglik = np.empty((R, T))
    states = np.empty((R, T + 1)) if dynamic else np.empty(R)
    hyper = np.empty((R, 3)) if dynamic else None
    for r in range(R):
        chain, draw = resume_k_steps(chain, None, None, config.k, cache=cache)
        families[r] = draw[0]
        states[r] = draw[1]
        if dynamic:
            hyper[r] = draw[2]
        loglik[r] = draw[3]
    return BivariateDraws(
        dynamic=dynamic,
        family_set=list(config.family_set),
        families=families,
        states=states,
        hyper=hyper,
        loglik=loglik,
        final_state=chain,
    )


def run_dynamic_sampler(
    data, config: SamplerConfig, init: DynamicChainState | None = None
) -> BivariateDraws:
    """Gibbs sampler for the dynamic bivariate copula (R stored draws, k-thinned)."""
    config.validate()
    u1, u2 = _split_data(data)
    if u1.shape[0] < 2:
        raise ValueError("dynamic sampler needs T >= 2")
    chain = init or init_dynamic_chain(u1, u2, config, np.random.default_rng(config.seed))
    cache = PairCache(u1, u2, config.family_set)
    return _run_bursts(chain, cache, config, dynamic=True)


def run_static_sampler(
    data, config: SamplerConfig, init: StaticChainState | None = None
) -> BivariateDraws:
    """Gibbs sampler for the static bivariate copula (scalar latent state)."""
    config.validate()
    u1, u2 = _split_data(data)
    chain = init or init_static_chain(u1, u2, config, np.random.default_rng(config.seed))
    cache = PairCache(u1, u2, config.family_set)
    return _run_bursts(chain, cache, config, dynamic=False)
