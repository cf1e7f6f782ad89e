"""Sequential d-dimensional estimation: structure selection, per-edge collapsed
Gibbs against per-draw pseudo data, WAIC dependence-type selection, and
pseudo-data propagation through h-functions.

Uncertainty travels between trees as a cube of pseudo data indexed by
(stored draw r, time t, node): every stored draw of a lower tree produces its
own pseudo data set, and the samplers of the next tree run k sweeps against
the r-th set starting from the (r-1)-th chain state.
"""
from __future__ import annotations

import hashlib
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .bivariate import (
    BivariateDraws,
    PairCache,
    SamplerConfig,
    init_dynamic_chain,
    init_static_chain,
    resume_k_steps,
)
from .families import U_EPS, Family, h_backward, h_forward, log_density, tau_to_param
from .selection import DependenceType, WaicResult, estimate_waic, select_dependence
from .structure import (
    Edge,
    RVineStructure,
    StructureClass,
    allowed_edges,
    empirical_kendall_tau,
    select_tree,
    validate,
)

ALL_TYPES = (DependenceType.ZERO, DependenceType.STATIC, DependenceType.DYNAMIC)


@dataclass
class FitConfig:
    """Settings for a sequential vine fit."""

    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    structure_class: StructureClass = StructureClass.GENERAL
    truncation_level: int | None = None
    se_multiplier: float = 2.0
    parallel_edges: bool = False
    threads: int | None = None
    allowed_types: tuple[DependenceType, ...] = ALL_TYPES
    fixed_structure: RVineStructure | None = None

    def validate(self, d: int) -> "FitConfig":
        self.sampler.validate()
        if self.truncation_level is not None and not 1 <= self.truncation_level <= d - 1:
            raise ValueError("truncation_level must lie in [1, d-1]")
        if self.se_multiplier < 0:
            raise ValueError("se_multiplier must be non-negative")
        if DependenceType.ZERO not in self.allowed_types:
            raise ValueError("the zero-dependence type cannot be disabled")
        if self.fixed_structure is not None:
            if self.fixed_structure.d != d:
                raise ValueError("fixed structure dimension does not match the data")
            problem = validate(self.fixed_structure)
            if problem is not None:
                raise ValueError(problem)
        return self


@dataclass
class EdgeFit:
    """Posterior summary of one pair copula: selected type, draws, WAIC table."""

    edge: Edge
    dep_type: DependenceType
    draws: BivariateDraws | None
    waic_dyn: WaicResult | None
    waic_stat: WaicResult | None


@dataclass
class VineFitResult:
    structure: RVineStructure
    edge_fits: list[list[EdgeFit]]
    config: FitConfig
    T: int
    edge_seeds: dict[str, list[int]]
    timings: list[float]
    train_data: np.ndarray | None = None

    def edge_fit(self, level: int, index: int) -> EdgeFit:
        return self.edge_fits[level - 1][index]


# ---------------------------------------------------------------------------
# seeding: per-edge streams derived from (master seed, tree level, edge label)


def edge_seed_entropy(master_seed: int, level: int, label: str) -> list[int]:
    digest = hashlib.sha256(f"{level}:{label}".encode()).digest()
    words = [int.from_bytes(digest[4 * i : 4 * i + 4], "little") for i in range(4)]
    return [int(master_seed) & (2**64 - 1), int(level), *words]


def edge_seed_sequence(master_seed: int, level: int, label: str) -> np.random.SeedSequence:
    """Deterministic per-edge seed stream, independent of processing order."""
    return np.random.SeedSequence(edge_seed_entropy(master_seed, level, label))


# ---------------------------------------------------------------------------
# kernel-density modes


def kde_mode_grid(draws: np.ndarray, lo: float, hi: float, n_grid: int = 512) -> np.ndarray:
    """Gridded Gaussian-KDE mode (Silverman bandwidth) per column of draws.

    ``draws`` is (R,) or (R, T); returns a scalar array of shape () or (T,).
    Degenerate columns (zero spread) return their common value.
    """
    arr = np.asarray(draws, dtype=float)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[:, None]
    R, T = arr.shape
    if R < 1:
        raise ValueError("need at least one draw")
    width = (hi - lo) / n_grid
    centers = lo + (np.arange(n_grid) + 0.5) * width
    sd = arr.std(axis=0, ddof=1) if R > 1 else np.zeros(T)
    q75, q25 = np.percentile(arr, [75, 25], axis=0)
    spread = np.where((q75 - q25) > 0, np.minimum(sd, (q75 - q25) / 1.34), sd)
    bw = 0.9 * spread * R ** (-0.2)
    degenerate = ~(bw > 0)

    bins = np.clip(((arr - lo) / width).astype(int), 0, n_grid - 1)
    flat = bins + n_grid * np.arange(T)[None, :]
    counts = np.bincount(flat.ravel(), minlength=T * n_grid).reshape(T, n_grid, order="F")
    counts = counts.astype(float)
    modes = np.empty(T)
    for t in range(T):
        if degenerate[t]:
            modes[t] = arr[0, t]
            continue
        smooth = gaussian_filter1d(counts[t], bw[t] / width, mode="constant")
        modes[t] = centers[int(np.argmax(smooth))]
    return modes[0] if squeeze else modes


def posterior_mode_pseudo(values: np.ndarray) -> np.ndarray:
    """Per-time mode of pseudo-data draws on a 512-point grid over [0, 1]."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:  # constant across draws by construction
        return arr.copy()
    if arr.shape[0] < 2:
        raise ValueError("need at least two draws")
    out = np.asarray(kde_mode_grid(arr, 0.0, 1.0, 512))
    return np.clip(out, U_EPS, 1.0 - U_EPS)


# ---------------------------------------------------------------------------
# pseudo-data propagation


def _clip_warn(arr: np.ndarray, what: str) -> np.ndarray:
    clipped = np.clip(arr, U_EPS, 1.0 - U_EPS)
    frac = np.mean((clipped <= U_EPS) | (clipped >= 1.0 - U_EPS))
    if frac > 0.01:
        warnings.warn(f"{frac:.1%} of {what} sit at the clipping bounds", RuntimeWarning)
    return clipped


def propagate_pseudo(edge_fit: EdgeFit, u_a: np.ndarray, u_b: np.ndarray):
    """Per-draw pseudo data for the next tree from this edge's posterior draws.

    Dynamic edges use the r-th state trajectory, static edges the r-th scalar
    state, zero edges pass the inputs through unchanged.
    """
    u_a = np.asarray(u_a, dtype=float)
    u_b = np.asarray(u_b, dtype=float)
    if edge_fit.dep_type == DependenceType.ZERO:
        return u_a, u_b
    draws = edge_fit.draws
    R = draws.R
    T = u_a.shape[-1]
    rows_a = u_a if u_a.ndim == 2 else np.broadcast_to(u_a, (R, T))
    rows_b = u_b if u_b.ndim == 2 else np.broadcast_to(u_b, (R, T))
    out_a = np.empty((R, T))
    out_b = np.empty((R, T))
    dynamic = edge_fit.dep_type == DependenceType.DYNAMIC
    for fam_idx in np.unique(draws.families):
        fam = draws.family_set[fam_idx]
        rows = np.flatnonzero(draws.families == fam_idx)
        if fam.kind == "independence":
            out_a[rows] = rows_a[rows]
            out_b[rows] = rows_b[rows]
            continue
        if dynamic:
            taus = np.tanh(draws.states[rows][:, 1:])
        else:
            taus = np.tanh(draws.states[rows])[:, None]
        theta = tau_to_param(fam, taus)
        out_a[rows] = h_forward(fam, rows_a[rows], rows_b[rows], theta)
        out_b[rows] = h_backward(fam, rows_a[rows], rows_b[rows], theta)
    return out_a, out_b


def _edge_input_keys(e: Edge, prev_tree: list[Edge] | None):
    a, b = e.conditioned
    if e.level == 1:
        return (a, a), (b, b)
    i, j = e.nodes
    a_node = i if a in prev_tree[i].union else j
    b_node = j if a_node == i else i
    return (a_node, a), (b_node, b)


# ---------------------------------------------------------------------------
# per-edge sampling task (runs in a worker when parallel_edges is on)


def _run_edge_chains(u_a, u_b, cfg: SamplerConfig, entropy, run_dynamic: bool, run_static: bool):
    per_draw = u_a.ndim == 2
    ss = np.random.SeedSequence(entropy)
    dyn_ss, stat_ss = ss.spawn(2)
    u1_0 = u_a[0] if per_draw else u_a
    u2_0 = u_b[0] if per_draw else u_b
    T = u1_0.shape[0]
    R, k = cfg.R, cfg.k

    dyn_chain = (
        init_dynamic_chain(u1_0, u2_0, cfg, np.random.default_rng(dyn_ss)) if run_dynamic else None
    )
    stat_chain = (
        init_static_chain(u1_0, u2_0, cfg, np.random.default_rng(stat_ss)) if run_static else None
    )

    dyn_families = np.zeros(R, dtype=np.int64)
    dyn_states = np.empty((R, T + 1)) if run_dynamic else None
    dyn_hyper = np.empty((R, 3)) if run_dynamic else None
    dyn_loglik = np.empty((R, T)) if run_dynamic else None
    stat_families = np.zeros(R, dtype=np.int64)
    stat_states = np.empty(R) if run_static else None
    stat_loglik = np.empty((R, T)) if run_static else None

    cache = None
    for r in range(R):
        if per_draw:
            cache = PairCache(u_a[r], u_b[r], cfg.family_set)
        elif cache is None:
            cache = PairCache(u_a, u_b, cfg.family_set)
        if run_dynamic:
            dyn_chain, draw = resume_k_steps(dyn_chain, None, None, k, cache=cache)
            dyn_families[r], dyn_states[r], dyn_hyper[r], dyn_loglik[r] = draw
        if run_static:
            stat_chain, draw = resume_k_steps(stat_chain, None, None, k, cache=cache)
            stat_families[r], stat_states[r], _, stat_loglik[r] = draw

    draws_dyn = (
        BivariateDraws(True, list(cfg.family_set), dyn_families, dyn_states, dyn_hyper, dyn_loglik, dyn_chain)
        if run_dynamic
        else None
    )
    draws_stat = (
        BivariateDraws(False, list(cfg.family_set), stat_families, stat_states, None, stat_loglik, stat_chain)
        if run_static
        else None
    )
    return draws_dyn, draws_stat


def _edge_worker(payload):
    u_a, u_b, cfg, entropy, run_dynamic, run_static = payload
    return _run_edge_chains(u_a, u_b, cfg, entropy, run_dynamic, run_static)


def _select_edge_fit(
    edge: Edge,
    draws_dyn: BivariateDraws | None,
    draws_stat: BivariateDraws | None,
    burnin: int,
    kappa: float,
) -> EdgeFit:
    waic_dyn = estimate_waic(draws_dyn.loglik[burnin:]) if draws_dyn is not None else None
    waic_stat = estimate_waic(draws_stat.loglik[burnin:]) if draws_stat is not None else None
    dep = select_dependence(waic_dyn, waic_stat, kappa)
    if dep == DependenceType.DYNAMIC:
        draws = draws_dyn
    elif dep == DependenceType.STATIC:
        draws = draws_stat
    else:
        draws = None
    return EdgeFit(edge, dep, draws, waic_dyn, waic_stat)


# ---------------------------------------------------------------------------
# the sequential driver


def _mode_of_port(value: np.ndarray, burnin: int) -> np.ndarray:
    if value.ndim == 1:
        return value
    return posterior_mode_pseudo(value[burnin:])


def _sequential_fit(
    U: np.ndarray | None,
    ports: dict,
    d: int,
    T: int,
    config: FitConfig,
    edge_order: list[int] | None = None,
    train_data: np.ndarray | None = None,
) -> VineFitResult:
    cfg = config.sampler
    master = cfg.seed
    kappa = config.se_multiplier
    trunc = config.truncation_level or (d - 1)
    run_dyn_allowed = DependenceType.DYNAMIC in config.allowed_types
    run_stat_allowed = DependenceType.STATIC in config.allowed_types

    trees: list[list[Edge]] = []
    fits: list[list[EdgeFit]] = []
    seeds: dict[str, list[int]] = {}
    timings: list[float] = []

    pool = None
    if config.parallel_edges and (config.threads is None or config.threads > 1):
        pool = ProcessPoolExecutor(max_workers=config.threads)

    try:
        for level in range(1, d):
            t0 = time.perf_counter()
            prev_tree = trees[-1] if trees else None
            truncated = level > trunc

            # -- structure selection ------------------------------------
            if config.fixed_structure is not None:
                tree = list(config.fixed_structure.trees[level - 1])
            else:
                cands = allowed_edges(d, trees, level)
                n_nodes = d if level == 1 else len(prev_tree)
                if truncated:
                    weights = np.zeros(len(cands))
                elif level == 1 and U is not None:
                    weights = np.array(
                        [empirical_kendall_tau(U[:, e.conditioned[0]], U[:, e.conditioned[1]]) for e in cands]
                    )
                else:
                    mode_cache: dict = {}

                    def mode_port(key):
                        if key not in mode_cache:
                            mode_cache[key] = _mode_of_port(ports[key], cfg.burnin)
                        return mode_cache[key]

                    weights = np.empty(len(cands))
                    for ci, e in enumerate(cands):
                        ka, kb = _edge_input_keys(e, prev_tree)
                        weights[ci] = empirical_kendall_tau(mode_port(ka), mode_port(kb))
                chosen = select_tree(cands, weights, n_nodes, config.structure_class, level)
                tree = [cands[i] for i in chosen]
            trees.append(tree)

            # -- per-edge sampling and selection --------------------------
            level_fits: list[EdgeFit | None] = [None] * len(tree)
            if truncated:
                for idx, e in enumerate(tree):
                    level_fits[idx] = EdgeFit(e, DependenceType.ZERO, None, None, None)
            else:
                order = list(range(len(tree)))
                if edge_order is not None and level == 1:
                    order = list(edge_order)
                payloads = {}
                for idx in order:
                    e = tree[idx]
                    ka, kb = _edge_input_keys(e, prev_tree)
                    entropy = edge_seed_entropy(master, level, e.label)
                    seeds[e.label] = entropy
                    payloads[idx] = (
                        np.asarray(ports[ka]),
                        np.asarray(ports[kb]),
                        cfg,
                        entropy,
                        run_dyn_allowed,
                        run_stat_allowed,
                    )
                if pool is not None:
                    futures = {idx: pool.submit(_edge_worker, payloads[idx]) for idx in order}
                    results = {idx: fut.result() for idx, fut in futures.items()}
                else:
                    results = {idx: _edge_worker(payloads[idx]) for idx in order}
                for idx in order:
                    draws_dyn, draws_stat = results[idx]
                    level_fits[idx] = _select_edge_fit(tree[idx], draws_dyn, draws_stat, cfg.burnin, kappa)
            fits.append(level_fits)

            # -- pseudo data for the next tree ----------------------------
            if level < d - 1 and level < trunc:
                new_ports: dict = {}
                for idx, e in enumerate(tree):
                    ka, kb = _edge_input_keys(e, prev_tree)
                    out_a, out_b = propagate_pseudo(level_fits[idx], ports[ka], ports[kb])
                    a, b = e.conditioned
                    if out_a.ndim == 2:
                        out_a = _clip_warn(out_a, f"pseudo data after edge {e.label}")
                        out_b = _clip_warn(out_b, f"pseudo data after edge {e.label}")
                    new_ports[(idx, a)] = out_a
                    new_ports[(idx, b)] = out_b
                ports = new_ports
            timings.append(time.perf_counter() - t0)
    finally:
        if pool is not None:
            pool.shutdown()

    structure = RVineStructure(d, trees)
    problem = validate(structure)
    if problem is not None:  # pragma: no cover - selection always yields valid trees
        raise RuntimeError(f"selected structure failed validation: {problem}")
    return VineFitResult(structure, fits, config, T, seeds, timings, train_data)


def _validate_unit_matrix(U: np.ndarray, what: str) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if not np.all(np.isfinite(U)):
        raise ValueError(f"{what} contains non-finite values")
    if np.any(U < 0.0) or np.any(U > 1.0):
        raise ValueError(f"{what} values must lie in [0, 1]")
    return U


def fit(U, config: FitConfig, edge_order: list[int] | None = None) -> VineFitResult:
    """Fit a dynamic vine copula to a T x d matrix of copula-scale data.

    Runs structure selection tree by tree (unless a fixed structure is
    given), fits dynamic and static samplers per edge, selects the
    dependence type by WAIC, and propagates per-draw pseudo data upward.
    ``edge_order`` is a testing hook permuting tree-1 edge processing.
    """
    U = _validate_unit_matrix(U, "input data")
    if U.ndim != 2 or U.shape[1] < 2:
        raise ValueError("U must be a T x d matrix with d >= 2")
    T, d = U.shape
    if T < 50:
        warnings.warn("fewer than 50 observations: estimates will be unstable", RuntimeWarning)
    config.validate(d)
    ports = {(v, v): _clip_warn(U[:, v], f"margin {v + 1}") for v in range(d)}
    return _sequential_fit(U, ports, d, T, config, edge_order, train_data=U)


def fit_from_pseudo_collection(U_collection, config: FitConfig) -> VineFitResult:
    """Fit from a collection of R copula data sets (margin-uncertainty input).

    The r-th stored draw of every tree-1 edge conditions on the r-th member
    of the collection, so level 1 already uses the collapsed-Gibbs burst
    pattern; structure selection uses posterior-mode pseudo data throughout.
    """
    arrs = [np.asarray(a, dtype=float) for a in U_collection]
    if not arrs:
        raise ValueError("empty collection")
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise ValueError("ragged collection: all members must share one shape")
    stack = _validate_unit_matrix(np.stack(arrs), "collection data")
    R, T, d = stack.shape
    config.validate(d)
    if R != config.sampler.R:
        raise ValueError(f"collection size {R} must equal the stored-iteration count R={config.sampler.R}")
    ports = {
        (v, v): _clip_warn(np.ascontiguousarray(stack[:, :, v]), f"margin {v + 1}") for v in range(d)
    }
    mode_matrix = np.column_stack(
        [posterior_mode_pseudo(ports[(v, v)][config.sampler.burnin :]) for v in range(d)]
    )
    return _sequential_fit(None, ports, d, T, config, train_data=mode_matrix)


# ---------------------------------------------------------------------------
# point estimates and likelihood evaluation


@dataclass
class PointEdgeParams:
    """Marginal-posterior-mode summary of one edge (or true values of a spec)."""

    dep: DependenceType
    family: Family | None = None
    tau: float | np.ndarray | None = None
    hyper: tuple[float, float, float] | None = None


def point_estimates(result: VineFitResult) -> list[list[PointEdgeParams]]:
    """Per-edge marginal posterior modes: family, Kendall's tau (path), hypers."""
    burnin = result.config.sampler.burnin
    out: list[list[PointEdgeParams]] = []
    for level_fits in result.edge_fits:
        row = []
        for ef in level_fits:
            if ef.dep_type == DependenceType.ZERO:
                row.append(PointEdgeParams(DependenceType.ZERO))
                continue
            draws = ef.draws
            fam = draws.family_mode(burnin)
            if ef.dep_type == DependenceType.STATIC:
                tau = float(kde_mode_grid(np.tanh(draws.states[burnin:]), -1.0, 1.0))
                row.append(PointEdgeParams(DependenceType.STATIC, fam, tau))
            else:
                taus = np.tanh(draws.states[burnin:, 1:])
                tau_path = np.asarray(kde_mode_grid(taus, -1.0, 1.0))
                hyper = draws.hyper[burnin:]
                hyper_modes = tuple(
                    float(kde_mode_grid(hyper[:, i], float(hyper[:, i].min()) - 1e-6,
                                        float(hyper[:, i].max()) + 1e-6))
                    for i in range(3)
                )
                row.append(PointEdgeParams(DependenceType.DYNAMIC, fam, tau_path, hyper_modes))
        out.append(row)
    return out


def vine_point_walk(
    structure: RVineStructure,
    edge_params: list[list[PointEdgeParams]],
    U: np.ndarray,
    collect_inputs: bool = False,
):
    """Walk the vine at point parameters over a data matrix.

    Returns (per-time total log copula density, per-edge input pairs or None).
    """
    U = _validate_unit_matrix(U, "evaluation data")
    T, d = U.shape
    if d != structure.d:
        raise ValueError("data dimension does not match the structure")
    ll = np.zeros(T)
    inputs: dict | None = {} if collect_inputs else None
    ports = {(v, v): np.clip(U[:, v], U_EPS, 1.0 - U_EPS) for v in range(d)}
    for level, tree in enumerate(structure.trees, start=1):
        prev_tree = structure.trees[level - 2] if level >= 2 else None
        new_ports = {}
        for idx, e in enumerate(tree):
            ka, kb = _edge_input_keys(e, prev_tree)
            pa, pb = ports[ka], ports[kb]
            if collect_inputs:
                inputs[(level, idx)] = (pa, pb)
            pp = edge_params[level - 1][idx]
            a, b = e.conditioned
            if pp.dep == DependenceType.ZERO:
                out_a, out_b = pa, pb
            else:
                tau = pp.tau if np.ndim(pp.tau) == 0 else np.asarray(pp.tau)[:T]
                theta = tau_to_param(pp.family, tau)
                ll += log_density(pp.family, pa, pb, theta)
                out_a = h_forward(pp.family, pa, pb, theta)
                out_b = h_backward(pp.family, pa, pb, theta)
            new_ports[(idx, a)] = out_a
            new_ports[(idx, b)] = out_b
        ports = new_ports
    return ll, inputs


def eval_vine_pointwise(
    structure: RVineStructure, edge_params: list[list[PointEdgeParams]], U: np.ndarray
) -> np.ndarray:
    """Per-time total log copula density of a point-parameterized vine."""
    ll, _ = vine_point_walk(structure, edge_params, U)
    return ll


def loglik_at_point_estimates(result: VineFitResult, U) -> float:
    """Total log likelihood of the fitted vine at marginal posterior modes."""
    U = np.asarray(U, dtype=float)
    return float(eval_vine_pointwise(result.structure, point_estimates(result), U).sum())
