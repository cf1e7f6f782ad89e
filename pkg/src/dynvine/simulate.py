"""Simulation from dynamic vine copulas and one-step-ahead copula scores.

Sampling uses the inverse Rosenblatt transform in the natural order given by
the triangular-matrix form of the tree sequence; conditional CDF values are
resolved lazily through the vine's h-function recursion and memoized per
replicate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ar1 import Ar1Params
from .bivariate import PairCache, _ess_update
from .families import (
    Family,
    h_backward,
    h_backward_inverse,
    h_forward,
    h_forward_inverse,
    log_density,
    tau_to_param,
)
from .fit import PointEdgeParams, VineFitResult, point_estimates, _edge_input_keys
from .selection import DependenceType
from .structure import RVineStructure, structure_from_dict, structure_matrix, structure_to_dict


@dataclass
class EdgeSpec:
    """Generative settings of one pair copula.

    Dynamic edges carry AR(1) parameters (and optionally a fixed Kendall's
    tau path that overrides fresh AR draws); static edges carry the scalar
    Fisher's-Z state.
    """

    dep: DependenceType
    family: Family | None = None
    mu: float | None = None
    phi: float | None = None
    sigma: float | None = None
    s: float | None = None
    tau_path: np.ndarray | None = None

    def validate(self) -> "EdgeSpec":
        if self.dep == DependenceType.ZERO:
            return self
        if self.family is None or self.family.kind == "independence":
            raise ValueError("non-zero edges need a non-independence family")
        if self.dep == DependenceType.DYNAMIC:
            if self.tau_path is None and None in (self.mu, self.phi, self.sigma):
                raise ValueError("dynamic edges need (mu, phi, sigma) or a fixed tau path")
        elif self.s is None:
            raise ValueError("static edges need the scalar state s")
        return self


@dataclass
class GenerativeSpec:
    """A fully specified dynamic vine copula (truth for simulation studies)."""

    structure: RVineStructure
    edges: list[list[EdgeSpec]]

    def validate(self) -> "GenerativeSpec":
        if len(self.edges) != len(self.structure.trees):
            raise ValueError("edge settings must cover every tree")
        for tree, especs in zip(self.structure.trees, self.edges):
            if len(tree) != len(especs):
                raise ValueError("edge settings must cover every edge")
            for es in especs:
                es.validate()
        return self

    def to_dict(self) -> dict:
        edges = []
        for level, especs in enumerate(self.edges, start=1):
            for idx, es in enumerate(especs):
                entry = {"tree": level, "index": idx, "dep": es.dep.value}
                if es.family is not None:
                    entry["family"] = es.family.label
                for name in ("mu", "phi", "sigma", "s"):
                    val = getattr(es, name)
                    if val is not None:
                        entry[name] = val
                if es.tau_path is not None:
                    entry["tau_path"] = list(np.asarray(es.tau_path, dtype=float))
                edges.append(entry)
        return {"structure": structure_to_dict(self.structure), "edges": edges}

    @classmethod
    def from_dict(cls, payload: dict) -> "GenerativeSpec":
        structure = structure_from_dict(payload["structure"])
        edges: list[list[EdgeSpec]] = [
            [None] * len(tree) for tree in structure.trees
        ]
        for entry in payload["edges"]:
            es = EdgeSpec(
                dep=DependenceType(entry["dep"]),
                family=Family.parse(entry["family"]) if "family" in entry else None,
                mu=entry.get("mu"),
                phi=entry.get("phi"),
                sigma=entry.get("sigma"),
                s=entry.get("s"),
                tau_path=np.asarray(entry["tau_path"], dtype=float) if "tau_path" in entry else None,
            )
            edges[entry["tree"] - 1][entry["index"]] = es
        out = cls(structure, edges)
        return out.validate()


def spec_point_params(spec: GenerativeSpec, T: int) -> list[list[PointEdgeParams]]:
    """True per-edge parameters in the evaluator's format (fixed paths required)."""
    rows: list[list[PointEdgeParams]] = []
    for especs in spec.edges:
        row = []
        for es in especs:
            if es.dep == DependenceType.ZERO:
                row.append(PointEdgeParams(DependenceType.ZERO))
            elif es.dep == DependenceType.STATIC:
                row.append(PointEdgeParams(DependenceType.STATIC, es.family, math.tanh(es.s)))
            else:
                if es.tau_path is None:
                    raise ValueError("true likelihood needs fixed tau paths on dynamic edges")
                row.append(
                    PointEdgeParams(DependenceType.DYNAMIC, es.family, np.asarray(es.tau_path)[:T])
                )
            continue
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# inverse-Rosenblatt sampling


def _edge_tau(es: EdgeSpec, T: int, rng: np.random.Generator):
    """Kendall's tau for one edge and replicate: None (zero), scalar, or (T,)."""
    if es.dep == DependenceType.ZERO:
        return None
    if es.dep == DependenceType.STATIC:
        return math.tanh(es.s)
    if es.tau_path is not None:
        path = np.asarray(es.tau_path, dtype=float)
        if path.shape[0] < T:
            raise ValueError("fixed tau path is shorter than the requested horizon")
        return path[:T]
    params = Ar1Params(es.mu, es.phi, es.sigma).validate()
    from . import _kernels

    states = _kernels.ar1_path(rng.standard_normal(T + 1), params.mu, params.phi, params.sigma)
    return np.tanh(states[1:])


class _CondValues:
    """Memoized conditional CDF values F(u_var | u_cond) for one replicate."""

    def __init__(self, structure: RVineStructure, taus: dict, edges: list[list[EdgeSpec]]):
        self.structure = structure
        self.taus = taus
        self.edges = edges
        self.values: dict = {}
        self.producer: dict = {}
        for level, tree in enumerate(structure.trees, start=1):
            for idx, e in enumerate(tree):
                a, b = e.conditioned
                cond = frozenset(e.conditioning)
                self.producer[(a, cond | {b})] = (level, idx, "fwd")
                self.producer[(b, cond | {a})] = (level, idx, "bwd")

    def seed(self, var: int, values: np.ndarray) -> None:
        self.values[(var, frozenset())] = values

    def put(self, var: int, cond: frozenset, values: np.ndarray) -> None:
        self.values[(var, cond)] = values

    def get(self, var: int, cond: frozenset) -> np.ndarray:
        key = (var, cond)
        if key in self.values:
            return self.values[key]
        if key not in self.producer:
            raise RuntimeError(f"no edge produces the conditional value {key}")
        level, idx, direction = self.producer[key]
        e = self.structure.trees[level - 1][idx]
        d_set = frozenset(e.conditioning)
        va = self.get(e.conditioned[0], d_set)
        vb = self.get(e.conditioned[1], d_set)
        tau = self.taus[(level, idx)]
        if tau is None:
            out = va if direction == "fwd" else vb
        else:
            es = self.edges[level - 1][idx]
            theta = tau_to_param(es.family, tau)
            if direction == "fwd":
                out = h_forward(es.family, va, vb, theta)
            else:
                out = h_backward(es.family, va, vb, theta)
        self.values[key] = out
        return out


def _simulate_rep(spec: GenerativeSpec, T: int, rng: np.random.Generator, M, positions) -> np.ndarray:
    d = spec.structure.d
    taus = {}
    for level, especs in enumerate(spec.edges, start=1):
        for idx, es in enumerate(especs):
            taus[(level, idx)] = _edge_tau(es, T, rng)
    w = rng.random((d, T))
    cv = _CondValues(spec.structure, taus, spec.edges)
    out = np.empty((T, d))
    for j in range(d - 1, -1, -1):
        x = int(M[j, j])
        if j == d - 1:
            out[:, x] = w[j]
            cv.seed(x, w[j])
            continue
        z = w[j]
        for i in range(j + 1, d):
            partner = int(M[i, j])
            below = frozenset(int(M[r, j]) for r in range(i + 1, d))
            level, idx = positions[j][i - j - 1]
            e = spec.structure.trees[level - 1][idx]
            cv.put(x, below | {partner}, z)
            tau = taus[(level, idx)]
            if tau is None:
                continue
            partner_val = cv.get(partner, below)
            es = spec.edges[level - 1][idx]
            theta = tau_to_param(es.family, tau)
            if x == e.conditioned[0]:
                z = h_forward_inverse(es.family, z, partner_val, theta)
            else:
                z = h_backward_inverse(es.family, z, partner_val, theta)
        out[:, x] = z
        cv.seed(x, z)
    return out


def simulate(spec: GenerativeSpec, T: int, n_reps: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n_reps series of length T from the vine; returns (n_reps, T, d).

    Dynamic edges draw a fresh AR(1) Kendall's tau trajectory per replicate
    unless the spec pins a fixed path.
    """
    spec.validate()
    M, positions = structure_matrix(spec.structure)
    out = np.empty((n_reps, T, spec.structure.d))
    for r in range(n_reps):
        out[r] = _simulate_rep(spec, T, rng, M, positions)
    return out


def cross_sectional_tau(samples: np.ndarray, pair: tuple[int, int]) -> np.ndarray:
    """Empirical Kendall's tau across replicates, per time point."""
    from .structure import empirical_kendall_tau

    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3 or samples.shape[0] < 2:
        raise ValueError("samples must be (n_reps, T, d) with n_reps >= 2")
    i, j = pair
    T = samples.shape[1]
    return np.array(
        [empirical_kendall_tau(samples[:, t, i], samples[:, t, j]) for t in range(T)]
    )


# ---------------------------------------------------------------------------
# one-step-ahead copula pseudo log predictive scores


@dataclass
class ForecastConfig:
    """Forecast updating policy: static parameters frozen at posterior modes,
    dynamic state trajectories extended and refreshed by a few ESS sweeps."""

    update_sweeps: int = 10
    seed: int = 0


@dataclass
class PlpsResult:
    per_step: np.ndarray
    per_edge: dict = field(default_factory=dict)

    @property
    def cumulative(self) -> float:
        return float(self.per_step.sum())


def _walk_new_row(structure, params, hist, row):
    """Transform one new observation through the vine at point parameters.

    Returns the copula log-density contribution and appends the new pseudo
    data to each edge's history.
    """
    d = structure.d
    ports = {(v, v): float(np.clip(row[v], 1e-10, 1 - 1e-10)) for v in range(d)}
    contrib = 0.0
    per_edge = {}
    for level, tree in enumerate(structure.trees, start=1):
        prev_tree = structure.trees[level - 2] if level >= 2 else None
        new_ports = {}
        for idx, e in enumerate(tree):
            ka, kb = _edge_input_keys(e, prev_tree)
            pa, pb = ports[ka], ports[kb]
            pp = params[level - 1][idx]
            a, b = e.conditioned
            hist[(level, idx)][0].append(pa)
            hist[(level, idx)][1].append(pb)
            if pp.dep == DependenceType.ZERO:
                out_a, out_b = pa, pb
            else:
                tau = pp.tau if np.ndim(pp.tau) == 0 else float(pp.tau[-1])
                theta = tau_to_param(pp.family, tau)
                ll = float(log_density(pp.family, pa, pb, theta))
                contrib += ll
                per_edge[(level, idx)] = ll
                out_a = float(h_forward(pp.family, pa, pb, theta))
                out_b = float(h_backward(pp.family, pa, pb, theta))
            new_ports[(idx, a)] = out_a
            new_ports[(idx, b)] = out_b
        ports = new_ports
    return contrib, per_edge


def copula_plps(
    result: VineFitResult, new_data, config: ForecastConfig | None = None
) -> PlpsResult:
    """Cumulative one-step-ahead copula log predictive scores at point estimates.

    Families, static states and AR(1) hyperparameters stay frozen at their
    marginal posterior modes.  Before scoring step t, each dynamic edge's
    state trajectory is extended by its AR(1) conditional mean and refreshed
    with a few elliptical slice sweeps conditioning on data up to t-1.
    """
    config = config or ForecastConfig()
    new_data = np.asarray(new_data, dtype=float)
    if new_data.ndim != 2 or new_data.shape[1] != result.structure.d:
        raise ValueError("new data must be H x d on the copula scale")
    if result.train_data is None:
        raise ValueError("forecasting needs the training data recorded on the fit result")
    params = point_estimates(result)
    structure = result.structure
    rng = np.random.default_rng(config.seed)

    # per-edge pseudo-data histories at point estimates (training period)
    from .fit import vine_point_walk

    _, train_inputs = vine_point_walk(structure, params, result.train_data, collect_inputs=True)
    hist: dict = {key: [list(ua), list(ub)] for key, (ua, ub) in train_inputs.items()}

    # dynamic edges: state trajectories (Fisher's Z) anchored at tau modes
    state: dict = {}
    for level, tree in enumerate(structure.trees, start=1):
        for idx, pp in enumerate(params[level - 1]):
            if pp.dep == DependenceType.DYNAMIC:
                s_path = np.arctanh(np.clip(pp.tau, -1 + 1e-9, 1 - 1e-9))
                traj = np.concatenate([[s_path[0]], s_path])
                state[(level, idx)] = traj

    H = new_data.shape[0]
    per_step = np.empty(H)
    per_edge_totals: dict = {}
    for h in range(H):
        for key, traj in state.items():
            level, idx = key
            pp = params[level - 1][idx]
            mu, phi, sigma = pp.hyper
            arp = Ar1Params(mu, min(max(phi, -0.999999), 0.999999), max(sigma, 1e-8))
            new_state = mu + arp.phi * (traj[-1] - mu)
            traj = np.append(traj, new_state)
            ua = np.asarray(hist[key][0])
            ub = np.asarray(hist[key][1])
            cache = PairCache(ua, ub, [pp.family])

            def loglik(tr):
                return cache.loglik_sum(0, np.ascontiguousarray(np.tanh(tr[1 : ua.shape[0] + 1])))

            prev_vals = []
            for _ in range(config.update_sweeps):
                traj = _ess_update(traj, arp, loglik, rng)
                prev_vals.append(traj[-2])
            traj[-1] = mu + arp.phi * (float(np.mean(prev_vals)) - mu)
            state[key] = traj
            pp.tau = np.append(pp.tau, math.tanh(traj[-1]))
        contrib, per_edge = _walk_new_row(structure, params, hist, new_data[h])
        per_step[h] = contrib
        for k, v in per_edge.items():
            per_edge_totals[k] = per_edge_totals.get(k, 0.0) + v
    return PlpsResult(per_step=per_step, per_edge=per_edge_totals)
