"""Simulation-study runners: bivariate selection scenarios, the six-dimensional
vine recovery study, and the dynamic-vs-static forecasting comparison.

Every study derives per-replicate seed streams from (master seed, scenario,
replicate), so tables are reproducible and independent of worker scheduling.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bivariate import SamplerConfig, run_dynamic_sampler, run_static_sampler
from .families import Family
from .fit import FitConfig, VineFitResult, fit, loglik_at_point_estimates
from .selection import DependenceType, estimate_waic, select_dependence
from .simulate import EdgeSpec, ForecastConfig, GenerativeSpec, copula_plps, simulate
from .structure import RVineStructure, StructureClass

BIVARIATE_FAMILY_SET = [
    Family.independence(),
    Family.gaussian(),
    Family.student_t(4),
    Family.eclayton(),
    Family.egumbel(),
]

VINE_FAMILY_SET = [
    Family.independence(),
    Family.gaussian(),
    Family.student_t(2),
    Family.student_t(4),
    Family.student_t(8),
    Family.egumbel(),
    Family.eclayton(),
]

BIV_SCENARIOS: dict[str, EdgeSpec] = {
    "biv1": EdgeSpec(DependenceType.DYNAMIC, Family.gaussian(), mu=0.4, phi=0.95, sigma=0.1),
    "biv2": EdgeSpec(DependenceType.DYNAMIC, Family.eclayton(), mu=0.4, phi=0.8, sigma=0.2),
    "biv3": EdgeSpec(DependenceType.STATIC, Family.student_t(4), s=1.0),
    "biv4": EdgeSpec(DependenceType.STATIC, Family.egumbel(), s=0.4),
    "biv5": EdgeSpec(DependenceType.ZERO),
}

VINE_SCENARIOS = ("vine6_known", "vine6_selected", "vine6_cvine", "vine6_dvine")


def family_matches(truth: Family | None, selected: Family) -> bool:
    """Student t counts as correct regardless of df; otherwise exact match."""
    if truth is None:
        truth = Family.independence()
    if truth.kind == "student_t" and selected.kind == "student_t":
        return True
    return truth == selected


def bivariate_scenario_spec(name: str) -> GenerativeSpec:
    structure = RVineStructure.from_node_pairs(2, [[(0, 1)]])
    return GenerativeSpec(structure, [[BIV_SCENARIOS[name]]]).validate()


# ---------------------------------------------------------------------------
# bivariate selection study


@dataclass
class BivariateStudyResult:
    scenario: str
    reps: int
    type_counts: dict[str, int]
    family_counts: dict[str, int]
    type_correct: int
    family_correct: int


def _biv_task(payload):
    name, rep, T, sampler_cfg, entropy = payload
    ss = np.random.SeedSequence(entropy)
    data_ss, dyn_ss, stat_ss = ss.spawn(3)
    spec = bivariate_scenario_spec(name)
    data = simulate(spec, T, 1, np.random.default_rng(data_ss))[0]

    from .bivariate import init_dynamic_chain, init_static_chain

    u1, u2 = data[:, 0], data[:, 1]
    dyn = run_dynamic_sampler(
        data, sampler_cfg, init=init_dynamic_chain(u1, u2, sampler_cfg, np.random.default_rng(dyn_ss))
    )
    stat = run_static_sampler(
        data, sampler_cfg, init=init_static_chain(u1, u2, sampler_cfg, np.random.default_rng(stat_ss))
    )
    burnin = sampler_cfg.burnin
    waic_dyn = estimate_waic(dyn.loglik[burnin:])
    waic_stat = estimate_waic(stat.loglik[burnin:])
    dep = select_dependence(waic_dyn, waic_stat)
    if dep == DependenceType.DYNAMIC:
        fam = dyn.family_mode(burnin)
    elif dep == DependenceType.STATIC:
        fam = stat.family_mode(burnin)
    else:
        fam = Family.independence()
    return name, rep, dep.value, fam.label


def run_bivariate_study(
    reps: int,
    T: int = 1000,
    R: int = 1100,
    k: int = 25,
    burnin: int = 100,
    seed: int = 0,
    scenarios: tuple[str, ...] = tuple(BIV_SCENARIOS),
    threads: int | None = None,
) -> dict[str, BivariateStudyResult]:
    if reps < 1:
        raise ValueError("reps must be >= 1")
    cfg = SamplerConfig(R=R, k=k, burnin=burnin, family_set=list(BIVARIATE_FAMILY_SET))
    payloads = []
    for si, name in enumerate(scenarios):
        for rep in range(reps):
            payloads.append((name, rep, T, cfg, [seed, 1000 + si, rep]))
    rows = _run_tasks(_biv_task, payloads, threads)

    out: dict[str, BivariateStudyResult] = {}
    for name in scenarios:
        truth = BIV_SCENARIOS[name]
        truth_family = truth.family or Family.independence()
        type_counts: dict[str, int] = {}
        family_counts: dict[str, int] = {}
        t_ok = f_ok = 0
        for rname, _, dep, fam in rows:
            if rname != name:
                continue
            type_counts[dep] = type_counts.get(dep, 0) + 1
            family_counts[fam] = family_counts.get(fam, 0) + 1
            t_ok += dep == truth.dep.value
            f_ok += family_matches(truth_family, Family.parse(fam))
        out[name] = BivariateStudyResult(name, reps, type_counts, family_counts, t_ok, f_ok)
    return out


# ---------------------------------------------------------------------------
# six-dimensional vine study (tree structure, parameters from fixture matrices)

_VINE6_LABELS = [
    [((0, 1), ()), ((1, 5), ()), ((2, 5), ()), ((3, 5), ()), ((4, 5), ())],
    [((0, 5), (1,)), ((1, 4), (5,)), ((2, 4), (5,)), ((3, 4), (5,))],
    [((0, 4), (1, 5)), ((1, 3), (4, 5)), ((2, 3), (4, 5))],
    [((0, 3), (1, 4, 5)), ((1, 2), (3, 4, 5))],
    [((0, 2), (1, 3, 4, 5))],
]

# per tree, column-wise: (family, mu, phi, sigma); phi = sigma = 0 means static
_VINE6_PARAMS = [
    [
        ("gaussian", 0.9, 0.95, 0.10),
        ("student_t(4)", 0.6, 0.98, 0.03),
        ("eclayton", 0.8, 0.90, 0.05),
        ("egumbel", 0.8, 0.0, 0.0),
        ("gaussian", 1.0, 0.0, 0.0),
    ],
    [
        ("gaussian", 0.3, 0.98, 0.05),
        ("student_t(4)", 0.4, 0.90, 0.10),
        ("egumbel", 0.3, 0.0, 0.0),
        ("independence", 0.0, 0.0, 0.0),
    ],
    [
        ("independence", 0.0, 0.0, 0.0),
        ("eclayton", 0.3, 0.0, 0.0),
        ("independence", 0.0, 0.0, 0.0),
    ],
    [
        ("independence", 0.0, 0.0, 0.0),
        ("independence", 0.0, 0.0, 0.0),
    ],
    [("independence", 0.0, 0.0, 0.0)],
]


def vine6_structure() -> RVineStructure:
    return RVineStructure.from_edge_labels(6, _VINE6_LABELS)


def vine6_spec(T: int, seed: int = 12345) -> GenerativeSpec:
    """Six-dimensional truth with Kendall's tau trajectories frozen across reps."""
    structure = vine6_structure()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 6]))
    edges: list[list[EdgeSpec]] = []
    for level_params in _VINE6_PARAMS:
        row = []
        for fam_label, mu, phi, sigma in level_params:
            fam = Family.parse(fam_label)
            if fam.kind == "independence":
                row.append(EdgeSpec(DependenceType.ZERO))
            elif phi == 0.0 and sigma == 0.0:
                row.append(EdgeSpec(DependenceType.STATIC, fam, s=mu))
            else:
                from . import _kernels

                states = _kernels.ar1_path(rng.standard_normal(T + 1), mu, phi, sigma)
                row.append(
                    EdgeSpec(
                        DependenceType.DYNAMIC,
                        fam,
                        mu=mu,
                        phi=phi,
                        sigma=sigma,
                        tau_path=np.tanh(states[1:]),
                    )
                )
        edges.append(row)
    return GenerativeSpec(structure, edges).validate()


@dataclass
class VineStudyRep:
    rep: int
    loglik_fit: float
    loglik_true: float
    family_correct: list[list[bool]] | None
    type_correct: list[list[bool]] | None


@dataclass
class VineStudyResult:
    mode: str
    reps: list[VineStudyRep] = field(default_factory=list)

    @property
    def loglik_ratio(self) -> float:
        fit_sum = sum(r.loglik_fit for r in self.reps)
        true_sum = sum(r.loglik_true for r in self.reps)
        return fit_sum / true_sum

    def edge_family_rates(self) -> list[list[float]] | None:
        if not self.reps or self.reps[0].family_correct is None:
            return None
        out = []
        for lev in range(len(self.reps[0].family_correct)):
            n_edges = len(self.reps[0].family_correct[lev])
            out.append(
                [
                    float(np.mean([r.family_correct[lev][i] for r in self.reps]))
                    for i in range(n_edges)
                ]
            )
        return out

    def edge_type_rates(self) -> list[list[float]] | None:
        if not self.reps or self.reps[0].type_correct is None:
            return None
        out = []
        for lev in range(len(self.reps[0].type_correct)):
            n_edges = len(self.reps[0].type_correct[lev])
            out.append(
                [float(np.mean([r.type_correct[lev][i] for r in self.reps])) for i in range(n_edges)]
            )
        return out


def _vine_fit_config(mode: str, spec: GenerativeSpec, R, k, burnin, master_seed, rep) -> FitConfig:
    sampler = SamplerConfig(
        R=R, k=k, burnin=burnin, seed=master_seed * 100003 + rep, family_set=list(VINE_FAMILY_SET)
    )
    known = mode == "vine6_known"
    cls = StructureClass.GENERAL
    if mode == "vine6_cvine":
        cls = StructureClass.CVINE
    elif mode == "vine6_dvine":
        cls = StructureClass.DVINE
    return FitConfig(
        sampler=sampler,
        structure_class=cls,
        fixed_structure=spec.structure if known else None,
    )


def _vine_task(payload):
    mode, rep, T, R, k, burnin, seed, spec_dict = payload
    spec = GenerativeSpec.from_dict(spec_dict)
    data = simulate(spec, T, 1, np.random.default_rng(np.random.SeedSequence([seed, 42, rep])))[0]
    config = _vine_fit_config(mode, spec, R, k, burnin, seed, rep)
    result = fit(data, config)

    from .fit import eval_vine_pointwise
    from .simulate import spec_point_params

    ll_fit = loglik_at_point_estimates(result, data)
    ll_true = float(eval_vine_pointwise(spec.structure, spec_point_params(spec, T), data).sum())

    family_correct = type_correct = None
    if mode == "vine6_known":
        burn = config.sampler.burnin
        family_correct, type_correct = [], []
        for lev, (fits, especs) in enumerate(zip(result.edge_fits, spec.edges)):
            fr, tr = [], []
            for ef, es in zip(fits, especs):
                selected_family = (
                    ef.draws.family_mode(burn) if ef.draws is not None else Family.independence()
                )
                fr.append(family_matches(es.family, selected_family))
                tr.append(ef.dep_type == es.dep)
            family_correct.append(fr)
            type_correct.append(tr)
    return mode, rep, ll_fit, ll_true, family_correct, type_correct


def run_vine_study(
    mode: str,
    reps: int,
    T: int = 1000,
    R: int = 600,
    k: int = 25,
    burnin: int = 100,
    seed: int = 0,
    threads: int | None = None,
) -> VineStudyResult:
    if mode not in VINE_SCENARIOS:
        raise ValueError(f"unknown vine study mode {mode!r}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    spec = vine6_spec(T, seed=seed + 999)
    spec_dict = spec.to_dict()
    payloads = [(mode, rep, T, R, k, burnin, seed, spec_dict) for rep in range(reps)]
    rows = _run_tasks(_vine_task, payloads, threads)
    result = VineStudyResult(mode)
    for _, rep, ll_fit, ll_true, fam_ok, type_ok in sorted(rows, key=lambda r: r[1]):
        result.reps.append(VineStudyRep(rep, ll_fit, ll_true, fam_ok, type_ok))
    return result


# ---------------------------------------------------------------------------
# forecasting comparison: dynamic vine vs static-restricted vine


@dataclass
class ForecastRep:
    rep: int
    plps_dynamic: float
    plps_static: float


def _forecast_task(payload):
    rep, T_train, H, R, k, burnin, seed = payload
    spec = vine6_spec(T_train + H, seed=seed + 7000 + rep)
    data = simulate(
        spec, T_train + H, 1, np.random.default_rng(np.random.SeedSequence([seed, 55, rep]))
    )[0]
    train, test = data[:T_train], data[T_train:]

    base = SamplerConfig(
        R=R, k=k, burnin=burnin, seed=seed * 100003 + rep, family_set=list(VINE_FAMILY_SET)
    )
    dyn_fit = fit(train, FitConfig(sampler=base))
    stat_sampler = SamplerConfig(
        R=R, k=k, burnin=burnin, seed=seed * 100003 + 50000 + rep, family_set=list(VINE_FAMILY_SET)
    )
    stat_fit = fit(
        train,
        FitConfig(sampler=stat_sampler, allowed_types=(DependenceType.ZERO, DependenceType.STATIC)),
    )
    fc = ForecastConfig(seed=seed + rep)
    plps_dyn = copula_plps(dyn_fit, test, fc).cumulative
    plps_stat = copula_plps(stat_fit, test, fc).cumulative
    return rep, plps_dyn, plps_stat


def run_forecast_study(
    reps: int,
    T_train: int = 1000,
    H: int = 200,
    R: int = 600,
    k: int = 25,
    burnin: int = 100,
    seed: int = 0,
    threads: int | None = None,
) -> list[ForecastRep]:
    payloads = [(rep, T_train, H, R, k, burnin, seed) for rep in range(reps)]
    rows = _run_tasks(_forecast_task, payloads, threads)
    return [ForecastRep(*row) for row in sorted(rows, key=lambda r: r[0])]


# ---------------------------------------------------------------------------


def _run_tasks(worker, payloads, threads):
    if threads is not None and threads <= 1:
        return [worker(p) for p in payloads]
    max_workers = threads
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(worker, payloads))
