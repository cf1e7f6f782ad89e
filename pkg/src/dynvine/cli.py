"""Command-line front end: fit, simulate, forecast, study.

File formats
------------
- data matrices: headerless CSV, T rows x d columns, values in (0, 1);
  columns are variables 1..d.
- config, manifests, structures, generative specs: JSON.  Serialized
  variable indices are 1-based; in-memory indices are 0-based.
- structures additionally as a triangular-matrix text file (one row per
  line, 1-based variables, 0 padding).
- posterior draws: one flat little-endian binary file per edge plus a JSON
  sidecar describing array names, dtypes, shapes and byte offsets.

All randomness flows from one master seed; per-edge streams are derived by
hashing (seed, tree level, edge label), so outputs are byte-identical under
any thread count or edge ordering.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bivariate import BivariateDraws, SamplerConfig
from .families import Family
from .fit import EdgeFit, FitConfig, VineFitResult, fit, loglik_at_point_estimates
from .selection import DependenceType, estimate_waic, waic_diff_se
from .simulate import ForecastConfig, GenerativeSpec, copula_plps, cross_sectional_tau, simulate
from .structure import (
    RVineStructure,
    StructureClass,
    structure_from_dict,
    structure_matrix,
    structure_to_dict,
)
from . import studies


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# data and config I/O


def read_data_csv(path: str | Path) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise CliError(f"{path}: row {lineno} has {len(parts)} fields, expected {width}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise CliError(f"{path}: row {lineno}: {exc}") from None
            for col, v in enumerate(vals, start=1):
                if not np.isfinite(v) or v < 0.0 or v > 1.0:
                    raise CliError(
                        f"{path}: row {lineno}, column {col}: value {v} outside [0, 1]"
                    )
            rows.append(vals)
    if not rows:
        raise CliError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def write_data_csv(path: str | Path, data: np.ndarray) -> None:
    np.savetxt(path, np.asarray(data), delimiter=",", fmt="%.17g")


def _config_from_json(payload: dict, d_hint: int | None = None) -> FitConfig:
    sampler_keys = payload.get("sampler", {})
    family_labels = sampler_keys.get("family_set")
    sampler = SamplerConfig(
        R=int(sampler_keys.get("R", 1100)),
        k=int(sampler_keys.get("k", 25)),
        burnin=int(sampler_keys.get("burnin", 100)),
        seed=int(sampler_keys.get("seed", 0)),
        family_set=(
            [Family.parse(x) for x in family_labels]
            if family_labels
            else SamplerConfig().family_set
        ),
        adapt_target=float(sampler_keys.get("adapt_target", 0.44)),
    )
    allowed = payload.get("allowed_types")
    return FitConfig(
        sampler=sampler,
        structure_class=StructureClass(payload.get("structure_class", "general")),
        truncation_level=payload.get("truncation_level"),
        se_multiplier=float(payload.get("se_multiplier", 2.0)),
        parallel_edges=bool(payload.get("parallel_edges", False)),
        threads=payload.get("threads"),
        allowed_types=tuple(DependenceType(x) for x in allowed) if allowed else FitConfig().allowed_types,
    )


def _config_to_json(config: FitConfig) -> dict:
    return {
        "sampler": {
            "R": config.sampler.R,
            "k": config.sampler.k,
            "burnin": config.sampler.burnin,
            "seed": config.sampler.seed,
            "family_set": [f.label for f in config.sampler.family_set],
            "adapt_target": config.sampler.adapt_target,
        },
        "structure_class": config.structure_class.value,
        "truncation_level": config.truncation_level,
        "se_multiplier": config.se_multiplier,
        "parallel_edges": config.parallel_edges,
        "threads": config.threads,
        "allowed_types": [t.value for t in config.allowed_types],
    }


def write_structure_matrix_txt(path: str | Path, structure: RVineStructure) -> None:
    M, _ = structure_matrix(structure)
    out = np.where(M >= 0, M + 1, 0)
    with open(path, "w") as fh:
        for row in out:
            fh.write(" ".join(f"{v:d}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# draw persistence (flat binary + JSON sidecar)


def _save_draws(dirpath: Path, tag: str, draws: BivariateDraws, meta: dict) -> None:
    arrays = [("families", draws.families.astype("<i8"))]
    arrays.append(("states", draws.states.astype("<f8")))
    if draws.hyper is not None:
        arrays.append(("hyper", draws.hyper.astype("<f8")))
    arrays.append(("loglik", draws.loglik.astype("<f8")))
    offset = 0
    index = []
    blob = bytearray()
    for name, arr in arrays:
        raw = np.ascontiguousarray(arr).tobytes()
        index.append(
            {"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape), "offset": offset}
        )
        blob.extend(raw)
        offset += len(raw)
    (dirpath / f"{tag}.bin").write_bytes(bytes(blob))
    sidecar = dict(meta)
    sidecar["dynamic"] = draws.dynamic
    sidecar["family_set"] = [f.label for f in draws.family_set]
    sidecar["arrays"] = index
    (dirpath / f"{tag}.json").write_text(json.dumps(sidecar, indent=1))


def _load_draws(dirpath: Path, tag: str) -> tuple[BivariateDraws, dict]:
    sidecar = json.loads((dirpath / f"{tag}.json").read_text())
    blob = (dirpath / f"{tag}.bin").read_bytes()
    arrays = {}
    for entry in sidecar["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=start).reshape(shape)
        arrays[entry["name"]] = arr.copy()
    draws = BivariateDraws(
        dynamic=sidecar["dynamic"],
        family_set=[Family.parse(x) for x in sidecar["family_set"]],
        families=arrays["families"],
        states=arrays["states"],
        hyper=arrays.get("hyper"),
        loglik=arrays["loglik"],
        final_state=None,
    )
    return draws, sidecar


def save_fit(result: VineFitResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    edges_dir = out / "edges"
    edges_dir.mkdir(parents=True, exist_ok=True)
    (out / "structure.json").write_text(json.dumps(structure_to_dict(result.structure), indent=1))
    write_structure_matrix_txt(out / "structure_matrix.txt", result.structure)
    if result.train_data is not None:
        write_data_csv(out / "train_data.csv", result.train_data)

    waic_rows = ["tree,index,edge,dep_type,family_mode,waic_dynamic,waic_static,diff,se"]
    burnin = result.config.sampler.burnin
    edge_index = []
    for level, tree in enumerate(result.structure.trees, start=1):
        for idx, edge in enumerate(tree):
            ef = result.edge_fits[level - 1][idx]
            tag = f"T{level}_E{idx}"
            fam_mode = ef.draws.family_mode(burnin).label if ef.draws is not None else "independence"
            wd = f"{ef.waic_dyn.total:.6f}" if ef.waic_dyn is not None else ""
            ws = f"{ef.waic_stat.total:.6f}" if ef.waic_stat is not None else ""
            diff = se = ""
            if ef.waic_dyn is not None and ef.waic_stat is not None:
                dv, sv = waic_diff_se(ef.waic_dyn, ef.waic_stat)
                diff, se = f"{dv:.6f}", f"{sv:.6f}"
            waic_rows.append(
                f"{level},{idx},{edge.label},{ef.dep_type.value},{fam_mode},{wd},{ws},{diff},{se}"
            )
            entry = {
                "tree": level,
                "index": idx,
                "edge": edge.label,
                "dep_type": ef.dep_type.value,
            }
            if ef.draws is not None:
                _save_draws(edges_dir, tag, ef.draws, entry)
                entry["draws"] = f"edges/{tag}.bin"
            edge_index.append(entry)
    (out / "waic_table.csv").write_text("\n".join(waic_rows) + "\n")
    manifest = {
        "version": __version__,
        "command": "fit",
        "config": _config_to_json(result.config),
        "master_seed": result.config.sampler.seed,
        "edge_seeds": result.edge_seeds,
        "edges": edge_index,
        "T": result.T,
        "timings_per_tree": result.timings,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))


def load_fit(fit_dir: str | Path) -> VineFitResult:
    out = Path(fit_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    structure = structure_from_dict(json.loads((out / "structure.json").read_text()))
    config = _config_from_json(manifest["config"])
    burnin = config.sampler.burnin
    fits: list[list[EdgeFit | None]] = [[None] * len(tree) for tree in structure.trees]
    for entry in manifest["edges"]:
        level, idx = entry["tree"], entry["index"]
        edge = structure.trees[level - 1][idx]
        dep = DependenceType(entry["dep_type"])
        draws = None
        waic_dyn = waic_stat = None
        if "draws" in entry:
            draws, _ = _load_draws(out / "edges", f"T{level}_E{idx}")
            waic = estimate_waic(draws.loglik[burnin:])
            if dep == DependenceType.DYNAMIC:
                waic_dyn = waic
            else:
                waic_stat = waic
        fits[level - 1][idx] = EdgeFit(edge, dep, draws, waic_dyn, waic_stat)
    train = None
    if (out / "train_data.csv").exists():
        train = read_data_csv(out / "train_data.csv")
    return VineFitResult(
        structure=structure,
        edge_fits=fits,
        config=config,
        T=manifest["T"],
        edge_seeds=manifest["edge_seeds"],
        timings=manifest["timings_per_tree"],
        train_data=train,
    )


# ---------------------------------------------------------------------------
# commands


def _default_threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("DYNVINE_THREADS")
    return int(env) if env else None


def cmd_fit(args) -> int:
    data = read_data_csv(args.input)
    if args.config:
        config = _config_from_json(json.loads(Path(args.config).read_text()))
    else:
        config = FitConfig()
    if args.R is not None:
        config.sampler.R = args.R
    if args.k is not None:
        config.sampler.k = args.k
    if args.burnin is not None:
        config.sampler.burnin = args.burnin
    if args.seed is not None:
        config.sampler.seed = args.seed
    if args.families:
        config.sampler.family_set = [Family.parse(x) for x in args.families.split(",")]
    if args.structure_class:
        config.structure_class = StructureClass(args.structure_class)
    if args.truncate is not None:
        config.truncation_level = args.truncate
    if args.se_mult is not None:
        config.se_multiplier = args.se_mult
    threads = _default_threads(args)
    if threads is not None and threads > 1:
        config.parallel_edges = True
        config.threads = threads
    t0 = time.perf_counter()
    result = fit(data, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_fit(result, out)
    summary = {
        "loglik_at_point_estimates": loglik_at_point_estimates(result, data),
        "wall_seconds": time.perf_counter() - t0,
    }
    (out / "fit_summary.json").write_text(json.dumps(summary, indent=1))
    print(f"fit written to {out}")
    return 0


def cmd_simulate(args) -> int:
    spec = GenerativeSpec.from_dict(json.loads(Path(args.spec).read_text()))
    rng = np.random.default_rng(args.seed or 0)
    samples = simulate(spec, args.T, args.n_reps, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "samples.npy", samples)
    if args.n_reps == 1:
        write_data_csv(out / "samples.csv", samples[0])
    if args.n_reps >= 2:
        d = spec.structure.d
        rows = ["i,j,t,tau"]
        for i in range(d):
            for j in range(i + 1, d):
                taus = cross_sectional_tau(samples, (i, j))
                rows.extend(
                    f"{i + 1},{j + 1},{t + 1},{tau:.6f}" for t, tau in enumerate(taus)
                )
        (out / "cross_sectional_tau.csv").write_text("\n".join(rows) + "\n")
    manifest = {
        "version": __version__,
        "command": "simulate",
        "spec": str(args.spec),
        "T": args.T,
        "n_reps": args.n_reps,
        "seed": args.seed or 0,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    print(f"simulation written to {out}")
    return 0


def cmd_forecast(args) -> int:
    result = load_fit(args.fit)
    new_data = read_data_csv(args.input)
    plps = copula_plps(result, new_data, ForecastConfig(seed=args.seed or 0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["step,plps,cumulative"]
    cum = 0.0
    for h, val in enumerate(plps.per_step, start=1):
        cum += val
        rows.append(f"{h},{val:.8f},{cum:.8f}")
    (out / "plps.csv").write_text("\n".join(rows) + "\n")
    manifest = {
        "version": __version__,
        "command": "forecast",
        "fit_dir": str(args.fit),
        "steps": len(plps.per_step),
        "cumulative_plps": plps.cumulative,
        "seed": args.seed or 0,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    print(f"cumulative copula plps: {plps.cumulative:.4f}")
    return 0


def cmd_study(args) -> int:
    if args.reps < 1:
        raise CliError("reps must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = _default_threads(args)
    seed = args.seed or 0
    name = args.scenario
    if name.startswith("biv"):
        res = studies.run_bivariate_study(
            reps=args.reps,
            T=args.T,
            R=args.R or 1100,
            k=args.k or 25,
            burnin=args.burnin or 100,
            seed=seed,
            scenarios=(name,),
            threads=threads,
        )[name]
        rows = ["scenario,reps,type_correct,family_correct,type_counts,family_counts"]
        rows.append(
            f"{name},{res.reps},{res.type_correct},{res.family_correct},"
            f"\"{json.dumps(res.type_counts)}\",\"{json.dumps(res.family_counts)}\""
        )
        (out / "selection_rates.csv").write_text("\n".join(rows) + "\n")
    elif name in studies.VINE_SCENARIOS:
        res = studies.run_vine_study(
            mode=name,
            reps=args.reps,
            T=args.T,
            R=args.R or 600,
            k=args.k or 25,
            burnin=args.burnin or 100,
            seed=seed,
            threads=threads,
        )
        rows = ["rep,loglik_fit,loglik_true,ratio"]
        for rep in res.reps:
            rows.append(
                f"{rep.rep},{rep.loglik_fit:.4f},{rep.loglik_true:.4f},"
                f"{rep.loglik_fit / rep.loglik_true:.4f}"
            )
        rows.append(f"mean,,,{res.loglik_ratio:.4f}")
        (out / "loglik_ratios.csv").write_text("\n".join(rows) + "\n")
        fam = res.edge_family_rates()
        if fam is not None:
            rows = ["tree,edge,family_rate,type_rate"]
            typ = res.edge_type_rates()
            for lev, rates in enumerate(fam, start=1):
                for i, r in enumerate(rates):
                    rows.append(f"{lev},{i},{r:.3f},{typ[lev - 1][i]:.3f}")
            (out / "selection_rates.csv").write_text("\n".join(rows) + "\n")
    else:
        raise CliError(f"unknown scenario {name!r}")
    manifest = {
        "version": __version__,
        "command": "study",
        "scenario": name,
        "reps": args.reps,
        "seed": seed,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    print(f"study results written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynvine", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a dynamic vine copula to copula-scale data")
    f.add_argument("--input", required=True)
    f.add_argument("--config")
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int)
    f.add_argument("--threads", type=int)
    f.add_argument("--R", type=int)
    f.add_argument("--k", type=int)
    f.add_argument("--burnin", type=int)
    f.add_argument("--families")
    f.add_argument("--structure-class", choices=[c.value for c in StructureClass])
    f.add_argument("--truncate", type=int)
    f.add_argument("--se-mult", type=float)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="simulate from a generative vine spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--n-reps", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    fc = sub.add_parser("forecast", help="one-step-ahead copula plps from a fit")
    fc.add_argument("--fit", required=True)
    fc.add_argument("--input", required=True)
    fc.add_argument("--seed", type=int)
    fc.add_argument("--out", required=True)
    fc.set_defaults(func=cmd_forecast)

    st = sub.add_parser("study", help="run a named simulation study")
    st.add_argument("--scenario", required=True)
    st.add_argument("--reps", type=int, required=True)
    st.add_argument("--T", type=int, default=1000)
    st.add_argument("--R", type=int)
    st.add_argument("--k", type=int)
    st.add_argument("--burnin", type=int)
    st.add_argument("--seed", type=int)
    st.add_argument("--threads", type=int)
    st.add_argument("--out", required=True)
    st.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
