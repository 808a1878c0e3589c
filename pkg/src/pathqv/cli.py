"""Experiment runner: JSON-configured pipelines over paths and partitions.

Experiments carry too many parameters for flags, so every subcommand reads a
JSON config; flags are reserved for file paths, seed overrides and worker
count.  All randomness flows from explicit seeds in the config.  Exit codes:
0 all verdicts pass, 2 verdict failure, 1 usage or parameter error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from . import __version__, io
from .calculus import (
    follmer_integral,
    function_catalogue,
    ito_residual,
    local_time_discrete,
    occupation_check,
    tanaka_residual,
)
from .errors import ParameterError, PQVError
from .partitions import PartitionSequence, gen_dyadic, gen_kadic, gen_lebesgue, gen_random_balanced
from .paths import gen_brownian, gen_deterministic, gen_fbm, gen_mixed
from .quadvar import invariance_check, qv_level, qv_limit_diagnostic, qv_matrix
from .roughness import roughness_statistic, select_dyadic_subsequence


# ---------------------------------------------------------------------------
# config dataclasses
# ---------------------------------------------------------------------------

@dataclass
class PathConfig:
    kind: str = "brownian"
    seed: int = 0
    M: int = 12
    T: float = 1.0
    d: int = 1
    H: float | None = None
    delta: float | None = None
    params: dict = field(default_factory=dict)
    file: str | None = None


@dataclass
class PartitionConfig:
    generator: str = "dyadic"
    levels: list = field(default_factory=lambda: [4, 10])
    M: int = 12
    T: float = 1.0
    k: int = 2
    c_target: float = 3.0
    seed: int = 0
    lebesgue_n: int = 4


@dataclass
class AnalysisConfig:
    beta: float = 0.5
    kappa: float = 1.5
    tol: float | None = None
    target: float | None = None
    function: str = "square"
    fn_params: dict = field(default_factory=dict)
    h: float = 0.25
    u_points: int = 512
    balance_threshold: float = 8.0


@dataclass
class OutputConfig:
    dir: str = "."
    format: str = "csv"


_SECTIONS = {
    "path": PathConfig,
    "partition": PartitionConfig,
    "partition_b": PartitionConfig,
    "analysis": AnalysisConfig,
    "output": OutputConfig,
}
_TOP_KEYS = set(_SECTIONS) | {"experiment", "seeds"}


def _from_dict(cls, data, where: str):
    if not isinstance(data, dict):
        raise ParameterError(f"section {where!r} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ParameterError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**data)


def parse_config(doc: dict) -> dict:
    if not isinstance(doc, dict):
        raise ParameterError("config must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ParameterError(f"unknown top-level keys: {sorted(unknown)}")
    out = {}
    for key, cls in _SECTIONS.items():
        if key in doc:
            out[key] = _from_dict(cls, doc[key], key)
    if "experiment" in doc:
        if doc["experiment"] not in ("qv", "invariance", "integrate", "roughness"):
            raise ParameterError(f"unknown experiment {doc['experiment']!r}")
        out["experiment"] = doc["experiment"]
    if "seeds" in doc:
        seeds = doc["seeds"]
        if (not isinstance(seeds, list) or len(seeds) != 2
                or not all(isinstance(s, int) for s in seeds) or seeds[0] >= seeds[1]):
            raise ParameterError("seeds must be [lo, hi] with lo < hi")
        out["seeds"] = range(seeds[0], seeds[1])
    return out


def build_path(cfg: PathConfig, seed_override: int | None = None):
    if cfg.file:
        return io.read_path_binary(cfg.file)
    seed = cfg.seed if seed_override is None else seed_override
    if cfg.kind == "brownian":
        return gen_brownian(seed, cfg.M, cfg.T, cfg.d)
    if cfg.kind == "fbm":
        if cfg.H is None:
            raise ParameterError("fbm needs H")
        return gen_fbm(seed, cfg.M, cfg.T, cfg.H)
    if cfg.kind == "mixed":
        if cfg.H is None or cfg.delta is None:
            raise ParameterError("mixed needs H and delta")
        return gen_mixed(seed, cfg.M, cfg.T, cfg.H, cfg.delta)
    return gen_deterministic(cfg.kind, cfg.params, cfg.M, cfg.T, cfg.d)


def build_partitions(cfg: PartitionConfig, path=None) -> PartitionSequence:
    levels = cfg.levels
    if len(levels) == 2 and levels[0] <= levels[1]:
        levels = range(levels[0], levels[1] + 1)
    if cfg.generator == "dyadic":
        return gen_dyadic(levels, cfg.M, cfg.T)
    if cfg.generator == "kadic":
        return gen_kadic(cfg.k, levels, cfg.M, cfg.T)
    if cfg.generator == "random_balanced":
        return gen_random_balanced(cfg.seed, levels, cfg.M, cfg.T, cfg.c_target)
    if cfg.generator == "lebesgue":
        if path is None:
            raise ParameterError("lebesgue partitions need a path section")
        part = gen_lebesgue(path, cfg.lebesgue_n)
        return PartitionSequence((part,), (cfg.lebesgue_n,), "lebesgue")
    raise ParameterError(f"unknown partition generator {cfg.generator!r}")


# ---------------------------------------------------------------------------
# run report
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    command: str
    verdicts: dict
    tables: list
    timings: dict
    config: dict
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def write(self, out_dir: FsPath) -> FsPath:
        target = out_dir / "report.json"
        io.write_json(dataclasses.asdict(self), target)
        return target


def _finish(report: RunReport, out_dir: FsPath, quiet=False) -> int:
    target = report.write(out_dir)
    if not quiet:
        for name, ok in report.verdicts.items():
            print(f"[{report.command}] {name}: {'PASS' if ok else 'FAIL'}")
        print(f"[{report.command}] report: {target}")
    return 0 if report.passed else 2


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_path(cfg: dict, out_dir: FsPath, args) -> int:
    t0 = time.perf_counter()
    path = build_path(cfg["path"], args.seed)
    binfile = out_dir / "path.pqv"
    io.write_path_binary(path, str(binfile))
    tables = [str(binfile)]
    if cfg.get("output", OutputConfig()).format == "csv":
        csvfile = out_dir / "path.csv"
        io.write_path_csv(path, str(csvfile))
        tables.append(str(csvfile))
    rep = RunReport("gen-path", {"generated": True}, tables,
                    {"total_s": time.perf_counter() - t0}, _echo(cfg))
    return _finish(rep, out_dir)


def cmd_gen_partition(cfg: dict, out_dir: FsPath, args) -> int:
    t0 = time.perf_counter()
    path = build_path(cfg["path"], args.seed) if "path" in cfg else None
    seq = build_partitions(cfg["partition"], path)
    csvfile = out_dir / "partition.csv"
    sidecar = out_dir / "partition.json"
    io.write_partition_csv(seq, str(csvfile), str(sidecar))
    rep = RunReport("gen-partition", {"generated": True},
                    [str(csvfile), str(sidecar)],
                    {"total_s": time.perf_counter() - t0}, _echo(cfg))
    return _finish(rep, out_dir)


def cmd_qv(cfg: dict, out_dir: FsPath, args) -> int:
    t0 = time.perf_counter()
    path = build_path(cfg["path"], args.seed)
    seq = build_partitions(cfg["partition"], path)
    ana = cfg.get("analysis", AnalysisConfig())
    curves = []
    for n, part in zip(seq.level_ids, seq):
        curve = qv_matrix(path, part) if path.dim > 1 else qv_level(path, part)
        curves.append((n, curve))
    csvfile = out_dir / "qv.csv"
    io.write_qv_csv(curves, str(csvfile))
    verdicts = {"curves_written": True}
    if len(seq) >= 3:
        tol = ana.tol if ana.tol is not None else 0.05
        diag = qv_limit_diagnostic(path, seq, tol=tol)
        verdicts["cauchy_at_tol"] = diag.cauchy_at_tol
    rep = RunReport("qv", verdicts, [str(csvfile)],
                    {"total_s": time.perf_counter() - t0}, _echo(cfg))
    return _finish(rep, out_dir)


def cmd_roughness(cfg: dict, out_dir: FsPath, args) -> int:
    t0 = time.perf_counter()
    path = build_path(cfg["path"], args.seed)
    seq = build_partitions(cfg["partition"], path)
    ana = cfg.get("analysis", AnalysisConfig())
    M, T = seq.master_level, seq.horizon
    reference = gen_dyadic(range(min(seq.level_ids), M + 1), M, T)
    sel = select_dyadic_subsequence(seq, ana.beta, reference)
    records, max_gap = [], 0.0
    for n, l_n in zip(sel.level_ids, sel.l):
        stat = roughness_statistic(path, seq.level(n), reference.level(l_n),
                                   coarse_level=n, fine_level=l_n)
        records.append((n, path.meta.seed, stat))
        max_gap = max(max_gap, stat.decomposition_gap)
    csvfile = out_dir / "roughness.csv"
    io.write_roughness_csv(records, str(csvfile))
    verdicts = {
        "selection_sandwich": bool(all(sel.sandwich_ok)) if sel.sandwich_ok else True,
        "decomposition_identity": bool(max_gap < 1e-9),
    }
    rep = RunReport("roughness", verdicts, [str(csvfile)],
                    {"total_s": time.perf_counter() - t0}, _echo(cfg))
    return _finish(rep, out_dir)


def cmd_integrate(cfg: dict, out_dir: FsPath, args) -> int:
    t0 = time.perf_counter()
    path = build_path(cfg["path"], args.seed)
    seq = build_partitions(cfg["partition"], path)
    ana = cfg.get("analysis", AnalysisConfig())
    fn = function_catalogue(ana.function, **ana.fn_params)
    resid = ito_residual(path, fn, seq)
    csvfile = out_dir / "residual.csv"
    io.write_residual_csv(resid, str(csvfile))
    tol = ana.tol if ana.tol is not None else 0.02
    integrals = {
        str(n): follmer_integral(path, fn.f1, part, seq.horizon)
        for n, part in zip(seq.level_ids, seq)
    }
    io.write_json(integrals, out_dir / "integrals.json")
    verdicts = {"residual_sup_finest": bool(resid.sup[-1] < tol)}
    rep = RunReport("integrate", verdicts, [str(csvfile), str(out_dir / "integrals.json")],
                    {"total_s": time.perf_counter() - t0}, _echo(cfg))
    return _finish(rep, out_dir)


def cmd_localtime(cfg: dict, out_dir: FsPath, args) -> int:
    t0 = time.perf_counter()
    path = build_path(cfg["path"], args.seed)
    seq = build_partitions(cfg["partition"], path)
    ana = cfg.get("analysis", AnalysisConfig())
    part = seq.partitions[-1]
    from .calculus import default_u_grid

    u = default_u_grid(path, n_u=max(256, ana.u_points))
    t_top = seq.horizon
    field_ = local_time_discrete(path, part, t_grid=[t_top / 2, t_top], u_grid=u,
                                 level=seq.level_ids[-1])
    csvfile = out_dir / "localtime.csv"
    io.write_localtime_csv(field_, str(csvfile))
    occ = occupation_check(field_, path, part, [(0.0, np.inf)])
    qv_end = float(qv_level(path, part, [t_top]).values[-1])
    tent_gap = abs(float(field_.integrate()[-1]) - qv_end)
    tent_tol = 4.0 * part.n_intervals * field_.du**2 + 1e-12
    fn = function_catalogue(ana.function, **ana.fn_params)
    tanaka = tanaka_residual(path, fn, part, field_, t_top)
    verdicts = {
        "tent_identity": bool(tent_gap <= tent_tol),
        "occupation_factor_full": occ.matched[-1] == "full",
        "tanaka_small": bool(abs(tanaka) < (ana.tol if ana.tol is not None else 0.05)),
    }
    rep = RunReport("localtime", verdicts, [str(csvfile)],
                    {"total_s": time.perf_counter() - t0}, _echo(cfg))
    return _finish(rep, out_dir)


def cmd_invariance(cfg: dict, out_dir: FsPath, args) -> int:
    t0 = time.perf_counter()
    path = build_path(cfg["path"], args.seed)
    seq_a = build_partitions(cfg["partition"], path)
    seq_b = build_partitions(cfg["partition_b"], path)
    ana = cfg.get("analysis", AnalysisConfig())
    report = invariance_check(path, seq_a, seq_b, tol=ana.tol,
                              balance_threshold=ana.balance_threshold)
    out = {
        "pairs": [list(p) for p in report.pairs],
        "sup_distances": report.sup_distances.tolist(),
        "tol": report.tol,
        "passed": report.passed,
    }
    io.write_json(out, out_dir / "invariance.json")
    rep = RunReport("invariance", {"invariance": report.passed},
                    [str(out_dir / "invariance.json")],
                    {"total_s": time.perf_counter() - t0}, _echo(cfg))
    return _finish(rep, out_dir)


# --- Monte Carlo ------------------------------------------------------------

def _mc_single(experiment: str, seed: int, cfg: dict) -> dict:
    pcfg = cfg["path"]
    path = build_path(pcfg, seed)
    ana = cfg.get("analysis", AnalysisConfig())
    T = pcfg.T
    if experiment == "qv":
        seq = build_partitions(cfg["partition"], path)
        part = seq.partitions[-1]
        val = float(qv_level(path, part, [T]).values[-1])
        target = ana.target if ana.target is not None else T
        return {"qv_T": val, "abs_err": abs(val - target)}
    if experiment == "invariance":
        seq_a = build_partitions(cfg["partition"], path)
        seq_b = build_partitions(cfg["partition_b"], path)
        rep = invariance_check(path, seq_a, seq_b, tol=ana.tol,
                               balance_threshold=ana.balance_threshold)
        finest = int(np.argmin(rep.mesh_a))
        return {"sup_distance": float(rep.sup_distances[finest])}
    if experiment == "integrate":
        fn = function_catalogue(ana.function, **ana.fn_params)
        seq_a = build_partitions(cfg["partition"], path)
        out = {"integral_a": follmer_integral(path, fn.f1, seq_a.partitions[-1], T)}
        if "partition_b" in cfg:
            seq_b = build_partitions(cfg["partition_b"], path)
            out["integral_b"] = follmer_integral(path, fn.f1, seq_b.partitions[-1], T)
            out["abs_diff"] = abs(out["integral_a"] - out["integral_b"])
        resid = ito_residual(path, fn, seq_a)
        out["residual_sup"] = float(resid.sup[-1])
        return out
    if experiment == "roughness":
        seq = build_partitions(cfg["partition"], path)
        M = seq.master_level
        reference = gen_dyadic(range(min(seq.level_ids), M + 1), M, T)
        sel = select_dyadic_subsequence(seq, ana.beta, reference)
        out = {}
        for n, l_n in zip(sel.level_ids, sel.l):
            stat = roughness_statistic(path, seq.level(n), reference.level(l_n))
            out[f"S_{n}"] = stat.S
        return out
    raise ParameterError(f"unknown experiment {experiment!r}")


def _mc_task(payload):
    experiment, seed, doc = payload
    cfg = parse_config(json.loads(doc))
    return seed, _mc_single(experiment, seed, cfg)


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("PQV_WORKERS")
    if env:
        return max(1, int(env))
    return min(os.cpu_count() or 1, 8)


def cmd_mc(cfg: dict, out_dir: FsPath, args, raw_doc: dict) -> int:
    t0 = time.perf_counter()
    if "experiment" not in cfg or "seeds" not in cfg:
        raise ParameterError("mc needs 'experiment' and 'seeds' keys")
    experiment = cfg["experiment"]
    seeds = list(cfg["seeds"])
    doc = json.dumps(raw_doc)
    n_workers = _workers(args)
    payloads = [(experiment, s, doc) for s in seeds]
    if n_workers == 1 or len(seeds) == 1:
        results = [_mc_task(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_mc_task, payloads))
    results.sort(key=lambda r: r[0])  # deterministic reduction, ordered by seed

    keys = sorted(results[0][1])
    csvfile = out_dir / "mc.csv"
    with open(csvfile, "w") as fh:
        fh.write("seed," + ",".join(keys) + "\n")
        for seed, rec in results:
            fh.write(f"{seed}," + ",".join(io.fmt_float(rec[k]) for k in keys) + "\n")

    ana = cfg.get("analysis", AnalysisConfig())
    tol = ana.tol if ana.tol is not None else 0.05
    columns = {k: np.array([rec[k] for _, rec in results]) for k in keys}
    stats = {f"mean_{k}": float(v.mean()) for k, v in columns.items()}
    stats.update({f"median_{k}": float(np.median(v)) for k, v in columns.items()})
    verdicts = {}
    if experiment == "qv":
        verdicts["mean_abs_err_lt_tol"] = bool(columns["abs_err"].mean() < tol)
    elif experiment == "invariance":
        verdicts["median_sup_lt_tol"] = bool(np.median(columns["sup_distance"]) < tol)
    elif experiment == "integrate":
        if "abs_diff" in columns:
            verdicts["median_diff_lt_tol"] = bool(np.median(columns["abs_diff"]) < tol)
        verdicts["median_residual_lt_tol"] = bool(
            np.median(columns["residual_sup"]) < tol
        )
    elif experiment == "roughness":
        s_cols = sorted(k for k in keys if k.startswith("S_"))
        finest = columns[s_cols[-1]]
        verdicts["final_median_abs_S_lt_tol"] = bool(np.median(np.abs(finest)) < tol)
    io.write_json(stats, out_dir / "mc_stats.json")
    rep = RunReport("mc", verdicts, [str(csvfile), str(out_dir / "mc_stats.json")],
                    {"total_s": time.perf_counter() - t0, "workers": n_workers},
                    _echo(cfg))
    return _finish(rep, out_dir)


def cmd_report(args) -> int:
    with open(args.report) as fh:
        doc = json.load(fh)
    print(f"command: {doc.get('command')}  version: {doc.get('version')}")
    ok = True
    for name, verdict in doc.get("verdicts", {}).items():
        print(f"  {name}: {'PASS' if verdict else 'FAIL'}")
        ok &= bool(verdict)
    for table in doc.get("tables", []):
        print(f"  table: {table}")
    return 0 if ok else 2


def _echo(cfg: dict) -> dict:
    out = {}
    for key, val in cfg.items():
        if dataclasses.is_dataclass(val):
            out[key] = dataclasses.asdict(val)
        elif isinstance(val, range):
            out[key] = [val.start, val.stop]
        else:
            out[key] = val
    return out


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"malformed JSON config {path}: {exc}") from exc
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from exc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pqv",
        description="Quadratic variation, roughness and pathwise calculus pipelines",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = ("gen-path", "gen-partition", "qv", "roughness", "integrate",
                "localtime", "invariance", "mc")
    for name in commands:
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON config file")
        p.add_argument("--out-dir", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override path seed")
        p.add_argument("--workers", type=int, default=None,
                       help="worker count (also PQV_WORKERS)")
    p = sub.add_parser("report")
    p.add_argument("report", help="report.json produced by a previous run")

    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args)
        raw_doc = _load_config(args.config)
        cfg = parse_config(raw_doc)
        out = cfg.get("output", OutputConfig()).dir
        if args.out_dir is not None:
            out = args.out_dir
        out_dir = FsPath(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        dispatch = {
            "gen-path": cmd_gen_path,
            "gen-partition": cmd_gen_partition,
            "qv": cmd_qv,
            "roughness": cmd_roughness,
            "integrate": cmd_integrate,
            "localtime": cmd_localtime,
            "invariance": cmd_invariance,
        }
        if args.command == "mc":
            return cmd_mc(cfg, out_dir, args, raw_doc)
        return dispatch[args.command](cfg, out_dir, args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PQVError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
