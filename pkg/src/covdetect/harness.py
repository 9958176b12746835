"""Monte-Carlo experiment runner.

Every trial draws one instance and runs each selected solver on that same
instance; only the solver call is timed.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import jsonschema
import numpy as np

from . import detection, model, solvers

log = logging.getLogger(__name__)

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "N": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "K_ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "Q": {"type": "integer", "minimum": 1},
        "L": {"type": "integer", "minimum": 1},
        "M": {"type": "integer", "minimum": 1},
        "g": {"type": ["number", "null"], "minimum": 0},
        "sigma_w_sq": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "distance_m": {"type": "number", "exclusiveMinimum": 0},
        "solvers": {"type": "array", "items": {"enum": list(solvers.SOLVERS)}, "minItems": 1},
        "trials": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "max_outer": {"type": "integer", "minimum": 1},
        "max_sweeps": {"type": "integer", "minimum": 1},
        "threshold_factor": {"type": "number", "minimum": 0},
        "pg": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number"} for k in
                           ("alpha_min", "alpha_max", "window", "delta", "shrink", "max_inner")},
        },
        "workers": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
        "formats": {"type": "array", "items": {"enum": ["csv", "json"]}, "minItems": 1},
    },
}


@dataclass
class ExperimentConfig:
    """Sweep over device counts N with K = round(K_ratio * N).

    When ``g`` and ``sigma_w_sq`` are both None the cell-edge link budget at
    ``distance_m`` is used, expressed in noise-normalized units.
    """

    N: list[int] = field(default_factory=lambda: [200])
    K_ratio: float = 0.1
    Q: int = 2
    L: int = 50
    M: int = 256
    g: float | None = None
    sigma_w_sq: float | None = None
    distance_m: float = 1000.0
    solvers: list[str] = field(default_factory=lambda: ["active_set_pg", "cd"])
    trials: int = 10
    master_seed: int = 0
    eps: float = 1e-3
    max_outer: int = 50
    max_sweeps: int = 500
    threshold_factor: float = 0.5
    pg: dict = field(default_factory=dict)
    workers: int = 1
    output_dir: str = "results"
    formats: list[str] = field(default_factory=lambda: ["csv"])

    def __post_init__(self):
        jsonschema.validate(self.to_dict(), CONFIG_SCHEMA)
        if (self.g is None) != (self.sigma_w_sq is None):
            raise ValueError("give both g and sigma_w_sq, or neither")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        jsonschema.validate(d, CONFIG_SCHEMA)
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def link(self) -> tuple[float, float]:
        if self.g is not None:
            return float(self.g), float(self.sigma_w_sq)
        return model.cell_edge_link_budget(self.distance_m)

    def system(self, N: int, seed=0) -> model.SystemConfig:
        g, s2 = self.link()
        return model.SystemConfig(N=N, Q=self.Q, L=self.L, M=self.M,
                                  K=int(round(self.K_ratio * N)), sigma_w_sq=s2, g=g, seed=seed)

    def pg_config(self) -> solvers.PgConfig:
        kw = dict(self.pg)
        for key in ("window", "max_inner"):
            if key in kw:
                kw[key] = int(kw[key])
        return solvers.PgConfig(**kw)

    def schedule(self) -> solvers.ActiveSetSchedule:
        return solvers.ActiveSetSchedule(eps=self.eps, max_outer=self.max_outer)


PRESETS = {
    "desk": dict(N=[200], L=50, M=256, trials=10),
    "full": dict(N=[500, 1000, 2000, 4000], L=150, M=256, trials=500,
                 solvers=["active_set_pg", "cd", "ideal_cd", "ideal_pg"]),
}


def preset(name: str, **overrides) -> ExperimentConfig:
    return ExperimentConfig(**{**PRESETS[name], **overrides})


@dataclass
class TrialReport:
    N: int
    K: int
    Q: int
    L: int
    M: int
    sweep_index: int
    trial: int
    solver: str
    converged: bool
    objective: float
    kkt: float
    outer_iters: int
    inner_iters: int
    mean_active_size: float
    cardinality_ratio: float
    missed: int
    false_alarm: int
    data_error: int
    device_error_rate: float
    wall_time: float


COLUMNS = [f.name for f in fields(TrialReport)]
TIME_COLUMNS = ("wall_time",)


def trial_seed(master_seed: int, sweep_index: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, sweep_index, trial])


def run_solver(name: str, inst: model.Instance, exp: ExperimentConfig, rng_seed) -> solvers.SolveResult:
    S, shat, s2 = inst.S, inst.sigma_hat, inst.cfg.sigma_w_sq
    support = inst.truth.support
    if name == "active_set_pg":
        return solvers.active_set_pg(S, shat, s2, exp.schedule(), exp.pg_config())
    if name == "cd":
        return solvers.coordinate_descent(S, shat, s2, exp.eps, exp.max_sweeps, rng_seed)
    if name == "pg":
        return solvers.projected_gradient(S, shat, s2, exp.eps, exp.pg_config())
    if name in ("ideal_pg", "ideal_cd"):
        return solvers.oracle_solve(S, shat, s2, support, name.split("_")[1], exp.eps,
                                    rng=rng_seed, cfg=exp.pg_config(), max_sweeps=exp.max_sweeps)
    raise ValueError(f"unknown solver {name!r}")


def run_trial(exp: ExperimentConfig, sweep_index: int, trial: int) -> list[TrialReport]:
    N = exp.N[sweep_index]
    ss = trial_seed(exp.master_seed, sweep_index, trial)
    instance_seed, solver_seed = ss.spawn(2)
    cfg = exp.system(N)
    inst = model.generate_instance(cfg, instance_seed)
    theta = exp.threshold_factor * float(np.mean(cfg.gains()))
    reports = []
    for name in exp.solvers:
        # every solver sees the same stream so CD variants are comparable
        res = run_solver(name, inst, exp, np.random.default_rng(solver_seed))
        det = detection.detect(res.gamma, theta, cfg.Q)
        err = detection.score(det, inst.truth.chi)
        sizes = res.active_set_sizes if name == "active_set_pg" else []
        mean_size = float(np.mean(sizes)) if sizes else math.nan
        ratio = mean_size / cfg.K if sizes and cfg.K else math.nan
        reports.append(TrialReport(
            N=N, K=cfg.K, Q=cfg.Q, L=cfg.L, M=cfg.M, sweep_index=sweep_index, trial=trial,
            solver=name, converged=bool(res.converged), objective=float(res.objective),
            kkt=float(res.kkt), outer_iters=int(res.outer_iters),
            inner_iters=int(res.inner_iters_total), mean_active_size=mean_size,
            cardinality_ratio=ratio, missed=err.missed, false_alarm=err.false_alarm,
            data_error=err.data_error, device_error_rate=err.device_error_rate,
            wall_time=float(res.wall_time)))
        if not res.converged:
            log.warning("N=%d trial %d: %s did not converge (%s)", N, trial, name, res.message)
    return reports


def _run_trial_args(args):
    return run_trial(*args)


def run_experiment(exp: ExperimentConfig, *, sequential: bool = False, progress=None) -> list[TrialReport]:
    """All sweep points x trials x solvers.

    ``sequential`` forces a single worker so timings are uncontended.
    """
    jobs = [(exp, i, t) for i in range(len(exp.N)) for t in range(exp.trials)]
    out: list[TrialReport] = []
    if sequential or exp.workers <= 1:
        for job in jobs:
            out.extend(_run_trial_args(job))
            if progress:
                progress(job[1], job[2])
    else:
        with ProcessPoolExecutor(max_workers=exp.workers) as pool:
            for reps in pool.map(_run_trial_args, jobs):
                out.extend(reps)
    return out


# --- output ----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def aggregate(reports: list[TrialReport]) -> list[dict]:
    """Mean and standard error per (N, solver) for every numeric column."""
    groups: dict[tuple, list[TrialReport]] = {}
    for r in reports:
        groups.setdefault((r.sweep_index, r.N, r.solver), []).append(r)
    numeric = [c for c in COLUMNS if c not in ("N", "K", "Q", "L", "M", "sweep_index", "trial", "solver")]
    rows = []
    for (si, N, solver), reps in groups.items():
        row = {"N": N, "K": reps[0].K, "solver": solver, "trials": len(reps)}
        for col in numeric:
            vals = np.array([float(getattr(r, col)) for r in reps])
            vals = vals[~np.isnan(vals)]
            mean = float(np.mean(vals)) if vals.size else math.nan
            se = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else math.nan
            row[f"{col}_mean"] = mean
            row[f"{col}_se"] = se
        rows.append(row)
    return rows


def emit_results(reports: list[TrialReport], out_dir, formats=("csv",)) -> list[Path]:
    """Write ``trials.*`` (one row per trial and solver) and ``aggregate.*``."""
    if not reports:
        raise ValueError("no reports to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    agg = aggregate(reports)
    written = []
    for fmt in formats:
        if fmt == "csv":
            p = out / "trials.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(COLUMNS)
                for r in reports:
                    w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
            q = out / "aggregate.csv"
            with open(q, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(agg[0].keys()))
                w.writeheader()
                for row in agg:
                    w.writerow({k: _fmt(v) for k, v in row.items()})
        elif fmt == "json":
            p = out / "trials.json"
            p.write_text(json.dumps([asdict(r) for r in reports], indent=1))
            q = out / "aggregate.json"
            q.write_text(json.dumps(agg, indent=1))
        else:
            raise ValueError(f"unknown format {fmt!r}")
        written += [p, q]
    return written


def with_overrides(exp: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(exp, **{k: v for k, v in kw.items() if v is not None})
