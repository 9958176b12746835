"""Command-line entry point: ``covdetect {simulate,solve,bench,validate}``.

Exit codes: 0 success, 1 usage or I/O error, 2 solver did not converge
(``solve`` only), 3 a validation suite failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import jsonschema
import numpy as np

from . import harness, instance_io, model, objective, solvers, validation

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED, EXIT_VALIDATION = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(args) -> harness.ExperimentConfig:
    if args.config:
        exp = harness.ExperimentConfig.from_json(args.config)
    else:
        exp = harness.preset(args.preset)
    return harness.with_overrides(exp, master_seed=getattr(args, "seed", None))


def _instance(args, exp: harness.ExperimentConfig) -> model.Instance:
    N = args.N if args.N is not None else exp.N[0]
    cfg = exp.system(N)
    return model.generate_instance(cfg, np.random.SeedSequence([exp.master_seed, args.trial]))


def cmd_simulate(args) -> int:
    exp = _load_config(args)
    inst = _instance(args, exp)
    cfg = inst.cfg
    instance_io.write_instance(args.out, inst.S, inst.sigma_hat, inst.truth.gamma_true,
                               N=cfg.N, Q=cfg.Q, M=cfg.M, sigma_w_sq=cfg.sigma_w_sq)
    if args.csv:
        instance_io.write_gamma_csv(args.csv, inst.truth.gamma_true, cfg.Q)
    print(f"wrote {args.out} (N={cfg.N}, Q={cfg.Q}, L={cfg.L}, M={cfg.M}, K={cfg.K})")
    return EXIT_OK


def cmd_solve(args) -> int:
    exp = _load_config(args)
    if args.instance:
        f = instance_io.read_instance(args.instance)
        S, shat, s2, gamma_true, Q = f.S, f.sigma_hat, f.sigma_w_sq, f.gamma_true, f.Q
    else:
        inst = _instance(args, exp)
        S, shat, s2, Q = inst.S, inst.sigma_hat, inst.cfg.sigma_w_sq, inst.cfg.Q
        gamma_true = inst.truth.gamma_true
    trace = objective.TraceWriter(sys.stderr) if args.trace else None
    rng = np.random.default_rng(np.random.SeedSequence([exp.master_seed, args.trial, 1]))
    name = args.solver
    t0 = time.perf_counter()
    if name == "active_set_pg":
        res = solvers.active_set_pg(S, shat, s2, exp.schedule(), exp.pg_config(), trace=trace)
    elif name == "cd":
        res = solvers.coordinate_descent(S, shat, s2, exp.eps, exp.max_sweeps, rng, trace=trace)
    elif name == "pg":
        res = solvers.projected_gradient(S, shat, s2, exp.eps, exp.pg_config())
    else:
        res = solvers.oracle_solve(S, shat, s2, np.flatnonzero(gamma_true), name.split("_")[1],
                                   exp.eps, rng=rng, cfg=exp.pg_config(), max_sweeps=exp.max_sweeps)
    res.wall_time = res.wall_time or time.perf_counter() - t0
    out = res.to_dict(include_gamma=not args.no_gamma)
    out["Q"] = Q
    print(json.dumps(out))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_bench(args) -> int:
    exp = _load_config(args)
    exp = harness.with_overrides(exp, trials=args.trials, output_dir=args.out,
                                 solvers=[args.solver] if args.solver else None,
                                 formats=args.format, workers=args.workers)
    if args.N:
        exp = harness.with_overrides(exp, N=args.N)

    def progress(i, t):
        if args.verbose:
            print(f"N={exp.N[i]} trial {t + 1}/{exp.trials}", file=sys.stderr)

    reports = harness.run_experiment(exp, sequential=args.sequential, progress=progress)
    paths = harness.emit_results(reports, exp.output_dir, exp.formats)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_validate(args) -> int:
    grad = validation.gradient_check(args.instances, args.seed or 0)
    cd, boundary = validation.cd_line_check(args.coords, args.seed or 0)
    print(grad.line())
    print(cd.line() + f" ({boundary} boundary steps)")
    return EXIT_OK if grad.passed and cd.passed else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="covdetect", description="Covariance-based activity and data detection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="experiment config JSON (see README for the schema)")
        sp.add_argument("--preset", choices=sorted(harness.PRESETS), default="desk")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")

    sp = sub.add_parser("simulate", help="draw one instance and write it to a container file")
    common(sp)
    sp.add_argument("--N", type=int, help="device count (default: first N of the config)")
    sp.add_argument("--trial", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--csv", help="also write the true gamma as CSV")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("solve", help="solve one instance and print the result as JSON")
    common(sp)
    sp.add_argument("--instance", help="container written by 'simulate'")
    sp.add_argument("--N", type=int)
    sp.add_argument("--trial", type=int, default=0)
    sp.add_argument("--solver", choices=solvers.SOLVERS, default="active_set_pg")
    sp.add_argument("--trace", action="store_true", help="per-iteration CSV on stderr")
    sp.add_argument("--no-gamma", action="store_true", help="omit gamma from the JSON")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("bench", help="run a sweep and write per-trial and aggregate results")
    common(sp)
    sp.add_argument("--N", type=int, nargs="+")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--solver", choices=solvers.SOLVERS, help="run only this solver")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--format", choices=["csv", "json"], nargs="+")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--sequential", action="store_true", help="single worker, for timing")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("validate", help="run the gradient and CD oracle suites")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--instances", type=int, default=50)
    sp.add_argument("--coords", type=int, default=200)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, jsonschema.ValidationError, instance_io.ContainerError) as exc:
        print(f"covdetect: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
