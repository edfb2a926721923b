"""Command-line experiment harness.

Subcommands: optimize, sweep, gradient-check, mc-validate, nmse, convergence,
validate.  Every command reads an optional key=value config file, writes a
CSV at --out plus a JSON sidecar, and is bit-reproducible for a fixed
(config, seed) regardless of --threads.

Exit codes: 0 success, 1 validation failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import sys

from .config import (
    ConfigError,
    ExperimentConfig,
    OptimizerConfig,
    RunConfig,
    desk_scale,
    load_config,
)
from . import experiments as exp


def _base_config(args) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config)
    elif getattr(args, "full", False):
        config = ExperimentConfig()  # full-scale reference scenario
    else:
        config = desk_scale()
    run = config.run
    if args.seed is not None:
        run = run.replace(seed=args.seed)
    if getattr(args, "threads", None):
        run = run.replace(threads=args.threads)
    if getattr(args, "trials", None):
        run = run.replace(trials=args.trials)
    config = config.replace(run=run)

    opt_kw = {}
    for name in ("method", "starts", "tol", "max_iters", "mu_init", "kappa",
                 "mu_growth"):
        value = getattr(args, name, None)
        if value is not None:
            opt_kw[name] = value
    if opt_kw:
        config = config.replace(optimizer=config.optimizer.replace(**opt_kw))
    return config


def _add_common(parser: argparse.ArgumentParser, default_out: str) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=default_out, help="output CSV path")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--full", action="store_true",
                        help="without --config, use the full-scale scenario "
                             "instead of the desk-scale preset")


def _add_optimizer_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", choices=("pgam", "ao"), default=None)
    parser.add_argument("--starts", type=int, default=None)
    parser.add_argument("--tol", type=float, default=None)
    parser.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    parser.add_argument("--mu-init", dest="mu_init", type=float, default=None)
    parser.add_argument("--kappa", type=float, default=None)
    parser.add_argument("--mu-growth", dest="mu_growth", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simstack",
        description="Double stacked-metasurface massive MIMO uplink experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="phase-shift optimization")
    _add_common(p, "optimize.csv")
    _add_optimizer_flags(p)
    p.add_argument("--profile-out", default=None,
                   help="write the best phase profile to this file")
    p.add_argument("--dump-stack", default=None,
                   help="debug dump of the transmission matrices")

    p = sub.add_parser("sweep", help="parameter sweep with re-optimization")
    _add_common(p, "sweep.csv")
    _add_optimizer_flags(p)
    p.add_argument("--param", required=True, choices=exp.SWEEP_PARAMETERS)
    p.add_argument("--values", required=True,
                   help="comma-separated list, e.g. 16,25,36,49")
    p.add_argument("--with-mc", action="store_true")
    p.add_argument("--with-nmse", action="store_true")
    p.add_argument("--trials", type=int, default=None)

    p = sub.add_parser("gradient-check", help="analytic vs finite-difference")
    _add_common(p, "gradient_check.csv")
    p.add_argument("--instances", type=int, default=20)

    p = sub.add_parser("mc-validate", help="closed-form vs Monte Carlo SINR")
    _add_common(p, "mc_validate.csv")
    p.add_argument("--trials", type=int, default=None)

    p = sub.add_parser("nmse", help="channel-estimation NMSE vs SNR")
    _add_common(p, "nmse.csv")
    p.add_argument("--snr-start", type=float, default=-10.0)
    p.add_argument("--snr-stop", type=float, default=30.0)
    p.add_argument("--snr-step", type=float, default=2.0)

    p = sub.add_parser("convergence", help="optimizer traces, both methods")
    _add_common(p, "convergence.csv")
    _add_optimizer_flags(p)

    p = sub.add_parser("validate", help="run the oracle validation suite")
    _add_common(p, "validation.csv")
    p.add_argument("--corrupt", choices=("gradient",), default=None,
                   help=argparse.SUPPRESS)  # negative-control test hook

    return parser


def main(argv: list[str] | None = None) -> int:
    # single-threaded BLAS keeps Monte Carlo reductions bit-identical no
    # matter how many worker threads run on top
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=1)
    except Exception:
        pass

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _base_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    threads = config.run.threads
    try:
        if args.command == "optimize":
            result = exp.run_optimize(config, args.out, args.profile_out)
            if args.dump_stack:
                from .scenario import Scenario
                exp.dump_stack(args.dump_stack, Scenario(config.scenario))
            print(f"best objective: {result['best_objective']:.6f} bits/s/Hz "
                  f"({config.optimizer.method}, {config.optimizer.starts} starts)")
            print(f"wrote {args.out}")
            return 0

        if args.command == "sweep":
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            numeric = [float(v) if args.param == "snr_db" else int(v) for v in values]
            rows = exp.run_sweep(config, args.param, numeric, args.out,
                                 with_mc=args.with_mc, with_nmse=args.with_nmse,
                                 threads=threads)
            errors = [r for r in rows if r[3] == "error"]
            print(f"wrote {args.out} ({len(rows)} rows, {len(errors)} error rows)")
            return 0

        if args.command == "gradient-check":
            rows, ok = exp.run_gradient_check(config, args.out, args.instances)
            worst = max(r[1] for r in rows)
            print(f"gradient check: {len(rows)} instances, worst {worst:.3e}, "
                  f"tol {exp.GRADIENT_TOL:g}: {'PASS' if ok else 'FAIL'}")
            print(f"wrote {args.out}")
            return 0 if ok else 1

        if args.command == "mc-validate":
            rows = exp.run_mc_validate(config, args.out, threads=threads)
            for row in rows:
                print(f"user {row[0]}: gamma_cf {row[1]:.5g} "
                      f"gamma_mc {row[2]:.5g} rel_err {row[3]:.3%}")
            print(f"wrote {args.out}")
            return 0

        if args.command == "nmse":
            snrs = []
            snr = args.snr_start
            while snr <= args.snr_stop + 1e-9:
                snrs.append(round(snr, 6))
                snr += args.snr_step
            exp.run_nmse(config, args.out, snrs)
            print(f"wrote {args.out}")
            return 0

        if args.command == "convergence":
            exp.run_convergence(config, args.out)
            print(f"wrote {args.out}")
            return 0

        if args.command == "validate":
            rows, ok = exp.run_validation(config, args.out,
                                          corrupt=args.corrupt, threads=threads)
            for row in rows:
                status = "PASS" if row[4] else "FAIL"
                print(f"{status}  {row[0]:<22} {row[1]:<12} "
                      f"residual {row[2]:.3e}  tol {row[3]:g}")
            print(f"wrote {args.out}")
            return 0 if ok else 1

    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
