"""``ccvb`` command-line entry point.

Exit status is 0 on success, 2 on usage or configuration errors and 1 on
runtime failures.  Experiment settings layer as built-in defaults, then an
optional ``--config`` JSON file, then explicit flags.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .experiments import (
    DEFAULT_BOUNDS,
    ConfigError,
    ExperimentConfig,
    default_config,
    load_config,
    run_ac_counterexample,
    run_consistency,
    run_fig1,
    run_infeasible_decay,
    run_nonconvexity_study,
    run_table1,
)
from .queueing import (
    StaffingInfeasible,
    StaffingProblem,
    load_dataset,
    simulate_queue_data,
    staff_avg_constraint,
    staff_bayes_cc,
    staff_mle,
    write_dataset,
)
from .sampling import MhConfig
from .stats import GammaDist, make_rng

__all__ = ["main", "parse_and_dispatch", "load_config", "load_dataset"]

SWEEP_FLAGS = (
    # (flag, config field, type, nargs)
    ("--seed", "seed", int, None),
    ("--replications", "replications", int, None),
    ("--n-grid", "n_grid", int, "+"),
    ("--alpha", "alpha", float, None),
    ("--beta", "beta", float, None),
    ("--lambda0", "lambda0", float, None),
    ("--mu0", "mu0", float, None),
    ("--mc-draws", "mc_draws", int, None),
    ("--c-max", "c_max", int, None),
    ("--prior-shape", "prior_shape", float, None),
    ("--prior-rate", "prior_rate", float, None),
    ("--out", "output_dir", str, None),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _dump(payload) -> str:
    return json.dumps(payload, indent=2)


def _add_sweep_flags(p: argparse.ArgumentParser, experiment: str):
    defaults = default_config(experiment)
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file with ExperimentConfig fields (flags override it)")
    for flag, name, typ, nargs in SWEEP_FLAGS:
        value = getattr(defaults, name)
        shown = " ".join(map(str, value)) if isinstance(value, tuple) else value
        p.add_argument(flag, dest=name, type=typ, nargs=nargs, default=None,
                       help=f"(default: {shown})")


def _sweep_config(args, experiment: str) -> ExperimentConfig:
    config = default_config(experiment)
    if args.config is not None:
        config = load_config(args.config, base=config)
    overrides = {}
    for _, name, _, _ in SWEEP_FLAGS:
        value = getattr(args, name)
        if value is not None:
            overrides[name] = tuple(value) if isinstance(value, list) else value
    try:
        return replace(config, **overrides)
    except ConfigError as exc:
        raise ConfigError(f"flags: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ccvb", description="Bayesian chance-constrained design with variational posteriors.")
    parser.add_argument("--version", action="version", version=f"ccvb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate single-server queue observations",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--lambda", dest="lam", type=float, default=16.0, help="arrival rate")
    p.add_argument("--mu", type=float, default=4.0, help="service rate")
    p.add_argument("--n", type=int, default=400, help="number of customers")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (writes dataset.csv)")

    p = sub.add_parser("staff", help="solve the staffing problem for a dataset",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--data", type=Path, required=True, help="T,S,E dataset CSV")
    p.add_argument("--alpha", type=float, default=0.37, help="maximum delayed fraction")
    p.add_argument("--beta", type=float, default=0.95, help="confidence level")
    p.add_argument("--method", choices=("mle", "bayes-cc", "avg-constraint"), default="bayes-cc")
    p.add_argument("--c-max", type=int, default=50)
    p.add_argument("--mc-draws", type=int, default=20000)
    p.add_argument("--prior-shape", type=float, default=1.0, help="Gamma prior shape for lambda and mu")
    p.add_argument("--prior-rate", type=float, default=0.01, help="Gamma prior rate for lambda and mu")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="also write staffing.json here")

    p = sub.add_parser("regions", help="true / Monte Carlo / VB feasibility regions",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--beta", type=float, default=0.9)
    p.add_argument("--steps", type=int, default=8000, help="MH steps")
    p.add_argument("--burn-in", type=int, default=3000)
    p.add_argument("--proposal-std", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bounds", type=float, nargs=4, metavar=("XLO", "XHI", "YLO", "YHI"),
                   default=[DEFAULT_BOUNDS[0][0], DEFAULT_BOUNDS[0][1], DEFAULT_BOUNDS[1][0], DEFAULT_BOUNDS[1][1]])
    p.add_argument("--resolution", type=int, default=301)
    p.add_argument("--probe-trials", type=int, default=10**6)
    p.add_argument("--repeats", type=int, default=0,
                   help="also repeat the MC region for this many seeds at rho=-0.1")
    p.add_argument("--write-grids", action="store_true", help="write every RegionGrid as CSV")
    p.add_argument("--out", type=Path, default=Path("out"))

    for name, help_text in (("table1", "MLE / AC / CC violation fractions across n"),
                            ("consistency", "chance-constrained staffing vs the true optimum as n grows"),
                            ("decay", "probability that a truly infeasible c qualifies")):
        p = sub.add_parser(name, help=help_text)
        _add_sweep_flags(p, name)
        if name == "decay":
            p.add_argument("--c-infeasible", type=int, default=5, help="(default: 5)")

    p = sub.add_parser("ac-demo", help="average- vs chance-constraint scalar example",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--beta", type=float, default=0.9)
    p.add_argument("--out", type=Path, default=None, help="also write ac_demo/summary.json here")
    return parser


def _cmd_simulate(args) -> int:
    if args.n < 1:
        raise UsageError("ccvb simulate: --n must be at least 1")
    if not (args.lam > 0 and args.mu > 0):
        raise UsageError("ccvb simulate: rates must be positive")
    data = simulate_queue_data(args.lam, args.mu, args.n, make_rng(args.seed))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "dataset.csv"
    write_dataset(data, path)
    print(_dump({"dataset": str(path), "rows": len(data), "lambda": args.lam, "mu": args.mu, "seed": args.seed}))
    return 0


def _cmd_staff(args) -> int:
    try:
        prior = GammaDist(args.prior_shape, args.prior_rate)
        problem = StaffingProblem(args.alpha, args.beta, args.c_max, prior, prior)
    except ValueError as exc:
        raise UsageError(f"ccvb staff: {exc}") from None
    if args.mc_draws < 1:
        raise UsageError("ccvb staff: --mc-draws must be positive")
    data = load_dataset(args.data)
    rng = make_rng(args.seed)
    if args.method == "mle":
        result = staff_mle(data, args.alpha, args.c_max)
    elif args.method == "bayes-cc":
        result = staff_bayes_cc(data, problem, args.mc_draws, rng)
    else:
        result = staff_avg_constraint(data, problem, args.mc_draws, rng)
    payload = result.to_dict()
    payload.update({"n": len(data), "alpha": args.alpha, "beta": args.beta, "seed": args.seed})
    text = _dump(payload)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "staffing.json").write_text(text + "\n")
    print(text)
    return 0


def _cmd_regions(args) -> int:
    try:
        mh = MhConfig(steps=args.steps, burn_in=args.burn_in, proposal_std=args.proposal_std, seed=args.seed)
    except ValueError as exc:
        raise UsageError(f"ccvb regions: {exc}") from None
    if not 0.0 < args.beta < 1.0:
        raise UsageError("ccvb regions: --beta must lie in (0, 1)")
    if args.resolution < 2 or args.probe_trials < 1:
        raise UsageError("ccvb regions: --resolution >= 2 and --probe-trials >= 1 required")
    xlo, xhi, ylo, yhi = args.bounds
    if not (xhi > xlo and yhi > ylo):
        raise UsageError("ccvb regions: --bounds must satisfy XLO < XHI and YLO < YHI")
    bounds = ((xlo, xhi), (ylo, yhi))
    panels = run_fig1(args.beta, mh, bounds, args.resolution, args.out, args.probe_trials, args.write_grids)
    summary = {"panels": [p.summary() for p in panels]}
    if args.repeats > 0:
        study = run_nonconvexity_study(-0.1, args.beta, range(args.seed, args.seed + args.repeats), mh, bounds,
                                       args.resolution, args.probe_trials)
        (args.out / "fig1" / "nonconvexity.json").write_text(_dump(study) + "\n")
        summary["nonconvexity"] = {k: v for k, v in study.items() if k != "runs"}
    print(_dump(summary))
    return 0


def _cmd_sweep(args, experiment: str) -> int:
    config = _sweep_config(args, experiment)
    if experiment == "table1":
        result = run_table1(config)
    elif experiment == "consistency":
        result = run_consistency(config)
    else:
        result = run_infeasible_decay(config, args.c_infeasible)
    out = result.write(config.output_dir)
    print(_dump({"experiment": experiment, "output": str(out), "rows": [list(r) for r in result.rows]}))
    return 0


def _cmd_ac_demo(args) -> int:
    if not 0.0 < args.beta < 1.0:
        raise UsageError("ccvb ac-demo: --beta must lie in (0, 1)")
    report = run_ac_counterexample(args.beta)
    text = _dump(report)
    if args.out is not None:
        out = args.out / "ac_demo"
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(text + "\n")
    print(text)
    return 0


def parse_and_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "staff":
            return _cmd_staff(args)
        if args.command == "regions":
            return _cmd_regions(args)
        if args.command in ("table1", "consistency", "decay"):
            return _cmd_sweep(args, args.command)
        return _cmd_ac_demo(args)
    except (UsageError, ConfigError) as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (StaffingInfeasible, ValueError, OSError) as exc:
        print(f"ccvb: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
