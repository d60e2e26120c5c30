"""``costbo`` command-line interface.

Subcommands
-----------
run        one optimization run; writes the JSON-lines history
bench      a policies x seeds matrix; writes histories and a manifest
aggregate  mean/std best-so-far curves on a cost grid, one CSV per policy
hist       per-policy histogram of evaluation costs on log-spaced bins

Exit codes: 0 success, 1 configuration error, 2 runtime failure.

History format
--------------
JSON lines. The first line is ``{"metadata": {...}}`` (problem, policy,
policy_config, tau, seed, cost_mode, termination, ...); each following line
is one evaluation with fields in this order::

    iteration, phase, point, value, cost, cumulative_cost, best_so_far, overran

Wall-clock timings are not written, so repeated runs are byte-identical.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (aggregate, config_hash, cost_grid, cost_histogram, interpolate_history,
                    load_histories, log_bins, run_matrix, write_curve_csv, write_histogram_csv)
from .driver import PolicySpec, run_bo
from .problems import PROBLEMS, get_problem
from .rollout import RolloutConfig

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; that code is reserved for runtime failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def parse_seeds(text):
    """``"0-49"``, ``"1,3,5"`` or a mix such as ``"0-4,10"``."""
    seeds = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise ValueError
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None
    if any(s < 0 for s in seeds):
        raise ConfigError("seeds must be non-negative")
    return sorted(set(seeds))


def _policy_token(kind, horizon):
    kind = kind.lower()
    if kind in ("rollout", "base"):
        return f"{kind}{horizon}"
    return kind


def _policy_kwargs(args):
    return {"rollout": RolloutConfig(samples=args.samples, candidate_count=args.candidates,
                                     qmc=args.qmc)}


def _resolve_tau(args, problem):
    tau = args.tau if args.tau is not None else problem.default_budget
    if tau is None or not tau > 0:
        raise ConfigError("tau must be positive")
    return float(tau)


def _add_common(p):
    p.add_argument("--problem", default="ring", choices=sorted(PROBLEMS),
                   help="benchmark problem (default: ring)")
    p.add_argument("--tau", type=float, default=None,
                   help="cost budget (default: the problem's budget, 150 for ring)")
    p.add_argument("--samples", "-N", type=int, default=32,
                   help="rollout quasi-Monte-Carlo samples (default: 32)")
    p.add_argument("--candidates", type=int, default=None,
                   help="rollout LHS candidates (default: 10 * dim)")
    p.add_argument("--qmc", choices=("sobol", "stratified"), default="sobol",
                   help="rollout draw scheme (default: sobol)")
    p.add_argument("--cost-mode", choices=("learned", "analytic"), default="learned",
                   help="cost surrogate (default: learned)")


def build_parser():
    parser = _Parser(prog="costbo", description="Cost-constrained Bayesian optimization benchmarks.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="single optimization run")
    _add_common(p)
    p.add_argument("--policy", default="ei", choices=("ei", "eipu", "rollout", "base"),
                   help="policy (default: ei)")
    p.add_argument("--horizon", type=int, default=2, help="rollout/base horizon (default: 2)")
    p.add_argument("--seed", type=int, default=0, help="run seed (default: 0)")
    p.add_argument("--out", default="-", help="history file, '-' for stdout (default: -)")

    p = sub.add_parser("bench", help="policies x seeds matrix")
    _add_common(p)
    p.add_argument("--policies", default="ei,eipu,r2,r4",
                   help="comma-separated labels: ei, eipu, r<h>, base<h> (default: ei,eipu,r2,r4)")
    p.add_argument("--seeds", default="0-49", help="seed list, e.g. 0-49 or 1,2,3 (default: 0-49)")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default: 1)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("aggregate", help="mean/std curves from a bench directory")
    p.add_argument("--input", required=True, help="bench output directory")
    p.add_argument("--tau", type=float, default=None, help="grid end (default: from histories)")
    p.add_argument("--grid-points", type=int, default=200, help="grid size (default: 200)")
    p.add_argument("--out", default=None, help="output directory (default: --input)")

    p = sub.add_parser("hist", help="evaluation-cost histograms from a bench directory")
    p.add_argument("--input", required=True, help="bench output directory")
    p.add_argument("--bins", type=int, default=20, help="number of log-spaced bins (default: 20)")
    p.add_argument("--out", default=None, help="output directory (default: --input)")
    return parser


def cmd_run(args):
    problem = get_problem(args.problem)
    tau = _resolve_tau(args, problem)
    if args.horizon < 1:
        raise ConfigError("horizon must be >= 1")
    policy = PolicySpec.parse(_policy_token(args.policy, args.horizon), **_policy_kwargs(args))
    history = run_bo(problem, policy, tau, args.seed, cost_mode=args.cost_mode)
    text = history.to_jsonl()
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)


def cmd_bench(args):
    problem = get_problem(args.problem)
    tau = _resolve_tau(args, problem)
    seeds = parse_seeds(args.seeds)
    tokens = [t.strip() for t in args.policies.split(",") if t.strip()]
    kwargs = _policy_kwargs(args)
    try:
        policies = [PolicySpec.parse(t, **kwargs) for t in tokens]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.workers < 1:
        raise ConfigError("workers must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_matrix(args.problem, tokens, seeds, tau, out_dir=out, workers=args.workers,
               cost_mode=args.cost_mode, policy_kwargs=kwargs)
    configs = {p.label: p.describe() for p in policies}
    manifest = {
        "problem": args.problem, "tau": tau, "seeds": seeds,
        "policies": [p.label for p in policies],
        "policy_configs": configs,
        "config_hashes": {k: config_hash(v) for k, v in configs.items()},
        "arguments": {k: v for k, v in vars(args).items() if k != "func"},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str)
                                       + "\n")


def cmd_aggregate(args):
    histories = load_histories(args.input)
    out = Path(args.out or args.input)
    out.mkdir(parents=True, exist_ok=True)
    if args.grid_points < 1:
        raise ConfigError("grid-points must be >= 1")
    summary = {}
    for label, runs in histories.items():
        if not runs:
            continue
        tau = args.tau if args.tau is not None else runs[0].metadata["tau"]
        grid = cost_grid(tau, args.grid_points)
        curve = aggregate([interpolate_history(h, grid) for h in runs], grid)
        write_curve_csv(out / f"curve_{label}.csv", curve)
        summary[label] = {"n": curve.n, "final_mean": float(curve.mean[-1]),
                          "final_std": float(curve.std[-1])}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_hist(args):
    histories = load_histories(args.input)
    out = Path(args.out or args.input)
    out.mkdir(parents=True, exist_ok=True)
    if args.bins < 1:
        raise ConfigError("bins must be >= 1")
    all_costs = np.concatenate([h.costs for runs in histories.values() for h in runs])
    bins = log_bins(all_costs, args.bins)
    write_histogram_csv(out / "cost_histogram.csv", cost_histogram(histories, bins), bins)


COMMANDS = {"run": cmd_run, "bench": cmd_bench, "aggregate": cmd_aggregate, "hist": cmd_hist}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"costbo: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"costbo: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure during a run is a runtime error
        print(f"costbo: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
