"""Replication orchestration and aggregation of convergence-versus-cost curves."""
import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .driver import PolicySpec, RunHistory, run_bo
from .problems import get_problem

logger = logging.getLogger(__name__)


@dataclass
class AggregateCurve:
    """Pointwise mean and sample standard deviation of best-so-far curves."""

    grid: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n: int


def cost_grid(tau, n_points=200):
    """``n_points`` uniformly spaced costs on ``(0, tau]``."""
    return tau * np.arange(1, n_points + 1) / n_points


def interpolate_history(history, grid):
    """Best-so-far as a right-continuous step function of cumulative cost.

    Grid points before the first evaluation take the first best-so-far value.
    """
    if len(history) == 0:
        raise ValueError("cannot interpolate an empty history")
    grid = np.asarray(grid, dtype=float)
    cum = history.cumulative_costs
    pos = np.searchsorted(cum, grid, side="right") - 1
    return history.best_so_far[np.clip(pos, 0, None)]


def aggregate(curves, grid=None):
    """Pointwise mean and sample standard deviation over replications.

    A single curve gets a zero standard deviation.
    """
    curves = [np.asarray(c, dtype=float) for c in curves]
    if not curves:
        raise ValueError("no curves to aggregate")
    if len({c.shape for c in curves}) != 1:
        raise ValueError("curves have mismatched lengths")
    M = np.vstack(curves)
    n = M.shape[0]
    std = M.std(axis=0, ddof=1) if n > 1 else np.zeros(M.shape[1])
    grid = np.arange(M.shape[1], dtype=float) if grid is None else np.asarray(grid, dtype=float)
    return AggregateCurve(grid, M.mean(axis=0), std, n)


def log_bins(costs, n_bins=20):
    costs = np.asarray(costs, dtype=float)
    lo, hi = float(costs.min()), float(costs.max())
    if hi <= lo:
        hi = lo * 1.01 + 1e-12
    return np.geomspace(lo, hi, n_bins + 1)


def cost_histogram(histories, bins):
    """Per-policy counts of evaluation costs in ``bins``.

    Parameters
    ----------
    histories : dict of str to list of RunHistory
    bins : ascending positive bin edges

    Costs outside the edges are counted in the outermost bins so that counts
    always sum to the number of evaluations.
    """
    bins = np.asarray(bins, dtype=float)
    if bins.ndim != 1 or bins.size < 2 or np.any(bins <= 0) or np.any(np.diff(bins) <= 0):
        raise ValueError("bins must be ascending positive edges")
    out = {}
    for label, runs in histories.items():
        costs = np.concatenate([h.costs for h in runs]) if runs else np.empty(0)
        counts, _ = np.histogram(np.clip(costs, bins[0], bins[-1]), bins=bins)
        out[label] = counts
    return out


def _fmt(v):
    return format(float(v), ".17g")


def write_curve_csv(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cost", "mean", "std", "n"])
        for g, m, s in zip(curve.grid, curve.mean, curve.std):
            w.writerow([_fmt(g), _fmt(m), _fmt(s), curve.n])


def read_curve_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no rows")
    return AggregateCurve(np.array([float(r["cost"]) for r in rows]),
                          np.array([float(r["mean"]) for r in rows]),
                          np.array([float(r["std"]) for r in rows]),
                          int(rows[0]["n"]))


def write_histogram_csv(path, counts, bins):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "bin_low", "bin_high", "count"])
        for label in sorted(counts):
            for lo, hi, c in zip(bins[:-1], bins[1:], counts[label]):
                w.writerow([label, _fmt(lo), _fmt(hi), int(c)])


def config_hash(obj):
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def history_path(out_dir, label, seed):
    return Path(out_dir) / "histories" / label / f"seed{seed:04d}.jsonl"


def _run_one(task):
    problem_name, token, policy_kwargs, tau, seed, cost_mode = task
    policy = PolicySpec.parse(token, **policy_kwargs)
    history = run_bo(get_problem(problem_name), policy, tau, seed, cost_mode=cost_mode)
    return token, seed, history


def run_matrix(problem_name, tokens, seeds, tau, out_dir=None, workers=1, cost_mode="learned",
               policy_kwargs=None):
    """Run every (policy, seed) pair; returns ``{label: [RunHistory, ...]}`` ordered by seed.

    Histories are written under ``out_dir/histories/<label>/`` when given.
    """
    policy_kwargs = policy_kwargs or {}
    tasks = [(problem_name, t, policy_kwargs, tau, s, cost_mode) for t in tokens for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    by_label = {}
    for token, seed, history in sorted(results, key=lambda r: (r[0], r[1])):
        label = PolicySpec.parse(token, **policy_kwargs).label
        by_label.setdefault(label, []).append(history)
        if out_dir is not None:
            path = history_path(out_dir, label, seed)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(history.to_jsonl())
    return by_label


def load_histories(in_dir):
    """Read ``in_dir/histories/<label>/*.jsonl`` back into ``{label: [RunHistory]}``."""
    root = Path(in_dir) / "histories"
    if not root.is_dir():
        raise FileNotFoundError(f"no histories under {in_dir}")
    out = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        out[sub.name] = [RunHistory.from_jsonl(f.read_text()) for f in sorted(sub.glob("*.jsonl"))]
    return out


def final_best(history, tau):
    """Best-so-far value at cumulative cost ``tau``."""
    return float(interpolate_history(history, [tau])[0])
