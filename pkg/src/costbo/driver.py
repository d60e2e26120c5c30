"""The cost-constrained Bayesian optimization loop and its run history."""
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .acquisition import MaximizerConfig, gp_acquisition, latin_hypercube, maximize
from .costmodel import analytic_cost, fit_cost
from .exceptions import BudgetExhausted, GPFitError
from .gp import GaussianProcess, GPHyperparams
from .rollout import BOState, RolloutConfig, base_policy_step, derive_seed, select_next

logger = logging.getLogger(__name__)

POLICY_KINDS = ("EI", "EIPU", "ROLLOUT", "BASE")
RECORD_FIELDS = ("iteration", "phase", "point", "value", "cost", "cumulative_cost",
                 "best_so_far", "overran")


@dataclass(frozen=True)
class PolicySpec:
    """How the next point is chosen.

    ``BASE`` runs the rollout base policy itself without lookahead: iteration
    ``k`` maximizes EI per unit cost when ``k mod h < h - 1`` and EI otherwise.
    """

    kind: str = "EI"
    horizon: int = 1
    rollout: RolloutConfig = None
    maximizer: MaximizerConfig = field(default_factory=MaximizerConfig)

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind in ("ROLLOUT", "BASE") and self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if kind == "ROLLOUT":
            cfg = self.rollout or RolloutConfig(horizon=self.horizon)
            object.__setattr__(self, "rollout", replace(cfg, horizon=self.horizon))
        else:
            object.__setattr__(self, "rollout", None)

    @property
    def label(self):
        if self.kind == "ROLLOUT":
            return f"r{self.horizon}"
        if self.kind == "BASE":
            return f"base{self.horizon}"
        return self.kind.lower()

    @classmethod
    def parse(cls, token, **kwargs):
        """Build from a short label: ``ei``, ``eipu``, ``r2``, ``rollout4``, ``base2``."""
        t = token.strip().lower()
        if t in ("ei", "eipu"):
            return cls(kind=t.upper(), **kwargs)
        for prefix, kind in (("rollout", "ROLLOUT"), ("base", "BASE"), ("r", "ROLLOUT")):
            if t.startswith(prefix) and t[len(prefix):].isdigit():
                return cls(kind=kind, horizon=int(t[len(prefix):]), **kwargs)
        raise ValueError(f"cannot parse policy {token!r}")

    def describe(self):
        out = {"kind": self.kind, "horizon": self.horizon,
               "maximizer": asdict(self.maximizer)}
        if self.rollout is not None:
            out["rollout"] = asdict(self.rollout)
        return out


@dataclass
class Record:
    iteration: int
    phase: str
    point: np.ndarray
    value: float
    cost: float
    cumulative_cost: float
    best_so_far: float
    overran: bool = False
    overhead: float = 0.0

    def to_dict(self):
        return {
            "iteration": self.iteration,
            "phase": self.phase,
            "point": [float(v) for v in self.point],
            "value": float(self.value),
            "cost": float(self.cost),
            "cumulative_cost": float(self.cumulative_cost),
            "best_so_far": float(self.best_so_far),
            "overran": bool(self.overran),
        }


@dataclass
class RunHistory:
    """Evaluations of one run in order, plus run metadata."""

    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    @property
    def cumulative_costs(self):
        return np.array([r.cumulative_cost for r in self.records])

    @property
    def best_so_far(self):
        return np.array([r.best_so_far for r in self.records])

    @property
    def costs(self):
        return np.array([r.cost for r in self.records])

    def to_jsonl(self):
        """Serialize as JSON lines: a metadata line, then one line per evaluation.

        Wall-clock overheads are left out so that identical runs serialize to
        identical bytes; see :meth:`timings`.
        """
        lines = [json.dumps({"metadata": self.metadata}, sort_keys=True)]
        lines += [json.dumps(r.to_dict()) for r in self.records]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty history")
        meta = json.loads(lines[0])["metadata"]
        records = []
        for ln in lines[1:]:
            d = json.loads(ln)
            records.append(Record(d["iteration"], d["phase"], np.asarray(d["point"], dtype=float),
                                  d["value"], d["cost"], d["cumulative_cost"],
                                  d["best_so_far"], d["overran"]))
        return cls(records, meta)

    def timings(self):
        return [r.overhead for r in self.records]


def evaluate_with_budget(problem, x, prev, cumulative, tau):
    """Evaluate ``x``; returns ``(value, cost, overran)``.

    The true cost is only known afterwards, so an evaluation that pushes the
    total past ``tau`` still happens and is flagged.
    """
    value, cost = problem.evaluate(x, prev)
    return value, cost, cumulative + cost > tau


def _default_hyperparams(X, y):
    var = float(np.var(y)) if len(y) > 1 and np.var(y) > 0 else 1.0
    width = np.ptp(X, axis=0)
    return GPHyperparams(np.where(width > 0, 0.2 * width, 0.2), var, 1e-6 * var,
                         float(np.mean(y)))


def _fit_objective(problem, X, y, seed, fit_config, previous, diagnostics, iteration):
    try:
        return GaussianProcess(domain=problem.domain, fit_config=fit_config,
                               random_state=seed).fit(X, y)
    except (GPFitError, np.linalg.LinAlgError) as exc:
        hp = previous or _default_hyperparams(X, y)
        diagnostics.append({"iteration": iteration, "model": "objective", "error": str(exc),
                            "details": getattr(exc, "diagnostics", [])})
        logger.warning("objective GP fit failed at iteration %d: %s", iteration, exc)
        return GaussianProcess(domain=problem.domain, hyperparams=hp).fit(X, y)


def run_bo(problem, policy, tau, seed=0, cost_mode="learned", fit_config=None, n_init=None):
    """Minimize ``problem.objective`` until the evaluation budget ``tau`` is spent.

    Parameters
    ----------
    problem : Problem
    policy : PolicySpec
    tau : float
        Total cost budget; initial design evaluations are charged to it.
    seed : int
    cost_mode : {"learned", "analytic"}
        Cost surrogate. State-dependent costs always use the analytic cost.
    fit_config : FitConfig, optional
    n_init : int, optional
        Initial design size, ``2 d + 2`` by default.

    Returns
    -------
    RunHistory
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if cost_mode not in ("learned", "analytic"):
        raise ValueError(f"unknown cost mode {cost_mode!r}")
    domain = problem.domain
    d = domain.dim
    n_init = 2 * d + 2 if n_init is None else int(n_init)
    if problem.state_dependent:
        cost_mode = "analytic"
    history = RunHistory(metadata={
        "problem": problem.name, "policy": policy.label, "tau": float(tau), "seed": int(seed),
        "cost_mode": cost_mode, "n_init": n_init, "policy_config": policy.describe(),
    })
    diagnostics = []
    X, y, c = [], [], []
    cum = 0.0
    best = math.inf
    prev = problem.initial_state

    def evaluate(x, iteration, phase, overhead):
        nonlocal cum, best, prev
        value, cost, overran = evaluate_with_budget(problem, x, prev, cum, tau)
        cum += cost
        best = min(best, value)
        X.append(np.asarray(x, dtype=float))
        y.append(value)
        c.append(cost)
        prev = np.asarray(x, dtype=float)
        history.records.append(Record(iteration, phase, np.asarray(x, dtype=float), value, cost,
                                      cum, best, overran, overhead))

    init = domain.from_unit(latin_hypercube(n_init, d, derive_seed(seed, 0)))
    for i, x in enumerate(init):
        evaluate(x, i, "init", 0.0)
        if cum >= tau:
            if i < n_init - 1:
                history.metadata["warning"] = "initial design truncated by the budget"
                logger.warning("initial design truncated after %d of %d points", i + 1, n_init)
            history.metadata["termination"] = "budget_spent"
            return history

    k = 0
    hp_prev = None
    termination = "budget_spent"
    while cum < tau:
        t0 = time.perf_counter()
        Xa, ya, ca = np.vstack(X), np.asarray(y), np.asarray(c)
        gp = _fit_objective(problem, Xa, ya, derive_seed(seed, 1, k), fit_config, hp_prev,
                            diagnostics, k)
        hp_prev = gp.hyperparams_
        if cost_mode == "analytic":
            cm = analytic_cost(problem.cost, domain, problem.state_dependent)
        else:
            cm = fit_cost(Xa, ca, seed=derive_seed(seed, 2, k), domain=domain,
                          fit_config=fit_config)
        state = BOState(gp, cm, tau - cum, best, prev_point=prev, cost_floor=1e-6 * tau)
        mcfg = replace(policy.maximizer, seed=derive_seed(seed, 3, k))
        try:
            x = _select(policy, state, k, mcfg, derive_seed(seed, 4, k))
        except BudgetExhausted:
            termination = "budget_exhausted"
            break
        evaluate(x, n_init + k, "bo", time.perf_counter() - t0)
        k += 1
    history.metadata["termination"] = termination
    if diagnostics:
        history.metadata["diagnostics"] = diagnostics
    return history


def _select(policy, state, k, mcfg, rollout_seed):
    if policy.kind in ("EI", "EIPU"):
        acq = gp_acquisition(state.gp, state.best, policy.kind, state.cost_model,
                             state.cost_floor, prev=state.prev_point)
        return maximize(acq, state.domain, mcfg)[0]
    if policy.kind == "BASE":
        return base_policy_step(state, k % policy.horizon, policy.horizon, mcfg)
    cfg = replace(policy.rollout, seed=rollout_seed)
    return select_next(state, cfg, mcfg)
