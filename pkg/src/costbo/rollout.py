"""Budget-aware rollout acquisition.

A candidate ``x`` is scored by simulating the base policy from the current
state: ``x`` is evaluated first, then ``h - 2`` steps maximize EI per unit
cost and the last step maximizes EI. Fantasy values come from the GP
posterior of the fantasy-conditioned model, costs from the cost model's point
prediction. A step whose cumulative cost would reach the remaining budget is
dropped and ends the trajectory. Rewards are the positive improvements of the
running best, averaged over quasi-Monte-Carlo draws that every candidate
shares.

All trajectories of all candidates are simulated together; each inner base
policy step is a single batched call to :func:`maximize_batch`.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .acquisition import (MaximizerConfig, expected_improvement, gp_acquisition, latin_hypercube,
                          maximize, maximize_batch, select_best)
from .exceptions import BudgetExhausted
from .gp import FantasyBatch


def derive_seed(*keys):
    """Deterministic 32-bit seed from integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass(frozen=True)
class RolloutConfig:
    """Rollout settings.

    ``candidate_count`` defaults to ``10 * d`` when ``None``. ``qmc`` selects
    scrambled Sobol (``"sobol"``) or Latin-hypercube stratified
    (``"stratified"``) normal draws. ``inner`` configures the base policy
    maximizations inside simulations; ``None`` reuses the outer maximizer
    settings.
    """

    horizon: int = 2
    samples: int = 32
    candidate_count: int = None
    qmc: str = "sobol"
    seed: int = 0
    inner: MaximizerConfig = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.qmc not in ("sobol", "stratified"):
            raise ValueError(f"unknown qmc scheme {self.qmc!r}")


@dataclass
class BOState:
    """Information a policy decides from.

    ``prev_point`` is the last evaluated point, used by state-dependent costs.
    ``cost_floor`` bounds predicted costs from below inside EI per unit cost.
    """

    gp: object
    cost_model: object
    remaining_budget: float
    best: float
    prev_point: np.ndarray = None
    cost_floor: float = 0.0

    @property
    def domain(self):
        return self.gp.domain

    def step_cost(self, X, prev=None):
        """Predicted cost of moving to ``X`` (shape (..., d))."""
        if self.cost_model.state_dependent:
            prev = self.prev_point if prev is None else prev
            return self.cost_model.predict(X, prev=prev)
        return self.cost_model.predict(X)


@dataclass
class Trajectory:
    """One simulated path; steps past ``feasible_length`` were dropped."""

    steps: list = field(default_factory=list)
    reward: float = 0.0
    feasible_length: int = 0


def normal_draws(cfg):
    """``(samples, horizon)`` standard normal draws, deterministic in ``cfg.seed``."""
    n, h = cfg.samples, cfg.horizon
    if cfg.qmc == "sobol":
        engine = qmc.Sobol(h, scramble=True, rng=np.random.default_rng(cfg.seed))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            u = engine.random(n)
    else:
        u = qmc.LatinHypercube(h, rng=np.random.default_rng(cfg.seed)).random(n)
    return ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))


def base_policy_kind(t, h):
    """Acquisition used at step ``t`` of a horizon-``h`` base policy."""
    if not 0 <= t <= h - 1:
        raise ValueError(f"step {t} outside horizon {h}")
    return "EIPU" if t < h - 1 else "EI"


def base_policy_step(state, t, h, cfg=None, seed=None):
    """Base policy decision from a real state: EIpu before the last step, EI at it."""
    kind = base_policy_kind(t, h)
    acq = gp_acquisition(state.gp, state.best, kind, state.cost_model, state.cost_floor,
                         prev=state.prev_point)
    point, _ = maximize(acq, state.domain, cfg, seed)
    return point


def _batched_base_acquisition(fb, rows, best, state, kind, prev, ref):
    """Batched evaluator for ``kind`` on fantasy trajectories ``rows``."""

    def acq(X, idx):
        traj = rows[idx]
        mean, var = fb.posterior(X, traj)
        ei = expected_improvement(mean, var, best[traj][:, None])
        if kind == "EIPU":
            p = prev[traj][:, None, :] if prev is not None else None
            cost = np.maximum(state.step_cost(X, p), state.cost_floor)
            ei = ei / (cost / ref)
        return ei

    return acq


@dataclass
class SimulationResult:
    """Per-trajectory outcome of a batched simulation.

    Arrays are indexed ``[trajectory, step]`` where trajectory
    ``c * samples + i`` starts at candidate ``c`` with draw vector ``i``.
    """

    points: np.ndarray
    values: np.ndarray
    costs: np.ndarray
    rewards: np.ndarray
    feasible_length: np.ndarray
    first_mean: np.ndarray
    first_var: np.ndarray

    @property
    def total_reward(self):
        return self.rewards.sum(axis=1)


def simulate(state, first_points, cfg, draws, mcfg=None):
    """Simulate every (candidate, draw) trajectory of the base policy.

    Parameters
    ----------
    state : BOState
    first_points : ndarray of shape (C, d)
    cfg : RolloutConfig
    draws : ndarray of shape (N, >= horizon)
    mcfg : MaximizerConfig, optional
        Inner maximizer settings when ``cfg.inner`` is None.

    Returns
    -------
    SimulationResult
    """
    h = cfg.horizon
    inner = cfg.inner or mcfg or MaximizerConfig()
    first_points = np.atleast_2d(np.asarray(first_points, dtype=float))
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    C, d = first_points.shape
    N = draws.shape[0]
    B = C * N
    z = np.tile(draws[:, :h], (C, 1))
    x = np.repeat(first_points, N, axis=0)

    fb = FantasyBatch(state.gp, B)
    best = np.full(B, float(state.best))
    cum = np.zeros(B)
    alive = np.ones(B, dtype=bool)
    stateful = state.cost_model.state_dependent
    prev = np.tile(np.asarray(state.prev_point, dtype=float), (B, 1)) if stateful else None
    ref = state.cost_model.reference_cost(state.cost_floor) if h > 2 else 1.0

    points = np.zeros((B, h, d))
    values = np.zeros((B, h))
    costs = np.zeros((B, h))
    rewards = np.zeros((B, h))
    feasible_length = np.zeros(B, dtype=int)
    first_mean = first_var = None

    for t in range(h):
        if t > 0:
            rows = np.flatnonzero(alive)
            if rows.size == 0:
                break
            kind = base_policy_kind(t, h)
            acq = _batched_base_acquisition(fb, rows, best, state, kind, prev, ref)
            x_rows, _ = maximize_batch(acq, rows.size, state.domain, inner,
                                       seed=derive_seed(cfg.seed, t))
            x = x.copy()
            x[rows] = x_rows
        step_prev = prev if stateful else None
        c = state.step_cost(x, step_prev)
        ok = alive & (cum + c < state.remaining_budget)
        mean, var = fb.posterior(x[:, None, :])
        mean, var = mean[:, 0], var[:, 0]
        if t == 0:
            first_mean, first_var = mean, var
        y = mean + np.sqrt(var) * z[:, t]
        points[:, t] = x
        values[:, t] = y
        costs[:, t] = np.where(ok, c, 0.0)
        rewards[:, t] = np.where(ok, np.maximum(best - y, 0.0), 0.0)
        cum = cum + costs[:, t]
        feasible_length += ok
        best = np.where(ok, np.minimum(best, y), best)
        alive = ok
        if stateful:
            prev = np.where(ok[:, None], x, prev)
        if t < h - 1:
            fb.add(x, y)

    return SimulationResult(points, values, costs, rewards, feasible_length, first_mean, first_var)


def simulate_trajectory(state, first_point, cfg, draws, mcfg=None):
    """Simulate one trajectory with the given ``horizon`` standard normal draws."""
    draws = np.asarray(draws, dtype=float).reshape(1, -1)
    if draws.shape[1] < cfg.horizon:
        raise ValueError("need at least one draw per step")
    res = simulate(state, np.atleast_2d(first_point), cfg, draws, mcfg)
    n = int(res.feasible_length[0])
    steps = [(res.points[0, t].copy(), float(res.values[0, t]), float(res.costs[0, t]))
             for t in range(n)]
    return Trajectory(steps=steps, reward=float(res.rewards[0, :n].sum()), feasible_length=n)


def rollout_values(state, candidates, cfg, mcfg=None, draws=None):
    """Rollout acquisition at each candidate with common random numbers.

    The first-step reward is replaced by its exact expectation (EI at the
    candidate, zero if unaffordable); later rewards are averaged over the
    draws. The estimator stays unbiased and equals EI exactly for ``h = 1``.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    C = candidates.shape[0]
    if state.remaining_budget <= 0:
        return np.zeros(C)
    draws = normal_draws(cfg) if draws is None else draws
    N = draws.shape[0]
    res = simulate(state, candidates, cfg, draws, mcfg)
    later = res.rewards[:, 1:].sum(axis=1).reshape(C, N).mean(axis=1)
    feasible0 = (res.feasible_length > 0).reshape(C, N)[:, 0]
    ei0 = expected_improvement(res.first_mean, res.first_var, state.best).reshape(C, N)[:, 0]
    return np.where(feasible0, ei0, 0.0) + later


def rollout_acquisition(state, x, cfg, mcfg=None):
    """Rollout acquisition value at a single point."""
    return float(rollout_values(state, np.atleast_2d(x), cfg, mcfg)[0])


def candidate_set(state, cfg, mcfg):
    """LHS candidates plus the EI and EI-per-unit-cost maximizers."""
    domain = state.domain
    d = domain.dim
    n = 10 * d if cfg.candidate_count is None else int(cfg.candidate_count)
    lhs = domain.from_unit(latin_hypercube(n, d, derive_seed(cfg.seed, 1000)))
    myopic = []
    for kind in ("EI", "EIPU"):
        acq = gp_acquisition(state.gp, state.best, kind, state.cost_model, state.cost_floor,
                             prev=state.prev_point)
        myopic.append(maximize(acq, domain, mcfg)[0])
    return np.vstack([lhs] + [p[None, :] for p in myopic])


def select_next(state, cfg, mcfg=None, return_info=False):
    """Candidate with the largest rollout value among those the budget allows.

    Raises
    ------
    BudgetExhausted
        If no candidate's predicted cost fits in the remaining budget.
    """
    mcfg = mcfg or MaximizerConfig()
    if state.remaining_budget <= 0:
        raise BudgetExhausted("no budget left")
    cands = candidate_set(state, cfg, mcfg)
    cost = state.step_cost(cands)
    feasible = cost < state.remaining_budget
    if not np.any(feasible):
        raise BudgetExhausted("every candidate exceeds the remaining budget")
    scores = np.full(len(cands), -np.inf)
    scores[feasible] = rollout_values(state, cands[feasible], cfg, mcfg)
    best = select_best(scores, cands)
    if return_info:
        return cands[best], {"candidates": cands, "scores": scores, "feasible": feasible,
                             "index": best}
    return cands[best]
