"""Benchmark objective/cost pairs and a name registry for the CLI."""
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import InvalidProblemError
from .gp import Domain

MOVEMENT_COST_FLOOR = 1e-3


@dataclass(frozen=True)
class Problem:
    """A black-box objective with its evaluation cost.

    ``objective`` and ``cost`` accept a point of shape ``(d,)`` or a batch of
    shape ``(m, d)``. When ``state_dependent`` is set, ``cost`` takes
    ``(prev, X)`` where ``prev`` is the previously evaluated point and
    ``initial_state`` is the point the first evaluation moves from.
    """

    name: str
    domain: Domain
    objective: callable
    cost: callable
    known_optimum: tuple = None
    default_budget: float = None
    state_dependent: bool = False
    initial_state: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def evaluate(self, x, prev=None):
        """Return ``(value, cost)`` at a single point."""
        x = np.asarray(x, dtype=float)
        value = float(self.objective(x))
        if self.state_dependent:
            prev = self.initial_state if prev is None else prev
            cost = float(np.asarray(self.cost(prev, x[None, :]))[0])
        else:
            cost = float(self.cost(x))
        return value, cost


def _ring_objective(X):
    r = np.linalg.norm(np.asarray(X, dtype=float), axis=-1)
    return 10.0 * r * np.sin(2.0 * np.pi * r)


def _ring_cost(X):
    r = np.linalg.norm(np.asarray(X, dtype=float), axis=-1)
    return 10.0 - 5.0 * r


def _ring_radius_minimum():
    res = minimize_scalar(lambda r: 10.0 * r * math.sin(2.0 * math.pi * r),
                          bounds=(0.5, 1.0), method="bounded", options={"xatol": 1e-12})
    return float(res.x), float(res.fun)


def ring_problem():
    """Multimodal radial objective whose cheap region is the outer corners.

    ``f(x) = 10 |x| sin(2 pi |x|)`` and ``c(x) = 10 - 5 |x|`` on ``[-1, 1]^2``.
    The global minimum is attained on the circle ``|x| ~ 0.77``; the stored
    optimum is the point of that circle on the positive first axis.
    """
    r_star, f_star = _ring_radius_minimum()
    return Problem(
        name="ring",
        domain=Domain([-1.0, -1.0], [1.0, 1.0]),
        objective=_ring_objective,
        cost=_ring_cost,
        known_optimum=(np.array([r_star, 0.0]), f_star),
        default_budget=150.0,
    )


def uniform_cost_problem(base, cost=5.0):
    """``base`` with a constant evaluation cost."""
    def constant(X):
        X = np.asarray(X, dtype=float)
        return np.full(X.shape[:-1], float(cost)) if X.ndim > 1 else float(cost)
    return replace(base, name=f"{base.name}-uniform", cost=constant, state_dependent=False)


def _bump(s):
    s = np.asarray(s, dtype=float)
    inside = s < 1.0
    safe = np.where(inside, s, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe * safe)), 0.0)


def adversarial_cost_problem(base, markup, radius):
    """Raise the cost near the optimum of ``base`` by up to ``markup``.

    The multiplier is ``1 + (markup - 1) * bump(|x - x*| / radius)`` with a
    compactly supported smooth bump equal to one at the optimum.
    """
    if base.known_optimum is None:
        raise InvalidProblemError(f"problem {base.name!r} has no known optimum")
    if markup <= 0 or radius <= 0:
        raise ValueError("markup and radius must be positive")
    if base.state_dependent:
        raise InvalidProblemError("adversarial markup needs a state-independent cost")
    x_star = np.asarray(base.known_optimum[0], dtype=float)
    base_cost = base.cost

    def cost(X):
        X = np.asarray(X, dtype=float)
        s = np.linalg.norm(X - x_star, axis=-1) / radius
        return base_cost(X) * (1.0 + (markup - 1.0) * _bump(s))

    return replace(base, name=f"{base.name}-adversarial", cost=cost,
                   metadata={**base.metadata, "markup": markup, "radius": radius})


def _synthetic_field(seed, n_bumps=6):
    rng = np.random.default_rng(seed)
    centres = rng.uniform(0.0, 1.0, size=(n_bumps, 2))
    widths = rng.uniform(0.1, 0.3, size=n_bumps)
    heights = rng.normal(0.0, 1.0, size=n_bumps)
    trend = rng.normal(0.0, 0.5, size=2)

    def field_fn(P):
        P = np.asarray(P, dtype=float)
        d2 = np.sum((P[..., None, :] - centres) ** 2, axis=-1)
        return np.exp(-0.5 * d2 / widths ** 2) @ heights + P @ trend

    return field_fn


def sensor_stand_in(m=3, field_seed=0, grid_size=15, budget=5.0):
    """Sensor placement on ``[0, 1]^2`` with a movement cost.

    A point is the flattened ``(m, 2)`` configuration. The objective is the
    RMSE of inverse-distance-weighted predictions from the sensor readings
    against a seeded smooth field on a fixed grid. Moving from configuration
    ``A`` to ``B`` costs ``max(|A - B|_F, 1e-3)``.
    """
    if m < 1:
        raise ValueError("need at least one sensor")
    field_fn = _synthetic_field(field_seed)
    g = np.linspace(0.0, 1.0, grid_size)
    grid = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    truth = field_fn(grid)

    def objective(X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        S = X.reshape(-1, m, 2)
        readings = field_fn(S)  # (b, m)
        d = np.linalg.norm(grid[None, :, None, :] - S[:, None, :, :], axis=-1)  # (b, g, m)
        hit = d < 1e-12
        w = 1.0 / np.where(hit, 1.0, d) ** 2
        w = np.where(hit.any(axis=-1, keepdims=True), hit.astype(float), w)
        pred = np.sum(w * readings[:, None, :], axis=-1) / np.sum(w, axis=-1)
        rmse = np.sqrt(np.mean((pred - truth) ** 2, axis=-1))
        return float(rmse[0]) if single else rmse

    def cost(prev, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        prev = np.asarray(prev, dtype=float)
        return np.maximum(np.linalg.norm(X - prev, axis=-1), MOVEMENT_COST_FLOOR)

    start = np.full(2 * m, 0.5)
    return Problem(
        name="sensor",
        domain=Domain(np.zeros(2 * m), np.ones(2 * m)),
        objective=objective,
        cost=cost,
        default_budget=budget,
        state_dependent=True,
        initial_state=start,
        metadata={"sensors": m, "field_seed": field_seed, "grid_size": grid_size},
    )


PROBLEMS = {
    "ring": ring_problem,
    "ring-uniform": lambda: uniform_cost_problem(ring_problem()),
    "ring-adversarial": lambda: adversarial_cost_problem(ring_problem(), 10.0, 0.5),
    "sensor": sensor_stand_in,
}


def get_problem(name):
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
