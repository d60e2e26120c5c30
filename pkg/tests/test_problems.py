import math

import numpy as np
import pytest

from costbo.acquisition import gp_acquisition
from costbo.costmodel import analytic_cost
from costbo.exceptions import InvalidProblemError
from costbo.gp import GaussianProcess
from costbo.problems import (PROBLEMS, MOVEMENT_COST_FLOOR, Problem, adversarial_cost_problem,
                             get_problem, ring_problem, sensor_stand_in, uniform_cost_problem)


def test_ring_formulas():
    ring = ring_problem()
    assert ring.evaluate([0.0, 0.0]) == (0.0, 10.0)
    v, c = ring.evaluate([0.3, 0.4])
    assert abs(v) < 1e-14
    assert c == 7.5
    assert ring.default_budget == 150.0
    np.testing.assert_array_equal(ring.domain.lower, [-1, -1])


def test_ring_optimum_matches_radial_grid_search():
    r = np.arange(0, math.sqrt(2), 1e-5)
    f = 10 * r * np.sin(2 * np.pi * r)
    i = np.argmin(f)
    x_star, f_star = ring_problem().known_optimum
    assert abs(np.linalg.norm(x_star) - r[i]) < 1e-5
    assert abs(f_star - f[i]) < 1e-8
    assert f_star == pytest.approx(-7.6, abs=0.1)
    assert np.linalg.norm(x_star) == pytest.approx(0.77, abs=0.02)


def test_ring_cost_range():
    ring = ring_problem()
    X = np.random.default_rng(0).uniform(-1, 1, (10_000, 2))
    c = ring.cost(X)
    assert np.all(c >= 10 - 5 * math.sqrt(2)) and np.all(c <= 10)
    assert ring.cost(np.array([1.0, 1.0])) == pytest.approx(10 - 5 * math.sqrt(2))


def test_problems_are_deterministic():
    X = np.random.default_rng(1).uniform(-1, 1, (50, 2))
    for name in ("ring", "ring-uniform", "ring-adversarial"):
        p, q = get_problem(name), get_problem(name)
        for x in X:
            assert p.evaluate(x) == q.evaluate(x)


def test_adversarial_markup_one_is_identity():
    ring = ring_problem()
    adv = adversarial_cost_problem(ring, 1.0, 0.5)
    X = np.random.default_rng(2).uniform(-1, 1, (500, 2))
    np.testing.assert_array_equal(adv.cost(X), ring.cost(X))
    np.testing.assert_array_equal(adv.objective(X), ring.objective(X))


def test_adversarial_markup_at_optimum_and_outside_radius():
    ring = ring_problem()
    adv = adversarial_cost_problem(ring, 10.0, 0.5)
    x_star = ring.known_optimum[0]
    assert adv.cost(x_star) == pytest.approx(10 * ring.cost(x_star), rel=1e-14)
    far = x_star + np.array([0.0, 0.6])
    assert adv.cost(far) == ring.cost(far)


def test_adversarial_needs_known_optimum():
    base = Problem("p", ring_problem().domain, lambda x: 0.0, lambda x: 1.0)
    with pytest.raises(InvalidProblemError):
        adversarial_cost_problem(base, 10.0, 0.5)


def test_adversarial_eipu_drops_by_markup_at_optimum():
    ring = ring_problem()
    adv = adversarial_cost_problem(ring, 10.0, 0.5)
    X = ring.domain.from_unit(np.random.default_rng(3).uniform(size=(12, 2)))
    y = ring.objective(X)
    gp = GaussianProcess(domain=ring.domain).fit(X, y)
    x_star = ring.known_optimum[0][None, :]
    base = gp_acquisition(gp, y.min(), "EIPU", analytic_cost(ring.cost, ring.domain))(x_star)
    marked = gp_acquisition(gp, y.min(), "EIPU", analytic_cost(adv.cost, adv.domain))(x_star)
    # the centre reference cost is untouched by the markup, so the ratio is exact
    assert base[0] / marked[0] == pytest.approx(10.0, rel=1e-12)


def test_uniform_cost_problem():
    p = uniform_cost_problem(ring_problem(), 5.0)
    assert p.evaluate([0.2, 0.1])[1] == 5.0
    np.testing.assert_array_equal(p.cost(np.zeros((4, 2))), 5.0)


def test_sensor_zero_movement_costs_floor():
    p = sensor_stand_in(m=3)
    x = np.random.default_rng(4).uniform(size=6)
    assert p.cost(x, x[None, :])[0] == MOVEMENT_COST_FLOOR


def test_sensor_single_coordinate_move():
    p = sensor_stand_in(m=2)
    x = np.full(4, 0.5)
    for delta in (0.3, 1e-4):
        y = x.copy()
        y[2] += delta
        assert p.cost(x, y[None, :])[0] == pytest.approx(max(delta, MOVEMENT_COST_FLOOR), rel=1e-12)


def test_sensor_spread_beats_coincident_placement():
    p = sensor_stand_in(m=4)
    spread = np.array([0, 0, 0, 1, 1, 0, 1, 1], dtype=float)
    coincident = np.full(8, 0.5)
    assert p.objective(spread) < p.objective(coincident)


def test_sensor_first_move_starts_from_initial_state():
    p = sensor_stand_in(m=1)
    _, c = p.evaluate(np.array([0.5, 0.9]))
    assert c == pytest.approx(0.4)
    _, c = p.evaluate(np.array([0.5, 0.9]), prev=np.array([0.5, 0.8]))
    assert c == pytest.approx(0.1)


def test_sensor_objective_batches():
    p = sensor_stand_in(m=2)
    X = np.random.default_rng(5).uniform(size=(7, 4))
    np.testing.assert_allclose(p.objective(X), [p.objective(x) for x in X], rtol=1e-14)


def test_registry():
    assert set(PROBLEMS) >= {"ring", "ring-uniform", "ring-adversarial", "sensor"}
    with pytest.raises(KeyError):
        get_problem("nope")
