"""Myopic acquisitions and a deterministic multi-start maximizer.

Acquisition evaluators follow one batched protocol so that the same
maximizer serves a single acquisition and thousands of independent ones
(the inner steps of simulated rollouts)::

    values = acq(X, idx)

``X`` has shape ``(q, k, d)`` and holds ``k`` query points for each of ``q``
problems, ``idx`` has shape ``(q,)`` and names the problem each row belongs
to. ``values`` has shape ``(q, k)``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import qmc

from .exceptions import MaximizationError

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
TIE_RTOL = 1e-12


def expected_improvement(mean, variance, best):
    """Closed-form expected improvement for minimization.

    Parameters
    ----------
    mean, variance : float or ndarray
        Posterior moments; ``variance`` must be non-negative.
    best : float or ndarray
        Incumbent (smallest observed) value.

    Returns
    -------
    float or ndarray
        ``E[max(best - Y, 0)]`` for ``Y ~ N(mean, variance)``.
    """
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    improvement = np.asarray(best, dtype=float) - mean
    sigma = np.sqrt(np.maximum(variance, 0.0))
    positive = sigma > 0
    safe_sigma = np.where(positive, sigma, 1.0)
    with np.errstate(over="ignore"):
        z = improvement / safe_sigma
        ei = improvement * ndtr(z) + safe_sigma * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    ei = np.where(positive, ei, np.maximum(improvement, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def ei_per_unit_cost(ei, cost):
    """Expected improvement divided by a positive cost."""
    if np.ndim(ei) == 0 and np.ndim(cost) == 0:
        return float(ei) / float(cost)
    return np.asarray(ei, dtype=float) / np.asarray(cost, dtype=float)


def gp_acquisition(gp, best, kind="EI", cost_model=None, cost_floor=0.0, prev=None):
    """Wrap a fitted GP (and cost model) as a function of an (m, d) array.

    EIpu divides by cost relative to the cost at the domain centre; the
    reference is a positive constant so the maximizer is unchanged, and a
    constant cost model reproduces EI bit for bit.
    """
    kind = kind.upper()
    if kind not in ("EI", "EIPU"):
        raise ValueError(f"unknown acquisition kind {kind!r}")
    if kind == "EIPU" and cost_model is None:
        raise ValueError("EIPU requires a cost model")
    ref = None
    if kind == "EIPU":
        ref = cost_model.reference_cost(cost_floor)

    def acq(X):
        X = np.atleast_2d(X)
        mean, var = gp.posterior(X)
        ei = expected_improvement(mean, var, best)
        if kind == "EIPU":
            cost = np.maximum(cost_model.predict(X, prev=prev), cost_floor)
            ei = ei_per_unit_cost(ei, cost / ref)
        return np.atleast_1d(ei)

    return acq


@dataclass(frozen=True)
class MaximizerConfig:
    """Settings for :func:`maximize`.

    ``lhs_count`` defaults to ``10 * d`` when ``None``.
    """

    lhs_count: int = None
    restarts: int = 5
    maxiter: int = 50
    fd_step: float = 1e-6
    seed: int = 0

    def resolved_lhs(self, d):
        n = 10 * d if self.lhs_count is None else int(self.lhs_count)
        if n < 1 or self.restarts < 1:
            raise ValueError("lhs_count and restarts must be positive")
        if self.restarts > n:
            raise ValueError("restarts must not exceed lhs_count")
        return n


def latin_hypercube(n, d, seed):
    """``n`` Latin hypercube points in the unit box, deterministic in ``seed``."""
    return qmc.LatinHypercube(d, rng=np.random.default_rng(seed)).random(n)


def lexicographic_rank(points):
    """Rank of each row of ``points`` in lexicographic (first coordinate major) order."""
    order = np.lexsort(points.T[::-1])
    rank = np.empty(len(points), dtype=int)
    rank[order] = np.arange(len(points))
    return rank


def select_best(values, points, rtol=TIE_RTOL):
    """Index of the maximum; near ties go to the lexicographically smallest point.

    Parameters
    ----------
    values : ndarray of shape (..., m)
    points : ndarray of shape (..., m, d)

    Returns
    -------
    ndarray of shape (...,) of int, or int for 1-d ``values``.
    """
    values = np.asarray(values, dtype=float)
    points = np.asarray(points, dtype=float)
    squeeze = values.ndim == 1
    if squeeze:
        values, points = values[None], points[None]
    v = np.where(np.isfinite(values), values, -np.inf)
    vmax = np.max(v, axis=-1, keepdims=True)
    mask = v >= vmax - rtol * np.abs(vmax)
    mask &= np.isfinite(vmax)
    for j in range(points.shape[-1]):
        coord = np.where(mask, points[..., j], np.inf)
        mask &= coord == np.min(coord, axis=-1, keepdims=True)
    out = np.argmax(mask, axis=-1)
    return int(out[0]) if squeeze else out


def _fd_gradient(fun, U, idx, h):
    q, d = U.shape
    eye = np.eye(d)
    up = np.minimum(U[:, None, :] + h * eye, 1.0)
    dn = np.maximum(U[:, None, :] - h * eye, 0.0)
    vals = fun(np.concatenate([up, dn], axis=1), idx)
    denom = np.einsum("qjj->qj", up - dn)
    return (vals[:, :d] - vals[:, d:]) / denom


def quasi_newton_ascent(fun, U0, idx, maxiter=50, h=1e-6, xtol=1e-9, ftol=1e-12):
    """Batched projected BFGS ascent on the unit box.

    Every row of ``U0`` is an independent start; ``fun`` is evaluated with the
    batched protocol in unit coordinates. Gradients are central finite
    differences (one-sided at active bounds). Each accepted step satisfies an
    Armijo condition, so values never decrease. A row stops when its step
    falls below ``xtol`` or its relative gain below ``ftol``.

    Returns
    -------
    U : ndarray of shape (q, d)
    f : ndarray of shape (q,)
    """
    U = np.array(U0, dtype=float)
    idx = np.asarray(idx)
    q, d = U.shape
    f = fun(U[:, None, :], idx)[:, 0]
    g = _fd_gradient(fun, U, idx, h)
    eye = np.eye(d)
    gscale = np.max(np.abs(g), axis=1)
    H = eye[None] * np.where(gscale > 0, 0.1 / np.where(gscale > 0, gscale, 1.0), 1.0)[:, None, None]
    fresh = np.ones(q, dtype=bool)
    done = ~np.isfinite(f) | (gscale == 0) | ~np.all(np.isfinite(g), axis=1)

    for _ in range(maxiter):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        Ua, ga, fa, Ha = U[act], g[act], f[act], H[act]
        free = ~(((Ua <= 0.0) & (ga < 0.0)) | ((Ua >= 1.0) & (ga > 0.0)))
        gf = ga * free
        dirn = np.einsum("qij,qj->qi", Ha, gf) * free
        slope = np.sum(ga * dirn, axis=1)
        gmax = np.max(np.abs(gf), axis=1)
        reset = ~(slope > 0)
        if np.any(reset):
            c = 0.1 / np.where(gmax > 0, gmax, 1.0)
            dirn[reset] = c[reset, None] * gf[reset]
            Ha[reset] = eye * c[reset, None, None]
            fresh_a = fresh[act]
            fresh_a[reset] = True
            fresh[act] = fresh_a
        stalled = gmax == 0

        # backtracking on the projected path, only for rows still searching
        alpha = np.ones(act.size)
        accepted = np.zeros(act.size, dtype=bool)
        U_new = Ua.copy()
        f_new = fa.copy()
        searching = ~stalled
        for _ls in range(30):
            rows = np.flatnonzero(searching & ~accepted)
            if rows.size == 0:
                break
            trial = np.clip(Ua[rows] + alpha[rows, None] * dirn[rows], 0.0, 1.0)
            step = trial - Ua[rows]
            moved = np.any(step != 0.0, axis=1)
            ft = fun(trial[:, None, :], idx[act[rows]])[:, 0]
            gain = np.sum(ga[rows] * step, axis=1)
            ok = moved & np.isfinite(ft) & (ft >= fa[rows] + 1e-4 * gain) & (ft > fa[rows])
            acc_rows = rows[ok]
            accepted[acc_rows] = True
            U_new[acc_rows] = trial[ok]
            f_new[acc_rows] = ft[ok]
            searching[rows[~moved]] = False
            alpha[rows[~ok]] *= 0.5
        finished = ~accepted
        done[act[finished]] = True

        acc = np.flatnonzero(accepted)
        if acc.size == 0:
            continue
        rows_g = act[acc]
        g_new = _fd_gradient(fun, U_new[acc], idx[rows_g], h)
        s = U_new[acc] - Ua[acc]
        yv = ga[acc] - g_new
        sy = np.sum(s * yv, axis=1)
        good = sy > 1e-12 * np.linalg.norm(s, axis=1) * np.linalg.norm(yv, axis=1)
        Hs = Ha[acc]
        yy = np.sum(yv * yv, axis=1)
        scale_first = fresh[rows_g] & good & (yy > 0)
        if np.any(scale_first):
            Hs[scale_first] = eye * (sy[scale_first] / yy[scale_first])[:, None, None]
        if np.any(good):
            rho = 1.0 / sy[good]
            Sg, Yg, Hg = s[good], yv[good], Hs[good]
            V = eye[None] - rho[:, None, None] * Sg[:, :, None] * Yg[:, None, :]
            Hg = V @ Hg @ np.swapaxes(V, 1, 2) + rho[:, None, None] * Sg[:, :, None] * Sg[:, None, :]
            Hs[good] = Hg
        fresh[rows_g[good]] = False
        H[act] = Ha
        H[rows_g] = Hs
        small = (np.max(np.abs(s), axis=1) < xtol) | (
            np.abs(f_new[acc] - fa[acc]) <= ftol * np.maximum(np.abs(fa[acc]), 1e-300))
        U[rows_g] = U_new[acc]
        f[rows_g] = f_new[acc]
        g[rows_g] = g_new
        done[rows_g[small | ~np.all(np.isfinite(g_new), axis=1)]] = True
    return U, f


def maximize_batch(acq, n_problems, domain, cfg=None, seed=None):
    """Maximize ``n_problems`` batched acquisitions over ``domain``.

    A Latin hypercube of ``cfg.lhs_count`` points (shared by all problems) is
    scored, the best ``cfg.restarts`` points of each problem seed a
    box-constrained quasi-Newton refinement, and the best refined point wins
    with lexicographic tie-breaking.

    Returns
    -------
    X : ndarray of shape (n_problems, d)
    values : ndarray of shape (n_problems,)
    """
    cfg = cfg or MaximizerConfig()
    seed = cfg.seed if seed is None else seed
    d = domain.dim
    n_lhs = cfg.resolved_lhs(d)
    U_lhs = latin_hypercube(n_lhs, d, seed)
    X_lhs = domain.from_unit(U_lhs)
    idx_all = np.arange(n_problems)

    def fun_unit(U, idx):
        return acq(domain.from_unit(U), idx)

    vals = fun_unit(np.broadcast_to(U_lhs, (n_problems, n_lhs, d)), idx_all)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    if np.any(np.all(np.isinf(vals), axis=1)):
        raise MaximizationError("acquisition is non-finite at every candidate")
    lex = np.broadcast_to(lexicographic_rank(X_lhs), vals.shape)
    order = np.lexsort((lex, -vals), axis=-1)[:, :cfg.restarts]
    starts = U_lhs[order]  # (B, r, d)
    r = cfg.restarts
    U, f = quasi_newton_ascent(fun_unit, starts.reshape(n_problems * r, d),
                               np.repeat(idx_all, r), cfg.maxiter, cfg.fd_step)
    U = U.reshape(n_problems, r, d)
    f = f.reshape(n_problems, r)
    X = domain.from_unit(U)
    best = select_best(f, X)
    return X[idx_all, best], f[idx_all, best]


def maximize(acq, domain, cfg=None, seed=None):
    """Maximize ``acq``, a function mapping an ``(m, d)`` array to ``m`` values.

    Returns
    -------
    point : ndarray of shape (d,)
    value : float
    """
    def batched(X, idx):
        q, k, d = X.shape
        return np.reshape(np.asarray(acq(X.reshape(q * k, d)), dtype=float), (q, k))

    X, v = maximize_batch(batched, 1, domain, cfg, seed)
    return X[0], float(v[0])
