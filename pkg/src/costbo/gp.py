"""Gaussian process regression with a Matern-5/2 ARD kernel.

The regressor follows the scikit-learn estimator conventions (``fit`` /
``predict`` / ``get_params``) and adds the operations a Bayesian optimization
loop needs: posterior moments, reparameterized posterior samples and cheap
conditioning on extra (possibly fantasized) observations.

Hyperparameters are always reported in the units of the training data.
Fitting happens on inputs mapped to the unit box and standardized targets so
that the optimizer bounds are comparable across problems.
"""
import copy
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.stats import qmc
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import GPFitError, InvalidDataError, InvalidHyperparameterError

SQRT5 = math.sqrt(5.0)
JITTER_START = 1e-8
JITTER_MAX = 1e-4
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``[lower, upper]`` in ``R^d``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape or lower.size < 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length >= 1")
        if not np.all(lower < upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self):
        return self.lower.size

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, atol=1e-12):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def to_unit(self, x):
        return (np.asarray(x, dtype=float) - self.lower) / self.width

    def from_unit(self, u):
        return self.lower + np.asarray(u, dtype=float) * self.width

    def clip(self, x):
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class Observation:
    point: np.ndarray
    value: float
    cost: float

    def __post_init__(self):
        object.__setattr__(self, "point", np.atleast_1d(np.asarray(self.point, dtype=float)))
        if not self.cost > 0:
            raise InvalidDataError(f"observation cost must be positive, got {self.cost}")


@dataclass
class Dataset:
    """Observations in evaluation order."""

    observations: list = field(default_factory=list)

    def __len__(self):
        return len(self.observations)

    def append(self, obs):
        self.observations.append(obs)

    @property
    def X(self):
        if not self.observations:
            return np.empty((0, 0))
        return np.vstack([o.point for o in self.observations])

    @property
    def y(self):
        return np.array([o.value for o in self.observations], dtype=float)

    @property
    def costs(self):
        return np.array([o.cost for o in self.observations], dtype=float)

    def best(self):
        """Smallest observed value, ``inf`` when empty."""
        if not self.observations:
            return math.inf
        return float(np.min(self.y))


@dataclass(frozen=True)
class GPHyperparams:
    """Matern-5/2 ARD hyperparameters in data units.

    ``amplitude`` is the signal variance and ``noise_variance`` the variance of
    the Gaussian observation noise.
    """

    lengthscales: np.ndarray
    amplitude: float
    noise_variance: float = 0.0
    prior_mean: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise InvalidHyperparameterError(f"lengthscales must be positive, got {ls}")
        if not (math.isfinite(self.amplitude) and self.amplitude > 0):
            raise InvalidHyperparameterError(f"amplitude must be positive, got {self.amplitude}")
        if not (math.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise InvalidHyperparameterError(
                f"noise_variance must be non-negative, got {self.noise_variance}")

    def as_dict(self):
        return {
            "lengthscales": [float(v) for v in self.lengthscales],
            "amplitude": float(self.amplitude),
            "noise_variance": float(self.noise_variance),
            "prior_mean": float(self.prior_mean),
        }


def _matern52_from_scaled(r):
    return (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)


def matern52(X1, X2, lengthscales, amplitude):
    """Matern-5/2 ARD Gram matrix.

    Parameters
    ----------
    X1 : ndarray of shape (..., m, d)
    X2 : ndarray of shape (n, d) or (..., n, d)
    lengthscales : ndarray of shape (d,)
    amplitude : float

    Returns
    -------
    K : ndarray of shape (..., m, n)
    """
    ls = np.asarray(lengthscales, dtype=float)
    A = np.asarray(X1, dtype=float) / ls
    B = np.asarray(X2, dtype=float) / ls
    diff = A[..., :, None, :] - B[..., None, :, :]
    r = np.sqrt(np.einsum("...j,...j->...", diff, diff))
    return amplitude * _matern52_from_scaled(r)


def kernel_matern52_ard(x, x2, hp):
    """Covariance between two single points under ``hp``."""
    if np.any(np.asarray(hp.lengthscales) <= 0):
        raise InvalidHyperparameterError("lengthscales must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    r = np.sqrt(np.sum(((x - x2) / hp.lengthscales) ** 2))
    return float(hp.amplitude * _matern52_from_scaled(r))


def _cholesky_with_jitter(K, amplitude, start=JITTER_START):
    """Return ``(L, jitter)`` for ``K + jitter * I``, doubling jitter on failure."""
    n = K.shape[0]
    jitter = start * amplitude
    eye = np.eye(n)
    while jitter <= JITTER_MAX * amplitude * (1 + 1e-12):
        try:
            L = np.linalg.cholesky(K + jitter * eye)
            if np.all(np.isfinite(L)):
                return L, jitter
        except np.linalg.LinAlgError:
            pass
        jitter *= 2.0
    raise np.linalg.LinAlgError("matrix not positive definite even with maximal jitter")


# ---------------------------------------------------------------------------
# Hyperparameter fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitConfig:
    """Bounds and restarts for marginal likelihood maximization.

    Bounds are relative: lengthscales to the unit box, amplitude and noise to
    the variance of the targets.
    """

    n_starts: int = 8
    lengthscale_bounds: tuple = (1e-3, 1e3)
    amplitude_bounds: tuple = (1e-4, 1e4)
    noise_bounds: tuple = (1e-8, 1.0)
    start_lengthscales: tuple = (0.05, 2.0)
    start_amplitudes: tuple = (0.2, 5.0)
    start_noises: tuple = (1e-6, 1e-1)
    maxiter: int = 200


def _neg_lml_and_grad(theta, Xu, ys, sq_parts):
    """Negative log marginal likelihood in standardized units and its gradient.

    ``theta`` holds log lengthscales, log amplitude, log noise.
    ``sq_parts`` has shape (d, n, n): squared per-dimension differences.
    """
    d = Xu.shape[1]
    n = Xu.shape[0]
    ls = np.exp(theta[:d])
    amp = math.exp(theta[d])
    noise = math.exp(theta[d + 1])
    scaled = sq_parts / (ls * ls)[:, None, None]
    r = np.sqrt(np.sum(scaled, axis=0))
    e = np.exp(-SQRT5 * r)
    Kk = amp * (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * e
    try:
        L, jitter = _cholesky_with_jitter(Kk + noise * np.eye(n), amp)
    except np.linalg.LinAlgError:
        return None
    alpha = cho_solve((L, True), ys)
    lml = -0.5 * ys @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty(d + 2)
    common = amp * (5.0 / 3.0) * (1.0 + SQRT5 * r) * e
    for i in range(d):
        grad[i] = 0.5 * np.sum(W * (common * scaled[i]))
    grad[d] = 0.5 * (np.sum(W * Kk) + jitter * np.trace(W))
    grad[d + 1] = 0.5 * noise * np.trace(W)
    if not (np.isfinite(lml) and np.all(np.isfinite(grad))):
        return None
    return -lml, -grad


def _standardize(y):
    y = np.asarray(y, dtype=float)
    if y.size == 0 or np.ptp(y) == 0:
        # exact constant keeps residuals at exactly zero
        return (float(y[0]) if y.size else 0.0), 1.0
    std = float(np.std(y))
    return float(np.mean(y)), std


def _unit_scaling(X, domain):
    if domain is not None:
        return domain.lower, domain.width
    lo = X.min(axis=0)
    width = np.ptp(X, axis=0)
    width = np.where(width > 0, width, 1.0)
    return lo, width


def fit_hyperparameters(X, y, config=None, seed=0, domain=None):
    """Maximize the log marginal likelihood from several quasi-random starts.

    Parameters
    ----------
    X : ndarray of shape (n, d)
    y : ndarray of shape (n,)
    config : FitConfig, optional
    seed : int
        Seeds the scrambled Sobol sequence of starting points.
    domain : Domain, optional
        Used to map inputs to the unit box; the data range is used otherwise.

    Returns
    -------
    GPHyperparams
    """
    config = config or FitConfig()
    X = check_array(X, ensure_min_samples=2)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise InvalidDataError("X and y have inconsistent lengths")
    if not np.all(np.isfinite(y)):
        raise InvalidDataError("targets must be finite")
    n, d = X.shape
    lo, width = _unit_scaling(X, domain)
    Xu = (X - lo) / width
    ymean, ystd = _standardize(y)
    ys = (y - ymean) / ystd
    diff = Xu[:, None, :] - Xu[None, :, :]
    sq_parts = np.moveaxis(diff * diff, -1, 0)

    bounds = ([np.log(config.lengthscale_bounds)] * d
              + [np.log(config.amplitude_bounds), np.log(config.noise_bounds)])
    start_lo = np.log([config.start_lengthscales[0]] * d
                      + [config.start_amplitudes[0], config.start_noises[0]])
    start_hi = np.log([config.start_lengthscales[1]] * d
                      + [config.start_amplitudes[1], config.start_noises[1]])
    sobol = qmc.Sobol(d + 2, scramble=True, rng=seed)
    starts = qmc.scale(sobol.random(config.n_starts), start_lo, start_hi)

    def fun(theta):
        out = _neg_lml_and_grad(theta, Xu, ys, sq_parts)
        if out is None:
            return 1e25, np.zeros_like(theta)
        return out

    best_theta, best_val = None, math.inf
    diagnostics = []
    for k, theta0 in enumerate(starts):
        if _neg_lml_and_grad(theta0, Xu, ys, sq_parts) is None:
            diagnostics.append({"start": k, "theta0": theta0.tolist(),
                                "reason": "factorization failed at start"})
            continue
        res = minimize(fun, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": config.maxiter})
        val = float(res.fun)
        if not np.isfinite(val) or val >= 1e25:
            diagnostics.append({"start": k, "theta0": theta0.tolist(),
                                "reason": f"optimizer ended at invalid point: {res.message}"})
            continue
        if val < best_val:
            best_val, best_theta = val, np.asarray(res.x)
    if best_theta is None:
        raise GPFitError("all hyperparameter starts failed", diagnostics)

    return GPHyperparams(
        lengthscales=np.exp(best_theta[:d]) * width,
        amplitude=float(np.exp(best_theta[d])) * ystd ** 2,
        noise_variance=float(np.exp(best_theta[d + 1])) * ystd ** 2,
        prior_mean=ymean,
    )


def log_marginal_likelihood_dense(X, y, hp, jitter=None):
    """Direct dense-formula log marginal likelihood (no factorization reuse)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    jitter = JITTER_START * hp.amplitude if jitter is None else jitter
    K = matern52(X, X, hp.lengthscales, hp.amplitude) + (hp.noise_variance + jitter) * np.eye(n)
    r = y - hp.prior_mean
    sign, logdet = np.linalg.slogdet(K)
    return float(-0.5 * r @ np.linalg.solve(K, r) - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi))


# ---------------------------------------------------------------------------
# Regressor
# ---------------------------------------------------------------------------

class GaussianProcess(RegressorMixin, BaseEstimator):
    """GP regressor with a Matern-5/2 ARD kernel and constant prior mean.

    Parameters
    ----------
    domain : Domain, optional
        Search box used to normalize inputs during hyperparameter fitting.
    hyperparams : GPHyperparams, optional
        Fixed hyperparameters. When given, ``fit`` skips optimization.
    fit_config : FitConfig, optional
    random_state : int, default=0
        Seed for the hyperparameter optimization starts.

    Attributes
    ----------
    hyperparams_ : GPHyperparams
    X_train_ : ndarray of shape (n, d)
    y_train_ : ndarray of shape (n,)
    L_ : ndarray of shape (n, n)
        Lower Cholesky factor of ``K + (noise + jitter) I``.
    alpha_ : ndarray of shape (n,)
    jitter_ : float
    """

    def __init__(self, domain=None, hyperparams=None, fit_config=None, random_state=0):
        self.domain = domain
        self.hyperparams = hyperparams
        self.fit_config = fit_config
        self.random_state = random_state

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim == 1:
            X = X.reshape(-1, 1) if self.domain is None or self.domain.dim == 1 else X.reshape(1, -1)
        if X.shape[0] != y.shape[0]:
            raise InvalidDataError("X and y have inconsistent lengths")
        if X.shape[0] > 0:
            X = check_array(X)
        if self.hyperparams is not None:
            hp = self.hyperparams
        else:
            hp = fit_hyperparameters(X, y, self.fit_config, self.random_state, self.domain)
        self._set_data(X, y, hp)
        return self

    def _set_data(self, X, y, hp, jitter_start=JITTER_START):
        self.hyperparams_ = hp
        self.X_train_ = X
        self.y_train_ = y
        n = X.shape[0]
        if n == 0:
            self.L_ = np.empty((0, 0))
            self.alpha_ = np.empty(0)
            self.jitter_ = JITTER_START * hp.amplitude
            return
        K = matern52(X, X, hp.lengthscales, hp.amplitude) + hp.noise_variance * np.eye(n)
        self.L_, self.jitter_ = _cholesky_with_jitter(K, hp.amplitude, jitter_start)
        self.alpha_ = cho_solve((self.L_, True), y - hp.prior_mean)

    @property
    def n_features_(self):
        return self.X_train_.shape[1] if self.X_train_.size else len(self.hyperparams_.lengthscales)

    def _as_points(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        return X

    def posterior(self, X):
        """Posterior mean and variance at one point or an (m, d) array."""
        check_is_fitted(self, "L_")
        single = np.asarray(X).ndim == 1
        mean, var, _ = self._posterior_parts(self._as_points(X))
        if single:
            return float(mean[0]), float(var[0])
        return mean, var

    def _posterior_parts(self, Q):
        hp = self.hyperparams_
        if self.X_train_.shape[0] == 0:
            m = Q.shape[0]
            return (np.full(m, float(hp.prior_mean)), np.full(m, float(hp.amplitude)),
                    np.empty((0, m)))
        Ks = matern52(Q, self.X_train_, hp.lengthscales, hp.amplitude)
        mean = hp.prior_mean + Ks @ self.alpha_
        V = solve_triangular(self.L_, Ks.T, lower=True, check_finite=False)
        var = hp.amplitude - np.sum(V * V, axis=0)
        var = np.where(var < VARIANCE_FLOOR, 0.0, var)
        return mean, var, V

    def predict(self, X, return_std=False):
        mean, var = self.posterior(self._as_points(X))
        if return_std:
            return mean, np.sqrt(var)
        return mean

    def sample_posterior(self, x, z):
        """Reparameterized draw ``mean + sqrt(var) * z``."""
        mean, var = self.posterior(x)
        if np.ndim(mean) == 0:
            return mean + math.sqrt(var) * float(z)
        return mean + np.sqrt(var) * np.asarray(z, dtype=float)

    def log_marginal_likelihood(self):
        """Log marginal likelihood of the training data from the stored factor."""
        check_is_fitted(self, "L_")
        n = self.X_train_.shape[0]
        r = self.y_train_ - self.hyperparams_.prior_mean
        return float(-0.5 * r @ self.alpha_ - np.sum(np.log(np.diag(self.L_)))
                     - 0.5 * n * math.log(2 * math.pi))

    def condition(self, x, y):
        """Return a new regressor that also observes ``(x, y)``.

        Hyperparameters are kept. The Cholesky factor is extended by one
        bordered row; on loss of positive definiteness the extended matrix is
        refactorized with escalating jitter.
        """
        check_is_fitted(self, "L_")
        hp = self.hyperparams_
        x = np.atleast_1d(np.asarray(x, dtype=float))
        X_new = np.vstack([self.X_train_.reshape(-1, x.size), x[None, :]])
        y_new = np.append(self.y_train_, float(y))
        new = copy.copy(self)
        n = self.X_train_.shape[0]
        diag = hp.amplitude + hp.noise_variance + self.jitter_
        if n == 0:
            l = np.empty(0)
        else:
            ks = matern52(x[None, :], self.X_train_, hp.lengthscales, hp.amplitude)[0]
            l = solve_triangular(self.L_, ks, lower=True, check_finite=False)
        d2 = diag - l @ l
        if not np.isfinite(d2) or d2 <= 1e-14 * hp.amplitude:
            new._set_data(X_new, y_new, hp, jitter_start=self.jitter_ / hp.amplitude)
            return new
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = self.L_
        L[n, :n] = l
        L[n, n] = math.sqrt(d2)
        new.hyperparams_ = hp
        new.X_train_ = X_new
        new.y_train_ = y_new
        new.L_ = L
        new.jitter_ = self.jitter_
        new.alpha_ = cho_solve((L, True), y_new - hp.prior_mean)
        return new


def posterior(model, x):
    """Posterior ``(mean, variance)`` of ``model`` at ``x``."""
    return model.posterior(x)


def sample_posterior(model, x, z):
    return model.sample_posterior(x, z)


def condition(model, obs):
    """Condition ``model`` on an :class:`Observation`; the input is not modified."""
    return model.condition(obs.point, obs.value)


class FantasyBatch:
    """Many independent fantasy extensions of one fitted GP.

    Trajectory ``b`` conditions the shared base posterior on its own fantasy
    points ``F[b]`` with values ``yF[b]``. Queries are answered for all
    trajectories at once; hyperparameters stay frozen.

    Parameters
    ----------
    gp : GaussianProcess
        Fitted base model.
    n_batch : int
        Number of independent trajectories.
    """

    def __init__(self, gp, n_batch):
        check_is_fitted(gp, "L_")
        self.gp = gp
        self.n_batch = n_batch
        d = gp.n_features_
        self.F = np.empty((n_batch, 0, d))
        self.yF = np.empty((n_batch, 0))
        self._refresh()

    @property
    def n_fantasies(self):
        return self.F.shape[1]

    def _base_parts(self, P):
        """Base mean, prior kernel rows and whitened cross terms for points (B, m, d)."""
        gp = self.gp
        hp = gp.hyperparams_
        B, m, d = P.shape
        n = gp.X_train_.shape[0]
        if n == 0:
            return np.full((B, m), float(hp.prior_mean)), np.zeros((B, m, 0))
        kP = matern52(P.reshape(B * m, d), gp.X_train_, hp.lengthscales, hp.amplitude)
        mean = hp.prior_mean + kP @ gp.alpha_
        V = solve_triangular(gp.L_, kP.T, lower=True, check_finite=False)
        return mean.reshape(B, m), V.T.reshape(B, m, n)

    def _refresh(self):
        t = self.n_fantasies
        if t == 0:
            return
        hp = self.gp.hyperparams_
        self._muF, self._VF = self._base_parts(self.F)
        kFF = matern52(self.F, self.F, hp.lengthscales, hp.amplitude)
        A = kFF - self._VF @ np.swapaxes(self._VF, 1, 2)
        A = A + (hp.noise_variance + self.gp.jitter_) * np.eye(t)
        try:
            LA = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            LA = np.linalg.cholesky(A + JITTER_MAX * hp.amplitude * np.eye(t))
        self._LAinv = np.linalg.inv(LA)
        resid = self.yF - self._muF
        tmp = np.einsum("bij,bj->bi", self._LAinv, resid)
        self._w = np.einsum("bji,bj->bi", self._LAinv, tmp)

    def add(self, X_new, y_new):
        """Append one fantasy observation per trajectory."""
        X_new = np.asarray(X_new, dtype=float).reshape(self.n_batch, 1, -1)
        y_new = np.asarray(y_new, dtype=float).reshape(self.n_batch, 1)
        self.F = np.concatenate([self.F, X_new], axis=1)
        self.yF = np.concatenate([self.yF, y_new], axis=1)
        self._refresh()

    def posterior(self, Q, idx=None):
        """Posterior mean and variance of shape (q, m) for Q of shape (q, m, d).

        Row ``j`` of ``Q`` is answered by trajectory ``idx[j]`` (all
        trajectories in order when ``idx`` is None).
        """
        Q = np.asarray(Q, dtype=float)
        hp = self.gp.hyperparams_
        mean, VQ = self._base_parts(Q)
        var = hp.amplitude - np.sum(VQ * VQ, axis=-1)
        if self.n_fantasies:
            if idx is None:
                idx = np.arange(self.n_batch)
            F, VF = self.F[idx], self._VF[idx]
            kQF = matern52(Q, F, hp.lengthscales, hp.amplitude)
            C = kQF - VQ @ np.swapaxes(VF, 1, 2)
            mean = mean + np.einsum("bmt,bt->bm", C, self._w[idx])
            G = np.einsum("bij,bmj->bmi", self._LAinv[idx], C)
            var = var - np.sum(G * G, axis=-1)
        var = np.where(var < VARIANCE_FLOOR, 0.0, var)
        return mean, var
