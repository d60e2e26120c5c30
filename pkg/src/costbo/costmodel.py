"""Surrogates for the evaluation cost.

Two modes share one interface: ``learned`` fits a GP to log costs and
predicts ``exp`` of its posterior mean (the median of the implied lognormal),
``analytic`` passes the problem's known cost function through unchanged.
"""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidDataError
from .gp import GaussianProcess


class CostModel(RegressorMixin, BaseEstimator):
    """Positive cost surrogate.

    Parameters
    ----------
    mode : {"learned", "analytic"}
    cost_fn : callable, optional
        Analytic cost. Maps an ``(m, d)`` array to ``m`` costs, or, when
        ``state_dependent`` is set, ``(prev, X)`` to ``m`` costs.
    state_dependent : bool, default=False
    domain : Domain, optional
    fit_config : FitConfig, optional
    random_state : int, default=0
    """

    def __init__(self, mode="learned", cost_fn=None, state_dependent=False, domain=None,
                 fit_config=None, random_state=0):
        self.mode = mode
        self.cost_fn = cost_fn
        self.state_dependent = state_dependent
        self.domain = domain
        self.fit_config = fit_config
        self.random_state = random_state

    def fit(self, X=None, costs=None):
        if self.mode == "analytic":
            if self.cost_fn is None:
                raise ValueError("analytic mode needs cost_fn")
            self.gp_ = None
            return self
        if self.mode != "learned":
            raise ValueError(f"unknown cost model mode {self.mode!r}")
        if self.state_dependent:
            raise ValueError("state-dependent costs are only supported in analytic mode")
        costs = np.asarray(costs, dtype=float).ravel()
        if costs.size == 0 or not np.all(np.isfinite(costs)) or np.any(costs <= 0):
            raise InvalidDataError("costs must be finite and strictly positive")
        self.gp_ = GaussianProcess(domain=self.domain, fit_config=self.fit_config,
                                   random_state=self.random_state)
        self.gp_.fit(X, np.log(costs))
        return self

    def predict(self, X, prev=None):
        """Predicted cost for points ``X`` of shape (..., d); always positive.

        ``prev`` is the previous point (broadcastable against ``X``) for
        state-dependent analytic costs.
        """
        check_is_fitted(self, "gp_")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if self.mode == "analytic":
            if self.state_dependent:
                return np.asarray(self.cost_fn(prev, X), dtype=float)
            return np.asarray(self.cost_fn(X), dtype=float)
        mean, _ = self.gp_.posterior(X.reshape(-1, X.shape[-1]))
        return np.exp(mean).reshape(X.shape[:-1])

    def reference_cost(self, floor=0.0):
        """Positive constant used to express costs in relative units."""
        if self.state_dependent:
            return 1.0
        centre = self.domain.center if self.domain is not None else np.zeros(self._dim())
        return max(float(self.predict(centre[None, :])[0]), floor)

    def _dim(self):
        if self.gp_ is not None:
            return self.gp_.n_features_
        raise ValueError("domain is required for the reference cost of an analytic model")


def fit_cost(X, costs, seed=0, domain=None, fit_config=None):
    """Fit a log-warped GP cost model."""
    return CostModel("learned", domain=domain, fit_config=fit_config,
                     random_state=seed).fit(X, costs)


def analytic_cost(cost_fn, domain=None, state_dependent=False):
    return CostModel("analytic", cost_fn=cost_fn, domain=domain,
                     state_dependent=state_dependent).fit()


def predict_cost(model, x, prev=None):
    """Cost of a single point."""
    return float(model.predict(np.atleast_1d(x)[None, :], prev=prev)[0])
