"""Exception types raised across the package."""


class InvalidHyperparameterError(ValueError):
    """Raised when kernel hyperparameters violate their positivity constraints."""


class InvalidDataError(ValueError):
    """Raised when observations cannot be used to fit a model."""


class GPFitError(RuntimeError):
    """Raised when every hyperparameter optimization start fails.

    Parameters
    ----------
    message : str
        Human readable summary.
    diagnostics : list of dict
        One entry per start with the starting point and the failure reason.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class MaximizationError(RuntimeError):
    """Raised when an acquisition is non-finite at every candidate."""


class BudgetExhausted(Exception):
    """Signal that no candidate can be evaluated within the remaining budget."""


class InvalidProblemError(ValueError):
    """Raised when a benchmark problem lacks information an operation needs."""
