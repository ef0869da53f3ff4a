"""scikit-learn style wrappers around series fitting and the spectral ODE solver."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .calculus import antiderivative, integrate_series
from .diffeq import LinearOdeProblem, OdeProblem, solve_collocation, solve_linear_spectral
from .optimizer import OptimizerConfig
from .qsim import ContractError
from .series import BasisSpec, Mesh, fit


def _optimizer(est) -> OptimizerConfig:
    return OptimizerConfig(mode=est.mode, layers=est.layers, method=est.optimizer, max_iters=est.max_iters,
                           restarts=est.restarts, seed=est.random_state)


class FourierSeriesRegressor(RegressorMixin, BaseEstimator):
    """Least-squares truncated Fourier series of a 1-D function.

    ``X`` holds sample locations (one column), ``y`` the function values;
    the trapezoidal weights of the sorted locations define the fit metric.
    ``method="variational"`` searches the coefficients with the quantum
    optimizer instead of solving the normal equations.

    >>> import numpy as np
    >>> x = np.linspace(0, 1, 41)[:, None]
    >>> est = FourierSeriesRegressor(K=4).fit(x, np.sin(2 * np.pi * x[:, 0]))
    >>> round(float(est.predict([[0.25]])[0]), 6)
    1.0
    """

    def __init__(self, K: int = 16, kind: str = "fourier_exp", extension: float = 1.0,
                 domain: Optional[tuple] = None, method: str = "closed_form", mode: str = "mixed",
                 layers: int = 3, optimizer: str = "conjugate_gradient", max_iters: int = 2000,
                 restarts: int = 2, orthonormal: bool = False, random_state: int = 0):
        self.K = K
        self.kind = kind
        self.extension = extension
        self.domain = domain
        self.method = method
        self.mode = mode
        self.layers = layers
        self.optimizer = optimizer
        self.max_iters = max_iters
        self.restarts = restarts
        self.orthonormal = orthonormal
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError(f"expected one feature column, got {X.shape[1]}")
        order = np.argsort(X[:, 0], kind="stable")
        x, y = X[order, 0], y[order]
        if np.any(np.diff(x) <= 0):
            raise ValueError("sample locations must be distinct")
        lo, hi = self.domain if self.domain is not None else (x[0], x[-1])
        if x[0] < lo or x[-1] > hi:
            raise ValueError("samples fall outside the requested domain")
        basis = BasisSpec.fourier(self.K, float(lo), float(hi), self.kind, self.extension)
        config = _optimizer(self) if self.method == "variational" else None
        self.series_ = fit(y, basis, Mesh.from_points(x), method=self.method, config=config,
                           orthonormal=self.orthonormal)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "series_")
        X = check_array(X)
        if X.shape[1] != 1:
            raise ValueError(f"expected one feature column, got {X.shape[1]}")
        return self.series_(X[:, 0])

    @property
    def coef_(self) -> np.ndarray:
        check_is_fitted(self, "series_")
        return self.series_.coeffs

    def integrate(self) -> float:
        """Term-by-term integral of the fitted series over its domain."""
        check_is_fitted(self, "series_")
        dom = self.series_.basis.domain
        return integrate_series(self.series_, dom.lo, dom.hi).value

    def antiderivative(self, X) -> np.ndarray:
        """Running integral from the lower domain end to each location in ``X``."""
        check_is_fitted(self, "series_")
        X = check_array(X)
        return np.real(antiderivative(self.series_, self.series_.basis.domain.lo, X[:, 0]))


class SpectralODESolver(BaseEstimator):
    """Fourier collocation solver for an ODE problem; ``predict`` evaluates the solution.

    ``fit`` takes an :class:`OdeProblem` or :class:`LinearOdeProblem`.
    ``solver="linear_spectral"`` requires the latter.
    """

    def __init__(self, K: int = 11, M: int = 80, extension: float = 3.0, penalty: float = math.inf,
                 solver: str = "collocation", method: str = "variational", mode: str = "mixed",
                 layers: int = 3, optimizer: str = "conjugate_gradient", max_iters: int = 2000,
                 restarts: int = 2, random_state: int = 0):
        self.K = K
        self.M = M
        self.extension = extension
        self.penalty = penalty
        self.solver = solver
        self.method = method
        self.mode = mode
        self.layers = layers
        self.optimizer = optimizer
        self.max_iters = max_iters
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, problem, y=None):
        if not isinstance(problem, (OdeProblem, LinearOdeProblem)):
            raise TypeError("fit expects an OdeProblem or LinearOdeProblem")
        base = problem.to_problem() if isinstance(problem, LinearOdeProblem) else problem
        mesh = Mesh.uniform(base.domain, self.M)
        config = _optimizer(self)
        if self.solver == "linear_spectral":
            if not isinstance(problem, LinearOdeProblem):
                raise ContractError("the linear spectral solver needs a LinearOdeProblem")
            method = "closed_form" if self.method == "closed_form" else "variational"
            self.solution_ = solve_linear_spectral(problem, self.K, mesh, self.penalty, method=method,
                                                   config=config, extension=self.extension)
        elif self.solver == "collocation":
            self.solution_ = solve_collocation(base, self.K, mesh, self.penalty, method=self.method,
                                               config=config, extension=self.extension)
        else:
            raise ValueError(f"unknown solver {self.solver!r}")
        self.problem_ = base
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        """Solution values with shape ``(n_samples, n_funcs)``."""
        check_is_fitted(self, "solution_")
        X = check_array(X)
        return self.solution_(X[:, 0]).T

    def score(self, X, y=None) -> float:
        """Negative max relative error against the problem's exact solution."""
        check_is_fitted(self, "solution_")
        if not self.problem_.exact:
            raise ValueError("problem has no exact solution to score against")
        X = check_array(X)
        return -float(np.max(self.solution_.relative_errors(X[:, 0], self.problem_.exact)))
