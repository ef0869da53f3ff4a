import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vqcalc import FourierSeriesRegressor, SpectralODESolver
from vqcalc.runner import bernoulli_problem, linear_system_problem


def test_params_and_clone():
    est = FourierSeriesRegressor(K=8, extension=1.5, random_state=3)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    twin.set_params(K=10)
    assert twin.K == 10 and est.K == 8
    assert clone(SpectralODESolver(M=40)).get_params()["M"] == 40


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        FourierSeriesRegressor().predict([[0.1]])
    with pytest.raises(NotFittedError):
        SpectralODESolver().predict([[0.1]])


def test_fit_predict_integrate_on_shuffled_samples():
    x = np.linspace(0.0, 1.0, 61)
    rng = np.random.default_rng(0)
    perm = rng.permutation(x.size)
    y = 0.5 + np.sin(2 * np.pi * x)
    est = FourierSeriesRegressor(K=6).fit(x[perm, None], y[perm])
    np.testing.assert_allclose(est.predict(x[:, None]), y, atol=1e-8)
    assert est.score(x[:, None], y) > 1 - 1e-12
    assert est.integrate() == pytest.approx(0.5, abs=1e-9)
    t = np.array([[0.25], [0.5]])
    exact = 0.5 * t[:, 0] + (1 - np.cos(2 * np.pi * t[:, 0])) / (2 * np.pi)
    np.testing.assert_allclose(est.antiderivative(t), exact, atol=1e-8)
    assert est.coef_.shape == (7,)


def test_input_validation():
    est = FourierSeriesRegressor(K=4)
    with pytest.raises(ValueError):
        est.fit(np.zeros((5, 2)), np.zeros(5))
    with pytest.raises(ValueError):
        est.fit(np.array([[0.0], [0.0], [1.0]]), np.zeros(3))
    with pytest.raises(ValueError):
        FourierSeriesRegressor(domain=(0.2, 1.0)).fit(np.linspace(0, 1, 10)[:, None], np.zeros(10))
    with pytest.raises(TypeError):
        SpectralODESolver().fit("f' = f")


def test_variational_regressor_tracks_closed_form():
    x = np.linspace(-1.0, 1.0, 40)[:, None]
    y = np.exp(-3 * x[:, 0] ** 2)
    closed = FourierSeriesRegressor(K=6).fit(x, y)
    var = FourierSeriesRegressor(K=6, method="variational", optimizer="bfgs", orthonormal=True).fit(x, y)
    assert np.max(np.abs(var.predict(x) - closed.predict(x))) < 1e-3


def test_ode_solver_scores():
    x = np.linspace(1.0, 2.0, 21)[:, None]
    ls = SpectralODESolver(method="least_squares").fit(bernoulli_problem())
    assert ls.predict(x).shape == (21, 1)
    assert ls.score(x) > -1e-3
    lin = SpectralODESolver(K=7, M=60, solver="linear_spectral").fit(linear_system_problem())
    assert lin.predict(np.linspace(0, 2, 5)[:, None]).shape == (5, 2)
    assert lin.score(np.linspace(0, 2, 30)[:, None]) > -1e-1
    assert math.isinf(lin.solution_.info["penalty"])
