import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vqcalc.diffeq import (
    BoundaryCondition,
    LinearOdeProblem,
    OdeProblem,
    differentiate_series,
    residual_norm,
    solve_collocation,
    solve_linear_spectral,
)
from vqcalc.encoding import VariableDomain
from vqcalc.optimizer import InfeasibleStart, OptimizerConfig
from vqcalc.qsim import ContractError
from vqcalc.runner import bernoulli_problem, linear_system_problem
from vqcalc.series import BasisSpec, Mesh, TruncatedSeries


def _random_series(K, lo, hi, seed, extension=1.0):
    basis = BasisSpec.fourier(K, lo, hi, extension=extension)
    rng = np.random.default_rng(seed)
    m = K // 2
    c = rng.normal(size=m + 1) + 1j * rng.normal(size=m + 1)
    c[0] = c[0].real
    return TruncatedSeries(basis, np.concatenate([c[:0:-1].conj(), c]))


def test_derivative_of_constant_is_zero():
    basis = BasisSpec.fourier(6, 0.0, 1.0)
    c = np.zeros(basis.n_coeffs, dtype=complex)
    c[3] = 2.0
    d = differentiate_series(TruncatedSeries(basis, c))
    assert np.max(np.abs(d.coeffs)) == 0.0


def test_second_derivative_is_first_twice():
    s = _random_series(8, -1.0, 2.0, 0, extension=1.5)
    twice = differentiate_series(differentiate_series(s))
    np.testing.assert_allclose(differentiate_series(s, 2).coeffs, twice.coeffs, rtol=0, atol=1e-12)


def test_single_mode_derivative_matches_finite_differences():
    P = 2.5
    basis = BasisSpec.fourier(2, 0.0, P)
    c = np.array([0.3 - 0.1j, 0.0, 0.3 + 0.1j])
    d = differentiate_series(TruncatedSeries(basis, c))
    assert d.coeffs[2] == pytest.approx(2j * np.pi / P * c[2])
    x = np.linspace(0.1, 2.4, 9)
    h = 1e-5
    s = TruncatedSeries(basis, c)
    np.testing.assert_allclose(d(x), (s(x + h) - s(x - h)) / (2 * h), atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 5000), st.integers(1, 3))
def test_derivative_exact_on_span(seed, order):
    s = _random_series(10, -1.0, 1.0, seed, extension=1.2)
    x = np.linspace(-1, 1, 13)
    k = s.basis.wavenumbers()
    # symbolic derivative of sum c_l e^{i k_l x}
    symbolic = np.real(np.exp(1j * np.outer(x, k)) @ (s.coeffs * (1j * k) ** order))
    np.testing.assert_allclose(differentiate_series(s, order)(x), symbolic, atol=1e-10)


def test_trig_basis_rejected():
    s = TruncatedSeries(BasisSpec.fourier(2, 0.0, 1.0, "fourier_trig"), np.zeros(5))
    with pytest.raises(ContractError):
        differentiate_series(s)
    assert differentiate_series(s.to_exponential()).basis.kind == "fourier_exp"


def _flat_problem():
    return OdeProblem(1, lambda x, d: [d[1][0]], 1, VariableDomain(0.0, 2.0), (BoundaryCondition(0, 0.0, 1.0),),
                      (lambda x: np.ones_like(x),))


@pytest.mark.parametrize("method", ["least_squares", "variational"])
def test_constant_solution(method):
    prob = _flat_problem()
    cfg = OptimizerConfig(mode="pure", method="bfgs", seed=0, restarts=1)
    sol = solve_collocation(prob, 6, Mesh.uniform(prob.domain, 30), penalty=math.inf, method=method, config=cfg)
    assert sol.residual_norm < 1e-6
    assert sol.bc_violation < 1e-9
    assert np.max(np.abs(sol(np.linspace(0, 2, 11))[0] - 1)) < 1e-5


def test_exponential_decay_linear_spectral():
    prob = LinearOdeProblem(1, {(0, 0, 1): 1.0, (0, 0, 0): 1.0}, (0.0,), VariableDomain(0.0, 1.0),
                            (BoundaryCondition(0, 0.0, 1.0),), (lambda x: np.exp(-np.asarray(x)),))
    mesh = Mesh.uniform(prob.domain, 60)
    sol = solve_linear_spectral(prob, 11, mesh, extension=2.0)
    x = np.linspace(0, 1, 41)
    assert np.max(sol.relative_errors(x, prob.exact)) < 1e-2
    assert sol.bc_violation < 1e-9


def test_identity_operator_recovers_harmonic_rhs():
    dom = VariableDomain(0.0, 1.0)
    rhs = lambda x: 0.4 + np.cos(2 * np.pi * x)
    prob = LinearOdeProblem(1, {(0, 0, 0): 1.0}, (rhs,), dom)
    basis = BasisSpec.fourier(4, 0.0, 1.0)
    sol = solve_linear_spectral(prob, 4, Mesh.uniform(dom, 40))
    expected = np.zeros(basis.n_coeffs, dtype=complex)
    expected[2], expected[1], expected[3] = 0.4, 0.5, 0.5
    np.testing.assert_allclose(sol.series[0].coeffs, expected, atol=1e-10)


def test_harmonic_oscillator_second_order():
    # f'' + f = 0, f(0) = 0, f'(0) = 1 -> sin x
    prob = LinearOdeProblem(1, {(0, 0, 2): 1.0, (0, 0, 0): 1.0}, (0.0,), VariableDomain(0.0, 3.0),
                            (BoundaryCondition(0, 0.0, 0.0), BoundaryCondition(0, 0.0, 1.0, order=1)),
                            (np.sin,))
    mesh = Mesh.uniform(prob.domain, 80)
    sol = solve_linear_spectral(prob, 14, mesh, extension=2.0)
    x = np.linspace(0.2, 3, 30)
    np.testing.assert_allclose(sol(x)[0], np.sin(x), atol=1e-4)


def test_bernoulli_reference_and_certificate():
    prob = bernoulli_problem()
    mesh = Mesh.uniform(prob.domain, 80)
    sol = solve_collocation(prob, 11, mesh, penalty=math.inf, method="least_squares", extension=3.0)
    x = mesh.points
    assert np.max(sol.relative_errors(x, prob.exact)) < 1e-3
    fine = residual_norm(prob, sol, mesh.refined(3))
    assert fine <= 3 * sol.residual_norm
    assert residual_norm(prob, sol, mesh) == pytest.approx(sol.residual_norm, rel=1e-9)


def test_bernoulli_variational():
    prob = bernoulli_problem()
    mesh = Mesh.uniform(prob.domain, 80)
    cfg = OptimizerConfig(mode="mixed", method="conjugate_gradient", seed=0, restarts=2)
    sol = solve_collocation(prob, 11, mesh, penalty=math.inf, config=cfg, extension=3.0)
    assert np.max(sol.relative_errors(mesh.points, prob.exact)) < 1e-3
    assert residual_norm(prob, sol, mesh.refined(3)) <= 3 * sol.residual_norm
    assert sol.info["optimizer"].best_x.size == 10


def test_penalty_monotonicity():
    prob = bernoulli_problem()
    mesh = Mesh.uniform(prob.domain, 40)
    prev = math.inf
    for lam in (1.0, 10.0, 100.0, 1000.0):
        sol = solve_collocation(prob, 7, mesh, penalty=lam, method="least_squares", extension=2.0)
        assert sol.bc_violation <= prev * 1.1 + 1e-9
        prev = sol.bc_violation


def test_linear_and_collocation_agree_on_system():
    lin = linear_system_problem()
    prob = lin.to_problem()
    mesh = Mesh.uniform(prob.domain, 60)
    spec = solve_linear_spectral(lin, 7, mesh, extension=3.0)
    coll = solve_collocation(prob, 7, mesh, penalty=math.inf, method="least_squares", extension=3.0)
    x = mesh.points
    ref = spec(x)
    assert np.max(np.abs(coll(x) - ref) / np.maximum(np.abs(ref), 1e-12)) < 1e-2
    assert np.max(spec.relative_errors(x, prob.exact)) < 1e-1


def test_exact_solutions_satisfy_their_equations():
    # substitution check for the reference solutions themselves
    x = np.linspace(1.0, 1.9, 50)
    b = bernoulli_problem()
    f = b.exact[0]
    h = 1e-6
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    assert np.max(np.abs(b.residual(x, [[f(x)], [d1]])[0])) < 1e-6
    s = linear_system_problem().to_problem()
    x = np.linspace(0.0, 2.0, 50)
    g, ff = s.exact
    d = [[g(x), ff(x)], [(g(x + h) - g(x - h)) / (2 * h), (ff(x + h) - ff(x - h)) / (2 * h)]]
    assert max(np.max(np.abs(r)) for r in s.residual(x, d)) < 1e-6


def test_infeasible_everywhere_raises():
    prob = OdeProblem(1, lambda x, d: [np.log(-np.abs(d[0][0]) - 1)], 0, VariableDomain(0.0, 1.0))
    cfg = OptimizerConfig(mode="mixed", restarts=1, max_iters=10)
    with pytest.raises(InfeasibleStart):
        solve_collocation(prob, 2, Mesh.uniform(prob.domain, 5), config=cfg)


def test_problem_validation():
    dom = VariableDomain(0.0, 1.0)
    with pytest.raises(ContractError):
        OdeProblem(1, lambda x, d: [d[0][0]], 1, dom, (BoundaryCondition(0, 2.0, 1.0),))
    with pytest.raises(ContractError):
        OdeProblem(1, lambda x, d: [d[0][0]], 1, dom, (BoundaryCondition(1, 0.0, 1.0),))
    with pytest.raises(ContractError):
        solve_collocation(_flat_problem(), 4, Mesh.uniform(VariableDomain(0.0, 2.0), 10), penalty=-1.0)
    with pytest.raises(ContractError):
        solve_collocation(_flat_problem(), 4, Mesh.uniform(VariableDomain(0.0, 2.0), 10), method="newton")
