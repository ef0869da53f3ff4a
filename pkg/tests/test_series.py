import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vqcalc.encoding import VariableDomain
from vqcalc.optimizer import OptimizerConfig
from vqcalc.qsim import ContractError
from vqcalc.series import (
    BasisSpec,
    IllConditioned,
    Mesh,
    QuadraticForm,
    TruncatedSeries,
    assemble,
    evaluate_series,
    fit,
    lp_objective,
    solve_closed_form,
    solve_variational,
)

MIXED_CG = OptimizerConfig(mode="mixed", method="conjugate_gradient", seed=0, restarts=1)


def _constant_basis():
    one = lambda x: np.ones_like(np.asarray(x, dtype=float))
    return BasisSpec("custom", 1, VariableDomain(0.0, 1.0), functions=(one,), weight=one)


def test_mesh_weights_sum_to_span():
    mesh = Mesh.uniform(VariableDomain(-3.0, 3.0), 100)
    assert abs(mesh.weights.sum() - 6.0) < 1e-12
    uneven = Mesh.from_points([0.0, 0.1, 0.5, 0.55, 2.0])
    assert abs(uneven.weights.sum() - 2.0) < 1e-12
    with pytest.raises(ContractError):
        Mesh.from_points([0.0, 0.5, 0.4])


def test_constant_basis_hand_computation():
    basis = _constant_basis()
    mesh = Mesh.uniform(basis.domain, 11)
    qf = assemble(np.full(11, 3.0), basis, mesh)
    np.testing.assert_allclose(qf.A, [[1.0]], atol=1e-12)
    np.testing.assert_allclose(qf.b, [-3.0], atol=1e-12)
    assert qf.q == pytest.approx(9.0, abs=1e-12)
    c = solve_closed_form(qf)
    np.testing.assert_allclose(c, [3.0], atol=1e-12)
    assert abs(qf.value(c)) < 1e-12
    cv = solve_variational(qf, OptimizerConfig(mode="pure", seed=0), coeff_bound=12.0)
    assert abs(cv[0] - 3.0) < 1e-3


def test_diagonal_closed_form():
    qf = QuadraticForm(np.diag([2.0, 4.0]), np.array([-2.0, -8.0]), 0.0)
    np.testing.assert_allclose(solve_closed_form(qf), [1.0, 2.0])


def test_ill_conditioned_is_reported():
    qf = QuadraticForm(np.diag([1.0, 1e-13]), np.array([1.0, 1.0]), 0.0)
    with pytest.raises(IllConditioned) as info:
        solve_closed_form(qf)
    assert info.value.condition > 1e10
    assert info.value.threshold == 1e10


def test_exp_basis_is_nearly_orthonormal():
    basis = BasisSpec.fourier(8, 0.0, 2.0)
    for M in (200, 800):
        qf = assemble(np.zeros(M), basis, Mesh.uniform(basis.domain, M))
        assert np.max(np.abs(qf.A - np.eye(basis.n_coeffs))) < 4.0 / M


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_quadratic_form_structure(seed):
    rng = np.random.default_rng(seed)
    basis = BasisSpec.fourier(6, -1.0, 2.0)
    mesh = Mesh.uniform(basis.domain, 40)
    f = rng.normal(size=40)
    qf = assemble(f, basis, mesh)
    assert np.max(np.abs(qf.A - qf.A.conj().T)) < 1e-10
    assert np.linalg.eigvalsh(qf.A).min() > -1e-10
    c = rng.normal(size=basis.n_coeffs) + 1j * rng.normal(size=basis.n_coeffs)
    assert qf.value(c) >= -1e-9
    # F(c) is literally the weighted Riemann sum
    resid = f - basis.design(mesh.points) @ c
    direct = float(np.sum(basis.weight_at(mesh.points) * mesh.weights * np.abs(resid) ** 2))
    assert qf.value(c) == pytest.approx(direct, rel=1e-10, abs=1e-12)
    c_star = solve_closed_form(qf)
    assert abs(qf.value(c_star) - qf.minimum_value()) < 1e-9
    assert np.linalg.norm(qf.A @ c_star + qf.b) < 1e-8 * np.linalg.norm(qf.b)


def test_batched_value_matches_single():
    basis = BasisSpec.fourier(4, 0.0, 1.0, "fourier_trig")
    mesh = Mesh.uniform(basis.domain, 30)
    qf = assemble(np.cos(mesh.points), basis, mesh)
    cs = np.random.default_rng(0).normal(size=(5, basis.n_coeffs))
    np.testing.assert_allclose(qf.value(cs), [qf.value(c) for c in cs], rtol=1e-12)


def test_sine_recovers_trig_coefficient():
    basis = BasisSpec.fourier(3, 0.0, 2.0, "fourier_trig")
    mesh = Mesh.uniform(basis.domain, 200)
    s = fit(lambda x: np.sin(2 * np.pi * x / 2.0), basis, mesh)
    K = basis.K
    b1 = s.coeffs[K + 1]
    others = np.delete(s.coeffs, K + 1)
    assert abs(b1 - 1) < 1e-3
    assert np.max(np.abs(others)) < 1e-3


def test_evaluate_series_examples():
    basis = BasisSpec.fourier(2, 0.0, 2.0, "fourier_trig")
    zero = TruncatedSeries(basis, np.zeros(basis.n_coeffs))
    assert evaluate_series(zero, 0.7) == 0.0
    c = np.zeros(basis.n_coeffs)
    c[0], c[1] = 1.0, 2.0
    assert evaluate_series(TruncatedSeries(basis, c), 0.0) == pytest.approx(3.0, abs=1e-15)
    assert evaluate_series(TruncatedSeries(basis, c), 2.0) == pytest.approx(3.0, abs=1e-12)


def test_exact_recovery_in_span():
    basis = BasisSpec.fourier(6, -1.0, 1.0)
    rng = np.random.default_rng(1)
    m = basis.K // 2
    c = rng.normal(size=m + 1) + 1j * rng.normal(size=m + 1)
    c[0] = c[0].real
    full = np.concatenate([c[:0:-1].conj(), c])
    target = TruncatedSeries(basis, full)
    mesh = Mesh.uniform(basis.domain, 2 * basis.n_coeffs + 1)
    s = fit(target, basis, mesh)
    assert s.residual < 1e-6
    assert s.conjugate_symmetry_error() < 1e-10
    harmonic = fit(lambda x: np.cos(2 * np.pi * x / 2.0) + 0.5, basis, Mesh.uniform(basis.domain, 64))
    assert harmonic.residual < 1e-6


def test_residual_monotone_in_K():
    mesh = Mesh.uniform(VariableDomain(0.0, 1.0), 80)
    f = lambda x: np.exp(np.sin(3 * x)) * x
    prev = math.inf
    for K in range(2, 24, 2):
        r = fit(f, BasisSpec.fourier(K, 0.0, 1.0), mesh).residual
        assert r <= prev + 1e-9
        prev = r


def test_conjugate_symmetry_for_real_targets():
    basis = BasisSpec.fourier(10, -2.0, 2.0)
    mesh = Mesh.uniform(basis.domain, 60)
    s = fit(lambda x: np.exp(-x**2) + 0.3 * x, basis, mesh)
    assert s.conjugate_symmetry_error() < 1e-10
    assert np.max(np.abs(np.imag(s.evaluate_complex(mesh.points)))) < 1e-8


def test_trig_to_exponential_is_exact():
    basis = BasisSpec.fourier(4, 0.0, 3.0, "fourier_trig")
    c = np.random.default_rng(7).normal(size=basis.n_coeffs)
    s = TruncatedSeries(basis, c)
    e = s.to_exponential()
    x = np.linspace(0, 3, 17)
    np.testing.assert_allclose(e(x), s(x), atol=1e-12)
    assert e.conjugate_symmetry_error() < 1e-15


def test_record_round_trip():
    basis = BasisSpec.fourier(6, -1.0, 2.0, extension=1.5)
    s = fit(lambda x: np.cosh(x), basis, Mesh.uniform(basis.domain, 40))
    back = TruncatedSeries.from_record(s.to_record())
    assert back.basis == s.basis
    np.testing.assert_array_equal(back.coeffs, s.coeffs)
    x = np.linspace(-1, 2, 9)
    np.testing.assert_array_equal(back(x), s(x))


def test_lp_distance_prefers_sparse_coefficients():
    basis = BasisSpec.fourier(4, 0.0, 1.0, "fourier_trig")
    mesh = Mesh.uniform(basis.domain, 40)
    f = np.cos(2 * np.pi * mesh.points) + 0.02 * np.sign(np.sin(6 * np.pi * mesh.points))
    l2 = fit(f, basis, mesh)
    T = np.eye(basis.n_coeffs)
    cfg = OptimizerConfig(mode="mixed", method="derivative_free", seed=0, restarts=1, max_iters=6000)
    l1 = solve_variational(lp_objective(f, basis, mesh, p=1.0), cfg, coeff_bound=2.0, param_map=T)
    count = lambda c: int(np.sum(np.abs(c) > 1e-3))
    obj1 = lp_objective(f, basis, mesh, p=1.0)
    assert obj1(l1)[0] <= obj1(l2.coeffs)[0] + 1e-6
    assert count(l1) <= count(l2.coeffs)


def test_variational_matches_closed_form_on_gaussian():
    basis = BasisSpec.fourier(22, -3.0, 3.0)
    mesh = Mesh.uniform(basis.domain, 100)
    f = lambda x: np.exp(-x**2)
    closed = fit(f, basis, mesh)
    cfg = OptimizerConfig(mode="mixed", method="bfgs", seed=0, restarts=2)
    var = fit(f, basis, mesh, method="variational", config=cfg, orthonormal=True)
    qf = assemble(f(mesh.points), basis, mesh)
    F_cf, F_var = qf.value(closed.coeffs), qf.value(var.coeffs)
    assert F_var - F_cf < 1e-4 * (1 + abs(F_cf))
    assert var.info["optimizer"].best_x.size == basis.free_param_count(True) == 23


def test_raw_coordinates_variational_on_small_fit():
    basis = BasisSpec.fourier(4, 0.0, 1.0)
    mesh = Mesh.uniform(basis.domain, 30)
    f = lambda x: 0.5 + np.cos(2 * np.pi * x)
    var = fit(f, basis, mesh, method="variational", config=MIXED_CG)
    assert var.residual < 1e-4


def test_fallback_on_ill_conditioning():
    basis = BasisSpec.fourier(12, 0.0, 1.0)
    mesh = Mesh.uniform(basis.domain, 8)
    f = lambda x: x
    with pytest.raises(IllConditioned):
        fit(f, basis, mesh, fallback=False)
    s = fit(f, basis, mesh, config=OptimizerConfig(mode="mixed", method="bfgs", restarts=0, max_iters=200))
    assert s.info["method"] == "variational"
    assert "fallback_reason" in s.info


def test_fit_contracts():
    basis = BasisSpec.fourier(4, 0.0, 1.0)
    mesh = Mesh.uniform(basis.domain, 10)
    with pytest.raises(ContractError):
        fit(np.zeros(9), basis, mesh)
    with pytest.raises(ContractError), np.errstate(invalid="ignore"):
        fit(lambda x: np.log(x - 0.5), basis, mesh)
    with pytest.raises(ContractError):
        fit(np.zeros(10), basis, mesh, method="lasso")
    with pytest.raises(ContractError):
        BasisSpec.fourier(0, 0.0, 1.0)
    with pytest.raises(ContractError):
        BasisSpec("fourier_exp", 4, VariableDomain(0.0, 2.0), period=1.0)


def test_parameter_counts():
    assert BasisSpec.fourier(16, 0.0, 1.0).free_param_count(True) == 17
    assert BasisSpec.fourier(16, 0.0, 1.0).real_param_count == 34
    assert BasisSpec.fourier(16, 0.0, 1.0, "fourier_trig").real_param_count == 33
