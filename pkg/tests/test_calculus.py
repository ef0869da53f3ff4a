import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as quad

from vqcalc.calculus import antiderivative, definite_integral, integrate_series, mode_terms
from vqcalc.qsim import ContractError
from vqcalc.series import BasisSpec, Mesh, TruncatedSeries, fit


def _series(K=6, lo=-1.0, hi=2.0, seed=0, extension=1.0):
    basis = BasisSpec.fourier(K, lo, hi, extension=extension)
    rng = np.random.default_rng(seed)
    m = K // 2
    c = rng.normal(size=m + 1) + 1j * rng.normal(size=m + 1)
    c[0] = c[0].real
    return TruncatedSeries(basis, np.concatenate([c[:0:-1].conj(), c]))


def test_constant_and_zero_series():
    basis = BasisSpec.fourier(4, -1.0, 2.5)
    c = np.zeros(basis.n_coeffs, dtype=complex)
    assert integrate_series(TruncatedSeries(basis, c), -1.0, 2.5).value == 0.0
    c[basis.K // 2] = 1.7
    assert integrate_series(TruncatedSeries(basis, c), -1.0, 2.5).value == pytest.approx(1.7 * 3.5, abs=1e-12)


def test_harmonics_vanish_over_full_period():
    s = _series(8, 0.3, 1.9, seed=4)
    terms = mode_terms(s, 0.3, 1.9)
    l = s.basis.modes
    assert np.max(np.abs(terms[l != 0])) < 1e-12


def test_value_matches_audit_trail_and_imaginary_residue():
    s = _series(10, -2.0, 1.0, seed=2, extension=1.7)
    res = integrate_series(s, -2.0, 1.0)
    assert abs(res.value - np.real(res.per_mode_terms.sum())) < 1e-12
    assert abs(res.imaginary_residue) < 1e-10
    ref = quad.quad(lambda x: s(x), -2.0, 1.0, limit=200, epsabs=1e-13)[0]
    assert res.value == pytest.approx(ref, abs=1e-9)


def test_trig_series_integral():
    basis = BasisSpec.fourier(3, 0.0, 2.0, "fourier_trig")
    c = np.array([0.5, 1.0, -0.2, 0.3, 0.7, 0.1, -0.4])
    s = TruncatedSeries(basis, c)
    assert integrate_series(s, 0.0, 2.0).value == pytest.approx(1.0, abs=1e-12)


def test_domain_mismatch_is_rejected():
    s = _series()
    with pytest.raises(ContractError):
        integrate_series(s, -1.0, 1.5)


def test_unit_function_on_0_2():
    res = definite_integral(lambda x: np.ones_like(x), 0.0, 2.0, K=4, M=20)
    assert abs(res.value - 2.0) < 1e-9


def test_linearity_same_basis_and_mesh():
    basis = BasisSpec.fourier(12, -1.0, 1.0, extension=1.5)
    mesh = Mesh.uniform(basis.domain, 60)
    f = lambda x: np.exp(x) * np.sin(3 * x)
    g = lambda x: 1 / (1 + x**2)
    alpha, beta = 2.5, -0.75
    I = lambda h: integrate_series(fit(h, basis, mesh), -1.0, 1.0).value
    lhs = I(lambda x: alpha * f(x) + beta * g(x))
    assert abs(lhs - (alpha * I(f) + beta * I(g))) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.99), st.integers(0, 1000))
def test_running_integral_additivity(t, seed):
    s = _series(10, -1.0, 2.0, seed=seed, extension=1.3)
    res = integrate_series(s, -1.0, 2.0)
    mid = -1.0 + 3.0 * t
    left = antiderivative(s, -1.0, mid)
    right = float(np.real(mode_terms(s, mid, 2.0).sum()))
    assert abs(res.value - (left + right)) < 1e-10
    assert res.running()(2.0) == pytest.approx(res.value, abs=1e-12)


def test_running_integral_is_antiderivative():
    s = _series(6, 0.0, 1.0, seed=3)
    x = np.linspace(0.05, 0.95, 7)
    h = 1e-5
    F = lambda z: antiderivative(s, 0.0, z)
    np.testing.assert_allclose((F(x + h) - F(x - h)) / (2 * h), s(x), atol=1e-7)


def test_error_shrinks_as_K_doubles():
    f = lambda x: np.exp(-x**2) * np.cos(x)
    exact = quad.quad(f, -1.0, 1.5, epsabs=1e-14)[0]
    errs = [abs(definite_integral(f, -1.0, 1.5, K=K, M=200, extension=2.0).value - exact) for K in (2, 4, 8)]
    assert errs[1] <= errs[0] and errs[2] <= errs[1]


def test_gaussian_running_integral_against_erf():
    res = definite_integral(lambda x: np.exp(-x**2), -3.0, 3.0, K=22, M=100)
    x = np.linspace(-3, 3, 61)
    exact = math.sqrt(math.pi) / 2 * (np.vectorize(math.erf)(x) - math.erf(-3.0))
    approx = res.running()(x)
    mask = exact > 1e-3 * exact.max()
    rel = np.abs(approx - exact)[mask] / exact[mask]
    assert rel.max() < 1e-2
    assert abs(res.value - math.sqrt(math.pi) * math.erf(3.0)) / (math.sqrt(math.pi) * math.erf(3.0)) < 1e-3
