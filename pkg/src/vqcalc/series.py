"""Truncated series fitting on a mesh.

The squared mesh distance between a target and ``sum_l c_l g_l`` is an
exact quadratic form ``F(c) = c^H A c + c^H b + b^H c + q``, with ``b``
carrying the minus sign so the stationarity condition reads ``A c + b = 0``.
It is minimized either in closed form or with the variational optimizer.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .encoding import VariableDomain
from .optimizer import ContinuousProblem, OptimizationResult, OptimizerConfig, minimize
from .qsim import ContractError

logger = logging.getLogger(__name__)

BASIS_KINDS = ("fourier_exp", "fourier_trig", "custom")
DEFAULT_MAX_CONDITION = 1e10


class IllConditioned(ArithmeticError):
    """The normal matrix is too ill-conditioned for a reliable direct solve."""

    def __init__(self, condition: float, threshold: float):
        super().__init__(
            f"normal matrix condition number {condition:.3e} exceeds {threshold:.1e}"
        )
        self.condition = condition
        self.threshold = threshold


@dataclass(frozen=True)
class BasisSpec:
    """Basis descriptor.

    ``fourier_exp`` uses ``exp(2 pi i l x / P)`` for ``l = -(K//2) .. K//2`` with
    ``P`` the domain length unless a longer ``period`` is given (a Fourier
    extension, which avoids forcing periodicity on the fitted interval), ``fourier_trig`` uses ``1, cos(2 pi l x / P),
    sin(2 pi l x / P)`` for ``l = 1..K`` (coefficients ordered ``a0, a1..aK,
    b1..bK``), and ``custom`` takes real basis callables plus an optional
    weight.
    """

    kind: str
    K: int
    domain: VariableDomain
    functions: tuple = ()
    weight: Optional[Callable] = None
    period: Optional[float] = None

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ContractError(f"basis kind must be one of {BASIS_KINDS}")
        if self.K < 1:
            raise ContractError("K must be at least 1")
        object.__setattr__(self, "functions", tuple(self.functions))
        if self.kind == "custom" and len(self.functions) != self.K:
            raise ContractError("custom bases need exactly K basis functions")
        if self.period is not None and not self.period >= self.domain.length * (1 - 1e-12):
            raise ContractError("the period cannot be shorter than the domain")

    @classmethod
    def fourier(cls, K: int, lo: float, hi: float, kind: str = "fourier_exp",
                extension: float = 1.0) -> "BasisSpec":
        """Fourier basis on ``[lo, hi]`` whose period is ``extension`` times the domain length."""
        if not extension >= 1:
            raise ContractError("extension factor must be at least 1")
        period = None if extension == 1 else extension * (hi - lo)
        return cls(kind, K, VariableDomain(lo, hi), period=period)

    @property
    def P(self) -> float:
        return self.period if self.period is not None else self.domain.length

    @property
    def extension(self) -> float:
        return self.P / self.domain.length

    @property
    def modes(self) -> np.ndarray:
        if self.kind == "fourier_exp":
            m = self.K // 2
            return np.arange(-m, m + 1)
        if self.kind == "fourier_trig":
            return np.arange(0, self.K + 1)
        raise ContractError("custom bases have no Fourier modes")

    @property
    def n_coeffs(self) -> int:
        if self.kind == "fourier_exp":
            return 2 * (self.K // 2) + 1
        if self.kind == "fourier_trig":
            return 2 * self.K + 1
        return self.K

    @property
    def is_complex(self) -> bool:
        return self.kind == "fourier_exp"

    @property
    def real_param_count(self) -> int:
        """Real numbers needed for an unconstrained coefficient vector."""
        return 2 * self.n_coeffs if self.is_complex else self.n_coeffs

    def free_param_count(self, real_target: bool) -> int:
        """Real numbers the variational solver optimizes over."""
        if self.is_complex and not real_target:
            return 2 * self.n_coeffs
        return self.n_coeffs

    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * self.modes / self.P

    def design(self, x) -> np.ndarray:
        """Basis functions evaluated at ``x``, shape ``(len(x), n_coeffs)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "fourier_exp":
            return np.exp(1j * np.outer(x, self.wavenumbers()))
        if self.kind == "fourier_trig":
            k = 2 * np.pi * np.arange(1, self.K + 1) / self.P
            arg = np.outer(x, k)
            return np.hstack([np.ones((len(x), 1)), np.cos(arg), np.sin(arg)])
        return np.column_stack([np.broadcast_to(g(x), x.shape) for g in self.functions]).astype(float)

    def weight_at(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.weight is None:
            return np.full(x.shape, 1.0 / self.P)
        return np.broadcast_to(np.asarray(self.weight(x), dtype=float), x.shape)

    def parameter_map(self, real_target: bool) -> np.ndarray:
        """Matrix ``T`` with ``c = T @ u`` for the real free parameters ``u``.

        For real targets in the exponential basis ``u = (c0, Re c_1..m, Im c_1..m)``
        and ``c_{-l} = conj(c_l)`` holds by construction.
        """
        n = self.n_coeffs
        if not self.is_complex:
            return np.eye(n)
        if not real_target:
            return np.hstack([np.eye(n), 1j * np.eye(n)])
        m = self.K // 2
        T = np.zeros((n, n), dtype=complex)
        T[m, 0] = 1.0
        for l in range(1, m + 1):
            T[m + l, l] = 1.0
            T[m - l, l] = 1.0
            T[m + l, m + l] = 1j
            T[m - l, m + l] = -1j
        return T


@dataclass(frozen=True)
class Mesh:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise ContractError("mesh needs at least one point")
        if w.shape != pts.shape:
            raise ContractError("one weight per mesh point is required")
        if np.any(np.diff(pts) <= 0):
            raise ContractError("mesh points must be strictly increasing")
        if np.any(w <= 0):
            raise ContractError("mesh weights must be positive")
        for name, arr in (("points", pts), ("weights", w)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_points(cls, points) -> "Mesh":
        """Trapezoidal cell widths for sorted points; they sum to the covered span."""
        pts = np.asarray(points, dtype=float)
        if pts.size < 2:
            raise ContractError("trapezoidal weights need at least two points")
        gaps = np.diff(pts)
        w = np.zeros_like(pts)
        w[:-1] += gaps / 2
        w[1:] += gaps / 2
        return cls(pts, w)

    @classmethod
    def uniform(cls, domain: VariableDomain, M: int) -> "Mesh":
        return cls.from_points(np.linspace(domain.lo, domain.hi, M))

    def __len__(self):
        return len(self.points)

    @property
    def span(self) -> float:
        return float(self.points[-1] - self.points[0])

    def refined(self, factor: int) -> "Mesh":
        """Uniform mesh over the same span with ``factor`` times as many cells."""
        n_cells = (len(self) - 1) * factor
        return Mesh.from_points(np.linspace(self.points[0], self.points[-1], n_cells + 1))


@dataclass(frozen=True)
class QuadraticForm:
    A: np.ndarray
    b: np.ndarray
    q: float

    def value(self, c) -> Union[float, np.ndarray]:
        """``F(c)``; accepts one coefficient vector or a batch of row vectors."""
        c = np.asarray(c)
        if c.ndim == 1:
            Ac = self.A @ c
            return float(np.real(np.vdot(c, Ac) + 2 * np.vdot(c, self.b)) + self.q)
        Ac = c @ self.A.T
        return np.real(np.einsum("bi,bi->b", c.conj(), Ac) + 2 * (c.conj() @ self.b)) + self.q

    def in_coordinates(self, T: np.ndarray) -> "QuadraticForm":
        """The same objective as a real form in ``u`` with ``c = T u``."""
        A = T.conj().T @ self.A @ T
        b = T.conj().T @ self.b
        return QuadraticForm(np.real(A + A.conj().T) / 2, np.real(b), self.q)

    def minimum_value(self) -> float:
        """``q - b^H A^{-1} b``, the value at the stationary point."""
        return float(self.q - np.real(np.vdot(self.b, np.linalg.solve(self.A, self.b))))


@dataclass
class TruncatedSeries:
    basis: BasisSpec
    coeffs: np.ndarray
    residual: float = math.nan
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex if self.basis.is_complex else float)
        if self.coeffs.shape != (self.basis.n_coeffs,):
            raise ContractError(
                f"{self.basis.kind} basis with K={self.basis.K} needs "
                f"{self.basis.n_coeffs} coefficients, got {self.coeffs.shape}"
            )

    def __call__(self, x):
        return evaluate_series(self, x)

    def evaluate_complex(self, x) -> np.ndarray:
        return self.basis.design(x) @ self.coeffs

    def to_exponential(self) -> "TruncatedSeries":
        """Exact rewrite of a trigonometric series in the exponential basis."""
        if self.basis.kind == "fourier_exp":
            return self
        if self.basis.kind != "fourier_trig":
            raise ContractError("only Fourier series convert to the exponential basis")
        K = self.basis.K
        a0, a, b = self.coeffs[0], self.coeffs[1 : K + 1], self.coeffs[K + 1 :]
        c = np.zeros(2 * K + 1, dtype=complex)
        c[K] = a0
        c[K + 1 :] = (a - 1j * b) / 2
        c[:K] = ((a + 1j * b) / 2)[::-1]
        basis = BasisSpec("fourier_exp", 2 * K, self.basis.domain, period=self.basis.period)
        return TruncatedSeries(basis, c, self.residual, dict(self.info))

    def conjugate_symmetry_error(self) -> float:
        if not self.basis.is_complex:
            return 0.0
        return float(np.max(np.abs(self.coeffs - self.coeffs[::-1].conj())))

    def to_record(self) -> dict:
        if self.basis.kind == "custom":
            raise ContractError("custom bases cannot be serialized")
        coeffs = np.asarray(self.coeffs, dtype=complex)
        return {
            "basis": self.basis.kind,
            "K": int(self.basis.K),
            "domain": [float(self.basis.domain.lo), float(self.basis.domain.hi)],
            "period": float(self.basis.P),
            "coefficients": [[float(c.real), float(c.imag)] for c in coeffs],
            "residual": float(self.residual),
        }

    @classmethod
    def from_record(cls, record: dict) -> "TruncatedSeries":
        lo, hi = record["domain"]
        period = record.get("period")
        if period is not None and period == hi - lo:
            period = None
        basis = BasisSpec(record["basis"], int(record["K"]), VariableDomain(lo, hi), period=period)
        coeffs = np.array([complex(re, im) for re, im in record["coefficients"]])
        if not basis.is_complex:
            coeffs = coeffs.real
        return cls(basis, coeffs, record.get("residual", math.nan))


def evaluate_series(s: TruncatedSeries, x) -> np.ndarray:
    """Real part of ``sum_l c_l g_l(x)``; scalar in, scalar out."""
    scalar = np.ndim(x) == 0
    values = s.basis.design(x) @ s.coeffs
    values = np.real(values)
    return float(values[0]) if scalar else values


def assemble(f_samples, basis: BasisSpec, mesh: Mesh, weight: Optional[Callable] = None) -> QuadraticForm:
    """Quadratic form of the weighted Riemann-sum distance between samples and the series."""
    f = np.asarray(f_samples)
    if len(mesh) == 0:
        raise ContractError("empty mesh")
    if f.shape != (len(mesh),):
        raise ContractError(f"{f.shape} samples for a mesh of {len(mesh)} points")
    G = basis.design(mesh.points)
    w = weight(mesh.points) if weight is not None else basis.weight_at(mesh.points)
    W = np.asarray(w, dtype=float) * mesh.weights
    GhW = G.conj().T * W
    A = GhW @ G
    A = (A + A.conj().T) / 2
    b = -(GhW @ f)
    q = float(np.sum(W * np.abs(f) ** 2))
    return QuadraticForm(A, b, q)


def solve_closed_form(qf: QuadraticForm, max_condition: float = DEFAULT_MAX_CONDITION) -> np.ndarray:
    """Coefficients solving ``A c + b = 0``."""
    cond = float(np.linalg.cond(qf.A))
    if not cond < max_condition:
        raise IllConditioned(cond, max_condition)
    return np.linalg.solve(qf.A, -qf.b)


def lp_objective(f_samples, basis: BasisSpec, mesh: Mesh, p: float = 1.0,
                 weight: Optional[Callable] = None) -> Callable:
    """Weighted mesh ``l_p`` distance, vectorized over rows of coefficient vectors."""
    if not p >= 1:
        raise ContractError("l_p distances need p >= 1")
    f = np.asarray(f_samples)
    G = basis.design(mesh.points)
    w = weight(mesh.points) if weight is not None else basis.weight_at(mesh.points)
    W = np.asarray(w, dtype=float) * mesh.weights

    def objective(c):
        c = np.atleast_2d(c)
        resid = f[None, :] - c @ G.T
        return np.sum(W * np.abs(resid) ** p, axis=1)

    return objective


def orthonormal_map(qf_real: QuadraticForm) -> np.ndarray:
    """``S`` with ``S^T A S = I``: coordinates in which the mesh Gram matrix is the identity."""
    A = qf_real.A
    try:
        L = np.linalg.cholesky(A)
        return np.linalg.solve(L.T, np.eye(len(A)))
    except np.linalg.LinAlgError:
        lam, V = np.linalg.eigh(A)
        lam = np.maximum(lam, 1e-14 * lam.max())
        return V / np.sqrt(lam)


def _variational(problem, T: np.ndarray, config: OptimizerConfig, coeff_bound: float):
    n_free = T.shape[1]
    domain = VariableDomain(-coeff_bound, coeff_bound)
    if isinstance(problem, QuadraticForm):
        real_qf = problem.in_coordinates(T)
        objective = real_qf.value
    else:
        def objective(u):
            return problem(np.atleast_2d(u) @ T.T)

    cp = ContinuousProblem(objective, n_free, (domain,) * n_free, vectorized=True)
    result = minimize(cp, config)
    return T @ result.best_x, result


def solve_variational(problem, config: OptimizerConfig = OptimizerConfig(), coeff_bound: float = 1.0,
                      param_map: Optional[np.ndarray] = None) -> np.ndarray:
    """Minimize a quadratic form or a coefficient objective with the variational optimizer.

    ``problem`` is a :class:`QuadraticForm` or a vectorized callable on
    coefficient rows. Each free real parameter ranges over
    ``[-coeff_bound, coeff_bound]``; ``param_map`` maps them to coefficients
    (identity on real parameters by default).
    """
    if not coeff_bound > 0:
        raise ContractError("coeff_bound must be positive")
    if param_map is None:
        if not isinstance(problem, QuadraticForm):
            raise ContractError("param_map is required for callable objectives")
        n = len(problem.b)
        param_map = np.eye(n) if np.isrealobj(problem.A) and np.isrealobj(problem.b) else np.hstack(
            [np.eye(n), 1j * np.eye(n)]
        )
    return _variational(problem, np.asarray(param_map), config, coeff_bound)[0]


def _samples(f, mesh: Mesh) -> np.ndarray:
    if callable(f):
        values = np.asarray(f(mesh.points))
        values = np.broadcast_to(values, mesh.points.shape).copy()
    else:
        values = np.asarray(f)
    if values.shape != (len(mesh),):
        raise ContractError(f"{values.shape} samples for a mesh of {len(mesh)} points")
    if not np.all(np.isfinite(values)):
        raise ContractError("target is not finite on every mesh point")
    return values


def fit(f, basis: BasisSpec, mesh: Mesh, method: str = "closed_form",
        weight: Optional[Callable] = None, config: Optional[OptimizerConfig] = None,
        coeff_bound: Optional[float] = None, real_target: Optional[bool] = None,
        max_condition: float = DEFAULT_MAX_CONDITION, fallback: bool = True,
        orthonormal: bool = False) -> TruncatedSeries:
    """Fit ``f`` (callable or mesh samples) by minimizing the mesh distance.

    ``method`` is ``"closed_form"`` or ``"variational"``. An ill-conditioned
    closed-form solve falls back to the variational path when ``fallback``
    is set. ``orthonormal`` makes the variational search run over
    coordinates of a mesh-orthonormal basis of the same span, which matters
    for Fourier extensions whose raw Gram matrix is far from the identity.
    """
    if method not in ("closed_form", "variational"):
        raise ContractError(f"unknown fit method {method!r}")
    samples = _samples(f, mesh)
    if real_target is None:
        real_target = bool(np.isrealobj(samples))
    qf = assemble(samples, basis, mesh, weight)
    info: dict = {"method": method}
    if method == "closed_form":
        try:
            c = solve_closed_form(qf, max_condition)
        except IllConditioned as exc:
            if not fallback:
                raise
            logger.warning("%s; falling back to the variational solver", exc)
            info["fallback_reason"] = str(exc)
            method = "variational"
    if method == "variational":
        config = config or OptimizerConfig()
        bound = coeff_bound if coeff_bound is not None else 4.0 * float(np.max(np.abs(samples)) or 1.0)
        T = basis.parameter_map(real_target)
        if orthonormal:
            T = T @ orthonormal_map(qf.in_coordinates(T))
            if coeff_bound is None:
                # |w_i| <= mesh norm of f <= max|f| sqrt(sum of weights)
                W = basis.weight_at(mesh.points) if weight is None else np.asarray(weight(mesh.points))
                bound *= math.sqrt(float(np.sum(W * mesh.weights)))
        c, result = _variational(qf, T, config, bound)
        info.update(method="variational", optimizer=result, coeff_bound=bound, orthonormal=orthonormal)
    if not basis.is_complex:
        c = np.real(c)
    residual = math.sqrt(max(qf.value(c), 0.0))
    return TruncatedSeries(basis, c, residual, info)
