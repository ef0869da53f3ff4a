"""Spectral ODE solvers built on truncated Fourier series.

Each unknown ``f_j`` is an exponential Fourier series with conjugate-symmetric
coefficients, parametrized by real numbers ``u``. Values and derivatives on a
mesh are then linear maps of ``u`` and the squared residual functional plus
boundary terms is minimized over ``u``.

Boundary conditions are either a quadratic penalty with weight ``lam`` or,
with ``lam = inf``, imposed exactly by restricting ``u`` to the affine set
where they hold.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import lstsq, null_space

from .encoding import VariableDomain
from .optimizer import OptimizationResult, OptimizerConfig
from .qsim import ContractError
from .series import BasisSpec, Mesh, QuadraticForm, TruncatedSeries, _variational, fit

logger = logging.getLogger(__name__)

COLLOCATION_METHODS = ("variational", "derivative_free", "least_squares")


@dataclass(frozen=True)
class BoundaryCondition:
    """``f_func^{(order)}(point) = value``."""

    func: int
    point: float
    value: float
    order: int = 0


@dataclass(frozen=True)
class OdeProblem:
    """A system ``residual(x, d) = 0`` for ``n_funcs`` unknowns.

    ``residual`` receives the mesh ``x`` and ``d`` with ``d[a][j]`` the
    ``a``-th derivative of unknown ``j`` (arrays broadcasting against ``x``,
    possibly with extra leading batch axes) and returns one residual array per
    unknown. ``exact`` optionally holds reference solutions.
    """

    n_funcs: int
    residual: Callable
    max_order: int
    domain: VariableDomain
    boundary_conditions: tuple = ()
    exact: Optional[tuple] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "boundary_conditions", tuple(self.boundary_conditions))
        if self.n_funcs < 1 or self.max_order < 0:
            raise ContractError("need at least one unknown and a non-negative order")
        for bc in self.boundary_conditions:
            if not 0 <= bc.func < self.n_funcs:
                raise ContractError(f"boundary condition refers to unknown {bc.func}")
            if not self.domain.lo <= bc.point <= self.domain.hi:
                raise ContractError(f"boundary point {bc.point} outside the domain")
            if not 0 <= bc.order <= self.max_order:
                raise ContractError("boundary derivative order exceeds the problem order")
        if self.exact is not None and len(self.exact) != self.n_funcs:
            raise ContractError("one exact solution per unknown is required")


def _as_function(v) -> Callable:
    if callable(v):
        return v
    return lambda x, v=float(v): np.full(np.shape(x), v)


@dataclass(frozen=True)
class LinearOdeProblem:
    """``sum_k sum_a A[(j, k, a)](x) f_k^{(a)}(x) = rhs[j](x)`` for each ``j``.

    Coefficients and right-hand sides are callables or constants; missing
    coefficient keys are zero.
    """

    n_funcs: int
    coefficients: Dict[Tuple[int, int, int], Union[Callable, float]]
    rhs: tuple
    domain: VariableDomain
    boundary_conditions: tuple = ()
    exact: Optional[tuple] = None
    name: str = ""

    @property
    def max_order(self) -> int:
        return max(a for _, _, a in self.coefficients)

    def to_problem(self) -> OdeProblem:
        coeffs = {key: _as_function(v) for key, v in self.coefficients.items()}
        rhs = [_as_function(r) for r in self.rhs]

        def residual(x, d):
            out = []
            for j in range(self.n_funcs):
                total = -rhs[j](x)
                for (jj, k, a), fn in coeffs.items():
                    if jj == j:
                        total = total + fn(x) * d[a][k]
                out.append(total)
            return out

        return OdeProblem(self.n_funcs, residual, self.max_order, self.domain,
                          self.boundary_conditions, self.exact, self.name)


@dataclass
class SpectralSolution:
    series: List[TruncatedSeries]
    residual_norm: float
    bc_violation: float
    trace: list = field(default_factory=list, repr=False)
    info: dict = field(default_factory=dict, repr=False)

    def __call__(self, x) -> np.ndarray:
        return np.array([s(np.asarray(x, dtype=float)) for s in self.series])

    def relative_errors(self, x, exact: Sequence[Callable], floor: float = 1e-12) -> np.ndarray:
        approx = self(x)
        ref = np.array([np.broadcast_to(e(np.asarray(x, dtype=float)), np.shape(x)) for e in exact])
        return np.abs(approx - ref) / np.maximum(np.abs(ref), floor)


def differentiate_series(s: TruncatedSeries, order: int = 1) -> TruncatedSeries:
    """Exact ``order``-th derivative of an exponential Fourier series."""
    if s.basis.kind != "fourier_exp":
        raise ContractError("differentiate exponential series; convert with to_exponential() first")
    if order < 0:
        raise ContractError("derivative order must be non-negative")
    factor = (1j * s.basis.wavenumbers()) ** order
    return TruncatedSeries(s.basis, s.coeffs * factor, math.nan, {"derivative_of": order})


def residual_norm(problem: OdeProblem, solution: SpectralSolution, mesh: Mesh) -> float:
    """``sqrt(sum_mu sum_j residual_j(x_mu)^2 dx_mu)`` of a solution on any mesh."""
    x = mesh.points
    d = [[differentiate_series(s, a)(x) for s in solution.series] for a in range(problem.max_order + 1)]
    with np.errstate(all="ignore"):
        res = problem.residual(x, d)
        total = float(sum(np.sum(np.abs(np.asarray(r)) ** 2 * mesh.weights) for r in res))
    return math.sqrt(total) if math.isfinite(total) else math.inf


class _Discretization:
    """Linear maps from the real parameters ``u`` to mesh values and boundary data."""

    def __init__(self, problem: OdeProblem, K: int, mesh: Mesh, extension: float):
        d = problem.domain
        if mesh.points[0] < d.lo - 1e-12 or mesh.points[-1] > d.hi + 1e-12:
            raise ContractError("mesh points must lie inside the problem domain")
        self.problem = problem
        self.mesh = mesh
        self.basis = BasisSpec.fourier(K, d.lo, d.hi, "fourier_exp", extension)
        self.T = self.basis.parameter_map(real_target=True)
        self.n_c = self.T.shape[1]
        self.n_u = self.n_c * problem.n_funcs
        self.E = [self.derivative_matrix(mesh.points, a) for a in range(problem.max_order + 1)]
        rows, vals = [], []
        for bc in problem.boundary_conditions:
            row = np.zeros(self.n_u)
            row[bc.func * self.n_c : (bc.func + 1) * self.n_c] = self.derivative_matrix([bc.point], bc.order)[0]
            rows.append(row)
            vals.append(bc.value)
        self.B = np.array(rows).reshape(len(rows), self.n_u)
        self.v = np.array(vals, dtype=float)

    def derivative_matrix(self, x, order: int) -> np.ndarray:
        D = self.basis.design(x) * (1j * self.basis.wavenumbers()) ** order
        return np.real(D @ self.T)

    def derivatives(self, u: np.ndarray) -> list:
        """``d[a][j]`` arrays of shape ``(..., M)`` for parameter rows ``u``."""
        U = u.reshape(u.shape[:-1] + (self.problem.n_funcs, self.n_c))
        return [[U[..., j, :] @ E.T for j in range(self.problem.n_funcs)] for E in self.E]

    def residual_terms(self, u: np.ndarray) -> np.ndarray:
        """Weighted squared residual summed over mesh and unknowns, per row of ``u``."""
        with np.errstate(all="ignore"):
            res = self.problem.residual(self.mesh.points, self.derivatives(u))
            total = sum(np.sum(np.abs(np.asarray(r)) ** 2 * self.mesh.weights, axis=-1) for r in res)
        total = np.asarray(total, dtype=float)
        return np.where(np.isfinite(total), total, np.inf)

    def bc_terms(self, u: np.ndarray) -> np.ndarray:
        if not len(self.v):
            return np.zeros(u.shape[:-1])
        return np.sum((u @ self.B.T - self.v) ** 2, axis=-1)

    def bc_violation(self, u: np.ndarray) -> float:
        if not len(self.v):
            return 0.0
        return float(np.max(np.abs(self.B @ u - self.v)))

    def series_of(self, u: np.ndarray) -> List[TruncatedSeries]:
        out = []
        for j in range(self.problem.n_funcs):
            c = self.T @ u[j * self.n_c : (j + 1) * self.n_c]
            out.append(TruncatedSeries(self.basis, c))
        return out

    def affine_constraint_space(self) -> Tuple[np.ndarray, np.ndarray]:
        """``(u0, N)`` with ``B (u0 + N z) = v`` for every ``z``."""
        if not len(self.v):
            return np.zeros(self.n_u), np.eye(self.n_u)
        u0 = lstsq(self.B, self.v)[0]
        N = null_space(self.B)
        return u0, N

    def orthonormal_coordinates(self, N: np.ndarray) -> np.ndarray:
        """``S`` such that ``z = S w`` is orthonormal in ``w`` for the mesh Sobolev norm.

        The norm sums squared values and derivatives up to the problem order
        on the mesh. Fourier extensions are badly conditioned in raw
        coefficients; this is the same span, parametrized so that no
        direction is nearly invisible to the residual.
        """
        sqrt_w = np.sqrt(self.mesh.weights)
        V = np.vstack([
            (E * sqrt_w[:, None]) @ N[j * self.n_c : (j + 1) * self.n_c]
            for E in self.E
            for j in range(self.problem.n_funcs)
        ])
        R = np.linalg.qr(V, mode="r")
        return np.linalg.solve(R, np.eye(R.shape[0]))

    def initial_guess(self) -> np.ndarray:
        u = np.zeros(self.n_u)
        for j in range(self.problem.n_funcs):
            vals = [bc.value for bc in self.problem.boundary_conditions if bc.func == j and bc.order == 0]
            if vals:
                u[j * self.n_c] = float(np.mean(vals))
        return u


def default_penalty(disc: _Discretization) -> float:
    """``1e3`` times the mesh-averaged residual magnitude at the initial guess (at least ``1e3``)."""
    u = disc.initial_guess()
    with np.errstate(all="ignore"):
        res = disc.problem.residual(disc.mesh.points, disc.derivatives(u))
        scale = float(np.mean([np.mean(np.abs(r)) for r in res]))
    if not math.isfinite(scale):
        scale = 1.0
    return 1e3 * max(1.0, scale)


def _finish(disc: _Discretization, u: np.ndarray, trace, info) -> SpectralSolution:
    resid = float(disc.residual_terms(u[None, :])[0])
    return SpectralSolution(
        disc.series_of(u),
        math.sqrt(resid) if math.isfinite(resid) else math.inf,
        disc.bc_violation(u),
        trace,
        info,
    )


def _least_squares(disc: _Discretization, objective_rows, u0: np.ndarray, N: np.ndarray, lam: float):
    """Classical reference solve: trust-region least squares on the stacked residual vector."""
    from scipy.optimize import least_squares

    sqrt_w = np.sqrt(disc.mesh.weights)

    def stacked(z):
        u = u0 + N @ z
        with np.errstate(all="ignore"):
            res = disc.problem.residual(disc.mesh.points, disc.derivatives(u))
        parts = [np.asarray(r, dtype=float) * sqrt_w for r in res]
        if math.isfinite(lam) and len(disc.v):
            parts.append(math.sqrt(lam) * (disc.B @ u - disc.v))
        out = np.concatenate(parts)
        return np.where(np.isfinite(out), out, 1e150)

    z0 = np.linalg.lstsq(N, disc.initial_guess() - u0, rcond=None)[0]
    sol = least_squares(stacked, z0, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    return u0 + N @ sol.x, {"nfev": int(sol.nfev), "status": int(sol.status)}


def solve_collocation(problem: OdeProblem, K: int, mesh: Mesh, penalty: Optional[float] = None,
                      method: str = "variational", config: Optional[OptimizerConfig] = None,
                      extension: float = 1.0, coeff_bound: Optional[float] = None,
                      orthonormal: bool = True) -> SpectralSolution:
    """Minimize ``sum_mu sum_j |residual_j(x_mu)|^2 dx_mu + penalty * sum_bc violation^2``.

    ``penalty=None`` picks :func:`default_penalty`; ``penalty=inf`` imposes
    the boundary conditions exactly. ``method`` selects the variational
    optimizer (gradient-based per ``config``), its simplex variant, or a
    classical trust-region least-squares reference solve. With
    ``orthonormal`` the variational search runs over mesh-orthonormal
    coordinates of the same span.
    """
    if method not in COLLOCATION_METHODS:
        raise ContractError(f"method must be one of {COLLOCATION_METHODS}")
    disc = _Discretization(problem, K, mesh, extension)
    lam = default_penalty(disc) if penalty is None else float(penalty)
    if not lam > 0:
        raise ContractError("penalty must be positive")
    exact_bc = math.isinf(lam)
    if exact_bc:
        u0, N = disc.affine_constraint_space()
    else:
        u0, N = np.zeros(disc.n_u), np.eye(disc.n_u)

    def objective(z):
        u = u0 + np.atleast_2d(z) @ N.T
        out = disc.residual_terms(u)
        if not exact_bc:
            out = out + lam * disc.bc_terms(u)
        return out

    info = {"method": method, "penalty": lam, "extension": extension, "K": K}
    if method == "least_squares":
        u, extra = _least_squares(disc, objective, u0, N, lam)
        info.update(extra)
        return _finish(disc, u, [], info)

    config = config or OptimizerConfig(mode="mixed", method="conjugate_gradient")
    if method == "derivative_free":
        from dataclasses import replace

        config = replace(config, method="derivative_free")
    S = disc.orthonormal_coordinates(N) if orthonormal else np.eye(N.shape[1])
    bound = coeff_bound if coeff_bound is not None else _default_bound(problem, orthonormal)
    z, result = _variational(objective, S, config, bound)
    u = u0 + N @ np.real(z)
    info.update(optimizer=result, coeff_bound=bound, orthonormal=orthonormal)
    return _finish(disc, u, result.trace, info)


def _default_bound(problem: OdeProblem, orthonormal: bool) -> float:
    """Four times the largest boundary value (at least 4), scaled to the mesh norm when orthonormal."""
    scale = 4.0 * max([1.0] + [abs(bc.value) for bc in problem.boundary_conditions])
    if orthonormal:
        scale *= math.sqrt(problem.domain.length * (problem.max_order + 1))
    return scale


def _fourier_coefficients(fn: Callable, basis: BasisSpec, mesh: Mesh) -> np.ndarray:
    values = np.broadcast_to(np.asarray(fn(mesh.points), dtype=float), mesh.points.shape)
    return fit(values, basis, mesh, method="closed_form", fallback=False).coeffs


def _convolution(a_hat: np.ndarray, modes: np.ndarray) -> np.ndarray:
    """Matrix ``C`` with ``(a * c)_l = sum_l' a_{l - l'} c_l'``, truncated to ``modes``."""
    m = len(modes) // 2
    C = np.zeros((len(modes), len(modes)), dtype=complex)
    for i, l in enumerate(modes):
        for k, lp in enumerate(modes):
            d = l - lp
            if -m <= d <= m:
                C[i, k] = a_hat[d + m]
    return C


def solve_linear_spectral(problem: LinearOdeProblem, K: int, mesh: Mesh, penalty: float = math.inf,
                          method: str = "closed_form", config: Optional[OptimizerConfig] = None,
                          extension: float = 1.0, coeff_bound: Optional[float] = None,
                          orthonormal: bool = True) -> SpectralSolution:
    """Linear ODE solve through products of Fourier coefficients.

    Coefficient functions and right-hand sides are fitted on the mesh, the
    residual's Fourier coefficients ``g_l(c)`` follow by discrete convolution
    truncated to the basis modes, and the residual series is minimized in
    the mesh norm together with the boundary terms. With the default
    ``penalty=inf`` the boundary conditions hold exactly (KKT system).
    """
    if method not in ("closed_form", "variational"):
        raise ContractError("method must be 'closed_form' or 'variational'")
    base = problem.to_problem()
    disc = _Discretization(base, K, mesh, extension)
    basis = disc.basis
    modes = basis.modes
    ik = 1j * basis.wavenumbers()
    n, n_c = problem.n_funcs, disc.n_c
    G = basis.design(mesh.points)
    H_blocks = np.zeros((n, n, len(modes), n_c), dtype=complex)
    rhs_hat = np.zeros((n, len(modes)), dtype=complex)
    for (j, k, a), fn in problem.coefficients.items():
        a_hat = _fourier_coefficients(_as_function(fn), basis, mesh)
        H_blocks[j, k] += (_convolution(a_hat, modes) * ik[None, :] ** a) @ disc.T
    for j, r in enumerate(problem.rhs):
        rhs_hat[j] = _fourier_coefficients(_as_function(r), basis, mesh)

    # residual series sampled on the mesh: rho_j = G (H_j u - rhs_j)
    W = mesh.weights
    H = np.vstack([np.hstack([G @ H_blocks[j, k] for k in range(n)]) for j in range(n)])
    h = np.concatenate([G @ rhs_hat[j] for j in range(n)])
    Wn = np.tile(W, n)
    HW = H.conj().T * Wn
    A = np.real(HW @ H)
    b = -np.real(HW @ h)
    q = float(np.sum(Wn * np.abs(h) ** 2))
    lam = float(penalty)
    if not lam > 0:
        raise ContractError("penalty must be positive")
    nb = len(disc.v)
    info = {"method": method, "penalty": lam, "extension": extension, "K": K}
    if not math.isinf(lam) and nb:
        A = A + lam * disc.B.T @ disc.B
        b = b - lam * disc.B.T @ disc.v
        q += lam * float(disc.v @ disc.v)

    if method == "closed_form":
        if math.isinf(lam) and nb:
            kkt = np.block([[A, disc.B.T], [disc.B, np.zeros((nb, nb))]])
            sol = np.linalg.lstsq(kkt, np.concatenate([-b, disc.v]), rcond=None)[0]
            u = sol[: disc.n_u]
        else:
            u = np.linalg.lstsq(A, -b, rcond=None)[0]
        return _finish(disc, u, [], info)

    if math.isinf(lam):
        u0, N = disc.affine_constraint_space()
    else:
        u0, N = np.zeros(disc.n_u), np.eye(disc.n_u)
    qf = QuadraticForm(A, b, q)
    # restrict to u = u0 + N z
    reduced = QuadraticForm(N.T @ A @ N, N.T @ (A @ u0 + b), float(qf.value(u0)))
    config = config or OptimizerConfig(mode="mixed", method="conjugate_gradient")
    S = disc.orthonormal_coordinates(N) if orthonormal else np.eye(N.shape[1])
    bound = coeff_bound if coeff_bound is not None else _default_bound(base, orthonormal)
    z, result = _variational(reduced, S, config, bound)
    u = u0 + N @ np.real(z)
    info.update(optimizer=result, coeff_bound=bound, orthonormal=orthonormal)
    return _finish(disc, u, result.trace, info)
