"""Variational continuous optimization through single-qubit tomography.

Each call of the objective goes through the whole pipeline: circuit
parameters ``omega`` drive a hardware-efficient ansatz from ``|0...0>``,
every qubit is tomographed, its Bloch coordinates are decoded into
variables, and the objective is evaluated at the decoded point. The
parameter update works directly on ``omega`` with central finite
differences of that composition.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .encoding import EncodingMap, VariableDomain, capacity, qubits_needed
from .qsim import (
    Ansatz,
    ContractError,
    bloch_angles,
    clamp_to_ball,
    expectation_gradient,
    hardware_efficient_ansatz,
    pauli_expectations,
    sample_expectations,
    simulate,
    simulate_central_differences,
)

logger = logging.getLogger(__name__)

METHODS = ("gradient_descent", "conjugate_gradient", "bfgs", "derivative_free")
GRADIENTS = ("adjoint", "finite_difference")
_MAX_INIT_DRAWS = 200


class InfeasibleStart(RuntimeError):
    """No restart found a starting point with a finite objective value."""


@dataclass(frozen=True)
class ContinuousProblem:
    """Minimize ``objective`` over a box of ``n_vars`` variables.

    With ``vectorized=True`` the objective receives a ``(B, n_vars)`` array and
    must return ``B`` values; otherwise it is called once per point. The
    optional ``gradient`` is the objective's gradient in variable space and,
    when present, is chained with the decoding Jacobian instead of
    differencing the objective itself.
    """

    objective: Callable
    n_vars: int
    domains: tuple
    gradient: Optional[Callable] = None
    vectorized: bool = False

    def __post_init__(self):
        domains = tuple(self.domains)
        object.__setattr__(self, "domains", domains)
        if self.n_vars < 1:
            raise ContractError("n_vars must be positive")
        if len(domains) != self.n_vars:
            raise ContractError(f"{len(domains)} domains given for {self.n_vars} variables")

    @classmethod
    def on_box(cls, objective, n_vars: int, domain: VariableDomain, **kw) -> "ContinuousProblem":
        return cls(objective, n_vars, (domain,) * n_vars, **kw)


@dataclass(frozen=True)
class OptimizerConfig:
    mode: str = "pure"
    layers: int = 3
    method: str = "gradient_descent"
    learning_rate: float = 0.1
    max_iters: int = 2000
    grad_eps: Optional[float] = None
    tol_f: float = 1e-9
    tol_g: float = 1e-6
    restarts: int = 4
    seed: int = 0
    tomography: Union[str, int] = "exact"
    n_qubits: Optional[int] = None
    patience: int = 10
    gradient: str = "adjoint"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.gradient not in GRADIENTS:
            raise ContractError(f"gradient must be one of {GRADIENTS}, got {self.gradient!r}")
        if self.mode not in ("pure", "mixed"):
            raise ContractError(f"mode must be 'pure' or 'mixed', got {self.mode!r}")
        for name in ("layers", "max_iters", "patience"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")
        for name in ("learning_rate", "tol_f", "tol_g"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be positive")
        if self.grad_eps is not None and not self.grad_eps > 0:
            raise ContractError("grad_eps must be positive")
        if self.restarts < 0:
            raise ContractError("restarts must be non-negative")
        if self.tomography != "exact" and not (
            isinstance(self.tomography, int) and self.tomography >= 1
        ):
            raise ContractError("tomography must be 'exact' or a positive shot count")

    @property
    def shots(self) -> Optional[int]:
        return None if self.tomography == "exact" else int(self.tomography)

    @property
    def effective_grad_eps(self) -> float:
        if self.grad_eps is not None:
            return self.grad_eps
        return 1e-5 if self.shots is None else 1e-2


@dataclass
class OptimizationResult:
    best_x: np.ndarray
    best_f: float
    best_omega: np.ndarray
    iterations: int
    trace: List[Tuple[int, float]]
    converged: bool
    restarts_used: int
    x_trace: List[np.ndarray] = field(default_factory=list, repr=False)
    n_evaluations: int = 0

    def trace_csv_rows(self):
        return [(it, f) for it, f in self.trace]


def _safe_value(objective, x) -> float:
    try:
        v = float(objective(x))
    except (ArithmeticError, ValueError):
        return math.inf
    return v if math.isfinite(v) else math.inf


class _Pipeline:
    """Circuit, tomography, decoding and objective for one problem/config pair."""

    def __init__(self, problem: ContinuousProblem, config: OptimizerConfig, ansatz=None, emap=None):
        self.problem = problem
        self.config = config
        self.emap = emap or EncodingMap.create(config.mode, problem.domains)
        self.ansatz = ansatz or hardware_efficient_ansatz(self.emap.n_qubits, config.layers)
        if self.ansatz.n_qubits != self.emap.n_qubits:
            raise ContractError(
                f"ansatz acts on {self.ansatz.n_qubits} qubits, encoding needs {self.emap.n_qubits}"
            )
        self.rng = np.random.default_rng(config.seed)
        self.n_evaluations = 0

    def decode_states(self, psi: np.ndarray) -> np.ndarray:
        from .encoding import decode_array

        vec = pauli_expectations(psi, self.ansatz.n_qubits)
        if self.config.shots is not None:
            vec = clamp_to_ball(sample_expectations(vec, self.config.shots, self.rng))
        return decode_array(bloch_angles(vec), self.emap)

    def values(self, xs: np.ndarray) -> np.ndarray:
        self.n_evaluations += len(xs)
        obj = self.problem.objective
        if self.problem.vectorized:
            with np.errstate(all="ignore"):
                try:
                    out = np.asarray(obj(xs), dtype=float).reshape(len(xs))
                except (ArithmeticError, ValueError):
                    out = np.array([_safe_value(lambda z: obj(z[None, :])[0], x) for x in xs])
            return np.where(np.isfinite(out), out, math.inf)
        with np.errstate(all="ignore"):
            return np.array([_safe_value(obj, x) for x in xs])

    def evaluate(self, omega: np.ndarray) -> Tuple[np.ndarray, float]:
        x = self.decode_states(simulate(self.ansatz, omega))[0]
        return x, float(self.values(x[None, :])[0])

    def values_at(self, omegas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        xs = self.decode_states(simulate(self.ansatz, omegas))
        return xs, self.values(xs)

    def gradient(self, omega: np.ndarray, eps: float) -> Tuple[np.ndarray, float, np.ndarray]:
        """Gradient in omega; also returns f and x at ``omega``.

        With exact tomography and ``gradient="adjoint"`` the objective is
        differenced with respect to the ``3 n`` Pauli expectations (no circuit
        runs) and that covector is pulled back through the circuit by an
        adjoint sweep. Otherwise every parameter is perturbed by ``eps`` and
        the whole pipeline is rerun.
        """
        if self.config.shots is None and self.config.gradient == "adjoint":
            return self._adjoint_gradient(omega, eps)
        psi = simulate_central_differences(self.ansatz, omega, eps)
        xs = self.decode_states(psi)
        if self.problem.gradient is not None:
            f0 = float(self.values(xs[:1])[0])
            return self._chain(xs, eps), f0, xs[0]
        fs = self.values(xs)
        f0, fp, fm = fs[0], fs[1::2], fs[2::2]
        return _difference(f0, fp, fm, eps), float(f0), xs[0]

    def _chain(self, xs, eps) -> np.ndarray:
        """Decoding Jacobian from +/- rows times the user's variable-space gradient."""
        jac = (xs[1::2] - xs[2::2]) / (2 * eps)
        try:
            gx = np.asarray(self.problem.gradient(xs[0]), dtype=float)
        except (ArithmeticError, ValueError):
            gx = np.full(self.problem.n_vars, np.nan)
        grad = jac @ gx
        return np.where(np.isfinite(grad), grad, 0.0)

    def _adjoint_gradient(self, omega, eps):
        from .encoding import decode_array

        n = self.ansatz.n_qubits
        vec0 = pauli_expectations(simulate(self.ansatz, omega[None, :]), n)[0].ravel()
        m = vec0.size
        rows = np.repeat(vec0[None, :], 2 * m + 1, axis=0)
        k = np.arange(m)
        rows[2 * k + 1, k] += eps
        rows[2 * k + 2, k] -= eps
        angles = bloch_angles(rows.reshape(-1, n, 3))
        # perturbed rows may leave the Bloch ball; extend the decoding smoothly there
        xs = decode_array(angles, self.emap, clip=False)
        xs[0] = decode_array(angles[0], self.emap)
        if self.problem.gradient is not None:
            f0 = float(self.values(xs[:1])[0])
            gvec = self._chain(xs, eps)
        else:
            fs = self.values(xs)
            f0 = float(fs[0])
            gvec = _difference(fs[0], fs[1::2], fs[2::2], eps)
        grad = expectation_gradient(self.ansatz, omega, gvec.reshape(n, 3))
        return grad, f0, xs[0]


def _difference(f0: float, fp: np.ndarray, fm: np.ndarray, eps: float) -> np.ndarray:
    """Central differences, falling back to one-sided ones at kinks and infeasible points.

    A wrap of the phi channel makes the decoded variable jump across its
    domain, which shows up as wildly different forward and backward
    quotients; the smaller one-sided quotient is used then.
    """
    with np.errstate(invalid="ignore", over="ignore"):
        central = (fp - fm) / (2 * eps)
        fwd = (fp - f0) / eps
        bwd = (f0 - fm) / eps
    if not math.isfinite(f0):
        return np.zeros_like(fp)
    grad = central.copy()
    ok_p, ok_m = np.isfinite(fp), np.isfinite(fm)
    grad[ok_p & ~ok_m] = fwd[ok_p & ~ok_m]
    grad[~ok_p & ok_m] = bwd[~ok_p & ok_m]
    grad[~ok_p & ~ok_m] = 0.0
    both = ok_p & ok_m
    kink = both & (np.abs(fwd - bwd) * eps > 1e-3 * max(1.0, abs(f0)))
    grad[kink] = np.where(np.abs(fwd[kink]) < np.abs(bwd[kink]), fwd[kink], bwd[kink])
    return grad


def evaluate(omega, ansatz: Ansatz, emap: EncodingMap, problem: ContinuousProblem,
             tomography: Union[str, int] = "exact", seed: int = 0) -> Tuple[np.ndarray, float]:
    """Run the circuit at ``omega``, tomograph, decode and return ``(x, f(x))``."""
    config = OptimizerConfig(mode=emap.mode, tomography=tomography, seed=seed)
    pipe = _Pipeline(problem, config, ansatz=ansatz, emap=emap)
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (ansatz.n_params,):
        raise ContractError(f"omega has shape {omega.shape}, ansatz needs ({ansatz.n_params},)")
    return pipe.evaluate(omega)


def omega_gradient(omega, ansatz: Ansatz, emap: EncodingMap, problem: ContinuousProblem,
                   eps: float = 1e-5, gradient: str = "finite_difference") -> np.ndarray:
    """Gradient of ``f(decode(tomography(U(omega))))`` with respect to ``omega``.

    ``finite_difference`` takes central differences of the whole pipeline in
    each ``omega_j``; ``adjoint`` differences ``f`` only in the Pauli
    expectations and back-propagates through the circuit analytically.
    """
    if not eps > 0:
        raise ContractError("grad_eps must be positive")
    pipe = _Pipeline(problem, OptimizerConfig(mode=emap.mode, gradient=gradient), ansatz=ansatz, emap=emap)
    return pipe.gradient(np.asarray(omega, dtype=float), eps)[0]


def _check_capacity(problem: ContinuousProblem, config: OptimizerConfig) -> None:
    needed = qubits_needed(config.mode, problem.n_vars)
    n_qubits = config.n_qubits if config.n_qubits is not None else needed
    if capacity(config.mode, n_qubits) < problem.n_vars:
        raise ContractError(
            f"{problem.n_vars} variables exceed the {config.mode}-mode capacity "
            f"{capacity(config.mode, n_qubits)} of {n_qubits} qubits"
        )
    if n_qubits != needed:
        raise ContractError(f"{config.mode} encoding of {problem.n_vars} variables uses {needed} qubits")
    if config.mode == "mixed" and n_qubits <= 2 and problem.n_vars >= 3:
        # one qubit: r = 1; two qubits: both reduced states share their spectrum, so r_0 = r_1
        logger.warning("mixed encoding on %d qubit(s): the radial variables are not independent", n_qubits)


def _initial_omega(pipe: _Pipeline) -> Tuple[np.ndarray, np.ndarray, float]:
    for _ in range(_MAX_INIT_DRAWS):
        omega = pipe.rng.uniform(0.0, 2 * np.pi, pipe.ansatz.n_params)
        x, f = pipe.evaluate(omega)
        if math.isfinite(f):
            return omega, x, f
    raise InfeasibleStart(
        f"no finite objective value after {_MAX_INIT_DRAWS} random circuit initializations"
    )


class _Run:
    """Bookkeeping for a single descent from one starting point."""

    def __init__(self, omega, x, f):
        self.omega, self.x, self.f = omega, x, f
        self.trace = [(0, f)]
        self.x_trace = [x]
        self.iterations = 0
        self.converged = False
        self._quiet = 0

    def record(self, it, omega, x, f, patience, tol_f):
        delta = abs(self.f - f)
        self.omega, self.x, self.f = omega, x, f
        self.iterations = it
        self.trace.append((it, f))
        self.x_trace.append(x)
        self._quiet = self._quiet + 1 if delta < tol_f else 0
        if self._quiet >= patience:
            self.converged = True


def _line_search(pipe, omega, f0, direction, step, slope):
    """Halve ``step`` until ``f(omega + step*direction) < f0``; ``None`` if hopeless.

    An accepted step is refined once by the minimizer of the parabola through
    ``f0``, the directional ``slope`` and the accepted value.
    """
    scale = float(np.linalg.norm(direction))
    while step * scale > 1e-13:
        trial = omega + step * direction
        x, f = pipe.evaluate(trial)
        if f < f0:
            curv = f - f0 - slope * step
            if curv > 0 and slope < 0:
                t = -slope * step * step / (2 * curv)
                if 0 < t <= 4 * step and abs(t - step) > 1e-3 * step:
                    trial2 = omega + t * direction
                    x2, f2 = pipe.evaluate(trial2)
                    if f2 < f:
                        return trial2, x2, f2, t
            return trial, x, f, step
        step *= 0.5
    return None


def _descend(pipe: _Pipeline, start) -> _Run:
    """Steepest descent with backtracking and step growth after each success."""
    cfg = pipe.config
    eps = cfg.effective_grad_eps
    run = _Run(*start)
    step = cfg.learning_rate
    max_step = cfg.learning_rate * 2.0**10
    for it in range(1, cfg.max_iters + 1):
        g, f0, _ = pipe.gradient(run.omega, eps)
        if np.linalg.norm(g) < cfg.tol_g:
            run.converged = True
            break
        found = _line_search(pipe, run.omega, run.f, -g, step, -float(g @ g))
        if found is None:
            # no decrease at any resolvable step: numerically stationary
            run.iterations = it
            run.converged = True
            break
        omega, x, f, used = found
        step = min(2.0 * used, max_step)
        run.record(it, omega, x, f, cfg.patience, cfg.tol_f)
        if run.converged:
            break
    return run


def _wolfe_descent(pipe: _Pipeline, start, method: str) -> _Run:
    """Polak-Ribiere conjugate gradient or BFGS with a Wolfe line search (scipy).

    The finite-difference gradient in omega is shared with the steepest
    descent path; line-search precision loss at the gradient's resolution
    counts as convergence.
    """
    cfg = pipe.config
    eps = cfg.effective_grad_eps
    run = _Run(*start)
    seen = {}

    def fun(omega):
        g, f0, x = pipe.gradient(omega, eps)
        if len(seen) > 64:
            seen.clear()
        seen[omega.tobytes()] = x
        if not math.isfinite(f0):
            # steer the line search back towards the feasible side
            return 1e300, np.zeros_like(omega)
        return f0, g

    def callback(intermediate_result):
        omega = np.array(intermediate_result.x, dtype=float)
        x = seen.get(omega.tobytes())
        f = float(intermediate_result.fun)
        if x is None:
            x, f = pipe.evaluate(omega)
        run.record(run.iterations + 1, omega, x, f, cfg.patience, cfg.tol_f)
        if run.converged:
            raise StopIteration

    res = _scipy_minimize(
        fun, run.omega, jac=True, method="CG" if method == "conjugate_gradient" else "BFGS",
        callback=callback, options={"maxiter": cfg.max_iters, "gtol": cfg.tol_g},
    )
    omega = np.asarray(res.x, dtype=float)
    x, f = pipe.evaluate(omega)
    if f < run.f:
        run.record(run.iterations + 1, omega, x, f, 1, 0.0)
    run.converged = run.converged or res.status in (0, 2)
    return run


def _simplex(pipe: _Pipeline, start) -> _Run:
    cfg = pipe.config
    run = _Run(*start)
    best = {"f": run.f}
    counter = {"it": 0}

    def fun(omega):
        x, f = pipe.evaluate(omega)
        return f

    def callback(omega):
        counter["it"] += 1
        x, f = pipe.evaluate(omega)
        if f <= best["f"]:
            best["f"] = f
        run.record(counter["it"], omega.copy(), x, f, cfg.patience, cfg.tol_f)

    P = pipe.ansatz.n_params
    res = _scipy_minimize(
        fun,
        run.omega,
        method="Nelder-Mead",
        callback=callback,
        options={
            "maxiter": cfg.max_iters,
            "maxfev": 20 * cfg.max_iters,
            "xatol": 1e-10,
            "fatol": cfg.tol_f,
            "adaptive": P > 10,
            "initial_simplex": _initial_simplex(run.omega, cfg.learning_rate * 5),
        },
    )
    x, f = pipe.evaluate(res.x)
    if f < run.f:
        run.record(counter["it"] + 1, np.asarray(res.x), x, f, cfg.patience, cfg.tol_f)
    run.converged = bool(res.success) or run.converged
    return run


def _initial_simplex(omega, size):
    P = len(omega)
    simplex = np.repeat(omega[None, :], P + 1, axis=0)
    simplex[1:] += size * np.eye(P)
    return simplex


def minimize(problem: ContinuousProblem, config: OptimizerConfig = OptimizerConfig()) -> OptimizationResult:
    """Best result of ``config.restarts + 1`` variational descents from random circuits."""
    _check_capacity(problem, config)
    pipe = _Pipeline(problem, config)
    results = []
    infeasible = 0
    for attempt in range(config.restarts + 1):
        try:
            start = _initial_omega(pipe)
        except InfeasibleStart:
            infeasible += 1
            continue
        if config.method == "derivative_free":
            run = _simplex(pipe, start)
        elif config.method == "gradient_descent":
            run = _descend(pipe, start)
        else:
            run = _wolfe_descent(pipe, start, config.method)
        logger.debug("restart %d: f=%.6g after %d iterations", attempt, run.f, run.iterations)
        results.append(run)
    if not results:
        raise InfeasibleStart(f"all {infeasible} restarts started at infeasible points")
    best = min(results, key=lambda r: r.f)
    return OptimizationResult(
        best_x=best.x,
        best_f=best.f,
        best_omega=best.omega,
        iterations=best.iterations,
        trace=best.trace,
        converged=best.converged,
        restarts_used=len(results) - 1,
        x_trace=best.x_trace,
        n_evaluations=pipe.n_evaluations,
    )


def minimize_derivative_free(problem: ContinuousProblem,
                             config: OptimizerConfig = OptimizerConfig()) -> OptimizationResult:
    """:func:`minimize` with a Nelder-Mead simplex search over ``omega``."""
    return minimize(problem, replace(config, method="derivative_free"))
