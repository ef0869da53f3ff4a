"""Variational quantum continuous optimization on a statevector simulator.

Variables are encoded in single-qubit Bloch coordinates of an ansatz
state. The optimizer tunes the circuit angles. Truncated Fourier series
fits, term-by-term integrals and spectral ODE solvers are built on top.
"""

from .calculus import IntegralResult, antiderivative, definite_integral, integrate_series
from .config import ConfigError, RunConfig, from_dict, load_config, resolve_seed
from .diffeq import (
    BoundaryCondition,
    LinearOdeProblem,
    OdeProblem,
    SpectralSolution,
    differentiate_series,
    solve_collocation,
    solve_linear_spectral,
)
from .encoding import EncodingMap, VariableDomain
from .estimators import FourierSeriesRegressor, SpectralODESolver
from .expr import Expression, ExpressionError, parse_expression
from .optimizer import (
    ContinuousProblem,
    InfeasibleStart,
    OptimizationResult,
    OptimizerConfig,
    minimize,
    minimize_derivative_free,
)
from .qsim import Ansatz, ContractError, StateVector, hardware_efficient_ansatz
from .series import BasisSpec, IllConditioned, Mesh, QuadraticForm, TruncatedSeries, assemble, fit

__version__ = "0.1.0"

__all__ = [
    "Ansatz",
    "BasisSpec",
    "BoundaryCondition",
    "ConfigError",
    "ContinuousProblem",
    "ContractError",
    "EncodingMap",
    "Expression",
    "ExpressionError",
    "FourierSeriesRegressor",
    "IllConditioned",
    "InfeasibleStart",
    "IntegralResult",
    "LinearOdeProblem",
    "Mesh",
    "OdeProblem",
    "OptimizationResult",
    "OptimizerConfig",
    "QuadraticForm",
    "RunConfig",
    "SpectralODESolver",
    "SpectralSolution",
    "StateVector",
    "TruncatedSeries",
    "VariableDomain",
    "antiderivative",
    "assemble",
    "definite_integral",
    "differentiate_series",
    "fit",
    "from_dict",
    "hardware_efficient_ansatz",
    "integrate_series",
    "load_config",
    "minimize",
    "minimize_derivative_free",
    "parse_expression",
    "resolve_seed",
    "solve_collocation",
    "solve_linear_spectral",
]
