"""Run configuration: YAML files, validation and seed precedence."""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from .optimizer import GRADIENTS, METHODS

SCHEMA_VERSION = 1
SEED_ENV = "VQCALC_SEED"
TASKS = ("optimize", "fit", "integrate", "ode", "benchmark")
MODES = ("pure", "mixed")
BASES = ("fourier_exp", "fourier_trig")
FIT_METHODS = ("closed_form", "variational")
ODE_SOLVERS = ("collocation", "linear_spectral")
ODE_METHODS = ("variational", "derivative_free", "least_squares", "closed_form")

# per-task required fields
REQUIRED = {
    "optimize": ("objective",),
    "fit": ("objective", "domain", "K", "M"),
    "integrate": ("objective", "domain", "K", "M"),
    "ode": ("equation", "K", "M"),
    "benchmark": ("benchmark",),
}


class ConfigError(ValueError):
    """One or more configuration problems, all reported together."""

    def __init__(self, errors: List[str]):
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(errors))
        self.errors = list(errors)


@dataclass(frozen=True)
class RunConfig:
    task: str
    schema_version: int = SCHEMA_VERSION
    objective: Optional[str] = None
    n_vars: Optional[int] = None
    domain: Optional[List[float]] = None
    periodic: bool = True
    mode: str = "pure"
    qubits: Optional[int] = None
    layers: int = 3
    method: str = "gradient_descent"
    learning_rate: float = 0.1
    max_iters: int = 2000
    restarts: int = 4
    tol_f: float = 1e-9
    tol_g: float = 1e-6
    grad_eps: Optional[float] = None
    gradient: str = "adjoint"
    tomography: Union[str, int] = "exact"
    basis: str = "fourier_exp"
    K: Optional[int] = None
    M: Optional[int] = None
    extension: float = 1.0
    fit_method: str = "closed_form"
    orthonormal: bool = False
    equation: Optional[str] = None
    solver: str = "collocation"
    ode_method: str = "variational"
    penalty: Optional[float] = None
    benchmark: Optional[str] = None
    seed: int = 0
    output: str = "results"
    name: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        if d["penalty"] is not None and math.isinf(d["penalty"]):
            d["penalty"] = "inf"
        return d

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed))


def _number(v) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity", ".inf"):
        return math.inf
    if isinstance(v, bool):
        raise TypeError
    return float(v)


def from_dict(data: Optional[Dict[str, Any]]) -> RunConfig:
    """Validate a mapping and build a :class:`RunConfig`; raises :class:`ConfigError`."""
    errors: List[str] = []
    if not isinstance(data, dict) or not data:
        data = {} if not isinstance(data, dict) else data
    known = {f.name for f in fields(RunConfig)}
    for key in data:
        if key not in known:
            errors.append(f"unknown field {key!r}")
    values = {k: v for k, v in data.items() if k in known}

    if "schema_version" not in data:
        errors.append("missing field 'schema_version'")
    elif data["schema_version"] != SCHEMA_VERSION:
        errors.append(f"schema_version must be {SCHEMA_VERSION}, got {data['schema_version']!r}")
    task = data.get("task")
    if task is None:
        errors.append("missing field 'task'")
    elif task not in TASKS:
        errors.append(f"task must be one of {TASKS}, got {task!r}")
    else:
        for name in REQUIRED[task]:
            if data.get(name) is None:
                errors.append(f"missing field {name!r} (required for task {task!r})")

    def check_choice(name, choices):
        if name in values and values[name] not in choices:
            errors.append(f"{name} must be one of {choices}, got {values[name]!r}")

    check_choice("mode", MODES)
    check_choice("method", METHODS)
    check_choice("gradient", GRADIENTS)
    check_choice("basis", BASES)
    check_choice("fit_method", FIT_METHODS)
    check_choice("solver", ODE_SOLVERS)
    check_choice("ode_method", ODE_METHODS)

    for name in ("layers", "max_iters", "K", "M", "qubits", "n_vars"):
        v = values.get(name)
        if v is not None and (isinstance(v, bool) or not isinstance(v, int) or v < 1):
            errors.append(f"{name} must be a positive integer, got {v!r}")
    for name in ("restarts",):
        v = values.get(name)
        if v is not None and (isinstance(v, bool) or not isinstance(v, int) or v < 0):
            errors.append(f"{name} must be a non-negative integer, got {v!r}")
    if "seed" in values and (isinstance(values["seed"], bool) or not isinstance(values["seed"], int)):
        errors.append(f"seed must be an integer, got {values['seed']!r}")
    for name in ("learning_rate", "tol_f", "tol_g", "grad_eps", "extension", "penalty"):
        v = values.get(name)
        if v is None:
            continue
        try:
            num = _number(v)
        except (TypeError, ValueError):
            errors.append(f"{name} must be a number, got {v!r}")
            continue
        if not num > 0 or (math.isinf(num) and name != "penalty"):
            errors.append(f"{name} must be positive and finite, got {v!r}")
        else:
            values[name] = num
    if "extension" in values and isinstance(values["extension"], float) and values["extension"] < 1:
        errors.append("extension must be at least 1")
    tomo = values.get("tomography")
    if tomo is not None and tomo != "exact" and not (
        isinstance(tomo, int) and not isinstance(tomo, bool) and tomo >= 1
    ):
        errors.append(f"tomography must be 'exact' or a positive shot count, got {tomo!r}")
    dom = values.get("domain")
    if dom is not None:
        ok = isinstance(dom, (list, tuple)) and len(dom) == 2
        try:
            lo, hi = (float(dom[0]), float(dom[1])) if ok else (0.0, 0.0)
        except (TypeError, ValueError):
            ok = False
        if not ok or not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            errors.append(f"domain must be [lo, hi] with lo < hi, got {dom!r}")
        else:
            values["domain"] = [lo, hi]
    for name in ("objective", "equation", "benchmark", "output", "name"):
        v = values.get(name)
        if v is not None and not isinstance(v, str):
            errors.append(f"{name} must be a string, got {v!r}")

    if not errors and task in ("optimize", "fit", "integrate"):
        errors.extend(_check_objective(values))
    if errors:
        raise ConfigError(errors)
    return RunConfig(**values)


def _check_objective(values) -> List[str]:
    from .expr import ExpressionError, parse_expression
    from .runner import BUILTIN_FUNCTIONS, BUILTIN_OBJECTIVES

    obj = values["objective"]
    builtin = BUILTIN_OBJECTIVES if values["task"] == "optimize" else BUILTIN_FUNCTIONS
    if obj in builtin:
        return []
    try:
        expr = parse_expression(obj)
    except ExpressionError as exc:
        return [f"objective: {exc}"]
    n = values.get("n_vars")
    errs = []
    if values["task"] != "optimize" and expr.n_vars > 1:
        errs.append(f"objective for {values['task']!r} must use only x1, found x{expr.n_vars}")
    if n is not None and expr.n_vars > n:
        errs.append(f"objective references x{expr.n_vars} but n_vars is {n}")
    return errs


def load_config(path: Union[str, Path]) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path} is not valid YAML: {exc}"]) from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError([f"{path} must contain a mapping"])
    return from_dict(data or {})


def resolve_seed(config_seed: int, flag: Optional[int] = None, env=None) -> int:
    """Flag beats the ``VQCALC_SEED`` environment variable, which beats the config."""
    if flag is not None:
        return int(flag)
    env = os.environ if env is None else env
    raw = env.get(SEED_ENV)
    if raw not in (None, ""):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError([f"{SEED_ENV} must be an integer, got {raw!r}"]) from exc
    return int(config_seed)
