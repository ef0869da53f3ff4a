"""Executes run configurations and the benchmark suite.

Every run writes its curves as CSV files plus a ``report.json``. Benchmark
summaries are recomputed from those CSV files rather than from in-memory
results, so the table always reflects what is on disk.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import integrate as _quad
from scipy import special

from .calculus import definite_integral
from .config import RunConfig
from .diffeq import (
    BoundaryCondition,
    LinearOdeProblem,
    OdeProblem,
    solve_collocation,
    solve_linear_spectral,
)
from .encoding import VariableDomain, periodic
from .expr import parse_expression
from .objectives import long_sine, nested_sine, trig_sum_batch
from .optimizer import ContinuousProblem, OptimizerConfig, minimize
from .series import BasisSpec, Mesh, fit

logger = logging.getLogger(__name__)

REL_FLOOR = 1e-12

# name -> (objective, n_vars, vectorized)
BUILTIN_OBJECTIVES = {
    "trig_sum": (trig_sum_batch, 14, True),
    "nested_sine": (nested_sine, 4, False),
    "long_sine": (long_sine, 28, False),
}


def _step_factory(lo, hi):
    mid = 0.5 * (lo + hi)
    return lambda x: np.where(np.asarray(x) >= mid, 1.0, 0.0)


def fresnel_s(z: float) -> float:
    """Fresnel sine integral by adaptive quadrature of ``sin(pi t^2 / 2)``."""
    return _quad.quad(lambda t: math.sin(math.pi * t * t / 2), 0.0, z, limit=400, epsabs=1e-14, epsrel=1e-13)[0]


def _fresnel_antiderivative(x: float) -> float:
    return 0.25 * (2 * x * math.sin(x * x) - math.sqrt(2 * math.pi) * fresnel_s(math.sqrt(2 / math.pi) * x))


def _gauss_running(a):
    return lambda x: math.sqrt(math.pi) / 2 * (special.erf(np.asarray(x)) - special.erf(a))


def _fresnel_running(a):
    Fa = _fresnel_antiderivative(a)
    return lambda x: np.array([_fresnel_antiderivative(float(t)) - Fa for t in np.atleast_1d(x)])


# name -> (function factory on (lo, hi), running-integral oracle factory on a or None)
BUILTIN_FUNCTIONS = {
    "gaussian": (lambda lo, hi: (lambda x: np.exp(-np.asarray(x) ** 2)), _gauss_running),
    "step": (_step_factory, None),
    "x2cosx2": (lambda lo, hi: (lambda x: np.asarray(x) ** 2 * np.cos(np.asarray(x) ** 2)), _fresnel_running),
}


def bernoulli_problem() -> OdeProblem:
    """``x f' + f = f^2 x^2 log x`` on ``[1, 2]`` with ``f(1) = 1``."""
    return OdeProblem(
        1,
        lambda x, d: [x * d[1][0] + d[0][0] - d[0][0] ** 2 * x**2 * np.log(x)],
        1,
        VariableDomain(1.0, 2.0),
        (BoundaryCondition(0, 1.0, 1.0),),
        (lambda x: 1.0 / (np.asarray(x) ** 2 * (1.0 - np.log(x))),),
        "bernoulli",
    )


def linear_system_problem() -> LinearOdeProblem:
    """``g' = -g + 6 f``, ``f' = g - 2 f`` on ``[0, 2]``; ``g(0) = 2``, ``f(0) = 0``. Unknown 0 is g."""
    return LinearOdeProblem(
        2,
        {(0, 0, 1): 1.0, (0, 0, 0): 1.0, (0, 1, 0): -6.0, (1, 1, 1): 1.0, (1, 0, 0): -1.0, (1, 1, 0): 2.0},
        (0.0, 0.0),
        VariableDomain(0.0, 2.0),
        (BoundaryCondition(0, 0.0, 2.0), BoundaryCondition(1, 0.0, 0.0)),
        (
            lambda x: 1.2 * np.exp(x) + 0.8 * np.exp(-4 * np.asarray(x)),
            lambda x: 0.4 * np.exp(x) - 0.4 * np.exp(-4 * np.asarray(x)),
        ),
        "linear_system",
    )


BUILTIN_EQUATIONS = {"bernoulli": bernoulli_problem, "linear_system": linear_system_problem}


@dataclass
class RunReport:
    config: dict
    results: dict
    wall_time: float
    csv_paths: Dict[str, str]
    deviations: List[str] = field(default_factory=list)
    converged: bool = True
    output_dir: str = ""

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "results": self.results,
            "wall_time": self.wall_time,
            "csv_paths": self.csv_paths,
            "deviations": self.deviations,
            "converged": self.converged,
        }

    def write(self) -> Path:
        path = Path(self.output_dir) / "report.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n")
        return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _fmt(v) -> str:
    return repr(float(v))


def write_curve_csv(path: Path, x, exact, approx) -> Path:
    """One curve per file: ``x, exact, approx, rel_error``; empty exact column when unknown."""
    x = np.asarray(x, dtype=float)
    approx = np.asarray(approx, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "exact", "approx", "rel_error"])
        for i in range(len(x)):
            if exact is None:
                w.writerow([_fmt(x[i]), "", _fmt(approx[i]), ""])
            else:
                e = float(exact[i])
                rel = abs(approx[i] - e) / max(abs(e), REL_FLOOR)
                w.writerow([_fmt(x[i]), _fmt(e), _fmt(approx[i]), _fmt(rel)])
    return path


def write_trace_csv(path: Path, trace) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "f"])
        for it, f in trace:
            w.writerow([int(it), _fmt(f)])
    return path


def read_csv(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) if r[k] != "" else math.nan for r in rows]) for k in rows[0]}


def _optimizer_config(cfg: RunConfig) -> OptimizerConfig:
    return OptimizerConfig(
        mode=cfg.mode,
        layers=cfg.layers,
        method=cfg.method,
        learning_rate=cfg.learning_rate,
        max_iters=cfg.max_iters,
        grad_eps=cfg.grad_eps,
        gradient=cfg.gradient,
        tol_f=cfg.tol_f,
        tol_g=cfg.tol_g,
        restarts=cfg.restarts,
        seed=cfg.seed,
        tomography=cfg.tomography,
        n_qubits=cfg.qubits,
    )


def _domain(cfg: RunConfig, default=(0.0, 2 * math.pi)) -> Tuple[float, float]:
    return tuple(cfg.domain) if cfg.domain is not None else default


def _one_var(text: str) -> Callable:
    expr = parse_expression(text)
    return lambda x: expr(np.asarray(x, dtype=float)[..., None])


def _target(cfg: RunConfig):
    lo, hi = _domain(cfg)
    if cfg.objective in BUILTIN_FUNCTIONS:
        make, running = BUILTIN_FUNCTIONS[cfg.objective]
        return make(lo, hi), (running(lo) if running else None)
    f = _one_var(cfg.objective)

    def running(x, f=f, a=lo):
        return np.array([_quad.quad(lambda t: float(f(t)), a, float(t), limit=400)[0] for t in np.atleast_1d(x)])

    return f, running


def _run_optimize(cfg: RunConfig, out: Path):
    if cfg.objective in BUILTIN_OBJECTIVES:
        fn, n, vectorized = BUILTIN_OBJECTIVES[cfg.objective]
        if cfg.n_vars is not None and cfg.n_vars != n:
            from .config import ConfigError

            raise ConfigError([f"built-in objective {cfg.objective!r} has {n} variables, not {cfg.n_vars}"])
    else:
        fn = parse_expression(cfg.objective)
        n, vectorized = cfg.n_vars or fn.n_vars, True
    lo, hi = _domain(cfg)
    dom = VariableDomain(lo, hi, half_open=cfg.periodic)
    problem = ContinuousProblem.on_box(fn, n, dom, vectorized=vectorized)
    result = minimize(problem, _optimizer_config(cfg))
    paths = {"trace": str(write_trace_csv(out / "trace.csv", result.trace))}
    results = {
        "best_f": result.best_f,
        "best_x": result.best_x.tolist(),
        "iterations": result.iterations,
        "restarts_used": result.restarts_used,
        "evaluations": result.n_evaluations,
    }
    return results, paths, result.converged, []


def _fit_series(cfg: RunConfig, f):
    lo, hi = _domain(cfg)
    basis = BasisSpec.fourier(cfg.K, lo, hi, cfg.basis, cfg.extension)
    mesh = Mesh.uniform(basis.domain, cfg.M)
    s = fit(f, basis, mesh, method=cfg.fit_method, config=_optimizer_config(cfg), orthonormal=cfg.orthonormal)
    return s, mesh


def _fit_outputs(cfg, s, mesh, f, out: Path):
    x = mesh.points
    paths = {"fit": str(write_curve_csv(out / "fit.csv", x, f(x), s(x)))}
    (out / "series.json").write_text(json.dumps(s.to_record(), indent=2) + "\n")
    paths["series"] = str(out / "series.json")
    opt = s.info.get("optimizer")
    if opt is not None:
        paths["trace"] = str(write_trace_csv(out / "trace.csv", opt.trace))
    results = {"residual": s.residual, "method": s.info["method"], "n_coeffs": s.basis.n_coeffs}
    if "fallback_reason" in s.info:
        results["fallback_reason"] = s.info["fallback_reason"]
    converged = True if opt is None else bool(opt.converged)
    return results, paths, converged


def _run_fit(cfg: RunConfig, out: Path):
    f, _ = _target(cfg)
    s, mesh = _fit_series(cfg, f)
    results, paths, converged = _fit_outputs(cfg, s, mesh, f, out)
    return results, paths, converged, []


def _run_integrate(cfg: RunConfig, out: Path):
    from .calculus import integrate_series

    f, running_exact = _target(cfg)
    s, mesh = _fit_series(cfg, f)
    results, paths, converged = _fit_outputs(cfg, s, mesh, f, out)
    lo, hi = _domain(cfg)
    res = integrate_series(s, lo, hi)
    x = mesh.points
    approx = res.running()(x)
    exact = running_exact(x) if running_exact else None
    paths["integral"] = str(write_curve_csv(out / "integral.csv", x, exact, approx))
    results["integral"] = res.value
    if exact is not None:
        results["integral_exact"] = float(running_exact(np.array([hi]))[0])
    deviations = []
    if cfg.extension > 1:
        deviations.append(f"basis period extended to {cfg.extension} x the integration interval")
    return results, paths, converged, deviations


def _run_ode(cfg: RunConfig, out: Path):
    from .config import ConfigError

    if cfg.equation not in BUILTIN_EQUATIONS:
        raise ConfigError([f"equation must be one of {tuple(BUILTIN_EQUATIONS)}, got {cfg.equation!r}"])
    prob = BUILTIN_EQUATIONS[cfg.equation]()
    linear = isinstance(prob, LinearOdeProblem)
    base = prob.to_problem() if linear else prob
    mesh = Mesh.uniform(base.domain, cfg.M)
    penalty = cfg.penalty
    opt = _optimizer_config(cfg)
    deviations = []
    if cfg.solver == "linear_spectral":
        if not linear:
            raise ConfigError([f"solver 'linear_spectral' needs a linear equation; {cfg.equation!r} is not"])
        method = "closed_form" if cfg.ode_method == "closed_form" else "variational"
        sol = solve_linear_spectral(prob, cfg.K, mesh, penalty if penalty is not None else math.inf,
                                    method=method, config=opt, extension=cfg.extension)
    else:
        if cfg.ode_method == "closed_form":
            raise ConfigError(["ode_method 'closed_form' is only available with solver 'linear_spectral'"])
        sol = solve_collocation(base, cfg.K, mesh, penalty, method=cfg.ode_method, config=opt,
                                extension=cfg.extension)
    if math.isinf(sol.info["penalty"]):
        deviations.append("boundary conditions imposed exactly by eliminating constrained directions")
    else:
        deviations.append(f"boundary conditions as quadratic penalty, weight {sol.info['penalty']:.6g}")
    if cfg.extension > 1:
        deviations.append(f"basis period extended to {cfg.extension} x the ODE interval")
    x = mesh.points
    paths = {}
    for j, s in enumerate(sol.series):
        exact = base.exact[j](x) if base.exact else None
        paths[f"solution_{j}"] = str(write_curve_csv(out / f"solution_{j}.csv", x, exact, s(x)))
    if sol.trace:
        paths["trace"] = str(write_trace_csv(out / "trace.csv", sol.trace))
    results = {"residual_norm": sol.residual_norm, "bc_violation": sol.bc_violation, "penalty": sol.info["penalty"]}
    if linear and cfg.solver == "collocation":
        check = solve_linear_spectral(prob, cfg.K, mesh, math.inf if penalty is None else penalty,
                                      extension=cfg.extension)
        ref = check(x)
        mine = sol(x)
        results["linear_spectral_max_rel_diff"] = float(
            np.max(np.abs(mine - ref) / np.maximum(np.abs(ref), REL_FLOOR))
        )
    opt_result = sol.info.get("optimizer")
    converged = True if opt_result is None else bool(opt_result.converged)
    results["penalty"] = "inf" if math.isinf(results["penalty"]) else results["penalty"]
    return results, paths, converged, deviations


TASK_RUNNERS = {"optimize": _run_optimize, "fit": _run_fit, "integrate": _run_integrate, "ode": _run_ode}


def run(config: RunConfig, output: Optional[str] = None) -> RunReport:
    """Execute one configuration and write its CSVs and ``report.json``."""
    if config.task == "benchmark":
        reports = benchmark_all(config.seed, output or config.output, names=_benchmark_names(config.benchmark))
        return reports[-1] if len(reports) == 1 else _suite_report(reports, output or config.output)
    out = Path(output or config.output)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results, paths, converged, deviations = TASK_RUNNERS[config.task](config, out)
    report = RunReport(config.to_dict(), results, time.perf_counter() - t0, paths, deviations, converged, str(out))
    report.write()
    return report


# --- benchmarks --------------------------------------------------------------

_BASE = dict(schema_version=1)

BENCHMARKS: Dict[str, dict] = {
    "trig_sum": dict(task="optimize", objective="trig_sum", mode="pure", method="conjugate_gradient"),
    "nested_sine": dict(task="optimize", objective="nested_sine", mode="pure", method="gradient_descent"),
    "long_sine": dict(task="optimize", objective="long_sine", mode="pure", method="gradient_descent"),
    "step_fit": dict(task="fit", objective="step", domain=[0.0, 1.0], K=16, M=80, fit_method="variational",
                     orthonormal=True, mode="mixed", method="bfgs", restarts=2),
    "gaussian_integral": dict(task="integrate", objective="gaussian", domain=[-3.0, 3.0], K=22, M=100,
                              fit_method="variational", orthonormal=True, mode="mixed", method="bfgs", restarts=2),
    "fresnel_integral": dict(task="integrate", objective="x2cosx2", domain=[-3.0, 3.0], K=34, M=80, extension=1.25,
                             fit_method="variational", orthonormal=True, mode="mixed", method="bfgs", restarts=2),
    "bernoulli_ode": dict(task="ode", equation="bernoulli", K=11, M=80, extension=3.0, penalty=math.inf,
                          mode="mixed", method="conjugate_gradient", restarts=2),
    "linear_system_ode": dict(task="ode", equation="linear_system", K=7, M=60, extension=3.0, penalty=math.inf,
                              mode="mixed", method="conjugate_gradient", restarts=2),
}

# name -> (metric description, threshold, reference band)
TARGETS = {
    "trig_sum": ("best_f", 1e-2, "f ~ 0"),
    "nested_sine": ("best_f", -0.99, "-0.999"),
    "long_sine": ("best_f", -0.99, "-1"),
    "step_fit": ("max rel error farther than 2 cells from the jump", 1e-2, "1e-2 .. 1e-3"),
    "gaussian_integral": ("max rel error where |exact| > 1e-3 max (fit and running integral)", 1e-2, "~1e-3"),
    "fresnel_integral": ("rel error of the integral over [-3, 3]", 5e-3, "~1e-3"),
    "bernoulli_ode": ("max rel error", 1e-3, "~1e-4"),
    "linear_system_ode": ("max rel error over g and f", 1e-1, "1e-1 .. 1e-2"),
}


def benchmark_config(name: str, seed: int = 0, output: str = "results") -> RunConfig:
    from .config import from_dict

    if name not in BENCHMARKS:
        from .config import ConfigError

        raise ConfigError([f"unknown benchmark {name!r}; choose from {tuple(BENCHMARKS)}"])
    data = dict(_BASE, **BENCHMARKS[name], seed=seed, output=str(Path(output) / name), name=name)
    return from_dict(data)


def _benchmark_names(name: Optional[str]) -> List[str]:
    if name in (None, "all"):
        return list(BENCHMARKS)
    return [name]


def _masked_max(rel, mask) -> float:
    vals = rel[mask & np.isfinite(rel)]
    return float(np.max(vals)) if len(vals) else math.nan


def benchmark_metric(name: str, directory) -> float:
    """Recompute a benchmark's headline number from the CSV files in ``directory``."""
    d = Path(directory)
    if BENCHMARKS[name]["task"] == "optimize":
        return float(np.min(read_csv(d / "trace.csv")["f"]))
    if name == "step_fit":
        t = read_csv(d / "fit.csv")
        x = t["x"]
        h = x[1] - x[0]
        jump = 0.5 * (x[0] + x[-1])
        return _masked_max(t["rel_error"], np.abs(x - jump) > 2 * h)
    if name == "gaussian_integral":
        worst = 0.0
        for fname in ("fit.csv", "integral.csv"):
            t = read_csv(d / fname)
            e = np.abs(t["exact"])
            worst = max(worst, _masked_max(t["rel_error"], e > 1e-3 * e.max()))
        return worst
    if name == "fresnel_integral":
        return float(read_csv(d / "integral.csv")["rel_error"][-1])
    worst = 0.0
    for path in sorted(d.glob("solution_*.csv")):
        worst = max(worst, float(np.nanmax(read_csv(path)["rel_error"])))
    return worst


def summarize(directories: Dict[str, str]) -> List[dict]:
    rows = []
    for name, directory in directories.items():
        metric, threshold, band = TARGETS[name]
        value = benchmark_metric(name, directory)
        rows.append({
            "benchmark": name,
            "metric": metric,
            "value": value,
            "threshold": threshold,
            "passed": bool(value <= threshold),
            "reference_band": band,
        })
    return rows


def write_summary(rows: List[dict], output) -> Path:
    path = Path(output) / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "value": _fmt(r["value"]), "threshold": _fmt(r["threshold"])})
    return path


def benchmark_all(seed: int = 0, output: str = "results", names: Optional[List[str]] = None) -> List[RunReport]:
    """Run every (or the named) benchmark and write ``summary.csv`` next to them."""
    names = list(BENCHMARKS) if names is None else names
    reports = []
    for name in names:
        cfg = benchmark_config(name, seed, output)
        logger.info("benchmark %s", name)
        report = run(cfg)
        reports.append(report)
    rows = summarize({r.config["name"]: r.output_dir for r in reports})
    write_summary(rows, output)
    for report, row in zip(reports, rows):
        report.results["summary"] = row
        report.write()
    return reports


def _suite_report(reports: List[RunReport], output) -> RunReport:
    rows = [r.results["summary"] for r in reports]
    return RunReport(
        {"task": "benchmark", "benchmarks": [r.config["name"] for r in reports]},
        {"summary": rows},
        sum(r.wall_time for r in reports),
        {"summary": str(Path(output) / "summary.csv")},
        sorted({d for r in reports for d in r.deviations}),
        all(r.converged for r in reports),
        str(output),
    )
