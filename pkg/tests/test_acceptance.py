"""End-to-end acceptance gate; each test prints one PASS/FAIL line.

Benchmarks run through the same configurations as ``vqcalc benchmark`` and
are scored from the CSV files they write.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from vqcalc.runner import benchmark_config, benchmark_metric, read_csv, run

TESTS = Path(__file__).parent


def _report(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def _seeded_optimum(name, tmp_path, threshold, needed, ceiling):
    rows = []
    for seed in range(5):
        t0 = time.perf_counter()
        report = run(benchmark_config(name, seed, str(tmp_path)))
        elapsed = time.perf_counter() - t0
        best = benchmark_metric(name, report.output_dir)
        ok = best <= threshold and elapsed < ceiling and report.results["iterations"] <= 2000
        rows.append((seed, best, elapsed, ok))
    hits = sum(ok for *_, ok in rows)
    detail = f"{name}: {hits}/5 seeds at best_f <= {threshold} under {ceiling:g}s; " + ", ".join(
        f"s{s}={b:.4g} ({t:.1f}s)" for s, b, t, _ in rows)
    return _report(_CRITERIA[name], hits >= needed, detail)


_CRITERIA = {"trig_sum": 1, "nested_sine": 2, "long_sine": 3, "step_fit": 4, "gaussian_integral": 5,
             "fresnel_integral": 6, "bernoulli_ode": 7, "linear_system_ode": 8}


def test_trig_sum_minimum(tmp_path):
    assert _seeded_optimum("trig_sum", tmp_path, 1e-2, 4, 60.0)


def test_nested_sine_minimum(tmp_path):
    assert _seeded_optimum("nested_sine", tmp_path, -0.99, 4, 30.0)


def test_long_sine_minimum(tmp_path):
    assert _seeded_optimum("long_sine", tmp_path, -0.99, 3, 300.0)


def _figure(name, threshold, tmp_path, extra=""):
    report = run(benchmark_config(name, 0, str(tmp_path)))
    value = benchmark_metric(name, report.output_dir)
    detail = f"{name}: {value:.3g} <= {threshold:g} ({report.wall_time:.1f}s){extra(report) if extra else ''}"
    return _report(_CRITERIA[name], value <= threshold, detail)


def _step_diagnostic(report):
    t = read_csv(report.csv_paths["fit"])
    x = t["x"]
    h = x[1] - x[0]
    away = np.abs(x - 0.5) > 2 * h
    err = np.abs(t["approx"] - t["exact"])[away]
    return f"; abs error off-jump max {err.max():.3g}, median {np.median(err):.3g}"


def test_step_fit(tmp_path):
    assert _figure("step_fit", 1e-2, tmp_path, _step_diagnostic)


def test_gaussian_fit_and_running_integral(tmp_path):
    assert _figure("gaussian_integral", 1e-2, tmp_path)


def test_fresnel_type_integral(tmp_path):
    assert _figure("fresnel_integral", 5e-3, tmp_path)


def test_bernoulli_ode(tmp_path):
    assert _figure("bernoulli_ode", 1e-3, tmp_path)


def test_linear_system_ode(tmp_path):
    assert _figure("linear_system_ode", 1e-1, tmp_path)


PROPERTY_TESTS = [
    "test_qsim.py::test_tomography_round_trip_grid",
    "test_optimizer.py::test_gradient_matches_independent_differences",
    "test_optimizer.py::test_adjoint_gradient_agrees_with_differences",
    "test_series.py::test_quadratic_form_structure",
    "test_series.py::test_variational_matches_closed_form_on_gaussian",
    "test_calculus.py::test_linearity_same_basis_and_mesh",
    "test_calculus.py::test_running_integral_additivity",
    "test_diffeq.py::test_bernoulli_reference_and_certificate",
    "test_diffeq.py::test_bernoulli_variational",
    "test_cli.py::test_same_seed_gives_byte_identical_csvs",
]


def test_property_suites():
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_TESTS],
        cwd=TESTS, capture_output=True, text=True,
    )
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    assert _report(9, proc.returncode == 0, f"{len(PROPERTY_TESTS)} property tests: {tail}"), proc.stdout
