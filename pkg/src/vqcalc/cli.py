"""``vqcalc`` command line: one subcommand per task.

Values come from an optional YAML ``--config`` file, then individual flags
override them. The seed comes from ``--seed``, else ``VQCALC_SEED``, else the
config. Exit codes: 0 success, 2 invalid input, 3 not converged (only with
``--require-convergence``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import yaml

from .config import SCHEMA_VERSION, ConfigError, from_dict, resolve_seed
from .expr import ExpressionError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _tomography(text: str):
    return "exact" if text == "exact" else int(text)


def _penalty(text: str):
    return text if text.strip().lower() in ("inf", "infinity") else float(text)


# flag -> (RunConfig field, type, subcommands); None means all task subcommands
_FLAGS = [
    ("--objective", "objective", str, ("optimize", "fit", "integrate")),
    ("--n-vars", "n_vars", int, ("optimize",)),
    ("--domain", "domain", float, ("optimize", "fit", "integrate")),
    ("--periodic", "periodic", _bool, ("optimize",)),
    ("--mode", "mode", str, None),
    ("--qubits", "qubits", int, None),
    ("--layers", "layers", int, None),
    ("--method", "method", str, None),
    ("--gradient", "gradient", str, None),
    ("--learning-rate", "learning_rate", float, None),
    ("--max-iters", "max_iters", int, None),
    ("--restarts", "restarts", int, None),
    ("--tol-f", "tol_f", float, None),
    ("--tol-g", "tol_g", float, None),
    ("--grad-eps", "grad_eps", float, None),
    ("--tomography", "tomography", _tomography, None),
    ("--basis", "basis", str, ("fit", "integrate")),
    ("--K", "K", int, ("fit", "integrate", "ode")),
    ("--M", "M", int, ("fit", "integrate", "ode")),
    ("--extension", "extension", float, ("fit", "integrate", "ode")),
    ("--fit-method", "fit_method", str, ("fit", "integrate")),
    ("--orthonormal", "orthonormal", _bool, ("fit", "integrate")),
    ("--equation", "equation", str, ("ode",)),
    ("--solver", "solver", str, ("ode",)),
    ("--ode-method", "ode_method", str, ("ode",)),
    ("--penalty", "penalty", _penalty, ("ode",)),
    ("--name", "name", str, None),
]

TASK_COMMANDS = ("optimize", "fit", "integrate", "ode")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vqcalc", description="Variational quantum optimization, series fits, integrals and ODEs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", type=Path, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="overrides VQCALC_SEED and the config seed")
        p.add_argument("--output", help="output directory")
        p.add_argument("--require-convergence", action="store_true",
                       help="exit with status 3 if the optimizer did not converge")

    for cmd in TASK_COMMANDS:
        p = sub.add_parser(cmd, help=f"run a single {cmd} task")
        common(p)
        for flag, dest, typ, cmds in _FLAGS:
            if cmds is not None and cmd not in cmds:
                continue
            if dest == "domain":
                p.add_argument(flag, dest=dest, type=typ, nargs=2, metavar=("LO", "HI"))
            else:
                p.add_argument(flag, dest=dest, type=typ)
    b = sub.add_parser("benchmark", help="reproduce the reference benchmarks")
    b.add_argument("benchmark", nargs="?", default="all", help="benchmark name or 'all'")
    common(b)
    return parser


def _read_mapping(path: Path) -> dict:
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path} is not valid YAML: {exc}"]) from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError([f"{path} must contain a mapping"])
    return data


def config_from_args(args: argparse.Namespace):
    """Merge the config file and flags into a validated :class:`RunConfig`."""
    data = _read_mapping(args.config) if args.config is not None else {"schema_version": SCHEMA_VERSION}
    if data.get("task") not in (None, args.command):
        raise ConfigError([f"config task {data['task']!r} does not match subcommand {args.command!r}"])
    data["task"] = args.command
    for _, dest, _, _ in _FLAGS:
        v = getattr(args, dest, None)
        if v is not None:
            data[dest] = list(v) if dest == "domain" else v
    if args.command == "benchmark":
        data["benchmark"] = args.benchmark
    if args.output is not None:
        data["output"] = args.output
    cfg = from_dict(data)
    return cfg.with_seed(resolve_seed(cfg.seed, args.seed))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    from .runner import run

    try:
        cfg = config_from_args(args)
        report = run(cfg)
    except (ConfigError, ExpressionError) as exc:
        print(f"vqcalc: {exc}", file=sys.stderr)
        return EXIT_INVALID
    json.dump(
        {"output": report.output_dir, "converged": report.converged, "results": report.results},
        sys.stdout, indent=2, sort_keys=True, default=str,
    )
    sys.stdout.write("\n")
    if args.require_convergence and not report.converged:
        print("vqcalc: optimizer did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
