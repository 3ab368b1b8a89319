"""Command-line driver: ``constants``, ``verify``, ``optimize`` and ``correlate``.

Exit status: 0 when everything holds, 1 when a verification check is
violated, 2 for configuration or precondition errors.  CSV output has a
header row and 17 significant digits for reals; it depends only on the
configuration and seed, never on the thread count.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .correlation import kendall_tau_b, pearson_weights
from .errors import ConfigError, IGOError, InvalidInputError
from .experiment import build_scheme, build_suite, resolve_threshold, run_checks, run_monotone_experiment, select_checks
from .gaussian import admissible_lower_bound, theory_rates
from .harness import TrajectoryRow
from .ranking import n_w_constant, utilities
from .utility_poly import UtilityPolynomial, selection_gap_M_w, weight_variance_U_u

__all__ = ["main", "THREADS_ENV"]

THREADS_ENV = "IGO_SURROGATE_THREADS"

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise InvalidInputError(f"refusing to write non-finite value {v!r}")
        return f"{float(v):.17g}"
    return str(v)


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc.strerror}") from None


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be positive")
        return n
    return os.cpu_count() or 1


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def cmd_constants(cfg: ExperimentConfig) -> tuple[str, int]:
    """Scheme constants, admissible thresholds and the learning-rate bounds for the configured gate."""
    scheme = build_scheme(cfg)
    poly = UtilityPolynomial(scheme)
    rows = [
        ("lambda", scheme.lam),
        ("sum_w", math.fsum(scheme.weights)),
        ("L_u", poly.lipschitz),
        ("M_w", selection_gap_M_w(scheme)),
        ("N_w", n_w_constant(scheme)),
        ("U_u", weight_variance_U_u(scheme)),
        ("tau_min", admissible_lower_bound(scheme, "kendall")),
        ("rho_min", admissible_lower_bound(scheme, "pearson")),
    ]
    threshold = resolve_threshold(cfg, scheme, cfg.gate)
    rates = theory_rates(scheme, cfg.dimension, threshold, cfg.gate)
    rows += [
        ("threshold", threshold),
        ("beta", rates.beta),
        ("gamma", rates.gamma),
        ("alpha_opt", rates.alpha_opt),
        ("alpha_max", rates.alpha_max),
    ]
    return _csv_text(["constant", "value"], rows), EXIT_OK


def cmd_verify(cfg: ExperimentConfig, pattern: str | None, threads: int) -> tuple[str, int]:
    checks = select_checks(build_suite(cfg), pattern)
    if not checks:
        raise ConfigError(f"no check matches {pattern!r}")
    reports = run_checks(checks, threads)
    header = ["name", "lhs_estimate", "lhs_std_error", "rhs_bound", "slack", "n_replicates", "two_sided", "verdict"]
    rows = [(r.name, r.lhs_estimate, r.lhs_std_error, r.rhs_bound, r.slack, r.n_replicates, r.two_sided, r.verdict)
            for r in reports]
    status = EXIT_OK if all(r.ok for r in reports) else EXIT_VIOLATION
    return _csv_text(header, rows), status


def cmd_optimize(cfg: ExperimentConfig) -> tuple[str, int]:
    rows = run_monotone_experiment(cfg)
    return _csv_text(TrajectoryRow.header(), (r.values() for r in rows)), EXIT_OK


def _read_values(path: str) -> np.ndarray:
    try:
        lines = Path(path).read_text().split()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        vals = np.array([float(t) for t in lines])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(vals)):
        raise ConfigError(f"{path}: values must be finite")
    return vals


def cmd_correlate(cfg: ExperimentConfig, f_path: str, g_path: str) -> tuple[str, int]:
    """Kendall tau-b of the values, and Pearson rho of their utilities under the configured weights."""
    f, g = _read_values(f_path), _read_values(g_path)
    if f.size != g.size:
        raise ConfigError(f"value files differ in length: {f.size} vs {g.size}")
    scheme = build_scheme(cfg, lam=f.size)
    rows = [
        ("n", f.size),
        ("tau_b", kendall_tau_b(f, g)),
        ("rho_w", pearson_weights(utilities(f, scheme), utilities(g, scheme))),
    ]
    return _csv_text(["statistic", "value"], rows), EXIT_OK


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="64-bit seed, overrides the config")
    common.add_argument("--out", help="write CSV here instead of stdout")
    common.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or CPU count)")

    parser = argparse.ArgumentParser(prog="igo-surrogate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("constants", parents=[common], help="scheme constants and theorem rates")
    verify = sub.add_parser("verify", parents=[common], help="run the Monte-Carlo verification suite")
    verify.add_argument("--filter", help="glob on check names or families, e.g. 'descent' or 'moment-bound/*/negated/*'")
    sub.add_parser("optimize", parents=[common], help="gated optimisation trajectory")
    corr = sub.add_parser("correlate", parents=[common], help="tau and rho between two value files")
    corr.add_argument("f_values")
    corr.add_argument("g_values")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        cfg = _config(args)
        if args.command == "constants":
            text, status = cmd_constants(cfg)
        elif args.command == "verify":
            threads = args.threads or _default_threads()
            text, status = cmd_verify(cfg, args.filter, threads)
        elif args.command == "optimize":
            text, status = cmd_optimize(cfg)
        else:
            text, status = cmd_correlate(cfg, args.f_values, args.g_values)
        _emit(text, args.out)
    except IGOError as exc:
        print(f"igo-surrogate: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return status


if __name__ == "__main__":
    sys.exit(main())
