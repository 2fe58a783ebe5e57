"""
argparse front end for trunc-ellipse.

Every subcommand writes one JSON document to stdout; diagnostics go to stderr
through the package logger. Exit codes: 0 success, 2 domain error or
non-convergence, 64 usage error, 70 output failing its own schema.
"""

import argparse
import json
import logging
import math
import sys
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from src import __version__
from src.cli.io import emit_json, load_csv, save_csv, validate_output
from src.config.config_manager import ConfigManager
from src.config.defaults import RectMethod
from src.core.density import log_pdf_many
from src.core.errors import (
    DataError,
    NonConvergenceError,
    OutputSchemaError,
    SamplingError,
    TruncEllipseError,
)
from src.core.generators import parse_generator_spec
from src.core.inference import fit_mle, lrt_independence
from src.core.model import check_generator_regularity, load_model
from src.core.mvnprob import norm_const, rect_prob
from src.core.polar import h_functions, psi_star, polar_summary, solve_zero_corr
from src.core.sampling import sample_truncated
from src.core.verify import run_scenario
from src.utils.logger import get_logger, setup_logger
from src.utils.persistence import get_config_dir
from src.utils.validators import require, validate_profile_name

logger = get_logger(__name__)

PROG = "trunc-ellipse"
EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_USAGE = 64
EXIT_SOFTWARE = 70


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit status 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Argument parsing helpers
# ---------------------------------------------------------------------------

def parse_float(text: str) -> float:
    """Float that also accepts -inf / inf spelled out."""
    value = text.strip().lower()
    if value in ("-inf", "-infinity"):
        return -math.inf
    try:
        out = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not a number") from None
    if math.isnan(out):
        raise argparse.ArgumentTypeError("NaN is not allowed")
    return out


def parse_vector(text: str) -> np.ndarray:
    """Comma-separated vector, e.g. "0,-inf"."""
    return np.array([parse_float(v) for v in text.split(",")], dtype=np.float64)


def parse_matrix(text: str) -> np.ndarray:
    """Rows separated by ';', entries by ',', e.g. "1,0.5;0.5,1"."""
    rows = [parse_vector(row) for row in text.split(";")]
    if len({r.size for r in rows}) != 1:
        raise argparse.ArgumentTypeError(f"ragged matrix '{text}'")
    return np.vstack(rows)


def _generator(text: str):
    try:
        return parse_generator_spec(text)
    except TruncEllipseError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not an integer") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer (got {value})")
    return value


def _positive_int(text: str) -> int:
    value = _non_negative_int(text)
    if value == 0:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with all subcommands."""
    parser = _Parser(prog=PROG, description="Truncated multivariate normal and elliptical laws")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--profile", default=None, help="settings profile under configs/profiles/")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    parser.add_argument("--log-dir", default=None, help="also write a timestamped DEBUG log file here")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("pdf", help="truncated density at points")
    p.add_argument("--model", required=True, help="model JSON file")
    points = p.add_mutually_exclusive_group(required=True)
    points.add_argument("--point", type=parse_vector, action="append",
                        help="comma-separated point (repeatable)")
    points.add_argument("--data", help="CSV file with header w1,w2")
    p.add_argument("--seed", type=_non_negative_int, required=True,
                   help="seed of the normalizing-constant integration")

    p = sub.add_parser("sample", help="draw from a truncated model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--seed", type=_non_negative_int, required=True)
    p.add_argument("--out", required=True, help="destination CSV (headerless)")
    p.add_argument("--max-tries", type=_positive_int, default=None)
    p.add_argument("--method", choices=["rejection", "gibbs"], default=None)

    for name, help_text in (("fit", "bivariate truncated normal MLE"),
                            ("lrt", "likelihood ratio test of rho = 0")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data", required=True)
        p.add_argument("--c1", type=parse_float, required=True)
        p.add_argument("--c2", type=parse_float, required=True)
        if name == "fit":
            p.add_argument("--restricted", action="store_true", help="fix rho = 0")
            p.add_argument("--std-errors", action="store_true")
            p.add_argument("--seed", type=_non_negative_int, default=None,
                           help="seed of the Monte Carlo Fisher information (required with --std-errors)")

    p = sub.add_parser("polar", help="truncated-at-mean covariance via polar formulas")
    p.add_argument("--rho", type=parse_float, required=True)
    p.add_argument("--generator", type=_generator, required=True,
                   help="normal | t:DOF | kotz:N,BETA,S | gamma:K[,THETA] | tab:FILE")

    p = sub.add_parser("zero-corr", help="moment ratio giving zero truncated covariance")
    p.add_argument("--rho", type=parse_float, required=True)

    p = sub.add_parser("rectprob", help="P(X >= lower) for a multivariate normal")
    p.add_argument("--mean", type=parse_vector, required=True)
    p.add_argument("--sigma", type=parse_matrix, required=True, help='e.g. "1,0.5;0.5,1"')
    p.add_argument("--lower", type=parse_vector, required=True)
    p.add_argument("--seed", type=_non_negative_int, required=True, help="seed of the QMC randomization")
    p.add_argument("--method", choices=[RectMethod.QUADRATURE_2D_3D, RectMethod.QMC], default=None)

    p = sub.add_parser("verify", help="run an independence verification scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--seed", type=_non_negative_int, required=True)
    p.add_argument("--workers", type=_positive_int, default=None)

    p = sub.add_parser("regularity", help="check generator regularity conditions")
    p.add_argument("--generator", type=_generator, required=True)
    p.add_argument("--grid-max", type=parse_float, default=None)
    p.add_argument("--n-grid", type=_positive_int, default=None)

    return parser


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _emit(schema: str, payload: Dict[str, Any]) -> int:
    validate_output(schema, payload)
    emit_json(payload)
    return EXIT_OK


def cmd_pdf(args, settings) -> int:
    model = load_model(args.model)
    if args.data is not None:
        points = load_csv(args.data).rows
    else:
        for k, point in enumerate(args.point, start=1):
            if point.size != model.p:
                raise DataError(f"--point #{k} has {point.size} coordinates, model has {model.p}")
        points = np.vstack(args.point)
    if points.shape[1] != model.p:
        raise DataError(f"points have {points.shape[1]} coordinates, model has {model.p}")

    log_c = norm_const(model, seed=args.seed, settings=settings["mvnprob"])
    log_values = log_pdf_many(model, points, seed=args.seed, settings=settings["mvnprob"])
    return _emit("pdf", {
        "points": points,
        "log_pdf": log_values,
        "pdf": np.exp(log_values),
        "log_norm_const": log_c,
    })


def cmd_sample(args, settings) -> int:
    model = load_model(args.model)
    batch = sample_truncated(model, args.n, args.seed, max_tries=args.max_tries,
                             settings=settings["sampling"], method=args.method)
    save_csv(args.out, batch.points, header=False)
    logger.info(f"Wrote {batch.n} rows to {args.out}")
    return _emit("sample", {
        "n": batch.n,
        "p": model.p,
        "seed": batch.seed,
        "method": batch.method,
        "acceptance_rate": batch.acceptance_rate,
        "n_proposed": batch.n_proposed,
        "out": args.out,
    })


def cmd_fit(args, settings) -> int:
    data = load_csv(args.data)
    try:
        report = fit_mle(data.rows, [args.c1, args.c2], restricted=args.restricted,
                         std_errors=args.std_errors, settings=settings["inference"],
                         seed=0 if args.seed is None else args.seed)
    except NonConvergenceError as e:
        logger.error(str(e))
        payload = e.reports[0].to_dict()
        payload["n"] = data.n
        _emit("fit", payload)
        return EXIT_DOMAIN

    payload = report.to_dict()
    payload["n"] = data.n
    return _emit("fit", payload)


def cmd_lrt(args, settings) -> int:
    data = load_csv(args.data)
    try:
        result = lrt_independence(data.rows, [args.c1, args.c2], settings=settings["inference"])
    except NonConvergenceError as e:
        logger.error(str(e))
        _emit("lrt", {
            "converged": False,
            "n": data.n,
            "fits": [r.to_dict() for r in e.reports],
        })
        return EXIT_DOMAIN

    payload = result.to_dict()
    payload.update({
        "n": data.n,
        "theta_hat": result.fit_full.theta_hat.to_dict(),
        "loglik": result.fit_full.loglik,
        "converged": True,
        "n_iterations": result.fit_full.n_iterations + result.fit_null.n_iterations,
    })
    return _emit("lrt", payload)


def cmd_polar(args, settings) -> int:
    return _emit("polar", polar_summary(args.generator, args.rho))


def cmd_zero_corr(args, settings) -> int:
    solution = solve_zero_corr(args.rho)
    h1, h2, h3 = h_functions(args.rho)
    return _emit("zero_corr", {
        "rho": args.rho,
        "psi_star": psi_star(args.rho),
        "h1": h1,
        "h2": h2,
        "h3": h3,
        "b_required": solution.b_required,
        "gamma_shape": solution.gamma_shape,
        "feasible_for_gamma": solution.feasible_for_gamma,
    })


def cmd_rectprob(args, settings) -> int:
    p = args.mean.size
    if args.sigma.shape != (p, p) or args.lower.size != p:
        raise DataError(f"--sigma must be {p}x{p} and --lower must have {p} entries")
    result = rect_prob(args.mean, args.sigma, args.lower, seed=args.seed, method=args.method,
                       settings=settings["mvnprob"])
    payload = result.to_dict()
    payload["log_value"] = result.log_value
    return _emit("rectprob", payload)


def cmd_verify(args, settings) -> int:
    try:
        with open(args.scenario, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read scenario '{args.scenario}': {e}") from e

    cfg = dict(settings["verify"])
    if args.workers is not None:
        cfg["workers"] = args.workers
    return _emit("verify", run_scenario(doc, args.seed, cfg))


def cmd_regularity(args, settings) -> int:
    report = check_generator_regularity(args.generator, grid_max=args.grid_max,
                                        n_grid=args.n_grid, settings=settings["regularity"])
    payload = report.to_dict()
    payload["generator"] = args.generator.describe()
    return _emit("regularity", payload)


COMMANDS: Dict[str, Callable[[argparse.Namespace, Dict[str, Any]], int]] = {
    "pdf": cmd_pdf,
    "sample": cmd_sample,
    "fit": cmd_fit,
    "lrt": cmd_lrt,
    "polar": cmd_polar,
    "zero-corr": cmd_zero_corr,
    "rectprob": cmd_rectprob,
    "verify": cmd_verify,
    "regularity": cmd_regularity,
}


def _check_seed_flags(parser: argparse.ArgumentParser, args) -> None:
    """Monte Carlo standard errors need an explicit seed."""
    if args.command == "fit" and args.std_errors and args.seed is None:
        parser.error("fit: --std-errors requires --seed")


def dispatch(argv: Optional[List[str]] = None, configure_logging: bool = True) -> int:
    """
    Parse argv, run the subcommand and return the exit code.

    Args:
        argv: arguments without the program name (sys.argv[1:] if None)
        configure_logging: install the stderr handler at --log-level

    Returns:
        0 on success, 2 on domain errors, 64 on usage errors, 70 when a
        payload fails its own output schema
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _check_seed_flags(parser, args)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    if configure_logging:
        setup_logger(getattr(logging, args.log_level), enable_console=True, log_dir=args.log_dir)

    try:
        if args.profile is not None:
            require(validate_profile_name(args.profile))
        settings = ConfigManager(get_config_dir()).get_settings(args.profile)
        logger.debug(f"Running '{args.command}' with profile {args.profile or '(built-in defaults)'}")
        return COMMANDS[args.command](args, settings)
    except OutputSchemaError as e:
        logger.error(f"internal error: {e}")
        return EXIT_SOFTWARE
    except SamplingError as e:
        partial = getattr(e.partial, "n", 0)
        logger.error(f"{e} ({partial} rows accepted)")
        return EXIT_DOMAIN
    except TruncEllipseError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_DOMAIN
