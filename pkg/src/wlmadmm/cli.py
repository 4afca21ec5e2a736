"""Command line entry point: ``wlmadmm {lasso,ksupp,verify} ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .certify import GAMMA_LARGE, GAMMA_SMALL
from .engine import AssumptionViolation, NumericalFailure
from .experiments import ExperimentConfig, ExperimentError, run_experiment, verify_csv, write_report

log = logging.getLogger("wlmadmm")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
GAMMA_PRESETS = {"2sqrtlog2": GAMMA_SMALL, "20sqrtlog2": GAMMA_LARGE}


def gamma_arg(text: str) -> float:
    if text in GAMMA_PRESETS:
        return GAMMA_PRESETS[text]
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a positive real or one of {sorted(GAMMA_PRESETS)}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("gamma must be positive")
    return value


def _common(p: argparse.ArgumentParser, abstol: float):
    p.add_argument("--m", type=int, default=500)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--gamma", type=gamma_arg, default=GAMMA_SMALL,
                   help="positive real, or a preset: 2sqrtlog2, 20sqrtlog2")
    p.add_argument("--iters", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--abstol", type=float, default=abstol)
    p.add_argument("--reltol", type=float, default=abstol)
    p.add_argument("--rho", type=float, default=1.2)
    p.add_argument("--eps0", type=float, default=None,
                   help="almost-sure prox error bound (default: observed maximum)")
    p.add_argument("--out", default=None, help="report path (default: print summary only)")
    p.add_argument("--format", choices=("csv", "json", "both"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wlmadmm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lasso", help="LASSO with injected truncated-Gaussian errors")
    _common(p, 1e-6)
    p.add_argument("--delta", type=float, default=0.2)

    p = sub.add_parser("ksupp", help="robust regression with squared k-support regularization")
    _common(p, 2.2204e-16)
    p.add_argument("--skip", type=int, default=1)
    p.add_argument("--inner-tol", type=float, default=None)
    p.add_argument("--ksupp", type=int, default=20)
    p.add_argument("--lambda-reg", type=float, default=1.0)

    p = sub.add_parser("verify", help="recompute the empirical probability from a CSV report")
    p.add_argument("csv")
    p.add_argument("--gamma", type=gamma_arg, default=GAMMA_SMALL)
    return parser


def _config(args) -> ExperimentConfig:
    kw = dict(experiment=args.command, m=args.m, n=args.n, gamma=args.gamma, iters=args.iters,
              seed=args.seed, abstol=args.abstol, reltol=args.reltol, rho=args.rho,
              eps0=args.eps0, out=args.out)
    if args.command == "lasso":
        kw["delta"] = args.delta
    else:
        kw.update(skip=args.skip, inner_tol=args.inner_tol, k_supp=args.ksupp,
                  lambda_reg=args.lambda_reg)
    return ExperimentConfig(**kw)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")

    if args.command == "verify":
        try:
            rep = verify_csv(args.csv, args.gamma)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps(rep.summary(), indent=1))
        return EXIT_OK

    try:
        cfg = _config(args)
        model = cfg.error_model()
        log.info("running %s with error model %s", cfg.experiment, model.variant)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        report = run_experiment(cfg)
    except ExperimentError as exc:
        cause = exc.cause
        if isinstance(cause, (AssumptionViolation, NumericalFailure)):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        if isinstance(cause, ValueError):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise

    if args.out:
        try:
            paths = write_report(report, args.out, args.format)
        except OSError as exc:
            print(f"error: cannot write report: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for p in paths:
            log.info("wrote %s", p)
    print(json.dumps(report.summary, indent=1, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
