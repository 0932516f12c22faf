"""``nowcast run|report|selftest`` command-line entry point."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np

from .config import load_config
from .errors import NowcastError, StageError
from .pipeline import STAGES, Pipeline, emit_report


def _selftest_checks():
    from .dfm import StateSpace, kalman_filter_smoother
    from .evaluation import dm_statistic
    from .linear import PenaltySpec, fit_penalized, ridge_closed_form
    from .tuning import make_time_folds

    def ridge():
        rng = np.random.default_rng(0)
        X, y = rng.standard_normal((40, 10)), rng.standard_normal(40)
        fit = fit_penalized(X, y, PenaltySpec.ridge(2.0), tol=1e-12)
        return np.allclose(fit.coefficients, ridge_closed_form(X, y, 2.0)[1], atol=1e-8)

    def lasso():
        fit = fit_penalized(np.array([[-1.0], [1.0]]), np.array([-1.0, 1.0]), PenaltySpec.lasso(1.0))
        return abs(fit.coefficients[0] - 0.75) < 1e-10

    def kalman():
        # scalar local level observed once: posterior mean P/(P+R) * y
        m = StateSpace(np.array([[1.0]]), np.array([[0.0]]), np.array([[1.0]]), np.array([1.0]),
                       np.zeros(1), np.eye(1))
        out = kalman_filter_smoother(m, np.array([[2.0]]))
        return abs(out.smoothed_means[0, 0] - 1.0) < 1e-12

    def dm():
        d = np.array([1, 2, 3, 2, 1, 0, 1, 2, 3, 2], dtype=float)
        return abs(dm_statistic(d, small_sample_adjust=False) - 1.7 / np.sqrt(0.081)) < 1e-10

    def folds():
        return make_time_folds(("2008-01", "2014-08"), 5).sizes() == [16] * 5

    return [("ridge_closed_form", ridge), ("lasso_scalar", lasso), ("kalman_scalar", kalman),
            ("dm_arithmetic", dm), ("time_folds", folds)]


def selftest() -> int:
    failed = 0
    for name, check in _selftest_checks():
        try:
            ok = bool(check())
        except Exception as exc:  # report, keep going
            ok = False
            print(f"FAIL {name}: {exc}")
            failed += 1
            continue
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        failed += not ok
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nowcast", description="Monthly GDP nowcasting pipeline.")
    parser.add_argument("command", choices=("run", "report", "selftest"))
    parser.add_argument("--config", help="YAML pipeline configuration")
    parser.add_argument("--stage", choices=STAGES, help="run (forcibly) only this stage")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        return selftest()
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return 2
    try:
        config = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise NowcastError("--seed must be an unsigned 64-bit integer")
            config = dataclasses.replace(config, seed=args.seed)
        pipeline = Pipeline(config, args.out)
        if args.command == "report":
            emit_report(pipeline.out)
        elif args.stage:
            pipeline.run([args.stage], force=True)
        else:
            pipeline.run()
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NowcastError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
