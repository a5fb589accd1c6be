"""Command line entry point ``elliptical-moments``

Coordinates and blocks are 1-based on the command line and in files.
Exit codes: 0 on success, 2 on invalid input or configuration, 3 on I/O
errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from elliptical_moments.blocks import (
    BlockCollection,
    random_pair_blocks,
    threshold_blocks,
    validate_blocks,
)
from elliptical_moments.errors import ConfigError
from elliptical_moments.estimators import (
    METHODS,
    bae,
    blockwise_estimator,
    ideal_estimator,
    mae,
    marginal_estimator,
    marginal_with_ci,
    sample_location_scale,
)
from elliptical_moments.harness import emit, parse_config, run_experiment, run_realized_xi_check
from elliptical_moments.model import SampleMatrix, read_covariance_csv
from elliptical_moments.realized_xi import PanelSeries, estimate_realized_xi
from elliptical_moments.robust import HuberConfig, robust_location_scale

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_IO = 3

# names printed in the JSON output, "ie" doubles as an alias on --method
METHOD_NAMES = {"ideal": "ie", "marginal": "marginal", "mae": "mae", "blockwise": "blockwise", "bae": "bae"}


def _estimate(args) -> None:
    if args.method == "ie":
        args.method = "ideal"
    samples = SampleMatrix.read_csv(args.input)
    p = samples.p
    blocks = None
    if args.method == "ideal":
        blocks = BlockCollection.full(p)
    elif args.blocks is not None:
        blocks = BlockCollection.read(args.blocks, p)
    elif args.method in {"blockwise", "bae"}:
        msg = f"--method {args.method} needs --blocks"
        raise ConfigError(msg)
    if args.robust:
        config = HuberConfig(cv_folds=args.cv_folds)
        if args.tau_grid:
            config = HuberConfig.from_spec(args.tau_grid, cv_folds=args.cv_folds)
        loc = robust_location_scale(samples, blocks, config, np.random.default_rng(args.seed))
    else:
        loc = sample_location_scale(samples, blocks)
    if not 1 <= args.j <= p:
        msg = f"--j must lie in 1..{p}, got {args.j}"
        raise ConfigError(msg)
    if args.method == "blockwise" and not 1 <= args.block <= len(blocks):
        msg = f"--block must lie in 1..{len(blocks)}, got {args.block}"
        raise ConfigError(msg)
    j = args.j - 1
    if args.method == "ideal":
        full = tuple(range(p))
        estimate = ideal_estimator(samples, loc.mu_hat, np.linalg.inv(loc.block(full)), args.m)
    elif args.method == "marginal" and args.ci is not None:
        estimate = marginal_with_ci(samples, j, loc, args.m, args.ci)
    elif args.method == "marginal":
        estimate = marginal_estimator(samples, j, loc.mu_hat[j], loc.sigma_diag_hat[j], args.m)
    elif args.method == "mae":
        estimate = mae(samples, loc, args.m)
    elif args.method == "blockwise":
        J = blocks[args.block - 1]
        estimate = blockwise_estimator(samples, J, loc.mu_hat[J], loc.block(J), args.m)
    else:
        estimate = bae(samples, blocks, loc, args.m)
    record = {
        "method": METHOD_NAMES[estimate.method],
        "m": estimate.m,
        "value": estimate.value,
        "ci": None if estimate.ci is None else [estimate.ci.lower, estimate.ci.upper],
        "n": samples.n,
        "p": p,
    }
    print(json.dumps(record))
    logger.info("%s = %.17g", estimate.label, estimate.value)
    for flag in loc.flags:
        print(f"flag: {flag}", file=sys.stderr)


def _blocks(args) -> None:
    if args.method == "threshold":
        if args.t is None:
            msg = "--method threshold needs --t"
            raise ConfigError(msg)
        if args.input is None:
            msg = "--method threshold needs --input"
            raise ConfigError(msg)
        blocks = threshold_blocks(read_covariance_csv(args.input), args.t)
    else:
        if args.p is None:
            if args.input is None:
                msg = "--method pairs needs --p or --input"
                raise ConfigError(msg)
            args.p = read_covariance_csv(args.input).shape[0]
        blocks = random_pair_blocks(args.p, args.count, seed=args.seed)
    report = validate_blocks(blocks, blocks.p)
    logger.info(
        "%d blocks, largest %d, %d overlapping coordinates", report.n_blocks, report.max_size, len(report.overlaps)
    )
    if args.out is None:
        print(blocks.to_json())
    else:
        blocks.write(args.out)


def _xi(args) -> None:
    panel = PanelSeries.read_csv(args.returns, args.factors)
    if args.pca is not None:
        source, n_factors = "pca", args.pca
    elif args.factors is not None:
        source, n_factors = "observed", None
    else:
        source, n_factors = None, None
    series = estimate_realized_xi(
        panel,
        source,
        arch_order=args.arch_order,
        n_factors=n_factors,
        demean_mode=args.demean,
        window=args.window,
        smooth_window=args.smooth,
        n_jobs=args.workers,
    )
    for flag in series.flags:
        logger.warning(flag)
    try:
        series.to_frame().to_csv(args.out, float_format="%.17g")
    except OSError as err:
        msg = f"cannot write {args.out}: {err.strerror or err}"
        raise OSError(msg) from err


def _simulate(args) -> None:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as err:
        msg = f"cannot read {args.config}: {err.strerror or err}"
        raise OSError(msg) from err
    config = parse_config(text)
    result = run_experiment(config, n_jobs=args.workers)
    emit(result.records, args.out, args.format)
    if args.summary is not None:
        emit(result.summary, args.summary, args.format)


def _xi_check(args) -> None:
    frame = run_realized_xi_check(
        p=args.p,
        T=args.T,
        K=args.K,
        family=args.family,
        replicates=args.replicates,
        seed=args.seed,
        n_jobs=args.workers,
    )
    emit(frame, args.out, args.format)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elliptical-moments",
        description="Moment estimators for elliptical data, realized radial paths and simulations",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    commands = parser.add_subparsers(dest="command", required=True)

    estimate = commands.add_parser("estimate", help="estimate theta_m from a sample CSV")
    estimate.add_argument("--input", required=True, help="CSV with a header and one observation per row")
    estimate.add_argument("--method", choices=(*METHODS, "ie"), default="mae")
    estimate.add_argument("--m", type=int, default=2)
    estimate.add_argument("--blocks", help="JSON list of 1-based blocks")
    estimate.add_argument("--block", type=int, default=1, help="1-based block index for --method blockwise")
    estimate.add_argument("--j", type=int, default=1, help="1-based coordinate for --method marginal")
    estimate.add_argument("--ci", type=float, metavar="ALPHA", help="add a 1-ALPHA interval (marginal only)")
    estimate.add_argument("--robust", action="store_true", help="Huber location and scale")
    estimate.add_argument("--tau-grid", metavar="LO:HI:STEPS")
    estimate.add_argument("--cv-folds", type=int, default=5)
    estimate.add_argument("--seed", type=int, default=0, help="seed of the cross-validation folds")
    estimate.set_defaults(run=_estimate)

    blocks = commands.add_parser("blocks", help="build a block collection")
    blocks.add_argument("--method", choices=("threshold", "pairs"), required=True)
    blocks.add_argument("--input", help="covariance CSV without header")
    blocks.add_argument("--t", type=float, help="correlation threshold in (0, 1)")
    blocks.add_argument("--p", type=int, help="dimension for random pairs")
    blocks.add_argument("--count", type=int)
    blocks.add_argument("--seed", type=int)
    blocks.add_argument("--out", help="output JSON, stdout when omitted")
    blocks.set_defaults(run=_blocks)

    xi = commands.add_parser("xi", help="realized xi_t^2 of a return panel")
    xi.add_argument("--returns", required=True, help="CSV with header date,y1..yp")
    factors = xi.add_mutually_exclusive_group()
    factors.add_argument("--factors", help="CSV with header date,f1..fK")
    factors.add_argument("--pca", type=int, metavar="K", help="use K principal component factors")
    xi.add_argument("--arch-order", type=int, default=2)
    xi.add_argument("--demean", choices=("zero", "window"), default="zero")
    xi.add_argument("--window", type=int)
    xi.add_argument("--smooth", type=int, metavar="W")
    xi.add_argument("--workers", type=int, default=1)
    xi.add_argument("--out", required=True)
    xi.set_defaults(run=_xi)

    simulate = commands.add_parser("simulate", help="run a Monte Carlo experiment")
    simulate.add_argument("--config", required=True, help="flat key = value experiment file")
    simulate.add_argument("--out", required=True, help="per-replicate records")
    simulate.add_argument("--summary", help="aggregated table")
    simulate.add_argument("--workers", type=int, default=1)
    simulate.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    simulate.set_defaults(run=_simulate)

    check = commands.add_parser("xi-check", help="recovery study of the realized xi pipeline")
    check.add_argument("--p", type=int, default=100)
    check.add_argument("--T", type=int, default=500)
    check.add_argument("--K", type=int, default=3)
    check.add_argument("--family", default="gaussian")
    check.add_argument("--replicates", type=int, default=50)
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--workers", type=int, default=1)
    check.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    check.add_argument("--out", required=True)
    check.set_defaults(run=_xi_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        args.run(args)
    except (ConfigError, ValueError) as err:
        logger.error("%s", err)
        return EXIT_CONFIG
    except OSError as err:
        logger.error("%s", err)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
