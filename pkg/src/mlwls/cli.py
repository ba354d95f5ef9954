"""Command-line entry point: ``mlwls run | fit | check``."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import ConfigError, RunConfig, fit_rate, lower_envelope, parse, run_sweep
from .lsq import NumericalFailure

EXIT_CODES = {"config": 2, "numerical": 3, "io": 4, "internal": 1}


def _parse_sweep(text: str) -> list:
    """``"1,2,3"`` or ``"1-5"`` for levels; ``"3:4,4:6"`` for ``level:degree`` pairs."""
    out: list = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            a, b = part.split(":")
            out.append([int(a), int(b)])
        elif "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _config_from_args(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.from_file(args.config).to_dict()
    else:
        cfg = {}
    if args.problem:
        cfg["problem"] = args.problem
    if args.d is not None:
        cfg.setdefault("problem_params", {})["d"] = args.d
    for key in ("method", "sampler", "output"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    if args.out is not None:
        cfg["output"] = args.out
    if args.sweep:
        cfg["sweep"] = _parse_sweep(args.sweep)
    if args.seed:
        cfg["seeds"] = args.seed
    if args.mc_count is not None:
        cfg["mc_count"] = args.mc_count
    if args.sigma_half:
        cfg["sigma_mode"] = "half"
    return RunConfig.from_dict(cfg)


def cmd_run(args) -> int:
    config = _config_from_args(args)
    record = run_sweep(config)
    if not config.output:
        from .harness import rows_to_csv

        sys.stdout.write(rows_to_csv(record.rows))
    print(json.dumps({"rows": len(record.rows), "rates": record.rates}), file=sys.stderr)
    return 0


def cmd_fit(args) -> int:
    record = parse(args.csv)
    rows = lower_envelope(record.rows) if args.envelope else record.rows
    rf = fit_rate(rows, t=args.t)
    print(json.dumps({"slope": rf.slope, "intercept": rf.intercept, "t": rf.t,
                      "rows": len(rows)}))
    return 0


def cmd_check(args) -> int:
    from .indexsets import total_degree_set
    from .lsq import k_constant
    from .sampling import (arcsine_density, arcsine_weight, density_bounds_check, optimal_density,
                           optimal_weight, stability_margin)

    space = total_degree_set(args.d, args.degree)
    m = len(space)
    k_opt = k_constant(space, lambda Y: optimal_weight(space, Y))
    k_arc = k_constant(space, arcsine_weight)
    rho_min, ratio_max = density_bounds_check(space)
    # how far arcsine sampling is from the optimal distribution
    stab = stability_margin(space, lambda Y: arcsine_density(Y) / optimal_density(space, Y), p=2)
    print(json.dumps({"d": args.d, "degree": args.degree, "dim": m,
                      "k_optimal": k_opt, "k_arcsine": k_arc,
                      "min_optimal_density": rho_min, "max_density_over_arcsine": ratio_max,
                      "stability": stab._asdict()}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlwls", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sweep and write CSV + metadata")
    run.add_argument("--config", help="JSON run configuration")
    run.add_argument("--problem", choices=["synthetic", "elliptic"])
    run.add_argument("--method", choices=["sl", "ml", "ml-conditioned", "adaptive"])
    run.add_argument("--d", type=int)
    run.add_argument("--sweep", help="levels '1-5', or level:degree pairs '3:4,4:6'")
    run.add_argument("--seed", type=int, action="append")
    run.add_argument("--sampler", choices=["optimal", "arcsine", "mis"])
    run.add_argument("--mc-count", type=int)
    run.add_argument("--sigma-half", action="store_true", help="use sigma = d/2")
    run.add_argument("--out")
    run.set_defaults(func=cmd_run, output=None)

    fit = sub.add_parser("fit", help="fit the work-error rate of a CSV")
    fit.add_argument("csv")
    fit.add_argument("--t", type=float, default=0.0, help="log power divided out of the work")
    fit.add_argument("--envelope", action="store_true", help="fit the lower envelope only")
    fit.set_defaults(func=cmd_fit)

    check = sub.add_parser("check", help="sampling diagnostics for a total-degree space")
    check.add_argument("--d", type=int, default=1)
    check.add_argument("--degree", type=int, default=5)
    check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        category, msg = "config", str(exc)
    except NumericalFailure as exc:
        category, msg = "numerical", str(exc)
    except OSError as exc:
        category, msg = "io", str(exc)
    except (ValueError, RuntimeError) as exc:
        category, msg = "internal", str(exc)
    print(json.dumps({"error": category, "message": msg}), file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
