"""Command line entry point: ``reidrisk generate|assess|unicity``.

Exit codes: 0 success, 2 usage or validation error, 3 bad input data.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("reidrisk")

EXIT_USAGE = 2
EXIT_DATA = 3


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _name_list(text: str) -> list[str]:
    values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cdr", required=True, help="CDR csv (caller, receiver, tower, time)")
    p.add_argument("--hierarchy", required=True, help="tower -> zone csv, finest level first")
    p.add_argument("--caller-col", default="caller_id")
    p.add_argument("--receiver-col", default="receiver_id")
    p.add_argument("--tower-col", default="tower_id")
    p.add_argument("--time-col", default="time")
    p.add_argument("--time-format", default="%Y-%m-%d %H:%M", help="strftime format of the time column")
    p.add_argument("--timezone", default="UTC")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reidrisk", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=_positive, default=None,
                        help="worker threads (default: all cores); results do not depend on it")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic cdr.csv and hierarchy.csv")
    g.add_argument("--users", type=_positive, default=10_000)
    g.add_argument("--days", type=_positive, default=30)
    g.add_argument("--towers", type=_positive, default=2130)
    g.add_argument("--zones", type=_int_list, default=[2130, 156, 56],
                   help="zone counts per level, finest first")
    g.add_argument("--median-calls", type=float, default=50.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")

    a = sub.add_parser("assess", help="information cost / ratio over a profile grid")
    _add_input_flags(a)
    a.add_argument("--spatial", type=_name_list, default=None, help="levels (default: all in hierarchy)")
    a.add_argument("--temporal", type=_int_list, default=[1, 6, 12, 24], help="slice hours")
    a.add_argument("--trials", type=_positive, default=10, help="random orderings per user")
    a.add_argument("--unicity-trials", type=_positive, default=1000)
    a.add_argument("--p", type=_int_list, default=[1, 2, 3, 4, 5], help="unicity sample sizes")
    a.add_argument("--censored-policy", choices=("exclude", "count_as_full"), default="exclude")
    a.add_argument("--basis", choices=("distinct_points", "raw_records"), default="distinct_points")
    a.add_argument("--bootstrap", type=_positive, default=1000, help="bootstrap resamples")
    a.add_argument("--utility", help="utility csv (spatial_level, temporal_granularity, score)")
    a.add_argument("--pareto", action="store_true", help="add the privacy-utility Pareto split")

    u = sub.add_parser("unicity", help="unicity u_p table")
    _add_input_flags(u)
    u.add_argument("--spatial", type=_name_list, default=None, help="levels (default: finest)")
    u.add_argument("--temporal", type=_int_list, default=[1])
    u.add_argument("--p", type=_int_list, default=[1, 2, 3, 4])
    u.add_argument("--trials", type=_positive, default=1000)
    return parser


def _set_threads(threads) -> None:
    if threads is not None and "numba" not in sys.modules:
        os.environ["NUMBA_NUM_THREADS"] = str(threads)
    import numba

    if threads is not None:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


def _write(data: bytes, out) -> None:
    if out is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
        return
    Path(out).write_bytes(data)


def _load(args):
    from .ingest import CdrSchemaConfig, parse_cdr, parse_spatial_map

    schema = CdrSchemaConfig(
        caller=args.caller_col, tower=args.tower_col, time=args.time_col,
        receiver=args.receiver_col or None, time_format=args.time_format,
        timezone=args.timezone, delimiter=args.delimiter,
    )
    with open(args.cdr, "rb") as fh:
        raw = parse_cdr(fh, schema)
    with open(args.hierarchy, "rb") as fh:
        hierarchy = parse_spatial_map(fh)
    log.info("loaded %d records, %d users, %d towers", len(raw), raw.n_users, len(hierarchy))
    return raw, hierarchy


def _profiles(args, hierarchy, default_spatial):
    from .generalize import profile_grid

    names = args.spatial or default_spatial
    try:
        levels = [hierarchy.resolve_level(s) for s in names]
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    try:
        return profile_grid(levels, args.temporal)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _input_config(args) -> dict:
    return {
        "cdr": args.cdr, "hierarchy": args.hierarchy, "time_format": args.time_format,
        "timezone": args.timezone, "seed": args.seed,
    }


def cmd_generate(args) -> None:
    from .ingest import write_cdr, write_spatial_map
    from .synthgen import SynthConfig, generate

    try:
        config = SynthConfig(
            n_users=args.users, n_towers=args.towers, zone_counts=tuple(args.zones),
            level_names=("zip", "district", "municipality")[: len(args.zones)]
            if len(args.zones) <= 3 else tuple(f"level{i}" for i in range(len(args.zones))),
            period_days=args.days, calls_median=args.median_calls, seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        raw, hierarchy = generate(config)
        with open(out / "cdr.csv", "w", encoding="utf-8", newline="") as fh:
            write_cdr(raw, fh)
        with open(out / "hierarchy.csv", "w", encoding="utf-8", newline="") as fh:
            write_spatial_map(hierarchy, fh)
    except OSError as exc:
        raise UsageError(f"cannot write to {out}: {exc}") from None
    log.info("wrote %d records for %d users to %s", len(raw), raw.n_users, out)


def cmd_assess(args) -> None:
    if args.pareto and not args.utility:
        raise UsageError("--pareto requires --utility")
    from .generalize import generalize_dataset
    from .ingest import parse_utility_scores, write_report
    from .reident import ReidentConfig, assess
    from .stats import build_report

    try:
        config = ReidentConfig(
            trials_per_user=args.trials, unicity_trials=args.unicity_trials, p_values=tuple(args.p),
            seed=args.seed, censored_policy=args.censored_policy, trace_size_basis=args.basis,
            bootstrap_resamples=args.bootstrap,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    utilities = None
    if args.utility:
        with open(args.utility, "rb") as fh:
            utilities = parse_utility_scores(fh)
    raw, hierarchy = _load(args)
    profiles = _profiles(args, hierarchy, list(hierarchy.levels))
    metrics = []
    for profile in profiles:
        ds = generalize_dataset(raw, profile, hierarchy)
        metrics.append(assess(ds, config))
        log.info("%s: c=%s r=%s", profile.label, metrics[-1].c, metrics[-1].r)
    run_config = {
        **_input_config(args),
        "command": "assess",
        "spatial": [p.spatial_level for p in profiles[:: len(args.temporal)]],
        "temporal": list(args.temporal),
        "trials": args.trials,
        "unicity_trials": args.unicity_trials,
        "p": list(args.p),
        "censored_policy": args.censored_policy,
        "basis": args.basis,
        "bootstrap": args.bootstrap,
        "utility": args.utility,
        "pareto": args.pareto,
    }
    try:
        report = build_report(metrics, utilities, pareto=args.pareto, config=run_config)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write(write_report(report, args.format), args.out)


def cmd_unicity(args) -> None:
    from .generalize import generalize_dataset
    from .ingest import write_unicity
    from .reident import unicity_table

    if min(args.p) < 1:
        raise UsageError(f"--p values must be >= 1, got {args.p}")
    raw, hierarchy = _load(args)
    profiles = _profiles(args, hierarchy, [hierarchy.levels[0]])
    results = []
    for profile in profiles:
        ds = generalize_dataset(raw, profile, hierarchy)
        results.append((ds.profile, unicity_table(ds, args.p, args.trials, args.seed)))
    run_config = {
        **_input_config(args),
        "command": "unicity",
        "p": sorted(args.p),
        "trials": args.trials,
    }
    _write(write_unicity(results, run_config, args.format), args.out)


COMMANDS = {"generate": cmd_generate, "assess": cmd_assess, "unicity": cmd_unicity}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    _set_threads(args.threads)

    from .model import DataError

    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
