"""Command-line front end: returns | census | predict.

Exit codes: 0 on success, 1 when an experiment fails, 2 for usage or ingest
errors. With several instruments, predict keeps going past a failing one and
the final exit code reflects the most severe failure seen.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .coding import dump_coding_sidecar, dump_symbols_csv, encode_series, make_scheme
from .errors import IngestError, ProcrecError, SequenceTooShort, SeriesTooShort
from .ingest import (
    ColumnSchema,
    PriceSeries,
    ReturnSeries,
    compute_log_returns,
    compute_stats,
    load_price_csv,
    phase_space_pairs,
    split_halves,
    write_phase_space_csv,
)
from .markov import (
    build_conditional_tables,
    census_blocks,
    dump_tables_json,
    write_census_csv,
)
from .predict import (
    BASELINES,
    METRICS,
    MODES,
    SCHEMES,
    ExperimentConfig,
    plot_rows,
    report_to_json_dict,
    run_experiment,
)

EXIT_OK = 0
EXIT_EXPERIMENT = 1
EXIT_USAGE = 2

SEED_ENV_VAR = "PROCREC_SEED"


def _parse_input(value: str) -> tuple[str, Path]:
    """Accept PATH or LABEL=PATH; the label defaults to the file stem."""
    if "=" in value:
        label, _, raw = value.partition("=")
        label = label.strip()
        path = Path(raw.strip())
        if not label:
            raise argparse.ArgumentTypeError(f"empty label in {value!r}")
    else:
        path = Path(value)
        label = path.stem
    return label, path


def _uint64(value: str) -> int:
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {value!r}")
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return seed


def _default_seed() -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return _uint64(env)
    return 0


def _add_io_args(p: argparse.ArgumentParser, repeatable: bool) -> None:
    p.add_argument(
        "--input",
        type=_parse_input,
        required=True,
        action="append" if repeatable else "store",
        metavar="[LABEL=]PATH",
        help="price CSV" + (", repeatable, one per instrument" if repeatable else ""),
    )
    p.add_argument("--out", type=Path, default=Path("."), metavar="DIR", help="output directory")
    p.add_argument("--timestamp-col", default="timestamp", help="timestamp column name")
    p.add_argument("--price-col", default="price", help="price column name")
    p.add_argument("--lenient", action="store_true", help="skip bad CSV rows instead of aborting")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="procrec",
        description="Symbolize return series and forecast them with variable-order Markov chains.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ret = sub.add_parser("returns", help="compute log returns, stats and phase-space pairs")
    _add_io_args(p_ret, repeatable=False)

    p_cen = sub.add_parser("census", help="count distinct symbol blocks per order")
    _add_io_args(p_cen, repeatable=False)
    p_cen.add_argument("--scheme", choices=SCHEMES, default="five")
    p_cen.add_argument("--kmax", type=int, default=8)
    p_cen.add_argument("--dump-symbols", action="store_true", help="also write the coded sequence and coding sidecar")

    p_pred = sub.add_parser("predict", help="run the split-halves forecasting experiment")
    _add_io_args(p_pred, repeatable=True)
    p_pred.add_argument("--scheme", choices=SCHEMES, default="five")
    p_pred.add_argument("--kmin", type=int, default=1)
    p_pred.add_argument("--kmax", type=int, default=8)
    p_pred.add_argument("--runs", type=int, default=50)
    p_pred.add_argument("--seed", type=_uint64, default=None, help=f"master seed (default: ${SEED_ENV_VAR} or 0)")
    p_pred.add_argument("--metric", choices=METRICS, default="abs")
    p_pred.add_argument("--baseline", choices=BASELINES, default="uniform")
    p_pred.add_argument("--mode", choices=MODES, default="sample")
    p_pred.add_argument("--stats-on", choices=("full", "train"), default="full")
    p_pred.add_argument("--jobs", type=int, default=1, help="instruments processed concurrently")
    p_pred.add_argument("--dump-symbols", action="store_true", help="also write the coded sequence and coding sidecar")
    p_pred.add_argument("--dump-tables", action="store_true", help="also write the conditional tables as JSON")
    return parser


def _load(args: argparse.Namespace, label: str, path: Path) -> PriceSeries:
    schema = ColumnSchema(timestamp=args.timestamp_col, price=args.price_col)
    return load_price_csv(path, schema, instrument=label, lenient=args.lenient)


def _write_returns_csv(prices: PriceSeries, returns: ReturnSeries, path: Path) -> None:
    lines = ["timestamp,log_return"]
    for point, value in zip(prices.points[1:], returns.values):
        lines.append(f"{point.timestamp.isoformat()},{value!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_returns(args: argparse.Namespace) -> int:
    label, path = args.input
    prices = _load(args, label, path)
    returns = compute_log_returns(prices)
    stats = compute_stats(returns)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    _write_returns_csv(prices, returns, out / f"{label}_returns.csv")
    (out / f"{label}_stats.json").write_text(
        json.dumps(
            {
                "instrument": label,
                "count": stats.count,
                "mean": stats.mean,
                "std": stats.std,
                "first_timestamp": returns.span[0].isoformat(),
                "last_timestamp": returns.span[1].isoformat(),
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    write_phase_space_csv(phase_space_pairs(returns), out / f"{label}_phase_space.csv")
    print(f"{label}: {len(prices)} prices -> {len(returns)} returns (mean {stats.mean:.6g}, std {stats.std:.6g})")
    return EXIT_OK


def _coded_sequence(args: argparse.Namespace, label: str, path: Path):
    prices = _load(args, label, path)
    returns = compute_log_returns(prices)
    stats = compute_stats(returns)
    scheme = make_scheme(args.scheme, stats)
    return encode_series(returns, stats, scheme), scheme, stats


def cmd_census(args: argparse.Namespace) -> int:
    label, path = args.input
    seq, scheme, stats = _coded_sequence(args, label, path)
    census = census_blocks(seq, args.kmax)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_census_csv(census, out / f"{label}_census.csv")
    if args.dump_symbols:
        dump_symbols_csv(seq, out / f"{label}_symbols.csv")
        dump_coding_sidecar(scheme, stats, out / f"{label}_coding.json")
    for c in census:
        print(f"k={c.order} distinct={c.distinct_count} max={c.max_possible} windows={c.total_windows}")
    return EXIT_OK


def _predict_one(config: ExperimentConfig, args: argparse.Namespace, label: str, path: Path):
    prices = _load(args, label, path)
    returns = compute_log_returns(prices)
    report = run_experiment(config, returns)
    out = args.out
    (out / f"{label}_report.json").write_text(
        json.dumps(report_to_json_dict(report), indent=2) + "\n", encoding="utf-8"
    )
    plot_lines = ["k,e_k,eRand_k"]
    plot_lines += [f"{k},{e!r},{er!r}" for k, e, er in plot_rows(report)]
    (out / f"{label}_plot.csv").write_text("\n".join(plot_lines) + "\n", encoding="utf-8")

    if args.dump_symbols or args.dump_tables:
        h1, _ = split_halves(returns)
        stats = compute_stats(returns if config.stats_on == "full" else h1)
        scheme = make_scheme(config.scheme, stats)
        seq = encode_series(returns, stats, scheme)
        if args.dump_symbols:
            dump_symbols_csv(seq, out / f"{label}_symbols.csv")
            dump_coding_sidecar(scheme, stats, out / f"{label}_coding.json")
        if args.dump_tables:
            train = dataclasses.replace(seq, symbols=seq.symbols[: len(h1)])
            dump_tables_json(
                build_conditional_tables(train, config.k_max), out / f"{label}_tables.json"
            )
    return report


def _print_report(report) -> None:
    print(f"instrument={report.instrument} scheme={report.scheme} runs={report.runs} "
          f"seed={report.master_seed} metric={report.metric}")
    print("  k    e_k               eRand_k")
    for i, k in enumerate(report.k_values):
        print(f"  {k:<4d} {report.e_mean[i]:.4f} +/- {report.e_std[i]:.4f}  "
              f"{report.rand_mean[i]:.4f} +/- {report.rand_std[i]:.4f}")


def cmd_predict(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    inputs = tuple(args.input)
    config = ExperimentConfig(
        inputs=inputs,
        scheme=args.scheme,
        k_min=args.kmin,
        k_max=args.kmax,
        runs=args.runs,
        master_seed=seed,
        metric=args.metric,
        baseline=args.baseline,
        mode=args.mode,
        stats_on=args.stats_on,
        out_dir=args.out,
    )
    try:
        config.validate_params()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args.out.mkdir(parents=True, exist_ok=True)

    def task(item):
        label, path = item
        try:
            return label, _predict_one(config, args, label, path), None
        except Exception as exc:  # noqa: BLE001 - per-instrument isolation
            return label, None, exc

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(task, inputs))
    else:
        results = [task(item) for item in inputs]

    status = EXIT_OK
    for label, report, exc in results:
        if exc is not None:
            print(f"error: {label}: {exc}", file=sys.stderr)
            if isinstance(exc, (IngestError, FileNotFoundError, SeriesTooShort, SequenceTooShort)):
                status = EXIT_USAGE
            elif status == EXIT_OK:
                status = EXIT_EXPERIMENT
        else:
            _print_report(report)
    return status


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "returns":
            return cmd_returns(args)
        if args.command == "census":
            return cmd_census(args)
        return cmd_predict(args)
    except (FileNotFoundError, IngestError, SeriesTooShort, SequenceTooShort) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProcrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
