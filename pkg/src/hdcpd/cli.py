"""Command-line front end.

Subcommands
-----------
``run``
    Analyse one CSV file or generated scenario; writes a JSON report and,
    on request, plot-ready trace CSVs.  ``run`` is implied when the first
    argument is an option.
``experiment``
    Replicate scenarios and tabulate ``|estimate - truth|`` frequencies.
``generate``
    Write a scenario to CSV with a JSON sidecar holding the spec and truth.

Exit status is 0 on success (whether or not a change is found), 2 on a
usage error and 1 on any other error.  CSV input has one row per time point
and one column per coordinate.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import ChangePointReport, DataSequence, Labeling, validate_sequence
from .datagen import SCENARIOS, ScenarioSpec, build_scenario
from .exceptions import HdcpdError, ParseError, RaggedRows
from .experiment import METHODS, analyze, run_experiment
from .multicp import SegmentationConfig, pmin_scan
from .nulldist import NullCache, default_cache
from .singlecp import minimize_statistic

__all__ = ["main", "ingest_csv", "standardize", "build_parser", "write_trace", "write_grid"]

DISSIMILARITIES = ("euclidean", "delta0", "delta1", "delta1-block")
SUBCOMMANDS = ("run", "experiment", "generate")


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def ingest_csv(path) -> DataSequence:
    """Read a numeric CSV; a first row with any non-numeric field is a header.

    Raises
    ------
    ParseError
        With the 1-based line and column of the first bad field.
    RaggedRows
        If rows have different numbers of fields.
    NonFinite
        On NaN or infinite values.
    """
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        for line_no, fields in enumerate(csv.reader(fh), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            if line_no == 1 and not all(_is_number(f) for f in fields):
                continue
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise RaggedRows(f"line {line_no} has {len(fields)} fields, expected {width}")
            row = []
            for col, token in enumerate(fields, start=1):
                try:
                    row.append(float(token))
                except ValueError:
                    raise ParseError(line_no, col, token) from None
            rows.append(row)
    return validate_sequence(np.array(rows, dtype=float).reshape(len(rows), width or 0))


def standardize(data: DataSequence) -> DataSequence:
    """Centre each coordinate at its median and divide by its MAD (if nonzero)."""
    X = data.values
    med = np.median(X, axis=0)
    mad = np.median(np.abs(X - med), axis=0)
    return validate_sequence((X - med) / np.where(mad > 0, mad, 1.0))


def _positive(kind):
    def parse(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _alpha(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return value


def _analysis_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("single", "multi"), default="single")
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--impurity", choices=("gini", "entropy", "misclassification"), default=None)
    p.add_argument("--min-gap", type=_positive(int), default=5)
    p.add_argument("--permutations", type=_positive(int), default=None,
                   help="Monte-Carlo size for null distributions")
    p.add_argument("--restarts", type=int, default=20, help="random starts for 2-means")
    p.add_argument("--outlier-filter", action="store_true", help="drop isolated points first (single mode)")
    p.add_argument("--block-size", type=_positive(int), default=2)
    p.add_argument("--cache-dir", default=None, help="directory for cached null distributions")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdcpd", description="Clustering-based change-point detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="analyse one data set")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="CSV file, rows are time points")
    src.add_argument("--scenario", choices=SCENARIOS)
    run.add_argument("--n", type=_positive(int), default=None, help="scenario segment length")
    run.add_argument("--d", type=_positive(int), default=None, help="scenario dimension")
    run.add_argument("--tau", type=_positive(int), default=None, help="scenario change-point")
    run.add_argument("--data-seed", type=int, default=None, help="scenario seed (default: --seed)")
    run.add_argument("--dissimilarity", choices=DISSIMILARITIES, default="delta0")
    run.add_argument("--statistic", choices=("gini", "rand"), default="gini")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--standardize", action="store_true", help="median/MAD scaling per coordinate")
    run.add_argument("--report", default="-", help="report JSON path ('-' for stdout)")
    run.add_argument("--trace", default=None, help="per-split statistic CSV (single mode)")
    run.add_argument("--grid", default=None, help="window p-value grid CSV (multi mode)")
    _analysis_options(run)

    exp = sub.add_parser("experiment", help="replicated simulation study")
    exp.add_argument("--scenarios", nargs="+", choices=SCENARIOS, required=True)
    exp.add_argument("--methods", nargs="+", choices=tuple(METHODS), default=["GI0"])
    exp.add_argument("--replications", type=_positive(int), default=100)
    exp.add_argument("--seed", type=int, default=0)
    exp.add_argument("--workers", type=_positive(int), default=1)
    exp.add_argument("--d", type=_positive(int), default=None)
    exp.add_argument("--tau", type=_positive(int), default=None)
    exp.add_argument("--table", default="-", help="frequency table CSV ('-' for stdout)")
    exp.add_argument("--log", default=None, help="per-replication CSV")
    _analysis_options(exp)

    gen = sub.add_parser("generate", help="write a scenario to CSV")
    gen.add_argument("--scenario", choices=SCENARIOS, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--n", type=_positive(int), default=None)
    gen.add_argument("--d", type=_positive(int), default=None)
    gen.add_argument("--tau", type=_positive(int), default=None)
    gen.add_argument("--out", required=True, help="CSV path; the sidecar is written to <out>.json")
    return parser


def write_trace(path, report: ChangePointReport, statistic: str) -> None:
    """``t,value,is_candidate`` rows for the analysed sequence."""
    labels = report.metadata.get("labels")
    kept = report.metadata.get("outlier_filter", {}).get("kept")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value", "is_candidate"])
        if not labels:
            return
        for t, value, cand in minimize_statistic(Labeling.from_string(labels), statistic).rows():
            w.writerow([kept[t - 1] if kept else t, repr(value), int(cand)])


def write_grid(path, report: ChangePointReport) -> None:
    """``t,s,impurity,pvalue`` rows for the window grid of the whole sequence."""
    meta = report.metadata
    labels = meta.get("labels", {}).get(f"1:{meta['n']}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "s", "impurity", "pvalue"])
        if not labels:
            return
        cfg = SegmentationConfig(min_gap=meta["min_gap"], kind=meta["impurity"])
        for t, s, imp, p in pmin_scan(Labeling.from_string(labels), cfg).rows():
            w.writerow([t, s, repr(imp), repr(p)])


def _emit(text: str, path: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _cache(args):
    return NullCache(args.cache_dir) if args.cache_dir else default_cache()


def _options(args) -> dict:
    return dict(mode=args.mode, alpha=args.alpha, impurity=args.impurity, min_gap=args.min_gap,
                permutations=args.permutations, restarts=args.restarts,
                outlier_filter=args.outlier_filter, block_size=args.block_size)


def _cmd_run(args) -> int:
    if args.input:
        data = ingest_csv(args.input)
        source = {"input": str(args.input)}
    else:
        spec = ScenarioSpec(args.scenario, n=args.n, d=args.d, tau=args.tau,
                            seed=args.seed if args.data_seed is None else args.data_seed)
        sc = build_scenario(spec)
        data = sc.data
        source = {"scenario": sc.to_dict()}
    if args.standardize:
        data = standardize(data)
    report = analyze(data, args.dissimilarity, args.statistic, seed=args.seed, cache=_cache(args),
                     **_options(args))
    report.metadata.update(source)
    report.metadata["standardize"] = args.standardize
    report.metadata["layout"] = "rows are time points, columns are coordinates"
    report.metadata["cache_dir"] = args.cache_dir
    _emit(json.dumps(report.to_dict(), indent=2) + "\n", args.report)
    if args.trace and args.mode == "single":
        stat = args.statistic if args.statistic == "rand" else (args.impurity or "gini")
        write_trace(args.trace, report, stat)
    if args.grid and args.mode == "multi":
        write_grid(args.grid, report)
    return 0


def _cmd_experiment(args) -> int:
    overrides = {k: v for k, v in (("d", args.d), ("tau", args.tau)) if v is not None}
    result = run_experiment(args.scenarios, args.methods, args.replications, args.seed, args.workers,
                            scenario_overrides={s: overrides for s in args.scenarios},
                            cache=None if args.workers > 1 else _cache(args), **_options(args))
    if args.table == "-":
        import io

        buf = io.StringIO()
        keys = list(result.table[0])
        w = csv.DictWriter(buf, fieldnames=keys)
        w.writeheader()
        w.writerows(result.table)
        sys.stdout.write(buf.getvalue())
        result.write(None, args.log)
    else:
        result.write(args.table, args.log)
    return 0


def _cmd_generate(args) -> int:
    sc = build_scenario(ScenarioSpec(args.scenario, n=args.n, d=args.d, seed=args.seed, tau=args.tau))
    np.savetxt(args.out, sc.data.values, delimiter=",", fmt="%.17g")
    Path(str(args.out) + ".json").write_text(json.dumps(sc.to_dict(), indent=2) + "\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] not in SUBCOMMANDS and argv[0] not in ("-h", "--help", "--version"):
        argv.insert(0, "run")
    args = build_parser().parse_args(argv)
    try:
        return {"run": _cmd_run, "experiment": _cmd_experiment, "generate": _cmd_generate}[args.command](args)
    except (HdcpdError, OSError) as exc:
        print(f"hdcpd: error: {exc}", file=sys.stderr)
        return 1
