"""Command-line pipeline: gen, bin, accumulate, detect, eval, bench, cost.

Each subcommand's output is the documented input of the next stage:

    facet gen        scenario -> events (EVT1/CSV) + ground-truth labels CSV
    facet bin        events   -> per-bin FCV1 files + index.csv (causal)
    facet accumulate events   -> per-bin FCV1 files + index.csv (any method)
    facet detect     events or FCV1 dir -> predicted labels CSV
    facet eval       predicted + ground-truth labels -> key=value report
    facet bench      events   -> EPT rows for all three accumulation methods
    facet cost       layer graph file -> params/MACs/GFLOPs report

All randomness flows from --seed; re-running a pipeline with the same seed
reproduces every data file byte for byte (bench output contains wall-clock
times and is exempt). FACET_THREADS caps worker parallelism.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .accumulate import (
    AccumulationConfig,
    accumulate_bin,
    compare_ept,
    load_fcv1,
    save_fcv1,
)
from .decode import DetectionFailed, detect_classical, evaluate_centers
from .ellipse import load_labels, save_labels
from .events import BinningConfig, load_events, make_bins, save_events
from .modelcost import network_cost, parse_graph
from .synth import generate, parse_scenario

INDEX_NAME = "index.csv"


def worker_count() -> int:
    env = os.environ.get("FACET_THREADS")
    if env is not None:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="facet", description="event-based eye tracking pipeline tools"
    )
    sub = parser.add_subparsers(dest="command")

    def add_binning(p):
        group = p.add_mutually_exclusive_group()
        group.add_argument("--count", type=int, help="events per bin (default 5000)")
        group.add_argument("--window", type=int, help="bin window in microseconds")

    def add_accumulation(p):
        p.add_argument(
            "--method", choices=["volume", "causal", "fast-causal"],
            default="fast-causal",
        )
        p.add_argument("--limit", type=float, default=25.0)
        p.add_argument("--overflow", choices=["skip", "clip"], default="skip")
        p.add_argument("--normalize", action="store_true")

    p = sub.add_parser("gen", help="generate synthetic events + labels")
    p.add_argument("--input", help="scenario key=value file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scenario key")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--output", required=True, help="events output path")
    p.add_argument("--format", choices=["binary", "csv"], default="binary")

    p = sub.add_parser("bin", help="bin events and write causal FCV1 files")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="output directory")
    add_binning(p)

    p = sub.add_parser("accumulate", help="bin + accumulate events into FCV1 files")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="output directory")
    add_binning(p)
    add_accumulation(p)

    p = sub.add_parser("detect", help="detect pupil ellipses per bin")
    p.add_argument("--input", required=True, help="events file or FCV1 directory")
    p.add_argument("--output", required=True, help="predicted labels CSV")
    add_binning(p)
    add_accumulation(p)
    p.add_argument("--quantile", type=float, default=0.8)
    p.add_argument("--min-points", type=int, default=10)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--input", required=True, help="predicted labels CSV")
    p.add_argument("--labels", required=True, help="ground-truth labels CSV")
    p.add_argument("--output", required=True, help="report file (key=value)")

    p = sub.add_parser("bench", help="measure EPT for all accumulation methods")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    add_binning(p)
    p.add_argument("--limit", type=float, default=25.0)
    p.add_argument("--overflow", choices=["skip", "clip"], default="skip")
    p.add_argument("--reps", type=int, default=3)

    p = sub.add_parser("cost", help="estimate params/MACs for a layer graph")
    p.add_argument("--input", required=True, help="layer graph file")
    p.add_argument("--output", required=True)

    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        parser.exit(2, "facet: a command is required\n")
    return args


def _binning(args) -> BinningConfig:
    if getattr(args, "window", None) is not None:
        return BinningConfig("time", args.window)
    count = getattr(args, "count", None)
    return BinningConfig("count", count if count is not None else 5000)


def _accumulation(args) -> AccumulationConfig:
    return AccumulationConfig(
        method=args.method.replace("-", "_"),
        limit=args.limit,
        overflow_mode=args.overflow,
        normalize=args.normalize,
    )


def _write_representations(bins, config, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        reps = list(pool.map(lambda b: accumulate_bin(b, config), bins))
    with open(outdir / INDEX_NAME, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin", "t_start", "t_end", "n_events", "file"])
        for i, (b, rep) in enumerate(zip(bins, reps)):
            name = f"rep_{i:05d}.fcv1"
            save_fcv1(rep, outdir / name)
            writer.writerow([i, b.t_start, b.t_end, len(b), name])


def _cmd_gen(args) -> int:
    text = Path(args.input).read_text() if args.input else ""
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    scenario = parse_scenario(text, overrides)
    stream, labels = generate(scenario)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_events(stream, out, args.format)
    save_labels(labels, labels_path(out))
    print(f"gen: {len(stream)} events, {len(labels)} labels -> {out}")
    return 0


def labels_path(events_path: Path) -> Path:
    """Ground-truth labels live next to the events file: <stem>.labels.csv."""
    return events_path.parent / (events_path.stem + ".labels.csv")


def _cmd_accumulate(args, config: AccumulationConfig) -> int:
    stream = load_events(args.input)
    bins = make_bins(stream, _binning(args))
    _write_representations(bins, config, Path(args.output))
    print(f"{args.command}: {len(bins)} representations -> {args.output}")
    return 0


def _load_indexed_representations(indir: Path):
    index_path = indir / INDEX_NAME
    if not index_path.exists():
        raise FileNotFoundError(f"no {INDEX_NAME} in {indir}")
    entries = []
    with open(index_path, newline="") as fh:
        for row in csv.DictReader(fh):
            entries.append((int(row["t_end"]), load_fcv1(indir / row["file"])))
    return entries


def _cmd_detect(args) -> int:
    source = Path(args.input)
    if source.is_dir():
        pairs = _load_indexed_representations(source)
    else:
        stream = load_events(source)
        bins = make_bins(stream, _binning(args))
        config = _accumulation(args)
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            reps = list(pool.map(lambda b: accumulate_bin(b, config), bins))
        pairs = [(b.t_end, rep) for b, rep in zip(bins, reps)]
    rows = []
    skipped = 0
    for t_end, rep in pairs:
        try:
            rows.append((t_end, detect_classical(rep, args.quantile, args.min_points)))
        except DetectionFailed as exc:
            skipped += 1
            print(f"detect: skipping bin at t={t_end}: {exc}", file=sys.stderr)
    save_labels(rows, args.output)
    print(f"detect: {len(rows)} detections ({skipped} skipped) -> {args.output}")
    return 0


def _cmd_eval(args) -> int:
    pred = load_labels(args.input)
    gt = load_labels(args.labels)
    if len(pred) != len(gt):
        raise ValueError(
            f"prediction/label count mismatch: {len(pred)} vs {len(gt)}"
        )
    report = evaluate_centers(
        [(e.x, e.y) for _, e in pred], [(e.x, e.y) for _, e in gt]
    )
    Path(args.output).write_text(report.to_kv())
    print(report.to_text())
    return 0


def _cmd_bench(args) -> int:
    stream = load_events(args.input)
    binning = _binning(args)
    configs = {
        method: AccumulationConfig(
            method=method, limit=args.limit, overflow_mode=args.overflow
        )
        for method in ("volume", "causal", "fast_causal")
    }
    reports = compare_ept(stream, binning, configs, args.reps)
    lines = [f"method={method} {report.to_text()}" for method, report in reports.items()]
    for line in lines:
        print(line)
    Path(args.output).write_text("\n".join(lines) + "\n")
    return 0


def _cmd_cost(args) -> int:
    graph = parse_graph(Path(args.input).read_text())
    report = network_cost(graph)
    Path(args.output).write_text(report.to_text() + "\n")
    print(report.to_text())
    return 0


def run(args: argparse.Namespace) -> int:
    if args.command == "gen":
        return _cmd_gen(args)
    if args.command == "bin":
        # neutral materialisation: plain causal accumulation
        return _cmd_accumulate(args, AccumulationConfig(method="causal"))
    if args.command == "accumulate":
        return _cmd_accumulate(args, _accumulation(args))
    if args.command == "detect":
        return _cmd_detect(args)
    if args.command == "eval":
        return _cmd_eval(args)
    if args.command == "bench":
        return _cmd_bench(args)
    if args.command == "cost":
        return _cmd_cost(args)
    raise ValueError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        return run(args)
    except (ValueError, OSError, DetectionFailed) as exc:
        print(f"facet {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
