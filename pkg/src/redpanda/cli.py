"""Command line interface: generate, train, score, evaluate, run, report."""
import argparse
import logging
import sys
from pathlib import Path

from . import runner
from .synthdata import BenchmarkError
from .training import MODES


def _stage_args(p, with_mode=True):
    p.add_argument("--config", required=True, help="experiment INI file")
    if with_mode:
        p.add_argument("--mode", required=True, choices=MODES)
        p.add_argument("--seed", type=int, required=True)


def build_parser():
    ap = argparse.ArgumentParser(prog="redpanda", description="Attribute-aware anomaly detection experiments.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = ap.add_subparsers(dest="command", required=True)
    _stage_args(sub.add_parser("generate", help="materialise the benchmark"), with_mode=False)
    _stage_args(sub.add_parser("train", help="train one (mode, seed) run"))
    _stage_args(sub.add_parser("score", help="kNN-score the test split"))
    _stage_args(sub.add_parser("evaluate", help="compute AD / PA / RA from scores"))
    run = sub.add_parser("run", help="every stage for every configured mode and seed")
    _stage_args(run, with_mode=False)
    run.add_argument("--modes", help="comma separated subset of modes")
    rep = sub.add_parser("report", help="mean ± std table over run directories")
    rep.add_argument("dirs", nargs="+")
    rep.add_argument("--csv", help="also write the table as CSV here")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            table, csv_text = runner.render_summary(runner.summarize(runner.collect_reports(args.dirs)))
            print(table, end="")
            if args.csv:
                Path(args.csv).write_text(csv_text)
            return 0
        cfg = runner.load_config(args.config)
        if args.command == "generate":
            counts = runner.generate(cfg)
            print(f"dataset: {cfg.dataset_dir()}")
            for role, n in counts.items():
                print(f"  {role:<14}{n:>7}")
        elif args.command == "train":
            print(runner.train_stage(cfg, args.mode, args.seed))
        elif args.command == "score":
            print(runner.score_stage(cfg, args.mode, args.seed))
        elif args.command == "evaluate":
            print(runner.evaluate_stage(cfg, args.mode, args.seed).table(), end="")
        elif args.command == "run":
            modes = tuple(m.strip() for m in args.modes.split(",")) if args.modes else None
            reports = runner.run_all(cfg, modes)
            table, _ = runner.render_summary(runner.summarize(reports))
            print(table, end="")
    except (runner.ConfigError, runner.StageError, BenchmarkError, ValueError, OSError) as exc:
        print(f"redpanda: error: {exc}", file=sys.stderr)
        return 2
    return 0
