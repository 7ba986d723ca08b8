"""Command-line entry point: ``cmawm {run,sweep-alpha,mo-run,trace}``.

Exit codes: 0 on success, 1 for configuration or usage errors, 2 when
every trial ended in a numerical abort.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from typing import List, Optional

from . import harness
from .harness import ConfigError, ExperimentConfig

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ABORTED = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cmawm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "run": "run independent trials and write trials.csv and summary.csv",
        "sweep-alpha": "success rate over the alpha = N^-m popsize^-n grid",
        "mo-run": "multi-objective runs with hypervolume and p_med traces",
        "trace": "per-iteration mean and coordinate std of single trials",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="INI file with an [experiment] section")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--trials", type=int, help="number of independent trials")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker processes for trials")
    return parser


def _config(args) -> ExperimentConfig:
    overrides = dict(seed=args.seed, trials=args.trials, output=args.out, threads=args.threads)
    if args.config is None:
        return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    return harness.load_config(args.config, **overrides)


def _write_trials(out: str, records) -> None:
    harness.emit_csv(os.path.join(out, "trials.csv"), harness.TRIALS_HEADER,
                     [r.row() for r in records])


def cmd_run(config: ExperimentConfig) -> int:
    if config.is_multi_objective:
        raise ConfigError("use mo-run for multi-objective algorithms")
    records = harness.run_trials(config)
    summary = harness.aggregate(records)
    _write_trials(config.output, records)
    harness.emit_csv(os.path.join(config.output, "summary.csv"), harness.SUMMARY_HEADER,
                     [summary.row()])
    median = "-" if summary.median_evals is None else f"{summary.median_evals:g}"
    print(f"{summary.function} N={summary.n} {summary.algorithm}: "
          f"{summary.successes}/{summary.trials} successes, median evaluations {median}")
    return EXIT_ABORTED if harness.all_aborted(records) else EXIT_OK


def cmd_sweep(config: ExperimentConfig) -> int:
    cells = harness.alpha_sweep(config)
    rows, summaries, everything = [], [], []
    for m, n, summary, records in cells:
        rows.append((m, n, summary.alpha, summary.success_rate, summary.median_evals, summary.iqr))
        summaries.append(summary.row())
        everything.extend(records)
    harness.emit_csv(os.path.join(config.output, "sweep.csv"), harness.SWEEP_HEADER, rows)
    harness.emit_csv(os.path.join(config.output, "summary.csv"), harness.SUMMARY_HEADER, summaries)
    _write_trials(config.output, everything)
    print(f"{len(cells)} cells written to {os.path.join(config.output, 'sweep.csv')}")
    return EXIT_ABORTED if harness.all_aborted(everything) else EXIT_OK


def cmd_mo(config: ExperimentConfig) -> int:
    if not config.is_multi_objective:
        raise ConfigError("mo-run needs algorithm = mo-cma-es or mo-cma-es-margin")
    runs = harness.mo_run(config)
    harness.emit_csv(os.path.join(config.output, "mo_trace.csv"), harness.MO_TRACE_HEADER,
                     harness.median_trace(runs))
    for k, run in enumerate(runs):
        folder = os.path.join(config.output, f"trial_{k}")
        rows = zip(range(len(run.hypervolume)), run.hypervolume, run.p_med_min, run.p_med_median)
        harness.emit_csv(os.path.join(folder, "mo_trace.csv"), harness.MO_TRACE_HEADER, rows)
        header, final = harness.final_population_rows(run)
        harness.emit_csv(os.path.join(folder, "mo_final.csv"), header, final)
    if len(runs) == 1:
        header, final = harness.final_population_rows(runs[0])
        harness.emit_csv(os.path.join(config.output, "mo_final.csv"), header, final)
    finals = sorted(run.hypervolume[-1] for run in runs)
    print(f"{config.benchmark} N={config.n} {config.algorithm}: median final hypervolume "
          f"{finals[len(finals) // 2]:.4f} over {len(runs)} run(s)")
    return EXIT_ABORTED if all(run.aborted for run in runs) else EXIT_OK


def cmd_trace(config: ExperimentConfig) -> int:
    if config.is_multi_objective:
        raise ConfigError("trace is for single-objective algorithms; mo-run writes its own traces")
    records = []
    for k in range(config.trials):
        rec = harness.run_trial(config, harness.trial_seed(config.seed, k), record_history=True)
        header, rows = harness.trace_rows(rec)
        harness.emit_csv(os.path.join(config.output, f"trace_{k}.csv"), header, rows)
        records.append(rec)
    _write_trials(config.output, records)
    return EXIT_ABORTED if harness.all_aborted(records) else EXIT_OK


COMMANDS = {"run": cmd_run, "sweep-alpha": cmd_sweep, "mo-run": cmd_mo, "trace": cmd_trace}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config(args)
        if args.command == "trace" and args.trials is None and args.config is None:
            config = replace(config, trials=1)
        return COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"cmawm: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
