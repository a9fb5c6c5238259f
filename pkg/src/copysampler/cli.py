"""Command-line front end.

Subcommands: sample, copy, evaluate, compare, profile, plot, run.  Every
subcommand accepts --seed.  Exit codes: 0 on success, 1 if any sweep cell
failed, 2 on configuration or usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import metrics
from .copies import ARCHITECTURES, CopyModel, TrainConfig, train
from .core import CopySamplerError, RandomSource, SyntheticDataset
from .harness import (
    METHODS,
    ConfigError,
    ExperimentConfig,
    generate_dataset,
    load_config,
    run_experiment,
    timing_profile,
)
from .oracles import AnalyticOracle, ExternalOracle
from .svgplot import plot_2d

EXIT_OK = 0
EXIT_CELL_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def _add_seed(parser):
    parser.add_argument("--seed", type=int, default=0, help="random seed (u64)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="copysampler",
        description="Sample a black-box hard-label classifier, train copies, "
        "and score their fidelity.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="generate one synthetic dataset")
    p.add_argument("--config", required=True, help="experiment config (for the oracle)")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--plot", help="optional SVG scatter path (d=2 only)")
    _add_seed(p)

    p = sub.add_parser("copy", help="train a copy model on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", required=True, choices=ARCHITECTURES)
    p.add_argument("--out", required=True, help="model output path (.npz)")
    _add_seed(p)

    p = sub.add_parser("evaluate", help="score a saved copy against the oracle")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--reference-size", type=int, default=10000)
    p.add_argument("--out", help="append a report row to this CSV")
    _add_seed(p)

    p = sub.add_parser("compare", help="victory/tie/loss matrix from a report CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tie-margin", type=float, default=0.01)
    _add_seed(p)

    p = sub.add_parser("profile", help="time one sampler at several budgets")
    p.add_argument("--config", required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--checkpoints", required=True,
                   help="space-separated ascending sample counts")
    p.add_argument("--out", help="timing CSV (defaults to stdout)")
    _add_seed(p)

    p = sub.add_parser("plot", help="render a dataset CSV as an SVG scatter")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="overlay the true boundary of this oracle")
    _add_seed(p)

    p = sub.add_parser("run", help="run (or resume) a full experiment sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, help="override configured worker count")
    p.add_argument("--method", choices=METHODS, help="restrict to one method")
    p.add_argument("--arch", choices=ARCHITECTURES, help="restrict to one architecture")
    p.add_argument("--n", type=int, help="restrict to one budget")
    _add_seed(p)

    return parser


def _load(config_path, seed=None, workers=None) -> ExperimentConfig:
    cfg = load_config(config_path)
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if workers is not None:
        updates["workers"] = workers
    if updates:
        from dataclasses import replace

        cfg = replace(cfg, **updates)
    return cfg


def _close(oracle):
    if isinstance(oracle, ExternalOracle):
        oracle.close()


def cmd_sample(args) -> int:
    cfg = _load(args.config, args.seed)
    oracle = cfg.oracle.build()
    try:
        ds = generate_dataset(cfg, args.method, args.n, oracle,
                              RandomSource(args.seed))
    finally:
        _close(oracle)
    ds.to_csv(args.out)
    print(f"wrote {len(ds)} samples to {args.out} ({ds.query_count} oracle queries)")
    if args.plot:
        overlay = oracle if isinstance(oracle, AnalyticOracle) else None
        plot_2d(ds, overlay, args.plot)
        print(f"wrote {args.plot}")
    return EXIT_OK


def cmd_copy(args) -> int:
    ds = SyntheticDataset.from_csv(args.data)
    model = train(args.arch, ds, TrainConfig(seed=args.seed))
    path = model.save(args.out)
    err = model.train_meta.get("training_fidelity_error")
    print(f"trained {args.arch} on {len(ds)} samples "
          f"(training fidelity error {err:.4f}); saved to {path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load(args.config, args.seed)
    model = CopyModel.load(args.model)
    oracle = cfg.oracle.build()
    try:
        ref = metrics.build_reference_set(
            oracle, args.reference_size, cfg.reference_balanced,
            RandomSource.derive(args.seed, "reference"),
        )
    finally:
        _close(oracle)
    r_f = metrics.empirical_fidelity_error(model, ref.X, ref.y)
    r_fb = metrics.balanced_empirical_fidelity_error(model, ref)
    print(f"R_F={r_f:.6f} R_Fb={r_fb:.6f} on {len(ref)} reference points")
    if args.out:
        record = metrics.RunRecord(
            oracle=cfg.oracle.oracle_id, method="external", arch=model.architecture,
            n=0, seed=args.seed, r_f=r_f, r_fb=r_fb, wall_time_s=0.0,
        )
        out = Path(args.out)
        existing = metrics.read_report_csv(out) if out.exists() else []
        metrics.write_report_csv(existing + [record], out)
        print(f"appended to {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    records = metrics.read_report_csv(args.report)
    reports = metrics.summarize_runs(records)
    by_method: dict[str, list] = {}
    for rep in reports:
        by_method.setdefault(rep.method, []).append(rep)
    matrix = metrics.compare_methods(by_method, args.tie_margin)
    metrics.write_comparison_csv(matrix, args.out)
    for (a, b), (wins, ties, losses) in sorted(matrix.items()):
        print(f"{a} vs {b}: {wins}/{ties}/{losses}")
    return EXIT_OK


def cmd_profile(args) -> int:
    cfg = _load(args.config, args.seed)
    checkpoints = [int(v) for v in args.checkpoints.split()]
    oracle = cfg.oracle.build()
    try:
        profile = timing_profile(cfg, args.method, checkpoints, oracle,
                                 RandomSource(args.seed))
    finally:
        _close(oracle)
    lines = ["method,sample_count,elapsed_s"]
    for count, elapsed in profile.checkpoints:
        lines.append(f"{profile.method},{count},{elapsed:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plot(args) -> int:
    ds = SyntheticDataset.from_csv(args.data)
    overlay = None
    if args.config:
        cfg = _load(args.config, args.seed)
        oracle = cfg.oracle.build()
        if isinstance(oracle, AnalyticOracle):
            overlay = oracle
    plot_2d(ds, overlay, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args.config, args.seed, args.workers)
    summary = run_experiment(
        cfg,
        args.out,
        only_methods=[args.method] if args.method else None,
        only_archs=[args.arch] if args.arch else None,
        only_ns=[args.n] if args.n else None,
    )
    print(
        f"datasets: {summary.datasets_computed} computed, "
        f"{summary.datasets_skipped} reused; cells: {summary.cells_computed} "
        f"computed, {summary.cells_skipped} reused; "
        f"failures: {len(summary.failures)}"
    )
    for label, message in summary.failures:
        print(f"  FAILED {label}: {message}")
    return summary.exit_code


_COMMANDS = {
    "sample": cmd_sample,
    "copy": cmd_copy,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "profile": cmd_profile,
    "plot": cmd_plot,
    "run": cmd_run,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except CopySamplerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CELL_FAILURE


if __name__ == "__main__":
    sys.exit(main())
