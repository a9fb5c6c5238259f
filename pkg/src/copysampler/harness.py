"""Experiment runner: configuration, sweeps, timing, and persistence.

A run directory is self-describing and resumable: it contains the resolved
configuration, one CSV per generated dataset, one CSV row per evaluated
cell, and deterministic aggregate files assembled from those cells.  Cells
already on disk are never recomputed, and one failing cell never aborts the
sweep.
"""

from __future__ import annotations

import concurrent.futures
import configparser
import json
import logging
import shlex
import time
from dataclasses import dataclass, field, replace as dc_replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .copies import ARCHITECTURES, TrainConfig, train
from .core import (
    CopySamplerError,
    RandomSource,
    SyntheticDataset,
    fit_normalization,
    load_labeled_csv,
)
from .gp import AcquisitionParams, FastBayesParams, SEKernel, fast_bayesian_sampler
from .oracles import (
    AnalyticOracle,
    CheckerboardOracle,
    ConcentricCirclesOracle,
    ExternalOracle,
    HalfspaceOracle,
    Oracle,
    Spiral2DOracle,
    TableOracle,
)
from .samplers import (
    BoundaryParams,
    JacobianParams,
    boundary_sampler,
    jacobian_sampler,
    random_sampler,
)
from .svgplot import plot_2d

log = logging.getLogger(__name__)

METHODS = ("random", "boundary", "bayesian", "jacobian")


class ConfigError(CopySamplerError):
    """The experiment configuration is invalid or inconsistent."""


@dataclass(frozen=True)
class OracleSpec:
    """Declarative oracle description; `build()` yields a fresh instance."""

    kind: str
    options: dict = field(default_factory=dict)

    @property
    def oracle_id(self) -> str:
        return self.options.get("id", self.kind)

    def build(self) -> Oracle:
        opts = self.options
        if self.kind == "halfspace":
            return HalfspaceOracle(w=opts["w"], c=opts["c"])
        if self.kind == "circles":
            return ConcentricCirclesOracle(center=opts["center"], radii=opts["radii"])
        if self.kind == "checkerboard":
            return CheckerboardOracle(
                cells_per_dim=int(opts["cells"]), d=int(opts.get("d", 2))
            )
        if self.kind == "spiral":
            return Spiral2DOracle(
                turns=opts["turns"], center=opts.get("center", (0.5, 0.5))
            )
        if self.kind == "table":
            X, y = load_labeled_csv(opts["path"])
            if opts.get("normalize", True):
                X = fit_normalization(X).transform(X)
            return TableOracle(X, y)
        if self.kind == "external":
            return ExternalOracle.spawn(opts["command"])
        raise ConfigError(f"unknown oracle kind {self.kind!r}")


@dataclass
class ExperimentConfig:
    oracle: OracleSpec
    name: str = "experiment"
    seed: int = 0
    repetitions: int = 10
    bayesian_repetitions: int = 5
    workers: int = 1
    plots: bool = False
    methods: tuple[str, ...] = METHODS
    architectures: tuple[str, ...] = ("lr", "dt", "ann", "ann2")
    n_grid: tuple[int, ...] = (100, 1000, 10000)
    reference_size: int = 100000
    reference_balanced: bool = True
    tie_margin: float = 0.01
    boundary: BoundaryParams = field(default_factory=BoundaryParams)
    bayes: FastBayesParams = field(default_factory=FastBayesParams)
    acquisition: AcquisitionParams = field(default_factory=AcquisitionParams)
    jacobian: JacobianParams = field(default_factory=JacobianParams)
    kernel_length_scale: float | None = None
    kernel_variance: float | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if list(self.n_grid) != sorted(self.n_grid) or len(set(self.n_grid)) != len(self.n_grid):
            raise ConfigError("n_grid must be strictly ascending")
        if self.repetitions < 1 or self.bayesian_repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        for method in self.methods:
            if method not in METHODS:
                raise ConfigError(f"unknown sampling method {method!r}")
        for arch in self.architectures:
            if arch not in ARCHITECTURES:
                raise ConfigError(f"unknown architecture {arch!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def repetitions_for(self, method: str) -> int:
        return self.bayesian_repetitions if method == "bayesian" else self.repetitions

    def kernel_for(self, oracle: Oracle) -> SEKernel:
        default = SEKernel.for_problem(oracle.d, oracle.k)
        return SEKernel(
            length_scale=self.kernel_length_scale or default.length_scale,
            variance=self.kernel_variance or default.variance,
        )


# -- configuration file grammar ------------------------------------------------
#
# INI-style sections; list values are space-separated.  See README for the
# full grammar.  Unknown sections or keys are rejected so typos surface as
# config errors rather than silently ignored settings.

_KNOWN_SECTIONS = {
    "experiment", "oracle", "samplers", "samplers.boundary",
    "samplers.bayesian", "samplers.jacobian", "copies", "evaluation",
}


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split()]


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    unknown = set(parser.sections()) - _KNOWN_SECTIONS
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    if "oracle" not in parser:
        raise ConfigError("config needs an [oracle] section")
    try:
        return _config_from_parser(parser, path)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid configuration in {path}: {exc}") from exc


def _config_from_parser(parser, path: Path) -> ExperimentConfig:
    osec = parser["oracle"]
    kind = osec.get("kind", "").strip()
    options: dict = {}
    if kind == "halfspace":
        options = {"w": _floats(osec["w"]), "c": float(osec["c"])}
    elif kind == "circles":
        options = {"center": _floats(osec["center"]), "radii": _floats(osec["radii"])}
    elif kind == "checkerboard":
        options = {"cells": int(osec["cells"]), "d": int(osec.get("d", "2"))}
    elif kind == "spiral":
        options = {"turns": float(osec["turns"])}
        if "center" in osec:
            options["center"] = _floats(osec["center"])
    elif kind == "table":
        table_path = (path.parent / osec["path"]).resolve()
        if not table_path.exists():
            raise ConfigError(f"table oracle file does not exist: {table_path}")
        options = {"path": str(table_path),
                   "normalize": _bool(osec.get("normalize", "true"))}
    elif kind == "external":
        options = {"command": shlex.split(osec["command"])}
    else:
        raise ConfigError(f"unknown oracle kind {kind!r}")
    if "id" in osec:
        options["id"] = osec["id"].strip()
    spec = OracleSpec(kind=kind, options=options)

    exp = parser["experiment"] if "experiment" in parser else {}
    eva = parser["evaluation"] if "evaluation" in parser else {}
    cop = parser["copies"] if "copies" in parser else {}
    sam = parser["samplers"] if "samplers" in parser else {}

    defaults = ExperimentConfig(oracle=spec)

    def bparams() -> BoundaryParams:
        sec = parser["samplers.boundary"] if "samplers.boundary" in parser else {}
        kwargs = {}
        for key in ("epsilon", "step", "spawn_rate"):
            if key in sec:
                kwargs[key] = float(sec[key])
        for key in ("runs", "max_threads", "max_steps"):
            if key in sec:
                kwargs[key] = int(sec[key])
        return BoundaryParams(**kwargs)

    def gparams() -> tuple[FastBayesParams, AcquisitionParams, float | None, float | None]:
        sec = parser["samplers.bayesian"] if "samplers.bayesian" in parser else {}
        kwargs = {}
        if "cap" in sec:
            kwargs["cap"] = int(sec["cap"])
        if "slowness" in sec:
            kwargs["slowness"] = float(sec["slowness"])
        if "init_count" in sec:
            kwargs["init_count"] = int(sec["init_count"])
        if "local_iters" in sec:
            kwargs["local_iters"] = int(sec["local_iters"])
        acq = AcquisitionParams(tau=float(sec["tau"])) if "tau" in sec else AcquisitionParams()
        ls = float(sec["length_scale"]) if "length_scale" in sec else None
        var = float(sec["variance"]) if "variance" in sec else None
        return FastBayesParams(**kwargs), acq, ls, var

    def jparams() -> JacobianParams:
        sec = parser["samplers.jacobian"] if "samplers.jacobian" in parser else {}
        kwargs = {}
        if "refits" in sec:
            kwargs["refits"] = int(sec["refits"])
        if "seeds_per_refit" in sec:
            kwargs["seeds_per_refit"] = int(sec["seeds_per_refit"])
        if "step" in sec:
            kwargs["step"] = float(sec["step"])
        if "rounds" in sec:
            kwargs["rounds"] = int(sec["rounds"])
        return JacobianParams(**kwargs)

    def tparams() -> TrainConfig:
        kwargs = {}
        if "step_size" in cop:
            kwargs["step_size"] = float(cop["step_size"])
        if "epochs" in cop:
            kwargs["epochs"] = int(cop["epochs"])
        if "batch_size" in cop:
            kwargs["batch_size"] = int(cop["batch_size"])
        if "max_depth" in cop:
            kwargs["max_depth"] = int(cop["max_depth"])
        if "min_leaf" in cop:
            kwargs["min_leaf"] = int(cop["min_leaf"])
        return TrainConfig(**kwargs)

    bayes, acq, ls, var = gparams()
    try:
        return ExperimentConfig(
            oracle=spec,
            name=exp.get("name", defaults.name),
            seed=int(exp.get("seed", defaults.seed)),
            repetitions=int(exp.get("repetitions", defaults.repetitions)),
            bayesian_repetitions=int(
                exp.get("bayesian_repetitions", defaults.bayesian_repetitions)
            ),
            workers=int(exp.get("workers", defaults.workers)),
            plots=_bool(exp.get("plots", "false")),
            methods=tuple(sam.get("methods", " ".join(defaults.methods)).split()),
            architectures=tuple(
                cop.get("architectures", " ".join(defaults.architectures)).split()
            ),
            n_grid=tuple(_ints(eva.get("n_grid", "100 1000 10000"))),
            reference_size=int(eva.get("reference_size", defaults.reference_size)),
            reference_balanced=_bool(eva.get("reference_balanced", "true")),
            tie_margin=float(eva.get("tie_margin", defaults.tie_margin)),
            boundary=bparams(),
            bayes=bayes,
            acquisition=acq,
            jacobian=jparams(),
            kernel_length_scale=ls,
            kernel_variance=var,
            train=tparams(),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def render_resolved(cfg: ExperimentConfig) -> str:
    """Canonical text form of the resolved config, stable across runs."""
    sections: list[tuple[str, list[tuple[str, object]]]] = []
    sections.append((
        "experiment",
        [("name", cfg.name), ("seed", cfg.seed), ("repetitions", cfg.repetitions),
         ("bayesian_repetitions", cfg.bayesian_repetitions),
         ("workers", cfg.workers), ("plots", str(cfg.plots).lower())],
    ))
    oracle_items: list[tuple[str, object]] = [("kind", cfg.oracle.kind)]
    for key in sorted(cfg.oracle.options):
        value = cfg.oracle.options[key]
        if isinstance(value, (list, tuple)):
            value = " ".join(str(v) for v in value)
        oracle_items.append((key, value))
    sections.append(("oracle", oracle_items))
    sections.append(("samplers", [("methods", " ".join(cfg.methods))]))
    sections.append((
        "samplers.boundary",
        [("epsilon", cfg.boundary.epsilon), ("step", cfg.boundary.step),
         ("spawn_rate", cfg.boundary.spawn_rate), ("runs", cfg.boundary.runs),
         ("max_threads", cfg.boundary.max_threads),
         ("max_steps", cfg.boundary.max_steps)],
    ))
    sections.append((
        "samplers.bayesian",
        [("cap", cfg.bayes.cap), ("slowness", cfg.bayes.slowness),
         ("init_count", cfg.bayes.init_count), ("local_iters", cfg.bayes.local_iters),
         ("tau", cfg.acquisition.tau), ("length_scale", cfg.kernel_length_scale),
         ("variance", cfg.kernel_variance)],
    ))
    sections.append((
        "samplers.jacobian",
        [("refits", cfg.jacobian.refits), ("seeds_per_refit", cfg.jacobian.seeds_per_refit),
         ("step", cfg.jacobian.step), ("rounds", cfg.jacobian.rounds)],
    ))
    sections.append((
        "copies",
        [("architectures", " ".join(cfg.architectures)),
         ("step_size", cfg.train.step_size), ("epochs", cfg.train.epochs),
         ("batch_size", cfg.train.batch_size), ("max_depth", cfg.train.max_depth),
         ("min_leaf", cfg.train.min_leaf)],
    ))
    sections.append((
        "evaluation",
        [("n_grid", " ".join(str(n) for n in cfg.n_grid)),
         ("reference_size", cfg.reference_size),
         ("reference_balanced", str(cfg.reference_balanced).lower()),
         ("tie_margin", cfg.tie_margin)],
    ))
    out = []
    for section, items in sections:
        out.append(f"[{section}]")
        for key, value in items:
            out.append(f"{key} = {'' if value is None else value}")
        out.append("")
    return "\n".join(out)


# -- timing ---------------------------------------------------------------------

@dataclass
class TimingProfile:
    """Elapsed wall time at increasing sample counts of one generation run."""

    method: str
    checkpoints: list[tuple[int, float]]

    def __post_init__(self):
        counts = [c for c, _ in self.checkpoints]
        elapsed = [e for _, e in self.checkpoints]
        if counts != sorted(set(counts)):
            raise ValueError("checkpoint sample counts must be strictly increasing")
        if any(b < a for a, b in zip(elapsed, elapsed[1:])):
            raise ValueError("elapsed times must be non-decreasing")


def generate_dataset(
    cfg: ExperimentConfig,
    method: str,
    n: int,
    oracle: Oracle,
    rng: RandomSource,
    progress: Callable[[int], None] | None = None,
) -> SyntheticDataset:
    """Run the configured sampler `method` for `n` samples."""
    if method == "random":
        return random_sampler(n, oracle, rng, progress=progress)
    if method == "boundary":
        return boundary_sampler(n, oracle, cfg.boundary, rng, progress=progress)
    if method == "bayesian":
        return fast_bayesian_sampler(
            n, oracle, cfg.bayes, cfg.kernel_for(oracle), cfg.acquisition,
            rng, progress=progress,
        )
    if method == "jacobian":
        return jacobian_sampler(n, oracle, cfg.jacobian, rng, progress=progress)
    raise ConfigError(f"unknown sampling method {method!r}")


def timing_profile(
    cfg: ExperimentConfig,
    method: str,
    checkpoints: Sequence[int],
    oracle: Oracle,
    rng: RandomSource,
) -> TimingProfile:
    """Time one generation run, recording elapsed seconds at each checkpoint."""
    checkpoints = list(checkpoints)
    if checkpoints != sorted(set(checkpoints)) or not checkpoints:
        raise ValueError("checkpoints must be non-empty and strictly ascending")
    marks: list[tuple[int, float]] = []
    remaining = list(checkpoints)
    start = time.perf_counter()

    def progress(count: int):
        while remaining and count >= remaining[0]:
            marks.append((remaining.pop(0), time.perf_counter() - start))

    generate_dataset(cfg, method, checkpoints[-1], oracle, rng, progress=progress)
    return TimingProfile(method=method, checkpoints=marks)


# -- the sweep runner -------------------------------------------------------------

@dataclass
class RunSummary:
    out_dir: Path
    datasets_computed: int = 0
    datasets_skipped: int = 0
    cells_computed: int = 0
    cells_skipped: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0


def _atomic_write(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _dataset_paths(out: Path, method: str, rep: int) -> tuple[Path, Path]:
    return (
        out / "datasets" / f"{method}_r{rep:02d}.csv",
        out / "timing" / f"{method}_r{rep:02d}.csv",
    )


def _cell_path(out: Path, method: str, arch: str, n: int, rep: int) -> Path:
    return out / "cells" / f"{method}__{arch}__n{n}__r{rep:02d}.csv"


def _write_dataset_atomically(ds: SyntheticDataset, path: Path):
    # the sidecar lands first; the CSV rename last, so an existing CSV
    # always implies a complete pair even across interruptions
    from .core import meta_path

    tmp_csv = path.with_suffix(".csv.tmp")
    ds.to_csv(tmp_csv)
    meta_path(tmp_csv).replace(meta_path(path))
    tmp_csv.replace(path)


def _generate_one(cfg, out, method, rep):
    ds_path, timing_path = _dataset_paths(out, method, rep)
    oracle = cfg.oracle.build()
    try:
        rng = RandomSource.derive(cfg.seed, "dataset", method, rep)
        n_max = cfg.n_grid[-1]
        marks: list[tuple[int, float]] = []
        remaining = [n for n in cfg.n_grid]
        start = time.perf_counter()

        def progress(count: int):
            while remaining and count >= remaining[0]:
                marks.append((remaining.pop(0), time.perf_counter() - start))

        ds = generate_dataset(cfg, method, n_max, oracle, rng, progress=progress)
        lines = ["method,sample_count,elapsed_s"]
        for count, elapsed in marks:
            lines.append(f"{method},{count},{elapsed:.6f}")
        timing_path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(timing_path, "\n".join(lines) + "\n")
        _write_dataset_atomically(ds, ds_path)
    finally:
        if isinstance(oracle, ExternalOracle):
            oracle.close()


def _evaluate_cell(cfg, out, method, arch, n, rep, dataset, reference):
    cell = _cell_path(out, method, arch, n, rep)
    t0 = time.perf_counter()
    subset = dataset.prefix(n)
    seed = RandomSource.derive(cfg.seed, "train", method, arch, n, rep).seed
    model = train(arch, subset, dc_replace(cfg.train, seed=seed))
    r_f = metrics.empirical_fidelity_error(model, reference.X, reference.y)
    r_fb = metrics.balanced_empirical_fidelity_error(model, reference)
    wall = time.perf_counter() - t0
    record = metrics.RunRecord(
        oracle=cfg.oracle.oracle_id,
        method=method,
        arch=arch,
        n=n,
        seed=seed,
        r_f=r_f,
        r_fb=r_fb,
        wall_time_s=wall,
    )
    cell.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join(metrics.REPORT_HEADER)
    row = ",".join(metrics.format_report_row(record))
    _atomic_write(cell, header + "\n" + row + "\n")


def _reference_for(cfg: ExperimentConfig, out: Path) -> metrics.ReferenceSet:
    ref_path = out / "reference" / "reference.csv"
    if ref_path.exists():
        ds = SyntheticDataset.from_csv(ref_path)
        counts = np.bincount(ds.y, minlength=ds.k)
        return metrics.ReferenceSet(
            ds.X, ds.y, ds.k, cfg.reference_balanced, counts,
            bool(ds.metadata.get("complete", True)), ds.seed,
        )
    oracle = cfg.oracle.build()
    try:
        rng = RandomSource.derive(cfg.seed, "reference")
        ref = metrics.build_reference_set(
            oracle, cfg.reference_size, cfg.reference_balanced, rng
        )
        ds = SyntheticDataset(
            X=ref.X, y=ref.y, k=ref.k, generator_id="reference", seed=ref.seed,
            query_count=oracle.query_count,
            metadata={"complete": ref.complete, "balanced": ref.balanced},
        )
        ref_path.parent.mkdir(parents=True, exist_ok=True)
        _write_dataset_atomically(ds, ref_path)
    finally:
        if isinstance(oracle, ExternalOracle):
            oracle.close()
    return ref


def run_experiment(
    cfg: ExperimentConfig,
    out,
    only_methods: Sequence[str] | None = None,
    only_archs: Sequence[str] | None = None,
    only_ns: Sequence[int] | None = None,
) -> RunSummary:
    """Execute (or resume) the full sweep into `out`.

    Per (method, repetition) the largest budget is generated once and
    smaller budgets are taken as prefixes.  The optional filters restrict
    which cells this invocation computes without changing the resolved
    configuration.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    summary = RunSummary(out_dir=out)

    resolved = render_resolved(cfg)
    echo_path = out / "config.resolved.ini"
    if echo_path.exists():
        if echo_path.read_text() != resolved:
            raise ConfigError(
                f"{out} was produced by a different configuration; "
                "refusing to mix results"
            )
    else:
        echo_path.write_text(resolved)

    workers = cfg.workers
    if cfg.oracle.kind == "external" and workers != 1:
        log.warning("external oracle forces workers=1")
        workers = 1

    methods = [m for m in cfg.methods if only_methods is None or m in only_methods]
    archs = [a for a in cfg.architectures if only_archs is None or a in only_archs]
    grid = [n for n in cfg.n_grid if only_ns is None or n in only_ns]

    reference = _reference_for(cfg, out)

    # phase 1: datasets
    gen_tasks = []
    for method in methods:
        for rep in range(cfg.repetitions_for(method)):
            ds_path, _ = _dataset_paths(out, method, rep)
            if ds_path.exists():
                summary.datasets_skipped += 1
            else:
                gen_tasks.append((method, rep))

    def run_gen(task):
        method, rep = task
        _generate_one(cfg, out, method, rep)
        return 1

    summary.datasets_computed += _run_tasks(
        gen_tasks, run_gen, workers, summary,
        label=lambda t: f"dataset {t[0]} rep {t[1]}",
    )

    # phase 2: cells
    cell_tasks = []
    for method in methods:
        for rep in range(cfg.repetitions_for(method)):
            ds_path, _ = _dataset_paths(out, method, rep)
            if not ds_path.exists():
                continue  # generation failed; already recorded
            wanted = [
                (arch, n)
                for arch in archs
                for n in grid
                if not _cell_path(out, method, arch, n, rep).exists()
            ]
            skipped = len(archs) * len(grid) - len(wanted)
            summary.cells_skipped += skipped
            if wanted:
                cell_tasks.append((method, rep, ds_path, wanted))

    def run_cells(task):
        method, rep, ds_path, wanted = task
        dataset = SyntheticDataset.from_csv(ds_path)
        done = 0
        for arch, n in wanted:
            _evaluate_cell(cfg, out, method, arch, n, rep, dataset, reference)
            done += 1
        return done

    # cells within one dataset run serially; datasets in parallel
    failures_before = len(summary.failures)
    summary.cells_computed += _run_tasks(
        cell_tasks, run_cells, workers, summary,
        label=lambda t: f"cells {t[0]} rep {t[1]}",
    )

    # phase 3: deterministic aggregates
    records = []
    for cell in sorted((out / "cells").glob("*.csv")) if (out / "cells").exists() else []:
        records.extend(metrics.read_report_csv(cell))
    records.sort(key=lambda r: (r.method, r.arch, r.n, r.seed))
    metrics.write_report_csv(records, out / "report.csv")

    timing_rows = []
    timing_dir = out / "timing"
    if timing_dir.exists():
        for path in sorted(timing_dir.glob("*.csv")):
            lines = path.read_text().splitlines()[1:]
            timing_rows.extend(lines)
    timing_rows.sort(key=lambda row: (row.split(",")[0], int(row.split(",")[1])))
    _atomic_write(out / "timing.csv",
                  "method,sample_count,elapsed_s\n" + "".join(r + "\n" for r in timing_rows))

    expected = {
        (cfg.oracle.oracle_id, m, a, n)
        for m in cfg.methods for a in cfg.architectures for n in cfg.n_grid
    }
    reports = metrics.summarize_runs(records)
    have = {(r.oracle, r.method, r.copy_arch, r.n) for r in reports}
    if len(cfg.methods) >= 2 and expected <= have:
        by_method = {}
        for rep in reports:
            by_method.setdefault(rep.method, []).append(rep)
        matrix = metrics.compare_methods(by_method, cfg.tie_margin)
        metrics.write_comparison_csv(matrix, out / "comparison.csv")
        (out / "comparison.meta.json").write_text(
            json.dumps({"tie_margin": cfg.tie_margin}, sort_keys=True) + "\n"
        )

    if cfg.plots:
        _emit_plots(cfg, out, methods, summary)

    if len(summary.failures) > failures_before:
        log.warning("%d cell group(s) failed", len(summary.failures) - failures_before)
    return summary


def _run_tasks(tasks, fn, workers, summary: RunSummary, label) -> int:
    """Run tasks with per-task failure isolation; returns summed results."""
    completed = 0
    if not tasks:
        return completed
    if workers == 1:
        for task in tasks:
            try:
                completed += fn(task)
            except Exception as exc:
                log.exception("task failed: %s", label(task))
                summary.failures.append((label(task), str(exc)))
        return completed
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, task): task for task in tasks}
        for future in concurrent.futures.as_completed(futures):
            task = futures[future]
            try:
                completed += future.result()
            except Exception as exc:
                log.exception("task failed: %s", label(task))
                summary.failures.append((label(task), str(exc)))
    return completed


_ANALYTIC_KINDS = ("halfspace", "circles", "checkerboard", "spiral")


def _emit_plots(cfg, out: Path, methods, summary: RunSummary):
    overlay = None
    if cfg.oracle.kind in _ANALYTIC_KINDS:
        built = cfg.oracle.build()
        if isinstance(built, AnalyticOracle) and built.d == 2:
            overlay = built
    for method in methods:
        ds_path, _ = _dataset_paths(out, method, 0)
        plot_path = out / "plots" / f"{method}.svg"
        if not ds_path.exists() or plot_path.exists():
            continue
        dataset = SyntheticDataset.from_csv(ds_path)
        if dataset.d != 2:
            continue
        try:
            plot_2d(dataset, overlay, plot_path)
        except Exception as exc:
            summary.failures.append((f"plot {method}", str(exc)))
