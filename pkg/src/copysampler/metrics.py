"""Fidelity metrics, reference-set construction, and method comparison.

Fidelity always takes the oracle's hard labels as ground truth: the plain
empirical error is the disagreement fraction, and the balanced variant
averages per-class agreement first so under-represented classes weigh
equally.  A value of 0 means a perfect copy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .copies import CopyModel, TrainConfig, train
from .core import CopySamplerError, RandomSource, SyntheticDataset
from .oracles import Oracle


class MissingClassError(CopySamplerError):
    """A class required by the balanced metric is absent from the set."""


class ComparisonError(CopySamplerError):
    """Reports being compared do not cover the same evaluation grid."""


@dataclass
class ReferenceSet:
    """Large uniform, oracle-labelled evaluation set; optionally balanced."""

    X: np.ndarray
    y: np.ndarray
    k: int
    balanced: bool
    per_class_counts: np.ndarray
    complete: bool
    seed: int

    def __len__(self) -> int:
        return int(self.y.shape[0])


@dataclass(frozen=True)
class RunRecord:
    """One CSV report row: a single (method, arch, N, seed) evaluation."""

    oracle: str
    method: str
    arch: str
    n: int
    seed: int
    r_f: float
    r_fb: float
    wall_time_s: float


@dataclass(frozen=True)
class FidelityReport:
    """Aggregate over repetitions of one (oracle, method, arch, N) cell."""

    oracle: str
    method: str
    copy_arch: str
    n: int
    r_f: float
    r_fb: float
    percentiles: Mapping[str, float] = field(default_factory=dict)
    wall_time_s: float = 0.0


# Full-scale quality-check results reported for the six public benchmark
# tasks (balanced error of the original architecture refit on the reference
# set, and over the original training set).  Kept for comparison when
# running the full-scale presets; not asserted by tests, since they require
# the external data pipelines.
FULL_SCALE_QUALITY_CHECKS = {
    "bank": (0.023, 0.021),
    "ilpd": (0.080, 0.385),   # flagged as an unreliable evaluation upstream
    "magic": (0.001, 0.001),
    "miniboone": (0.009, 0.168),
    "seeds": (0.020, 0.000),
    "synthetic": (0.010, 0.000),
}

# Full-scale victory/tie/loss aggregates between sampling methods, for the
# same reason.  Keyed as (row, column).
FULL_SCALE_COMPARISON = {
    ("random", "boundary"): (8, 13, 3),
    ("random", "bayesian"): (10, 13, 1),
    ("random", "jacobian"): (19, 5, 0),
    ("boundary", "bayesian"): (10, 11, 3),
    ("boundary", "jacobian"): (18, 5, 1),
    ("bayesian", "jacobian"): (16, 5, 3),
}


def empirical_fidelity_error(model: CopyModel, X: np.ndarray, y_oracle: np.ndarray) -> float:
    """Disagreement fraction between the copy and the oracle labels."""
    y_oracle = np.asarray(y_oracle, dtype=np.int64).reshape(-1)
    if y_oracle.size == 0:
        raise ValueError("cannot score an empty set")
    preds = model.predict_many(X)
    return float(np.mean(preds != y_oracle))


def balanced_empirical_fidelity_error(model: CopyModel, ref) -> float:
    """One minus the mean per-class agreement rate.

    `ref` is a ReferenceSet or an (X, y, k) triple.  Every class in
    [0, k) must be present, otherwise its agreement rate is undefined.
    """
    if isinstance(ref, ReferenceSet):
        X, y, k = ref.X, ref.y, ref.k
    else:
        X, y, k = ref
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    preds = model.predict_many(X)
    rates = np.empty(k)
    for cls in range(k):
        mask = y == cls
        if not mask.any():
            raise MissingClassError(f"class {cls} is absent from the reference set")
        rates[cls] = np.mean(preds[mask] == cls)
    return float(1.0 - rates.mean())


def build_reference_set(
    oracle: Oracle,
    L: int,
    balanced: bool,
    rng: RandomSource,
    max_attempts: int | None = None,
) -> ReferenceSet:
    """Uniform oracle-labelled points; balanced via per-class rejection.

    Balanced quotas are ceil(L/k) for the first L mod k classes and
    floor(L/k) for the rest.  If some quota cannot be filled within
    `max_attempts` drawn points (default 100 L) the partial set is returned
    with `complete=False`.
    """
    if L < 1:
        raise ValueError("L must be positive")
    if balanced and L < oracle.k:
        raise ValueError("balanced reference needs at least one point per class")
    if max_attempts is None:
        max_attempts = 100 * L
    d, k = oracle.d, oracle.k
    if not balanced:
        rows = []
        labels = []
        remaining = L
        while remaining > 0:
            chunk = min(remaining, 65536)
            Xc = rng.uniform((chunk, d))
            rows.append(Xc)
            labels.append(oracle.query_many(Xc))
            remaining -= chunk
        X = np.concatenate(rows)
        y = np.concatenate(labels)
        counts = np.bincount(y, minlength=k)
        return ReferenceSet(X, y, k, False, counts, True, rng.seed)

    base, extra = divmod(L, k)
    quotas = np.full(k, base, dtype=np.int64)
    quotas[:extra] += 1
    counts = np.zeros(k, dtype=np.int64)
    accepted_X: list[np.ndarray] = []
    accepted_y: list[int] = []
    attempts = 0
    while attempts < max_attempts and counts.sum() < L:
        chunk = min(4096, max_attempts - attempts)
        Xc = rng.uniform((chunk, d))
        yc = oracle.query_many(Xc)
        attempts += chunk
        for row, cls in zip(Xc, yc):
            if counts[cls] < quotas[cls]:
                counts[cls] += 1
                accepted_X.append(row)
                accepted_y.append(int(cls))
                if counts.sum() == L:
                    break
    complete = bool(counts.sum() == L)
    X = np.array(accepted_X) if accepted_X else np.empty((0, d))
    y = np.array(accepted_y, dtype=np.int64)
    return ReferenceSet(X, y, k, True, counts, complete, rng.seed)


def quality_checks(
    ref: ReferenceSet,
    original_train: tuple[np.ndarray, np.ndarray],
    arch: str,
    cfg: TrainConfig | None = None,
) -> tuple[float, float]:
    """Refit `arch` on the reference set and score it twice.

    Returns the balanced error on the reference set itself and on the
    supplied original training data (whose labels are taken as given, so
    pass oracle labels to measure fidelity).
    """
    ds = SyntheticDataset(
        X=ref.X,
        y=ref.y,
        k=ref.k,
        generator_id="reference",
        seed=ref.seed,
        query_count=len(ref),
    )
    model = train(arch, ds, cfg or TrainConfig())
    on_ref = balanced_empirical_fidelity_error(model, ref)
    Xd, yd = original_train
    on_original = balanced_empirical_fidelity_error(model, (Xd, yd, ref.k))
    return on_ref, on_original


def summarize_runs(records: Iterable[RunRecord]) -> list[FidelityReport]:
    """Collapse per-repetition rows into per-cell medians and percentiles."""
    groups: dict[tuple[str, str, str, int], list[RunRecord]] = {}
    for rec in records:
        groups.setdefault((rec.oracle, rec.method, rec.arch, rec.n), []).append(rec)
    reports = []
    for (oracle, method, arch, n), rows in sorted(groups.items()):
        fb = np.array([r.r_fb for r in rows])
        f = np.array([r.r_f for r in rows])
        times = np.array([r.wall_time_s for r in rows])
        reports.append(
            FidelityReport(
                oracle=oracle,
                method=method,
                copy_arch=arch,
                n=n,
                r_f=float(np.median(f)),
                r_fb=float(np.median(fb)),
                percentiles={
                    "p20": float(np.percentile(fb, 20)),
                    "p50": float(np.percentile(fb, 50)),
                    "p80": float(np.percentile(fb, 80)),
                },
                wall_time_s=float(np.median(times)),
            )
        )
    return reports


def compare_methods(
    reports_by_method: Mapping[str, Sequence[FidelityReport]],
    tie_margin: float = 0.01,
) -> dict[tuple[str, str], tuple[int, int, int]]:
    """Victory/tie/loss counts of median balanced errors over shared cells.

    A cell is one (oracle, arch, N) combination; the method with the smaller
    median balanced error wins it unless the difference is within
    `tie_margin`.  All methods must cover an identical cell grid.
    """
    cells: dict[str, dict[tuple[str, str, int], float]] = {}
    for method, reports in reports_by_method.items():
        cells[method] = {(r.oracle, r.copy_arch, r.n): r.r_fb for r in reports}
    methods = sorted(cells)
    if len(methods) < 2:
        raise ComparisonError("need at least two methods to compare")
    grid = set(cells[methods[0]])
    for method in methods[1:]:
        if set(cells[method]) != grid:
            raise ComparisonError(
                f"method {method!r} does not cover the same (oracle, arch, N) grid"
            )
    matrix: dict[tuple[str, str], tuple[int, int, int]] = {}
    for a in methods:
        for b in methods:
            if a == b:
                continue
            wins = ties = losses = 0
            for cell in grid:
                delta = cells[a][cell] - cells[b][cell]
                if abs(delta) <= tie_margin:
                    ties += 1
                elif delta < 0:
                    wins += 1
                else:
                    losses += 1
            matrix[(a, b)] = (wins, ties, losses)
    return matrix


# -- report persistence -------------------------------------------------------

REPORT_HEADER = ["oracle", "method", "arch", "N", "seed", "R_F", "R_Fb", "wall_time_s"]
COMPARISON_HEADER = ["method_a", "method_b", "victories", "ties", "losses"]


def format_report_row(rec: RunRecord) -> list[str]:
    return [
        rec.oracle,
        rec.method,
        rec.arch,
        str(rec.n),
        str(rec.seed),
        f"{rec.r_f:.17g}",
        f"{rec.r_fb:.17g}",
        f"{rec.wall_time_s:.6f}",
    ]


def write_report_csv(records: Sequence[RunRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for rec in records:
            writer.writerow(format_report_row(rec))
    return path


def read_report_csv(path) -> list[RunRecord]:
    records = []
    with Path(path).open(newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            records.append(
                RunRecord(
                    oracle=row["oracle"],
                    method=row["method"],
                    arch=row["arch"],
                    n=int(row["N"]),
                    seed=int(row["seed"]),
                    r_f=float(row["R_F"]),
                    r_fb=float(row["R_Fb"]),
                    wall_time_s=float(row["wall_time_s"]),
                )
            )
    return records


def write_comparison_csv(
    matrix: Mapping[tuple[str, str], tuple[int, int, int]], path
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(COMPARISON_HEADER)
        for (a, b), (wins, ties, losses) in sorted(matrix.items()):
            writer.writerow([a, b, str(wins), str(ties), str(losses)])
    return path
