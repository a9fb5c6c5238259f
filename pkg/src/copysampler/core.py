"""Shared domain types: the unit-hypercube input space, the pinned random
stream, labelled synthetic datasets and their serialization, and the
normalization / splitting plumbing used by every other module."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

# Target column statistics after normalization.
TARGET_MEAN = 0.5
TARGET_STD = 1.0 / 5.152

_MASK64 = (1 << 64) - 1

# Type aliases: points are plain float64 vectors, labels plain ints.
Point = np.ndarray
ClassLabel = int


class CopySamplerError(Exception):
    """Base class for every error raised by this package."""


class DegenerateColumnError(CopySamplerError):
    """A raw data column has zero spread and cannot be rescaled."""


class StratificationError(CopySamplerError):
    """A class is too small to be split into train and test portions."""


def round_half_up(x: float) -> int:
    """Nearest integer with ties rounded toward +inf.

    Single tie rule used package-wide (parameter formulas, batch sizes,
    label rounding) so that every rounding site behaves identically.
    """
    return int(math.floor(x + 0.5))


class RandomSource:
    """Seeded PCG64 stream.

    The generator algorithm is pinned by name so an identical seed yields
    an identical draw sequence on every platform.  Each concurrent task
    owns its own instance; streams for sub-tasks are derived with
    :meth:`derive` rather than by sharing.
    """

    algorithm_id = "pcg64"

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @classmethod
    def derive(cls, seed: int, *parts: object) -> "RandomSource":
        """Child stream keyed by (seed, *parts), stable across runs."""
        material = ":".join([str(int(seed) & _MASK64)] + [str(p) for p in parts])
        digest = hashlib.sha256(material.encode("utf-8")).digest()
        return cls(int.from_bytes(digest[:8], "big"))

    def uniform(self, size) -> np.ndarray:
        """Uniform draws in [0, 1); `size` is an int or a shape tuple."""
        return self._gen.random(size)

    def normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)

    def poisson(self, lam: float) -> int:
        return int(self._gen.poisson(lam))

    def integers(self, high: int) -> int:
        """One integer in [0, high)."""
        return int(self._gen.integers(high))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def subset(self, n: int, size: int) -> np.ndarray:
        """`size` distinct indices drawn uniformly from range(n)."""
        return self._gen.choice(n, size=size, replace=False)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RandomSource(seed={self.seed}, algorithm={self.algorithm_id})"


@dataclass(frozen=True)
class SampleSpace:
    """The restricted input space: the closed unit hypercube in d dimensions."""

    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimensionality must be at least 1, got {self.d}")

    @property
    def bounds(self) -> tuple[float, float]:
        return (0.0, 1.0)

    def contains(self, point: np.ndarray) -> bool:
        return bool(np.all(point >= 0.0) and np.all(point <= 1.0))

    def clip(self, point: np.ndarray) -> np.ndarray:
        return np.clip(point, 0.0, 1.0)


def uniform_sample(space: SampleSpace, rng: RandomSource) -> Point:
    """One point distributed uniformly over the unit hypercube."""
    return rng.uniform(space.d)


@dataclass(frozen=True)
class LabeledSample:
    """A point together with the hard label one oracle query produced for it."""

    point: Point
    label: ClassLabel


@dataclass
class SyntheticDataset:
    """Oracle-labelled samples in generation order plus provenance metadata.

    Samplers generate points accumulatively, so truncating to the first j
    samples (:meth:`prefix`) reproduces exactly the dataset a smaller budget
    would have produced.  ``query_count`` may exceed ``len`` because some
    generators query points they discard.
    """

    X: np.ndarray
    y: np.ndarray
    k: int
    generator_id: str
    seed: int
    query_count: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        if self.X.size == 0:
            self.X = self.X.reshape(0, self.X.shape[-1] if self.X.ndim == 2 else 1)
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(
                f"point/label count mismatch: {self.X.shape[0]} != {self.y.shape[0]}"
            )
        if self.query_count < len(self.y):
            raise ValueError("query_count cannot be smaller than the sample count")

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    @property
    def samples(self) -> list[LabeledSample]:
        return [LabeledSample(x, int(t)) for x, t in zip(self.X, self.y)]

    def prefix(self, j: int) -> "SyntheticDataset":
        """First j samples in original order, same provenance metadata."""
        if not 0 <= j <= len(self):
            raise ValueError(f"prefix length {j} out of range [0, {len(self)}]")
        return SyntheticDataset(
            X=self.X[:j].copy(),
            y=self.y[:j].copy(),
            k=self.k,
            generator_id=self.generator_id,
            seed=self.seed,
            query_count=self.query_count,
            metadata=dict(self.metadata),
        )

    # -- serialization -----------------------------------------------------

    def to_csv(self, path) -> Path:
        """Write samples as CSV (17 significant digits) plus a JSON sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = ",".join([f"x{i}" for i in range(self.d)] + ["label"])
        fmt = ["%.17g"] * self.d + ["%d"]
        with path.open("w", newline="\n") as f:
            f.write(header + "\n")
            if len(self) > 0:
                np.savetxt(f, np.column_stack([self.X, self.y.astype(float)]),
                           fmt=fmt, delimiter=",")
        sidecar = {
            "generator_id": self.generator_id,
            "seed": int(self.seed),
            "query_count": int(self.query_count),
            "d": self.d,
            "k": int(self.k),
            "metadata": _jsonable(self.metadata),
        }
        meta_path(path).write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")
        return path

    @classmethod
    def from_csv(cls, path) -> "SyntheticDataset":
        path = Path(path)
        X, y = load_labeled_csv(path)
        meta = meta_path(path)
        if meta.exists():
            side = json.loads(meta.read_text())
            return cls(X, y, int(side["k"]), side["generator_id"],
                       int(side["seed"]), int(side["query_count"]),
                       side.get("metadata", {}))
        k = int(y.max()) + 1 if len(y) else 1
        return cls(X, y, k, "unknown", 0, len(y))


def meta_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".meta.json")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def load_labeled_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Load a `x0,...,x{d-1},label` CSV into (X, y) arrays."""
    path = Path(path)
    with path.open() as f:
        first = f.readline()
        skip = 1 if first and not first[0].isdigit() and not first.startswith("-") else 0
        if not f.readline() and skip:
            d = max(first.count(","), 1)
            return np.empty((0, d)), np.empty(0, dtype=np.int64)
    raw = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return raw[:, :-1].astype(np.float64), raw[:, -1].astype(np.int64)


def prefix(ds: SyntheticDataset, j: int) -> SyntheticDataset:
    """First j samples of `ds`; see :meth:`SyntheticDataset.prefix`."""
    return ds.prefix(j)


@dataclass(frozen=True)
class NormalizationTransform:
    """Per-dimension affine map x -> x*scale + shift.

    Fitted so transformed training columns have mean 0.5 and standard
    deviation 1/5.152, which places almost all of a normally distributed
    column inside the unit interval.
    """

    shift: np.ndarray
    scale: np.ndarray
    target_mean: float = TARGET_MEAN
    target_std: float = TARGET_STD

    def transform(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) * self.scale + self.shift

    def inverse(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.shift) / self.scale


def fit_normalization(raw: np.ndarray) -> NormalizationTransform:
    """Fit the affine normalization on an M x d matrix of raw attributes.

    Uses the population standard deviation (divide by M): the target spread
    is a distribution parameter, not a sample estimate.  Columns with zero
    spread raise: silently mapping them to the target mean would corrupt
    distance-based samplers downstream.
    """
    X = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit a normalization")
    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    degenerate = np.flatnonzero(sigma == 0.0)
    if degenerate.size:
        raise DegenerateColumnError(
            f"column(s) {degenerate.tolist()} have zero standard deviation"
        )
    scale = TARGET_STD / sigma
    shift = TARGET_MEAN - mu * scale
    return NormalizationTransform(shift=shift, scale=scale)


def stratified_split(
    X: np.ndarray,
    y: np.ndarray,
    fraction: float,
    rng: RandomSource,
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Split (X, y) into train/test preserving per-class proportions.

    Per class the train count is round-half-up(fraction * n_c), clamped to
    [1, n_c - 1] so both sides keep at least one sample of every class;
    this stays within one sample of the exact proportion.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        n_c = members.size
        if n_c < 2:
            raise StratificationError(
                f"class {int(cls)} has {n_c} sample(s); need at least 2 to stratify"
            )
        order = members[rng.permutation(n_c)]
        n_train = min(max(round_half_up(fraction * n_c), 1), n_c - 1)
        train_idx.append(order[:n_train])
        test_idx.append(order[n_train:])
    tr = np.concatenate(train_idx)
    te = np.concatenate(test_idx)
    return (X[tr], y[tr]), (X[te], y[te])
