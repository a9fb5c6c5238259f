"""Copy models trained on oracle-labelled synthetic data.

Four architectures: multinomial logistic regression ("lr"), a CART decision
tree ("dt"), a one-hidden-layer network of 5 rectified units ("ann") and a
deeper 3 x 50 network ("ann2").  Networks use a softmax output trained with
cross-entropy and per-parameter adaptive step scaling; the tree uses binary
single-feature splits on Gini impurity with unlimited depth by default,
since a copy benefits from maximal capacity.  Training is deterministic
given the config seed, and the public surface exposes hard labels only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import CopySamplerError, RandomSource, SyntheticDataset

ARCHITECTURES = ("lr", "dt", "ann", "ann2")

_HIDDEN_LAYERS = {"lr": (), "ann": (5,), "ann2": (50, 50, 50)}

_SAVE_FORMAT = "copymodel/1"

_ADAM_B1 = 0.9
_ADAM_B2 = 0.999
_ADAM_EPS = 1e-8


class TrainingError(CopySamplerError):
    """Optimization diverged; carries the diagnostics in its message."""


@dataclass(frozen=True)
class TrainConfig:
    step_size: float = 1e-2
    epochs: int = 200
    batch_size: int = 64
    max_depth: int | None = None
    min_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.step_size <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("step_size, epochs and batch_size must be positive")
        if self.min_leaf <= 0 or (self.max_depth is not None and self.max_depth <= 0):
            raise ValueError("min_leaf and max_depth must be positive")


@dataclass
class CopyModel:
    """A fitted copy: architecture tag, parameters, and training metadata."""

    architecture: str
    d: int
    k: int
    params: dict = field(default_factory=dict)
    train_meta: dict = field(default_factory=dict)
    constant_label: int | None = None

    def predict(self, z: np.ndarray) -> int:
        return int(self.predict_many(np.asarray(z, dtype=np.float64)[None, :])[0])

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.constant_label is not None:
            return np.full(X.shape[0], self.constant_label, dtype=np.int64)
        if self.architecture == "dt":
            return _tree_predict(self.params, X)
        probs = _net_probs(self.params["layers"], X)
        return np.argmax(probs, axis=1).astype(np.int64)

    def class_probabilities(self, X: np.ndarray) -> np.ndarray:
        """Internal softmax scores; not part of the hard-label surface."""
        if self.architecture == "dt" or self.constant_label is not None:
            raise ValueError("class probabilities exist only for fitted networks")
        return _net_probs(self.params["layers"], np.atleast_2d(X))

    def input_gradients(self, X: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """d p_c / d z rows for each (z, c) pair; networks only."""
        if self.architecture == "dt" or self.constant_label is not None:
            raise ValueError("input gradients exist only for fitted networks")
        return _net_input_gradients(self.params["layers"],
                                    np.atleast_2d(X),
                                    np.asarray(labels, dtype=np.int64))

    # -- persistence --------------------------------------------------------

    def save(self, path) -> Path:
        path = Path(path)
        if path.suffix != ".npz":
            path = path.with_suffix(path.suffix + ".npz")
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays: dict[str, np.ndarray] = {}
        if self.architecture == "dt" and self.constant_label is None:
            for name in ("feature", "threshold", "left", "right", "leaf_label"):
                arrays[f"tree_{name}"] = self.params[name]
        elif self.constant_label is None:
            for i, (W, b) in enumerate(self.params["layers"]):
                arrays[f"W{i}"] = W
                arrays[f"b{i}"] = b
        head = {
            "format": _SAVE_FORMAT,
            "architecture": self.architecture,
            "d": self.d,
            "k": self.k,
            "constant_label": self.constant_label,
            "train_meta": self.train_meta,
        }
        np.savez(path, head=np.frombuffer(
            json.dumps(head, sort_keys=True).encode("utf-8"), dtype=np.uint8),
            **arrays)
        return path

    @classmethod
    def load(cls, path) -> "CopyModel":
        with np.load(Path(path)) as bundle:
            head = json.loads(bytes(bundle["head"].tobytes()).decode("utf-8"))
            if head.get("format") != _SAVE_FORMAT:
                raise ValueError(f"unsupported model container: {head.get('format')!r}")
            model = cls(
                architecture=head["architecture"],
                d=int(head["d"]),
                k=int(head["k"]),
                train_meta=head.get("train_meta", {}),
                constant_label=head["constant_label"],
            )
            if model.constant_label is not None:
                return model
            if model.architecture == "dt":
                model.params = {
                    name: bundle[f"tree_{name}"]
                    for name in ("feature", "threshold", "left", "right", "leaf_label")
                }
            else:
                layers = []
                i = 0
                while f"W{i}" in bundle:
                    layers.append((bundle[f"W{i}"], bundle[f"b{i}"]))
                    i += 1
                model.params = {"layers": layers}
        return model


def predict(model: CopyModel, z: np.ndarray) -> int:
    return model.predict(z)


def train(arch: str, ds: SyntheticDataset, cfg: TrainConfig | None = None) -> CopyModel:
    """Fit a copy of the given architecture on a synthetic dataset."""
    arch = arch.lower()
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}; pick one of {ARCHITECTURES}")
    cfg = cfg or TrainConfig()
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    X, y, k = ds.X, ds.y, ds.k
    present = np.unique(y)
    if present.size == 1:
        model = CopyModel(arch, ds.d, k, constant_label=int(present[0]))
        model.train_meta = {"seed": cfg.seed, "training_fidelity_error": 0.0,
                            "constant": True}
        return model
    if arch == "dt":
        params = _tree_fit(X, y, k, cfg)
        model = CopyModel(arch, ds.d, k, params=params)
        depth = int(params["depth"])
        model.train_meta = {"seed": cfg.seed, "depth": depth}
    else:
        layers, final_loss = _net_fit(X, y, k, _HIDDEN_LAYERS[arch], cfg)
        model = CopyModel(arch, ds.d, k, params={"layers": layers})
        model.train_meta = {"seed": cfg.seed, "epochs": cfg.epochs,
                            "final_loss": final_loss}
    err = float(np.mean(model.predict_many(X) != y))
    model.train_meta["training_fidelity_error"] = err
    return model


# -- softmax networks --------------------------------------------------------

def _net_init(d: int, k: int, hidden: Sequence[int], rng: RandomSource):
    sizes = [d, *hidden, k]
    layers = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        W = rng.normal((n_in, n_out)) * np.sqrt(2.0 / n_in)
        b = np.zeros(n_out)
        layers.append((W, b))
    return layers


def _net_forward(layers, X):
    acts = [X]
    a = X
    for i, (W, b) in enumerate(layers):
        z = a @ W + b
        if i < len(layers) - 1:
            a = np.maximum(z, 0.0)
        else:
            a = z
        acts.append(a)
    return acts


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _net_probs(layers, X):
    return _softmax(_net_forward(layers, X)[-1])


def network_loss_and_grad(layers, X, y, k):
    """Mean cross-entropy and its gradients w.r.t. every weight and bias."""
    n = X.shape[0]
    acts = _net_forward(layers, X)
    probs = _softmax(acts[-1])
    eps = 1e-12
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + eps)))
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(layers)
    for i in reversed(range(len(layers))):
        W, _ = layers[i]
        a_prev = acts[i]
        grads[i] = (a_prev.T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ W.T) * (acts[i] > 0.0)
    return loss, grads


def _net_input_gradients(layers, X, labels):
    """Backpropagate d p_c / d z through the network to the inputs."""
    n = X.shape[0]
    acts = _net_forward(layers, X)
    probs = _softmax(acts[-1])
    # d p_c / d logits_j = p_c ((j == c) - p_j)
    p_c = probs[np.arange(n), labels][:, None]
    delta = -p_c * probs
    delta[np.arange(n), labels] += p_c[:, 0]
    for i in reversed(range(len(layers))):
        W, _ = layers[i]
        delta = delta @ W.T
        if i > 0:
            delta = delta * (acts[i] > 0.0)
    return delta


def _net_fit(X, y, k, hidden, cfg: TrainConfig):
    rng = RandomSource(cfg.seed)
    layers = _net_init(X.shape[1], k, hidden, rng)
    flat = [arr for pair in layers for arr in pair]
    m = [np.zeros_like(a) for a in flat]
    v = [np.zeros_like(a) for a in flat]
    t = 0
    n = X.shape[0]
    loss = None
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = network_loss_and_grad(layers, X[batch], y[batch], k)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {t} "
                    f"(step_size={cfg.step_size}, batch={cfg.batch_size})"
                )
            t += 1
            flat_grads = [g for pair in grads for g in pair]
            with np.errstate(over="ignore"):  # overflow is detected below
                for i, g in enumerate(flat_grads):
                    m[i] = _ADAM_B1 * m[i] + (1 - _ADAM_B1) * g
                    v[i] = _ADAM_B2 * v[i] + (1 - _ADAM_B2) * g * g
                    if not np.all(np.isfinite(v[i])):
                        raise TrainingError(
                            f"gradient moments overflowed at epoch {epoch}, step {t} "
                            f"(step_size={cfg.step_size}, batch={cfg.batch_size})"
                        )
                    m_hat = m[i] / (1 - _ADAM_B1**t)
                    v_hat = v[i] / (1 - _ADAM_B2**t)
                    flat[i] -= cfg.step_size * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
    if any(not np.all(np.isfinite(a)) for a in flat):
        raise TrainingError("non-finite parameters after optimization")
    return layers, loss


# -- CART decision tree --------------------------------------------------------

def _gini_best_split(Xf, y, k, min_leaf):
    """Best (threshold, impurity) for one sorted feature column, or None."""
    order = np.argsort(Xf, kind="stable")
    xs = Xf[order]
    ys = y[order]
    n = xs.shape[0]
    onehot = np.zeros((n, k))
    onehot[np.arange(n), ys] = 1.0
    left_counts = np.cumsum(onehot, axis=0)
    total = left_counts[-1]
    # split after position i puts i+1 samples on the left
    idx = np.arange(1, n)
    valid = xs[1:] != xs[:-1]
    valid &= (idx >= min_leaf) & (n - idx >= min_leaf)
    if not np.any(valid):
        return None
    lc = left_counts[:-1][valid]
    nl = idx[valid].astype(np.float64)
    nr = n - nl
    rc = total[None, :] - lc
    gini_l = 1.0 - ((lc / nl[:, None]) ** 2).sum(axis=1)
    gini_r = 1.0 - ((rc / nr[:, None]) ** 2).sum(axis=1)
    impurity = (nl * gini_l + nr * gini_r) / n
    j = int(np.argmin(impurity))
    pos = idx[valid][j]
    threshold = (xs[pos - 1] + xs[pos]) / 2.0
    return float(impurity[j]), float(threshold)


def _tree_fit(X, y, k, cfg: TrainConfig):
    n, d = X.shape
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    leaf_label: list[int] = []
    max_depth_seen = 0

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_label.append(-1)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        max_depth_seen = max(max_depth_seen, depth)
        ys = y[idx]
        counts = np.bincount(ys, minlength=k)
        majority = int(np.argmax(counts))
        pure = counts[majority] == idx.size
        depth_capped = cfg.max_depth is not None and depth >= cfg.max_depth
        best = None
        if not pure and not depth_capped and idx.size >= 2 * cfg.min_leaf:
            for f in range(d):
                cand = _gini_best_split(X[idx, f], ys, k, cfg.min_leaf)
                if cand is not None and (best is None or cand[0] < best[0]):
                    best = (cand[0], f, cand[1])
        if best is None:
            leaf_label[node] = majority
            continue
        _, f, thr = best
        feature[node] = f
        threshold[node] = thr
        go_left = X[idx, f] <= thr
        l_node = new_node()
        r_node = new_node()
        left[node] = l_node
        right[node] = r_node
        stack.append((l_node, idx[go_left], depth + 1))
        stack.append((r_node, idx[~go_left], depth + 1))
    return {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=np.float64),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "leaf_label": np.array(leaf_label, dtype=np.int64),
        "depth": np.int64(max_depth_seen),
    }


def _tree_predict(params, X):
    feature = params["feature"]
    threshold = params["threshold"]
    left = params["left"]
    right = params["right"]
    leaf_label = params["leaf_label"]
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feature[node] >= 0
    while np.any(active):
        rows = np.flatnonzero(active)
        nd = node[rows]
        go_left = X[rows, feature[nd]] <= threshold[nd]
        node[rows] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return leaf_label[node]
