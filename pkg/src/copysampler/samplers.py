"""Synthetic-set generators: uniform, boundary-exploiting, and
gradient-sign augmentation.

Every sampler takes a budget N and an oracle and returns exactly N labelled
points inside the unit hypercube, generated accumulatively so that prefixes
reproduce smaller budgets.  The boundary sampler spends half of its budget
on uniform exploration and the other half on threads: chains of points that
hop across the decision boundary at a fixed step, seeded by bisection
between differently-labelled uniform draws.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .copies import TrainConfig, TrainingError, train
from .core import (
    LabeledSample,
    RandomSource,
    SampleSpace,
    SyntheticDataset,
    round_half_up,
    uniform_sample,
)
from .oracles import Oracle

log = logging.getLogger(__name__)

ALPHA_SWEEP = np.linspace(1.0, -1.0, 21)

# A scan this long without a label change means the oracle looks constant.
_CONSTANT_SCAN_FACTOR = 10


@dataclass(frozen=True)
class BoundaryParams:
    """Knobs for the boundary sampler.

    The bisection tolerance must stay small against the exploration step or
    threads start from points the step immediately overshoots.  `runs`,
    `max_threads` and `max_steps` default to budget-dependent values
    round(2 + ln N), round(8 + 4 ln N) and floor(5 + 2.6 ln N).
    """

    epsilon: float = 0.01
    step: float = 0.05
    spawn_rate: float = 5.0
    runs: int | None = None
    max_threads: int | None = None
    max_steps: int | None = None

    def __post_init__(self):
        if not 0 < self.epsilon < self.step:
            raise ValueError("need 0 < epsilon < step")
        if self.spawn_rate <= 0:
            raise ValueError("spawn_rate must be positive")

    def resolved(self, n: int) -> "BoundaryParams":
        """Fill budget-dependent defaults for a total budget of n samples."""
        ln = math.log(n)
        return replace(
            self,
            runs=self.runs if self.runs is not None else round_half_up(2 + ln),
            max_threads=self.max_threads
            if self.max_threads is not None
            else round_half_up(8 + 4 * ln),
            max_steps=self.max_steps
            if self.max_steps is not None
            else int(math.floor(5 + 2.6 * ln)),
        )


@dataclass(frozen=True)
class JacobianParams:
    """Knobs for gradient-sign augmentation.

    `refits` caps substitute retrainings at min(100, round(5 + N/4)) by
    default; `rounds` is how many augmentation passes each substitute is
    spent on before refitting.
    """

    refits: int | None = None
    seeds_per_refit: int = 50
    step: float = 0.05
    rounds: int = 5

    def __post_init__(self):
        if self.seeds_per_refit < 1 or self.rounds < 1 or self.step <= 0:
            raise ValueError("seeds_per_refit, rounds and step must be positive")

    def resolved(self, n: int) -> "JacobianParams":
        if self.refits is not None:
            return self
        return replace(self, refits=min(100, round_half_up(5 + n / 4)))


@dataclass
class Thread:
    """State of one boundary-hugging chain of samples."""

    current: LabeledSample
    direction: np.ndarray
    steps_taken: int
    spawn_countdown: int


def random_sampler(
    N: int,
    oracle: Oracle,
    rng: RandomSource,
    progress=None,
) -> SyntheticDataset:
    """N i.i.d. uniform points, each labelled by one oracle query."""
    if N < 1:
        raise ValueError("budget must be at least 1")
    space = SampleSpace(oracle.d)
    q0 = oracle.query_count
    pts = []
    labels = []
    for _ in range(N):
        z = uniform_sample(space, rng)
        pts.append(z)
        labels.append(oracle.query(z))
        if progress is not None:
            progress(len(pts))
    return SyntheticDataset(
        X=np.array(pts),
        y=np.array(labels),
        k=oracle.k,
        generator_id="random",
        seed=rng.seed,
        query_count=oracle.query_count - q0,
    )


def binary_search_boundary(
    z_a: LabeledSample,
    z_b: LabeledSample,
    eps: float,
    oracle: Oracle,
) -> tuple[tuple[LabeledSample, LabeledSample], list[LabeledSample]]:
    """Bisect between two differently-labelled points until they are < eps apart.

    Returns the final straddling pair plus every queried midpoint in visit
    order (the midpoints belong to the synthetic set; the caller appends
    them).  The label of the returned a-side equals z_a's label throughout.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if z_a.label == z_b.label:
        raise ValueError("endpoints must carry different labels")
    a, ya = z_a.point, z_a.label
    b, yb = z_b.point, z_b.label
    visited: list[LabeledSample] = []
    while float(np.linalg.norm(a - b)) >= eps:
        mid = (a + b) / 2.0
        ym = oracle.query(mid)
        visited.append(LabeledSample(mid, ym))
        if ym != ya:
            b, yb = mid, ym
        else:
            a, ya = mid, ym
    return (LabeledSample(a, ya), LabeledSample(b, yb)), visited


def _draw_spawn_gap(rng: RandomSource, rate: float) -> int:
    # Zero draws are rounded up so a spawn always waits for a fresh point.
    return max(1, rng.poisson(rate))


def _random_unit(rng: RandomSource, d: int) -> np.ndarray:
    while True:
        u = rng.normal(d)
        norm = float(np.linalg.norm(u))
        if norm > 1e-12:
            return u / norm


def _orthonormal_to(u: np.ndarray, rng: RandomSource) -> np.ndarray:
    while True:
        g = rng.normal(u.shape[0])
        w = g - float(g @ u) * u
        norm = float(np.linalg.norm(w))
        if norm > 1e-12:
            return w / norm


def thread_step(
    thread: Thread,
    oracle: Oracle,
    step: float,
    spawn_rate: float,
    rng: RandomSource,
    pending: deque,
) -> Thread | None:
    """Advance a thread by one boundary-crossing step, or stop it.

    Sweeps the blend factor alpha from +1 down to -1 between the previous
    direction u and a fresh orthonormal direction w (drawn once per step),
    accepting the first unit direction v = alpha*u + sqrt(1-alpha^2)*w whose
    probe at distance `step` lands on the other side of the boundary.  One
    oracle query is spent per alpha tried.  The thread stops when a probe
    leaves the hypercube or when no alpha changes the label.  Accepted
    points spawn a pending thread each time the countdown reaches zero.
    """
    z = thread.current.point
    y = thread.current.label
    d = z.shape[0]
    u = thread.direction
    w = _orthonormal_to(u, rng) if d > 1 else None
    for alpha in ALPHA_SWEEP:
        if w is None:
            if alpha not in (1.0, -1.0):
                continue
            v = alpha * u
        else:
            v = alpha * u + math.sqrt(max(0.0, 1.0 - alpha * alpha)) * w
        probe = z + step * v
        if np.any(probe < 0.0) or np.any(probe > 1.0):
            return None
        label = oracle.query(probe)
        if label != y:
            countdown = thread.spawn_countdown - 1
            advanced = Thread(
                current=LabeledSample(probe, label),
                direction=v,
                steps_taken=thread.steps_taken + 1,
                spawn_countdown=countdown,
            )
            if countdown <= 0:
                pending.append(advanced.current)
                advanced.spawn_countdown = _draw_spawn_gap(rng, spawn_rate)
            return advanced
    return None


def boundary_sampler(
    N: int,
    oracle: Oracle,
    params: BoundaryParams | None = None,
    rng: RandomSource | None = None,
    progress=None,
) -> SyntheticDataset:
    """Half uniform exploration, half boundary exploitation.

    The uniform block comes first; the remaining ceil(N/2) samples come from
    repeated rounds of: uniform scanning until two consecutive draws
    disagree, bisection down to `epsilon`, then up to `max_threads` threads
    (seeded with `runs` copies of the bisection endpoint plus any spawned
    samples) of at most `max_steps` crossing steps each.  If a scan sees ten
    times `max_steps` draws without a label change the oracle is treated as
    constant and the remainder is filled uniformly, recorded in metadata.
    """
    if N < 2:
        raise ValueError("budget must be at least 2")
    if rng is None:
        raise ValueError("rng is required")
    params = (params or BoundaryParams()).resolved(N)
    space = SampleSpace(oracle.d)
    q0 = oracle.query_count
    pts: list[np.ndarray] = []
    labels: list[int] = []

    def emit(point, label):
        pts.append(np.asarray(point, dtype=np.float64))
        labels.append(int(label))
        if progress is not None:
            progress(len(pts))

    uniform_quota = N // 2
    for _ in range(uniform_quota):
        z = uniform_sample(space, rng)
        emit(z, oracle.query(z))

    fallback = False
    scan_limit = _CONSTANT_SCAN_FACTOR * params.max_steps
    while len(pts) < N and not fallback:
        # uniform scan until two consecutive draws disagree
        z_a = uniform_sample(space, rng)
        y_a = oracle.query(z_a)
        same_run = 0
        found = False
        while len(pts) < N:
            z_b, y_b = z_a, y_a
            z_a = uniform_sample(space, rng)
            y_a = oracle.query(z_a)
            emit(z_a, y_a)
            if y_a != y_b:
                found = True
                break
            same_run += 1
            if same_run >= scan_limit:
                fallback = True
                log.warning(
                    "no label change in %d uniform probes; finishing uniformly",
                    scan_limit,
                )
                break
        if not found or len(pts) >= N:
            continue

        pair, visited = binary_search_boundary(
            LabeledSample(z_a, y_a), LabeledSample(z_b, y_b), params.epsilon, oracle
        )
        for sample in visited:
            if len(pts) >= N:
                break
            emit(sample.point, sample.label)
        seed_sample = visited[-1] if visited else pair[1]

        pending: deque[LabeledSample] = deque([seed_sample] * params.runs)
        starts = 0
        while pending and starts < params.max_threads and len(pts) < N:
            origin = pending.popleft()
            starts += 1
            thread = Thread(
                current=origin,
                direction=_random_unit(rng, space.d),
                steps_taken=0,
                spawn_countdown=_draw_spawn_gap(rng, params.spawn_rate),
            )
            while thread.steps_taken < params.max_steps and len(pts) < N:
                advanced = thread_step(
                    thread, oracle, params.step, params.spawn_rate, rng, pending
                )
                if advanced is None:
                    break
                thread = advanced
                emit(thread.current.point, thread.current.label)

    while len(pts) < N:  # constant-oracle fallback fill
        z = uniform_sample(space, rng)
        emit(z, oracle.query(z))

    return SyntheticDataset(
        X=np.array(pts),
        y=np.array(labels),
        k=oracle.k,
        generator_id="boundary",
        seed=rng.seed,
        query_count=oracle.query_count - q0,
        metadata={
            "phase_split": uniform_quota,
            "fallback_uniform": fallback,
            "epsilon": params.epsilon,
            "step": params.step,
            "spawn_rate": params.spawn_rate,
            "runs": params.runs,
            "max_threads": params.max_threads,
            "max_steps": params.max_steps,
        },
    )


def jacobian_sampler(
    N: int,
    oracle: Oracle,
    params: JacobianParams | None = None,
    rng: RandomSource | None = None,
    progress=None,
    trace: list | None = None,
) -> SyntheticDataset:
    """Substitute-driven augmentation along the sign of the score gradient.

    Starts from `seeds_per_refit` uniform labelled seeds.  Each refit trains
    a multinomial logistic substitute on everything collected so far, then
    spends it on `rounds` passes that push every retained point z one step
    of lambda*sign(grad_z p_c(z)) with c the oracle label of z, clip to the
    hypercube, and query the oracle at the result.  Offsets therefore have
    componentwise magnitude lambda before clipping, which draws the familiar
    diagonal streaks.  `trace`, when given, collects (source, pre-clip)
    pairs for inspection.
    """
    if rng is None:
        raise ValueError("rng is required")
    params = (params or JacobianParams()).resolved(N)
    if N < params.seeds_per_refit:
        raise ValueError(
            f"budget N={N} cannot cover the {params.seeds_per_refit} uniform seeds"
        )
    space = SampleSpace(oracle.d)
    q0 = oracle.query_count
    pts: list[np.ndarray] = []
    labels: list[int] = []

    def emit(point, label):
        pts.append(np.asarray(point, dtype=np.float64))
        labels.append(int(label))
        if progress is not None:
            progress(len(pts))

    for _ in range(params.seeds_per_refit):
        z = uniform_sample(space, rng)
        emit(z, oracle.query(z))

    substitute = None
    refit_attempts = 0
    refits_skipped = 0
    filled_uniform = False
    while len(pts) < N and refit_attempts < params.refits:
        refit_attempts += 1
        pool = SyntheticDataset(
            X=np.array(pts),
            y=np.array(labels),
            k=oracle.k,
            generator_id="jacobian-substitute-pool",
            seed=rng.seed,
            query_count=len(pts),
        )
        try:
            # the substitute only supplies gradient signs, so a light
            # training budget keeps refits linear in the collected pool
            substitute = train(
                "lr", pool,
                TrainConfig(seed=rng.integers(1 << 62), epochs=150, batch_size=256),
            )
        except TrainingError as exc:
            refits_skipped += 1
            log.warning("substitute refit skipped (%s); reusing previous", exc)
        for _ in range(params.rounds):
            if len(pts) >= N:
                break
            base_X = np.array(pts)
            base_y = np.array(labels)
            if substitute is not None and substitute.constant_label is None:
                grads = substitute.input_gradients(base_X, base_y)
            else:
                grads = np.zeros_like(base_X)
            for z, grad in zip(base_X, grads):
                if len(pts) >= N:
                    break
                signs = np.sign(grad)
                if not signs.any():
                    # degenerate substitute: fall back to a random diagonal
                    signs = np.where(rng.uniform(space.d) < 0.5, -1.0, 1.0)
                pre_clip = z + params.step * signs
                if trace is not None:
                    trace.append((z.copy(), pre_clip.copy()))
                z_new = space.clip(pre_clip)
                emit(z_new, oracle.query(z_new))

    while len(pts) < N:  # guard for exhausted refit budgets
        filled_uniform = True
        z = uniform_sample(space, rng)
        emit(z, oracle.query(z))

    return SyntheticDataset(
        X=np.array(pts),
        y=np.array(labels),
        k=oracle.k,
        generator_id="jacobian",
        seed=rng.seed,
        query_count=oracle.query_count - q0,
        metadata={
            "refit_attempts": refit_attempts,
            "refits_skipped": refits_skipped,
            "filled_uniform": filled_uniform,
            "seeds_per_refit": params.seeds_per_refit,
            "step": params.step,
            "rounds": params.rounds,
            "refit_cap": params.refits,
        },
    )
