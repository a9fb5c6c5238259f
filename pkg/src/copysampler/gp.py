"""Gaussian-process machinery and the uncertainty-driven samplers.

The decision function is modelled as a zero-mean GP with a squared
exponential kernel, regressing directly on class indices.  Sampling then
chases an acquisition score that is large where the posterior variance is
high and where the posterior mean sits between integer labels, i.e. near a
class transition.  The fast sampler amortizes posterior fits over batches
and caps the conditioning set; the reference variant refits after every
sample and exists only as a small-scale quality yardstick.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular, LinAlgError

from .core import (
    CopySamplerError,
    RandomSource,
    SampleSpace,
    SyntheticDataset,
    round_half_up,
    uniform_sample,
)
from .oracles import Oracle

log = logging.getLogger(__name__)

INIT_COUNT = 10
REFERENCE_BUDGET_LIMIT = 500

# Initial jitter is kept tiny so the posterior still interpolates its
# support to ~1e-6; escalation covers genuinely degenerate fits.
JITTER_INITIAL_FACTOR = 1e-12
JITTER_MAX_FACTOR = 1e-4


class PosteriorFitError(CopySamplerError):
    """Covariance stayed non-positive-definite after jitter escalation."""


class ScaleGuardError(CopySamplerError):
    """The reference sampler was asked for more than its test-scale budget."""


@dataclass(frozen=True)
class SEKernel:
    """Squared exponential covariance: variance * exp(-|z - z'|^2 / (2 l^2))."""

    length_scale: float
    variance: float

    def __post_init__(self):
        if self.length_scale <= 0 or self.variance <= 0:
            raise ValueError("length_scale and variance must be positive")

    @classmethod
    def for_problem(cls, d: int, k: int) -> "SEKernel":
        """Default hyperparameters: l = 0.5 sqrt(d), variance = 0.25 k^2."""
        return cls(length_scale=0.5 * math.sqrt(d), variance=0.25 * k * k)

    def matrix(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        sq = (
            (A * A).sum(axis=1)[:, None]
            + (B * B).sum(axis=1)[None, :]
            - 2.0 * (A @ B.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return self.variance * np.exp(-sq / (2.0 * self.length_scale**2))


def kernel_eval(kern: SEKernel, z: np.ndarray, z2: np.ndarray) -> float:
    z = np.asarray(z, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z.shape != z2.shape:
        raise ValueError("kernel arguments must share a dimension")
    sq = float(((z - z2) ** 2).sum())
    return kern.variance * math.exp(-sq / (2.0 * kern.length_scale**2))


@dataclass(frozen=True)
class AcquisitionParams:
    """Trade-off knob between raw variance and boundary refinement."""

    tau: float = 10.0

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be non-negative")


@dataclass(frozen=True)
class FastBayesParams:
    cap: int = 1000            # most samples used to condition one posterior
    slowness: float = 20.0     # inverse fraction of new points per refit
    init_count: int = INIT_COUNT
    local_iters: int = 10

    def __post_init__(self):
        if not self.cap >= self.init_count >= 1:
            raise ValueError("need cap >= init_count >= 1")
        if self.slowness < 1:
            raise ValueError("slowness factor must be >= 1")


class GPPosterior:
    """Zero-mean GP conditioned on labelled support; immutable after fit."""

    def __init__(self, X: np.ndarray, y: np.ndarray, kern: SEKernel,
                 factor: np.ndarray, jitter: float):
        self.support_X = X
        self.support_y = y
        self.kernel = kern
        self.factor = factor  # lower-triangular Cholesky of K + jitter*I
        self.jitter = jitter
        if len(y):
            tmp = solve_triangular(factor, y, lower=True)
            self._alpha = solve_triangular(factor.T, tmp, lower=False)
        else:
            self._alpha = np.empty(0)

    @classmethod
    def prior(cls, kern: SEKernel) -> "GPPosterior":
        """Unconditioned process: mean 0, variance `kern.variance` everywhere."""
        return cls(np.empty((0, 1)), np.empty(0), kern,
                   np.empty((0, 0)), JITTER_INITIAL_FACTOR * kern.variance)

    def __len__(self) -> int:
        return int(self.support_y.shape[0])

    def mean_var(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at each row of Z."""
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        if len(self) == 0:
            m = Z.shape[0]
            return np.zeros(m), np.full(m, self.kernel.variance)
        Ks = self.kernel.matrix(self.support_X, Z)
        mu = Ks.T @ self._alpha
        V = solve_triangular(self.factor, Ks, lower=True)
        var = self.kernel.variance - (V * V).sum(axis=0)
        np.maximum(var, 0.0, out=var)
        return mu, var


def posterior_fit(X: np.ndarray, y: np.ndarray, kern: SEKernel,
                  jitter: float | None = None) -> GPPosterior:
    """Condition a zero-mean GP on (X, y) with class indices as targets.

    The diagonal jitter starts at 1e-12 * variance and doubles on each
    factorization failure, giving up at 1e-4 * variance.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] < 1:
        raise ValueError("need at least one support sample")
    if X.shape[0] != y.shape[0]:
        raise ValueError("support point/target mismatch")
    jit = JITTER_INITIAL_FACTOR * kern.variance if jitter is None else float(jitter)
    cap = JITTER_MAX_FACTOR * kern.variance
    K = kern.matrix(X, X)
    eye = np.eye(X.shape[0])
    while True:
        try:
            L = cholesky(K + jit * eye, lower=True)
            return GPPosterior(X, y, kern, L, jit)
        except LinAlgError:
            jit *= 2.0
            if jit > cap:
                raise PosteriorFitError(
                    f"covariance not positive definite up to jitter {cap:g}"
                ) from None


def posterior_mean_var(gp: GPPosterior, z: np.ndarray) -> tuple[float, float]:
    mu, var = gp.mean_var(np.asarray(z, dtype=np.float64)[None, :])
    return float(mu[0]), float(var[0])


def acquisition_value(mu, var, tau: float):
    """var * [1 + tau * frac(mu)^2 (1 - frac(mu))^2] with frac(x) = x - floor(x)."""
    mu = np.asarray(mu, dtype=np.float64)
    frac = mu - np.floor(mu)
    return np.asarray(var, dtype=np.float64) * (1.0 + tau * frac**2 * (1.0 - frac) ** 2)


def acquisition(gp: GPPosterior, z: np.ndarray, params: AcquisitionParams) -> float:
    mu, var = gp.mean_var(np.asarray(z, dtype=np.float64)[None, :])
    return float(acquisition_value(mu, var, params.tau)[0])


# The local search is confined to a box of this half-width around its
# restart point.  Keeping it genuinely local stops independent restarts
# within one batch from collapsing onto a shared acquisition maximum.
NEIGHBOURHOOD_RADIUS = 0.075


def maximize_acquisition(
    gp: GPPosterior,
    z0: np.ndarray,
    iters: int,
    rng: RandomSource,
    params: AcquisitionParams | None = None,
    radius: float = NEIGHBOURHOOD_RADIUS,
) -> np.ndarray:
    """Derivative-free ascent of the acquisition in a neighbourhood of z0.

    Pattern search: per round, probe +-h along each axis plus one random
    direction, move to the best improving candidate, halve h otherwise.
    Candidates are clipped to the box of half-width `radius` around z0
    intersected with the hypercube, so the result stays near its restart
    point and never scores below it.
    """
    params = params or AcquisitionParams()
    z0 = np.clip(np.asarray(z0, dtype=np.float64), 0.0, 1.0)
    lo = np.maximum(z0 - radius, 0.0)
    hi = np.minimum(z0 + radius, 1.0)
    z = z0.copy()
    d = z.shape[0]
    mu, var = gp.mean_var(z[None, :])
    best = float(acquisition_value(mu, var, params.tau)[0])
    h = 2.0 * radius / 3.0
    for _ in range(iters):
        moves = np.zeros((2 * d + 2, d))
        for i in range(d):
            moves[2 * i, i] = h
            moves[2 * i + 1, i] = -h
        u = rng.normal(d)
        norm = float(np.linalg.norm(u))
        if norm > 0:
            moves[-2] = h * u / norm
            moves[-1] = -h * u / norm
        cands = np.clip(z[None, :] + moves, lo, hi)
        mu, var = gp.mean_var(cands)
        vals = acquisition_value(mu, var, params.tau)
        j = int(np.argmax(vals))
        if vals[j] > best:
            z = cands[j]
            best = float(vals[j])
        else:
            h *= 0.5
    return z


def round_to_class(mu: float, k: int) -> int:
    """Map a posterior mean to the nearest valid class index (ties up)."""
    if k < 2:
        raise ValueError("k must be >= 2")
    return int(min(max(round_half_up(mu), 0), k - 1))


def _uniform_init(count, oracle, space, rng, pts, labels, progress):
    for _ in range(count):
        z = uniform_sample(space, rng)
        pts.append(z)
        labels.append(oracle.query(z))
        if progress is not None:
            progress(len(pts))


def fast_bayesian_sampler(
    N: int,
    oracle: Oracle,
    params: FastBayesParams | None = None,
    kern: SEKernel | None = None,
    acq: AcquisitionParams | None = None,
    rng: RandomSource | None = None,
    progress=None,
) -> SyntheticDataset:
    """Batched uncertainty sampling with a capped posterior.

    Starts from `init_count` uniform labelled points, then repeatedly fits
    one posterior on at most `cap` samples and spends it on a batch of
    max(1, round(|support| / slowness)) acquisition maximizations, each
    started from an independent uniform restart.  Conditioning subsets are
    drawn uniformly without replacement whenever the sample pool exceeds
    the cap.
    """
    params = params or FastBayesParams()
    kern = kern or SEKernel.for_problem(oracle.d, oracle.k)
    acq = acq or AcquisitionParams()
    if rng is None:
        raise ValueError("rng is required")
    if N < params.init_count:
        raise ValueError(f"budget N={N} below the uniform init count {params.init_count}")
    space = SampleSpace(oracle.d)
    q0 = oracle.query_count
    pts: list[np.ndarray] = []
    labels: list[int] = []
    _uniform_init(params.init_count, oracle, space, rng, pts, labels, progress)
    fits = 0
    fallback_batches = 0
    while len(pts) < N:
        X = np.array(pts)
        yv = np.array(labels, dtype=np.float64)
        if len(pts) > params.cap:
            idx = rng.subset(len(pts), params.cap)
            X, yv = X[idx], yv[idx]
        try:
            gp = posterior_fit(X, yv, kern)
            fits += 1
        except PosteriorFitError:
            gp = None
            fallback_batches += 1
            log.warning("posterior fit failed at %d samples; uniform batch", len(pts))
        batch = max(1, round_half_up(X.shape[0] / params.slowness))
        for _ in range(batch):
            if len(pts) >= N:
                break
            z0 = uniform_sample(space, rng)
            if gp is None:
                z = z0
            else:
                z = maximize_acquisition(gp, z0, params.local_iters, rng, acq)
            pts.append(z)
            labels.append(oracle.query(z))
            if progress is not None:
                progress(len(pts))
    return SyntheticDataset(
        X=np.array(pts),
        y=np.array(labels),
        k=oracle.k,
        generator_id="bayesian",
        seed=rng.seed,
        query_count=oracle.query_count - q0,
        metadata={
            "posterior_fits": fits,
            "fallback_batches": fallback_batches,
            "cap": params.cap,
            "slowness": params.slowness,
            "tau": acq.tau,
            "length_scale": kern.length_scale,
            "kernel_variance": kern.variance,
        },
    )


def reference_bayesian_sampler(
    N: int,
    oracle: Oracle,
    kern: SEKernel | None = None,
    acq: AcquisitionParams | None = None,
    rng: RandomSource | None = None,
    local_iters: int = 10,
) -> SyntheticDataset:
    """Fully re-optimized variant: refit on all samples after every point.

    Cubic in N, so it refuses budgets above REFERENCE_BUDGET_LIMIT; it
    exists only as a fidelity yardstick for the fast sampler.
    """
    kern = kern or SEKernel.for_problem(oracle.d, oracle.k)
    acq = acq or AcquisitionParams()
    if rng is None:
        raise ValueError("rng is required")
    if N > REFERENCE_BUDGET_LIMIT:
        raise ScaleGuardError(
            f"reference sampler is capped at {REFERENCE_BUDGET_LIMIT} samples, got {N}"
        )
    if N < INIT_COUNT:
        raise ValueError(f"budget N={N} below the uniform init count {INIT_COUNT}")
    space = SampleSpace(oracle.d)
    q0 = oracle.query_count
    pts: list[np.ndarray] = []
    labels: list[int] = []
    _uniform_init(INIT_COUNT, oracle, space, rng, pts, labels, None)
    fits = 0
    while len(pts) < N:
        try:
            gp = posterior_fit(np.array(pts), np.array(labels, dtype=np.float64), kern)
            fits += 1
        except PosteriorFitError:
            gp = None
        z0 = uniform_sample(space, rng)
        z = z0 if gp is None else maximize_acquisition(gp, z0, local_iters, rng, acq)
        pts.append(z)
        labels.append(oracle.query(z))
    return SyntheticDataset(
        X=np.array(pts),
        y=np.array(labels),
        k=oracle.k,
        generator_id="bayesian-ref",
        seed=rng.seed,
        query_count=oracle.query_count - q0,
        metadata={"posterior_fits": fits, "tau": acq.tau,
                  "length_scale": kern.length_scale,
                  "kernel_variance": kern.variance},
    )
