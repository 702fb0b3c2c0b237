"""Randomized finite-difference gradient estimators over a metered oracle.

Directions come in two flavors: distinct coordinate axes drawn without
replacement, or i.i.d. uniform unit-sphere vectors.  Either way a batch
estimate shares a single base evaluation f(x) across its directions, so a
batch of size m costs exactly m + 1 queries, and the deterministic
all-coordinates estimate costs d + 1.

The variance-reduced estimate recenters a batch estimate at x by the cached
full estimate at an anchor w:

    g = gbatch(x) - (1/m) sum_u d <ref, u> u + ref,

whose rank-one correction has expectation exactly `ref` under both sampling
schemes (E[d u u'] is the identity), so g stays conditionally unbiased for
the smoothed gradient at x while its variance shrinks as x and w approach
the same point.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .problems import OracleError, OracleProblem

__all__ = [
    "SamplingOption",
    "DirectionBatch",
    "GradientEstimate",
    "sample_coordinate_batch",
    "sample_sphere_batch",
    "sample_batch",
    "two_point",
    "minibatch_estimate",
    "full_estimate",
    "vr_gradient",
]


class SamplingOption(enum.Enum):
    COORDINATE = "coordinate"
    SPHERE = "sphere"


@dataclass
class DirectionBatch:
    """A set of unit directions, rows of `directions` (shape m-by-d).

    Coordinate batches hold distinct axis vectors (at most d of them);
    sphere batches hold unit-norm rows.  Both facts are checked here so a
    hand-built batch obeys the same contract as a sampled one.
    """

    directions: np.ndarray
    option: SamplingOption
    indices: np.ndarray | None = None  # coordinate axes, when applicable

    def __post_init__(self):
        directions = np.asarray(self.directions, dtype=float)
        if directions.ndim != 2 or directions.shape[0] < 1:
            raise ValueError("directions must be a nonempty m-by-d array")
        m, d = directions.shape
        if self.option is SamplingOption.SPHERE:
            norms = np.linalg.norm(directions, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-12):
                raise ValueError("sphere directions must have unit norm")
        else:
            if m > d:
                raise ValueError(f"coordinate batch of {m} exceeds d={d}")
            idx = directions.argmax(axis=1)
            axes = np.zeros((m, d))
            axes[np.arange(m), idx] = 1.0
            if not np.array_equal(directions, axes) \
                    or len(set(idx.tolist())) != m:
                raise ValueError("coordinate directions must be distinct axes")
            if self.indices is None:
                self.indices = idx

    @property
    def batch_size(self) -> int:
        return self.directions.shape[0]


def sample_coordinate_batch(d: int, batch_size: int, rng: np.random.Generator) -> DirectionBatch:
    """Draw batch_size distinct coordinate axes, each subset equally likely."""
    if not 1 <= batch_size <= d:
        raise ValueError(f"batch_size must be in [1, {d}], got {batch_size}")
    idx = rng.choice(d, size=batch_size, replace=False)
    directions = np.zeros((batch_size, d))
    directions[np.arange(batch_size), idx] = 1.0
    return DirectionBatch(directions, SamplingOption.COORDINATE, idx)


def sample_sphere_batch(d: int, batch_size: int, rng: np.random.Generator) -> DirectionBatch:
    """Draw batch_size i.i.d. uniform directions on the unit sphere."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    directions = rng.standard_normal((batch_size, d))
    norms = np.linalg.norm(directions, axis=1)
    while np.any(norms == 0.0):  # pragma: no cover - probability zero in practice
        bad = norms == 0.0
        directions[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(directions, axis=1)
    return DirectionBatch(directions / norms[:, None], SamplingOption.SPHERE)


def sample_batch(option: SamplingOption, d: int, batch_size: int,
                 rng: np.random.Generator) -> DirectionBatch:
    if option is SamplingOption.COORDINATE:
        return sample_coordinate_batch(d, batch_size, rng)
    if option is SamplingOption.SPHERE:
        return sample_sphere_batch(d, batch_size, rng)
    raise ValueError(f"unknown sampling option: {option!r}")


@dataclass
class GradientEstimate:
    vector: np.ndarray
    queries_used: int


def _checked(value: float, problem: OracleProblem, point: np.ndarray) -> float:
    if not np.isfinite(value):
        raise OracleError(f"oracle returned {value} at point {point}")
    return value


def two_point(problem: OracleProblem, x: np.ndarray, u: np.ndarray,
              beta: float, f_x: float | None = None) -> np.ndarray:
    """Single-direction forward-difference estimate d * (f(x+beta*u) - f(x))/beta * u.

    Passing a precomputed f_x shares the base query; otherwise one extra
    query pays for it.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if f_x is None:
        f_x = _checked(problem.eval_f(x), problem, x)
    probe = x + beta * u
    f_probe = _checked(problem.eval_f(probe), problem, probe)
    return (problem.dimension * (f_probe - f_x) / beta) * u


def minibatch_estimate(problem: OracleProblem, x: np.ndarray,
                       batch: DirectionBatch, beta: float) -> GradientEstimate:
    """Average of two-point estimates over the batch, sharing one base query."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    d = problem.dimension
    m = batch.batch_size
    f_x = _checked(problem.eval_f(x), problem, x)
    coeffs = np.empty(m)
    for j in range(m):
        probe = x + beta * batch.directions[j]
        coeffs[j] = _checked(problem.eval_f(probe), problem, probe)
    coeffs = d * (coeffs - f_x) / beta
    vector = (coeffs @ batch.directions) / m
    return GradientEstimate(vector, m + 1)


def full_estimate(problem: OracleProblem, x: np.ndarray, beta: float) -> GradientEstimate:
    """Deterministic forward-difference gradient over all d coordinates.

    Component i is (f(x + beta e_i) - f(x)) / beta; cost d + 1 queries.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    d = problem.dimension
    f_x = _checked(problem.eval_f(x), problem, x)
    vector = np.empty(d)
    for i in range(d):
        probe = x.copy()
        probe[i] += beta
        vector[i] = _checked(problem.eval_f(probe), problem, probe)
    vector = (vector - f_x) / beta
    return GradientEstimate(vector, d + 1)


def vr_gradient(problem: OracleProblem, x: np.ndarray, w: np.ndarray,
                ref_grad: np.ndarray, batch: DirectionBatch, beta: float) -> GradientEstimate:
    """Variance-reduced batch estimate at x recentered by the cached full
    estimate ref_grad (taken at the anchor w, which itself costs nothing here).

    Cost is batch_size + 1 queries, identical to the plain batch estimate.
    """
    est = minibatch_estimate(problem, x, batch, beta)
    d = problem.dimension
    U = batch.directions
    # (1/m) sum_u d <ref, u> u, computed for both direction families alike
    correction = (d / batch.batch_size) * ((U @ ref_grad) @ U)
    return GradientEstimate(est.vector - correction + ref_grad, est.queries_used)
