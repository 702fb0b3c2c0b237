"""Empirical verification that the implementation meets its error bounds.

Each check measures a quantity the analysis bounds — estimator bias and
second moment, per-direction error, exhaustive batch expectations, potential
decay — and compares it against the closed-form bound with an explicit slack.
Deterministic (exhaustive) checks use no slack beyond float tolerance;
Monte-Carlo checks default to 5%.

Monte-Carlo sampling is vectorized for speed; the vectorized evaluation is
cross-checked against the scalar estimator code path on a few samples each
run, so the checks exercise the same arithmetic solvers rely on.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .estimators import (
    DirectionBatch,
    SamplingOption,
    full_estimate,
    minibatch_estimate,
    two_point,
    vr_gradient,
)
from .problems import OracleProblem
from .solvers import (
    Budget,
    Instrumentation,
    KatyushaParams,
    lyapunov,
    run_katyusha,
    variance_constant,
)

__all__ = [
    "CheckResult",
    "check_per_direction_error",
    "check_coordinate_bias",
    "check_coordinate_variance",
    "check_batch_mean_identity",
    "check_vr_conditional_unbiasedness",
    "check_sphere_bias",
    "check_sphere_variance",
    "check_decay",
    "decay_regression",
    "verify_theory",
]

MC_SLACK = 0.05


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    bound: float
    detail: str = ""

    @property
    def slack(self) -> float:
        return self.measured / self.bound if self.bound != 0 else math.inf

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: measured {self.measured:.6g} "
                f"vs bound {self.bound:.6g} ({self.detail})")


def _grad(problem: OracleProblem, x: np.ndarray) -> np.ndarray:
    if problem.reference_gradient is None:
        raise ValueError("verification needs a problem with an exact gradient")
    return problem.reference_gradient(x)


def _bregman(problem: OracleProblem, w: np.ndarray, x: np.ndarray) -> float:
    return (problem.f_exact(w) - problem.f_exact(x)
            - float(_grad(problem, x) @ (w - x)))


def _batch_f(problem: OracleProblem, X: np.ndarray) -> np.ndarray:
    """Meterless function values for many points at once (bound checks only)."""
    fn = problem.smooth_part
    if hasattr(fn, "batch_values"):
        return np.asarray(fn.batch_values(X), dtype=float)
    return np.array([problem.f_exact(row) for row in X])


def _coordinate_batch(indices, d: int) -> DirectionBatch:
    idx = np.asarray(indices, dtype=int)
    directions = np.zeros((idx.size, d))
    directions[np.arange(idx.size), idx] = 1.0
    return DirectionBatch(directions, SamplingOption.COORDINATE, idx)


# ---------------------------------------------------------------------------
# per-direction and coordinate (exhaustive) checks
# ---------------------------------------------------------------------------

def check_per_direction_error(problem: OracleProblem, rng: np.random.Generator,
                              beta: float, n_points: int = 10,
                              n_dirs: int = 40, x_scale: float = 1.0) -> CheckResult:
    """Single-direction estimates stay within d L beta / 2 of the exact
    directional gradient d <grad f(x), u> u, for sphere and axis directions."""
    d = problem.dimension
    bound = d * problem.L * beta / 2.0
    worst = 0.0
    for _ in range(n_points):
        x = x_scale * rng.standard_normal(d)
        grad = _grad(problem, x)
        dirs = rng.standard_normal((n_dirs, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        axes = rng.choice(d, size=min(d, 8), replace=False)
        for u in itertools.chain(dirs, np.eye(d)[axes]):
            est = two_point(problem, x, u, beta)
            err = float(np.linalg.norm(est - d * float(grad @ u) * u))
            worst = max(worst, err)
    passed = worst <= bound * (1.0 + 1e-9)
    return CheckResult("per-direction-error", passed, worst, bound,
                       f"d={d}, beta={beta:g}")


def check_coordinate_bias(problem: OracleProblem, rng: np.random.Generator,
                          beta: float, n_points: int = 10,
                          x_scale: float = 1.0) -> CheckResult:
    """Squared bias of the all-coordinates estimate: ||ghat - grad f||^2
    <= L^2 beta^2 d / 4 (this is also the bias of any coordinate batch,
    whose exhaustive mean equals the all-coordinates estimate)."""
    d = problem.dimension
    bound = problem.L ** 2 * beta ** 2 * d / 4.0
    worst = 0.0
    for _ in range(n_points):
        x = x_scale * rng.standard_normal(d)
        ghat = full_estimate(problem, x, beta).vector
        err = float(np.sum((ghat - _grad(problem, x)) ** 2))
        worst = max(worst, err)
    passed = worst <= bound * (1.0 + 1e-9)
    return CheckResult("coordinate-bias", passed, worst, bound,
                       f"d={d}, beta={beta:g}, {n_points} points")


def _all_coordinate_batches(d: int, m: int):
    for combo in itertools.combinations(range(d), m):
        yield _coordinate_batch(combo, d)


def check_coordinate_variance(problem: OracleProblem, x: np.ndarray,
                              w: np.ndarray, beta: float,
                              batch_size: int) -> CheckResult:
    """Exhaustive second moment of the variance-reduced coordinate estimate:

        E||g - grad f(x)||^2 <= 4d(d-m)L/((d-1)m) * D_f(w, x) + 2 L^2 beta^2 d^2,

    averaging over every size-m coordinate subset (small d only)."""
    d = problem.dimension
    m = batch_size
    ref = full_estimate(problem, x=w, beta=beta).vector
    grad_x = _grad(problem, x)
    total = 0.0
    count = 0
    for batch in _all_coordinate_batches(d, m):
        g = vr_gradient(problem, x, w, ref, batch, beta).vector
        total += float(np.sum((g - grad_x) ** 2))
        count += 1
    measured = total / count
    lead = 0.0 if m == d else 4.0 * d * (d - m) / ((d - 1.0) * m)
    bound = (lead * problem.L * _bregman(problem, w, x)
             + 2.0 * problem.L ** 2 * beta ** 2 * d * d)
    passed = measured <= bound * (1.0 + 1e-9)
    return CheckResult("coordinate-variance", passed, measured, bound,
                       f"d={d}, m={m}, beta={beta:g}, {count} batches")


def check_batch_mean_identity(problem: OracleProblem, x: np.ndarray,
                              beta: float, batch_size: int,
                              tol: float = 1e-12) -> CheckResult:
    """Exhaustive mean of coordinate batch estimates equals the
    all-coordinates estimate (exact sampling identity)."""
    d = problem.dimension
    acc = np.zeros(d)
    count = 0
    for batch in _all_coordinate_batches(d, batch_size):
        acc += minibatch_estimate(problem, x, batch, beta).vector
        count += 1
    mean = acc / count
    target = full_estimate(problem, x, beta).vector
    scale = max(1.0, float(np.max(np.abs(target))))
    measured = float(np.max(np.abs(mean - target))) / scale
    return CheckResult("batch-mean-identity", measured <= tol, measured, tol,
                       f"d={d}, m={batch_size}, {count} batches")


def check_vr_conditional_unbiasedness(problem: OracleProblem, x: np.ndarray,
                                      w: np.ndarray, beta: float,
                                      batch_size: int,
                                      tol: float = 1e-12) -> CheckResult:
    """Exhaustive mean of the variance-reduced coordinate estimate equals the
    all-coordinates estimate at x — the anchor correction cancels exactly."""
    d = problem.dimension
    ref = full_estimate(problem, x=w, beta=beta).vector
    acc = np.zeros(d)
    count = 0
    for batch in _all_coordinate_batches(d, batch_size):
        acc += vr_gradient(problem, x, w, ref, batch, beta).vector
        count += 1
    mean = acc / count
    target = full_estimate(problem, x, beta).vector
    scale = max(1.0, float(np.max(np.abs(target))))
    measured = float(np.max(np.abs(mean - target))) / scale
    return CheckResult("vr-conditional-unbiasedness", measured <= tol,
                       measured, tol, f"d={d}, m={batch_size}, {count} batches")


# ---------------------------------------------------------------------------
# sphere (Monte-Carlo) checks
# ---------------------------------------------------------------------------

def _sphere_directions(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    U = rng.standard_normal((n, d))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def _vectorized_estimates(problem: OracleProblem, x: np.ndarray,
                          U: np.ndarray, beta: float) -> np.ndarray:
    """Rows of d (f(x + beta u) - f(x)) / beta * u for every direction in U,
    cross-checked against the scalar estimator on the first few rows."""
    d = problem.dimension
    f_x = problem.f_exact(x)
    coeffs = d * (_batch_f(problem, x + beta * U) - f_x) / beta
    rows = coeffs[:, None] * U
    spot = problem.clone()
    for j in range(min(3, U.shape[0])):
        direct = two_point(spot, x, U[j], beta)
        if not np.allclose(direct, rows[j], rtol=1e-10, atol=1e-12):
            raise AssertionError("vectorized estimate disagrees with two_point")
    return rows


def check_sphere_bias(problem: OracleProblem, rng: np.random.Generator,
                      x: np.ndarray, beta: float, n_samples: int = 100_000,
                      slack: float = MC_SLACK) -> CheckResult:
    """Squared bias of the sphere estimate: ||E ghat - grad f(x)||^2 <= L^2 beta^2.

    The mean is estimated with the exact directional gradient as a control
    variate (E[d <grad, u> u] = grad), which shrinks the Monte-Carlo error to
    a small fraction of the bound scale.
    """
    d = problem.dimension
    grad = _grad(problem, x)
    U = _sphere_directions(rng, n_samples, d)
    rows = _vectorized_estimates(problem, x, U, beta)
    control = (U @ grad)[:, None] * U * d
    bias_est = np.mean(rows - control, axis=0)
    measured = float(np.sum(bias_est ** 2))
    bound = problem.L ** 2 * beta ** 2
    passed = measured <= bound * (1.0 + slack)
    return CheckResult("sphere-bias", passed, measured, bound,
                       f"d={d}, beta={beta:g}, n={n_samples}")


def check_sphere_variance(problem: OracleProblem, rng: np.random.Generator,
                          x: np.ndarray, w: np.ndarray, beta: float,
                          batch_size: int, n_samples: int = 100_000,
                          slack: float = MC_SLACK) -> CheckResult:
    """Monte-Carlo second moment of the variance-reduced sphere estimate:

        E||g - grad f(x)||^2 <= 4dL/m * D_f(w, x) + 2 L^2 beta^2 d^2.
    """
    d = problem.dimension
    m = batch_size
    ref = full_estimate(problem.clone(), w, beta).vector
    grad_x = _grad(problem, x)
    U = _sphere_directions(rng, n_samples * m, d)
    rows = _vectorized_estimates(problem, x, U, beta)
    correction = d * (U @ ref)[:, None] * U
    per_dir = rows - correction
    g = per_dir.reshape(n_samples, m, d).mean(axis=1) + ref
    measured = float(np.mean(np.sum((g - grad_x) ** 2, axis=1)))
    bound = (4.0 * d * problem.L / m * _bregman(problem, w, x)
             + 2.0 * problem.L ** 2 * beta ** 2 * d * d)
    passed = measured <= bound * (1.0 + slack)
    return CheckResult("sphere-variance", passed, measured, bound,
                       f"d={d}, m={m}, beta={beta:g}, n={n_samples}")


# ---------------------------------------------------------------------------
# potential decay
# ---------------------------------------------------------------------------

def decay_regression(traces, problem: OracleProblem, params: KatyushaParams,
                     record_every: int, max_queries: int,
                     segment_drop: float = 1e-2) -> tuple[CheckResult, CheckResult]:
    """Regress the log of the trial-averaged potential against iteration count
    on the leading segment above the noise floor.

    traces must carry potential values (runs instrumented with_lyapunov).
    Returns (slope check, final gap check): the fitted slope must not exceed
    ln(1 - delta/2) — at least half the guaranteed decay rate — and the mean
    final gap within the query budget must reach 1e-6.
    """
    # common iteration grid: record points shared by every trial
    last_common = min(int(t.ks[-1]) for t in traces)
    ks = np.arange(0, last_common + 1, record_every)
    psi = np.empty((len(traces), ks.size))
    for i, t in enumerate(traces):
        idx = np.searchsorted(t.ks, ks)
        psi[i] = t.lyapunov[idx]
    mean_psi = psi.mean(axis=0)

    delta, floor = _decay_report(problem, params)
    shifted = mean_psi - floor
    keep = shifted > max(segment_drop * shifted[0], 0.0)
    # regression over the contiguous leading segment only
    end = int(np.argmin(keep)) if not keep.all() else keep.size
    k_seg, y_seg = ks[:end], np.log(shifted[:end])
    slope = float(np.polyfit(k_seg, y_seg, 1)[0])
    slope_bound = math.log1p(-delta / 2.0)
    slope_check = CheckResult(
        "decay-slope", slope <= slope_bound, slope, slope_bound,
        f"delta={delta:.3e}, floor={floor:.3e}, segment={k_seg.size} records")

    budget_gaps = []
    for t in traces:
        j = int(np.searchsorted(t.queries, max_queries, side="right")) - 1
        budget_gaps.append(t.gap[j])
    final_gap = float(np.mean(budget_gaps))
    gap_check = CheckResult(
        "final-gap", final_gap <= 1e-6, final_gap, 1e-6,
        f"mean over {len(traces)} trials at <= {max_queries} queries")
    return slope_check, gap_check


def check_decay(problem: OracleProblem, params: KatyushaParams,
                x_star: np.ndarray, F_star: float, x0: np.ndarray,
                trials: int = 50, base_seed: int = 0,
                max_queries: int = 200_000, record_every: int = 25,
                segment_drop: float = 1e-2) -> tuple[CheckResult, CheckResult]:
    """Run seeded trials with potential tracking, then apply decay_regression."""
    inst = Instrumentation(x_star=x_star, F_star=F_star,
                           record_every=record_every, with_lyapunov=True)
    budget = Budget(max_queries=max_queries)
    traces = []
    for i in range(trials):
        trial_problem = problem.clone()
        rng = np.random.default_rng(base_seed + i)
        traces.append(run_katyusha(trial_problem, params, x0, budget, rng,
                                   instrumentation=inst, seed=base_seed + i))
    return decay_regression(traces, problem, params, record_every, max_queries,
                            segment_drop)


def _decay_report(problem: OracleProblem, params: KatyushaParams):
    theta, M, p = params.theta, params.M, params.p
    mu, d, L = problem.mu, problem.dimension, problem.L
    delta = min(mu / (2.0 * mu + 6.0 * theta * M), theta / 2.0,
                p * theta / (1.0 + theta))
    A = variance_constant(params.option, d, params.batch_size)
    noise = params.beta ** 2 * d * d * L * (L / (d * mu) + 1.0 / (A * theta))
    return delta, noise / delta


# ---------------------------------------------------------------------------
# the full suite
# ---------------------------------------------------------------------------

def _random_quadratic(d: int, rng: np.random.Generator) -> OracleProblem:
    from .problems import PsiSpec, make_quadratic_problem

    B = rng.standard_normal((d, d))
    H = B @ B.T / d + 0.1 * np.eye(d)
    c = rng.standard_normal(d)
    return make_quadratic_problem(H, c, PsiSpec.l2(0.05))


def _small_logistic(d: int, n: int, seed: int) -> OracleProblem:
    from .problems import make_logistic_problem, synthesize_dataset

    return make_logistic_problem(synthesize_dataset(d, n, seed), mu=0.05)


def verify_theory(seed: int = 0, decay_trials: int = 50,
                  decay_problem=None, mc_samples: int = 100_000) -> list[CheckResult]:
    """Run every bound check; returns one result per claim.

    decay_problem, when given, is a (problem, params, x_star, F_star, x0)
    tuple; the default builds the d=40 benchmark problem.
    """
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    quad = _random_quadratic(6, rng)
    logi_small = _small_logistic(6, 8, seed + 1)
    logi_big = _benchmark_problem_cached()

    # per-direction error and bias bounds, deterministic
    for prob, tag, scale in ((quad, "quadratic", 1.0),
                             (logi_small, "logistic", 2.0),
                             (logi_big, "logistic-d40", 2.0)):
        for beta in (1e-2, 1e-1):
            r = check_per_direction_error(prob.clone(), rng, beta, x_scale=scale)
            r.name += f"[{tag}]"
            results.append(r)
            r = check_coordinate_bias(prob.clone(), rng, beta, x_scale=scale)
            r.name += f"[{tag}]"
            results.append(r)

    # exhaustive coordinate checks at d = 6
    for prob, tag in ((quad, "quadratic"), (logi_small, "logistic")):
        d = prob.dimension
        for m in (1, 2, 3):
            x = rng.standard_normal(d)
            w = x + rng.standard_normal(d)
            for name, check in (
                ("variance", lambda: check_coordinate_variance(prob.clone(), x, w, 5e-2, m)),
                ("identity", lambda: check_batch_mean_identity(prob.clone(), x, 5e-2, m)),
                ("unbiased", lambda: check_vr_conditional_unbiasedness(prob.clone(), x, w, 5e-2, m)),
            ):
                r = check()
                r.name += f"[{tag}, m={m}]"
                results.append(r)

    # Monte-Carlo sphere checks
    for prob, tag, scale in ((quad, "quadratic", 1.0), (logi_big, "logistic-d40", 2.0)):
        d = prob.dimension
        x = scale * rng.standard_normal(d)
        w = x + rng.standard_normal(d)
        for beta in (1e-3, 1e-2):
            r = check_sphere_bias(prob.clone(), rng, x, beta, n_samples=mc_samples)
            r.name += f"[{tag}]"
            results.append(r)
        for m in (1, 4):
            r = check_sphere_variance(prob.clone(), rng, x, w, 1e-2, m,
                                      n_samples=mc_samples)
            r.name += f"[{tag}, m={m}]"
            results.append(r)

    # potential decay on the benchmark problem
    if decay_problem is None:
        decay_problem = _benchmark_decay_setup()
    problem, params, x_star, F_star, x0 = decay_problem
    slope_check, gap_check = check_decay(problem, params, x_star, F_star, x0,
                                         trials=decay_trials, base_seed=seed)
    results.extend([slope_check, gap_check])
    return results


_BENCH_CACHE: dict = {}


def _benchmark_problem_cached() -> OracleProblem:
    from .bench import build_benchmark_problem

    if "problem" not in _BENCH_CACHE:
        problem, x_star, F_star = build_benchmark_problem()
        _BENCH_CACHE.update(problem=problem, x_star=x_star, F_star=F_star)
    return _BENCH_CACHE["problem"]


def _benchmark_decay_setup():
    from .solvers import PresetKind, preset

    problem = _benchmark_problem_cached()
    x_star, F_star = _BENCH_CACHE["x_star"], _BENCH_CACHE["F_star"]
    x0 = np.zeros(problem.dimension)
    params = preset(PresetKind.MINIBATCH_COORDINATE, d=problem.dimension,
                    L=problem.L, mu=problem.mu, mu_f=problem.mu_f,
                    batch_size=1, epsilon=1e-6)
    return problem, params, x_star, F_star, x0
