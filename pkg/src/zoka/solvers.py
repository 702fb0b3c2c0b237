"""Zeroth-order solvers for composite strongly convex problems.

The centerpiece is a loopless accelerated variance-reduction scheme driven
entirely by function queries.  One iteration, with step parameters theta, M,
eta = 1/(3 theta) and sigma = mu_f / M, reads

    x_k  = theta z_k + 1/2 w_k + (1/2 - theta) y_k
    g_k  = variance-reduced batch estimate at x_k anchored at w_k
    z_k+1 = prox_{s psi}( (eta sigma x_k + z_k - (eta/M) g_k) / (1 + eta sigma) )
    y_k+1 = x_k + theta (z_k+1 - z_k)
    w_k+1 = y_k with probability p, else w_k   (anchor refresh on change)

A batch step costs batch_size + 1 queries and an anchor refresh costs d + 1,
so with batch_size = 1 and p = 1/d the average per-iteration cost stays O(1).

Baselines implemented for benchmarking: projected two-point gradient descent
with diminishing steps, an epoch-based variance-reduced proximal scheme, and
a plain accelerated two-point scheme that projects after each step (fast when
unconstrained, stalls under constraints).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    DirectionBatch,
    SamplingOption,
    full_estimate,
    minibatch_estimate,
    sample_batch,
    sample_sphere_batch,
    two_point,
    vr_gradient,
)
from .problems import OracleError, OracleProblem
from .prox import katyusha_z_step, project_feasible, prox

__all__ = [
    "variance_constant",
    "PresetKind",
    "KatyushaParams",
    "preset",
    "smoothing_radius",
    "SolverState",
    "StepRecord",
    "init_state",
    "katyusha_step",
    "LyapunovReport",
    "lyapunov",
    "Budget",
    "Instrumentation",
    "TrialTrace",
    "run_katyusha",
    "run_projected_zo_gd",
    "run_zo_svrg",
    "run_naive_accel",
]

# relative floor applied to preset smoothing radii, scaled by the start norm
BETA_FLOOR = 1e-8


def variance_constant(option: SamplingOption, d: int, batch_size: int) -> float:
    """Second-moment constant A of the batch estimator.

    Coordinate batches: max{4d(d-m) / ((d-1) m), 1}; sphere batches: 4d/m.
    The coordinate formula needs d >= 2 unless the batch covers every axis
    (m = d), where the constant degenerates to 1.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if option is SamplingOption.COORDINATE:
        if batch_size > d:
            raise ValueError(f"coordinate batch_size must be <= d={d}")
        if batch_size == d:
            return 1.0
        if d < 2:
            raise ValueError("coordinate minibatch sampling requires d >= 2")
        return max(4.0 * d * (d - batch_size) / ((d - 1.0) * batch_size), 1.0)
    if option is SamplingOption.SPHERE:
        return 4.0 * d / batch_size
    raise ValueError(f"unknown sampling option: {option!r}")


class PresetKind(enum.Enum):
    """Named parameter recipes (see `preset`)."""

    MINIBATCH_COORDINATE = "minibatch-coordinate"
    MINIBATCH_SPHERE = "minibatch-sphere"
    FULLBATCH_COORDINATE = "fullbatch-coordinate"


@dataclass(frozen=True)
class KatyushaParams:
    """Step parameters; eta and sigma are derived, never set directly."""

    theta: float
    M: float
    batch_size: int
    beta: float
    p: float
    option: SamplingOption
    mu_f: float = 0.0
    w_update_uses_y_next: bool = False

    def __post_init__(self):
        if not 0.0 < self.theta <= 0.5:
            raise ValueError(f"theta must lie in (0, 1/2], got {self.theta}")
        if self.M <= 0:
            raise ValueError("M must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if self.mu_f < 0:
            raise ValueError("mu_f must be >= 0")

    @property
    def eta(self) -> float:
        return 1.0 / (3.0 * self.theta)

    @property
    def sigma(self) -> float:
        return self.mu_f / self.M

    def echo(self) -> dict:
        return {
            "theta": self.theta,
            "M": self.M,
            "batch_size": self.batch_size,
            "beta": self.beta,
            "p": self.p,
            "option": self.option.value,
            "mu_f": self.mu_f,
            "w_update_uses_y_next": self.w_update_uses_y_next,
        }


def smoothing_radius(kind: PresetKind, d: int, L: float, mu: float,
                     epsilon: float, x0_norm: float = 0.0) -> float:
    """Preset smoothing radius, unit constant, floored at 1e-8 (1 + ||x0||).

    Minibatch presets use sqrt(mu eps / (d^{3/2} L^2)); the full-batch preset
    uses sqrt(mu eps / (d^2 L^2)).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if kind is PresetKind.FULLBATCH_COORDINATE:
        beta = math.sqrt(mu * epsilon / (d * d * L * L))
    else:
        beta = math.sqrt(mu * epsilon / (d ** 1.5 * L * L))
    return max(beta, BETA_FLOOR * (1.0 + x0_norm))


def preset(kind: PresetKind, *, d: int, L: float, mu: float, mu_f: float = 0.0,
           batch_size: int = 1, epsilon: float = 1e-6, x0_norm: float = 0.0,
           w_update_uses_y_next: bool = False) -> KatyushaParams:
    """Parameter recipes giving the advertised query complexities.

    minibatch-coordinate (batch_size <= sqrt(d)):
        M = 4d(d-m)L/(3(d-1)m) + L/3, theta = min{sqrt(d mu / M), 1/2}, p = 1/d
    minibatch-sphere (batch_size <= sqrt(d)):
        M = 4dL/m + L/3, same theta and p
    fullbatch-coordinate (batch_size forced to d):
        M = 2L/3, theta = min{sqrt(mu / M), 1/2}, p = 1

    epsilon is the target accuracy the smoothing radius is tuned for.
    """
    if L <= 0 or mu <= 0:
        raise ValueError("L and mu must be positive")
    if d < 1:
        raise ValueError("d must be >= 1")
    if kind is PresetKind.FULLBATCH_COORDINATE:
        batch_size = d
        M = 2.0 * L / 3.0
        theta = min(math.sqrt(mu / M), 0.5)
        p = 1.0
        option = SamplingOption.COORDINATE
    else:
        if batch_size > math.sqrt(d):
            raise ValueError(
                f"minibatch presets require batch_size <= sqrt(d); "
                f"got batch_size={batch_size}, sqrt(d)={math.sqrt(d):.4g}")
        if kind is PresetKind.MINIBATCH_COORDINATE:
            if d < 2:
                raise ValueError("coordinate minibatch preset requires d >= 2")
            M = 4.0 * d * (d - batch_size) * L / (3.0 * (d - 1.0) * batch_size) + L / 3.0
            option = SamplingOption.COORDINATE
        elif kind is PresetKind.MINIBATCH_SPHERE:
            M = 4.0 * d * L / batch_size + L / 3.0
            option = SamplingOption.SPHERE
        else:
            raise ValueError(f"unknown preset kind: {kind!r}")
        theta = min(math.sqrt(d * mu / M), 0.5)
        p = 1.0 / d
    beta = smoothing_radius(kind, d, L, mu, epsilon, x0_norm)
    return KatyushaParams(theta=theta, M=M, batch_size=batch_size, beta=beta,
                          p=p, option=option, mu_f=mu_f,
                          w_update_uses_y_next=w_update_uses_y_next)


@dataclass
class SolverState:
    """Iterates of the accelerated solver plus the cached anchor gradient."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    ref_grad: np.ndarray
    k: int = 0
    queries: int = 0


@dataclass
class StepRecord:
    k: int
    queries_used: int
    w_updated: bool
    ref_refreshed: bool


def init_state(problem: OracleProblem, params: KatyushaParams,
               x0: np.ndarray) -> SolverState:
    """Start y = z = w = x0 (projected feasible) and pay d+1 queries for the
    initial anchor gradient."""
    if params.mu_f != problem.mu_f:
        raise ValueError(
            f"params.mu_f={params.mu_f} disagrees with problem.mu_f={problem.mu_f}")
    if params.batch_size > problem.dimension:
        raise ValueError("batch_size exceeds problem dimension")
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    x0 = project_feasible(x0, problem.psi)
    ref = full_estimate(problem, x0, params.beta)
    return SolverState(x=x0.copy(), y=x0.copy(), z=x0.copy(), w=x0.copy(),
                       ref_grad=ref.vector, k=0, queries=ref.queries_used)


def katyusha_step(state: SolverState, params: KatyushaParams,
                  problem: OracleProblem, rng: np.random.Generator) -> StepRecord:
    """Advance the state by one iteration (mutates state in place).

    Randomness is consumed in fixed order: the direction batch first, then
    the anchor-update coin.  The anchor moves to the pre-update y (the
    literal rule) unless params.w_update_uses_y_next flips it to the fresh
    y; its cached gradient is recomputed only when the anchor value actually
    changes.
    """
    theta = params.theta
    x = theta * state.z + 0.5 * state.w + (0.5 - theta) * state.y
    batch = sample_batch(params.option, problem.dimension, params.batch_size, rng)
    try:
        g = vr_gradient(problem, x, state.w, state.ref_grad, batch, params.beta)
    except OracleError as err:
        raise OracleError(f"iteration {state.k}: {err}") from err
    z_next = katyusha_z_step(state.z, x, g.vector, params.eta, params.sigma,
                             params.M, problem.psi)
    y_next = x + theta * (z_next - state.z)
    w_updated = bool(rng.random() < params.p)
    queries_used = g.queries_used
    refreshed = False
    if w_updated:
        w_next = y_next if params.w_update_uses_y_next else state.y
        if not np.array_equal(w_next, state.w):
            state.w = w_next.copy()
            try:
                ref = full_estimate(problem, state.w, params.beta)
            except OracleError as err:
                raise OracleError(f"iteration {state.k} (anchor refresh): {err}") from err
            state.ref_grad = ref.vector
            queries_used += ref.queries_used
            refreshed = True
    state.x = x
    state.z = z_next
    state.y = y_next
    state.k += 1
    state.queries += queries_used
    return StepRecord(k=state.k, queries_used=queries_used,
                      w_updated=w_updated, ref_refreshed=refreshed)


@dataclass
class LyapunovReport:
    """Weighted potential tracking the three iterate sequences.

    total = z_term + y_term + w_term decays in expectation by (1 - delta)
    per iteration down to noise_floor, the smoothing-induced residual level.
    """

    z_term: float
    y_term: float
    w_term: float
    total: float
    delta: float
    noise_floor: float


def lyapunov(state: SolverState, params: KatyushaParams, problem: OracleProblem,
             x_star: np.ndarray, F_star: float) -> LyapunovReport:
    """Potential and its guaranteed decay quantities (meterless).

    z_term = (mu + 3 theta M)/2 ||z - x*||^2, y_term = (F(y) - F*)/theta,
    w_term = (1+theta)/(2 p theta) (F(w) - F*);
    delta = min{mu/(2mu + 6 theta M), theta/2, p theta/(1+theta)};
    noise_floor = beta^2 d^2 L (L/(d mu) + 1/(A theta)) / delta.
    """
    theta, M, p = params.theta, params.M, params.p
    mu = problem.mu
    d = problem.dimension
    L = problem.L
    dz = state.z - x_star
    z_term = 0.5 * (mu + 3.0 * theta * M) * float(dz @ dz)
    y_term = (problem.F_exact(state.y) - F_star) / theta
    w_term = (1.0 + theta) / (2.0 * p * theta) * (problem.F_exact(state.w) - F_star)
    delta = min(mu / (2.0 * mu + 6.0 * theta * M), theta / 2.0,
                p * theta / (1.0 + theta))
    A = variance_constant(params.option, d, params.batch_size)
    noise = params.beta ** 2 * d * d * L * (L / (d * mu) + 1.0 / (A * theta))
    return LyapunovReport(z_term=z_term, y_term=y_term, w_term=w_term,
                          total=z_term + y_term + w_term, delta=delta,
                          noise_floor=noise / delta)


# ---------------------------------------------------------------------------
# trial runners
# ---------------------------------------------------------------------------

@dataclass
class Budget:
    max_iters: int | None = None
    max_queries: int | None = None
    target_gap: float | None = None

    def __post_init__(self):
        if self.max_iters is None and self.max_queries is None:
            raise ValueError("budget needs max_iters or max_queries")


@dataclass
class Instrumentation:
    """Reference solution for gap (and optionally potential) tracking."""

    x_star: np.ndarray
    F_star: float
    record_every: int = 1
    with_lyapunov: bool = False


@dataclass
class TrialTrace:
    ks: np.ndarray
    queries: np.ndarray
    gap: np.ndarray
    lyapunov: np.ndarray
    solver: str
    seed: int | None = None
    params: dict = field(default_factory=dict)
    converged: bool = False
    wall_seconds: float = 0.0


class _TraceBuilder:
    def __init__(self, solver: str, params_echo: dict, seed: int | None):
        self.solver = solver
        self.params_echo = params_echo
        self.seed = seed
        self.ks: list[int] = []
        self.queries: list[int] = []
        self.gap: list[float] = []
        self.lyap: list[float] = []

    def add(self, k: int, queries: int, gap: float = math.nan,
            lyap: float = math.nan) -> None:
        self.ks.append(k)
        self.queries.append(queries)
        self.gap.append(gap)
        self.lyap.append(lyap)

    def build(self, converged: bool) -> TrialTrace:
        return TrialTrace(
            ks=np.asarray(self.ks, dtype=np.int64),
            queries=np.asarray(self.queries, dtype=np.int64),
            gap=np.asarray(self.gap, dtype=float),
            lyapunov=np.asarray(self.lyap, dtype=float),
            solver=self.solver,
            seed=self.seed,
            params=self.params_echo,
            converged=converged,
        )


def _budget_done(budget: Budget, k: int, queries: int) -> bool:
    if budget.max_iters is not None and k >= budget.max_iters:
        return True
    if budget.max_queries is not None and queries >= budget.max_queries:
        return True
    return False


def run_katyusha(problem: OracleProblem, params: KatyushaParams, x0: np.ndarray,
                 budget: Budget, rng: np.random.Generator,
                 instrumentation: Instrumentation | None = None,
                 seed: int | None = None, tag: str = "katyusha") -> TrialTrace:
    """Run the accelerated solver until the budget (or target gap) is hit.

    The trace records iteration 0 and every record_every-th iteration
    thereafter, plus the final one.  Gap rows are F(y_k) - F*, meterless.
    With budget.target_gap set (requires instrumentation) the run stops at
    the first recorded gap at or below the target and the trace is marked
    converged.
    """
    if budget.target_gap is not None and instrumentation is None:
        raise ValueError("target_gap needs instrumentation to measure the gap")
    every = instrumentation.record_every if instrumentation else 1
    builder = _TraceBuilder(tag, params.echo(), seed)
    state = init_state(problem, params, x0)

    def observe() -> float:
        if instrumentation is None:
            builder.add(state.k, state.queries)
            return math.inf
        gap = problem.F_exact(state.y) - instrumentation.F_star
        lyap = math.nan
        if instrumentation.with_lyapunov:
            lyap = lyapunov(state, params, problem, instrumentation.x_star,
                            instrumentation.F_star).total
        builder.add(state.k, state.queries, gap, lyap)
        return gap

    gap = observe()
    converged = budget.target_gap is not None and gap <= budget.target_gap
    while not converged and not _budget_done(budget, state.k, state.queries):
        katyusha_step(state, params, problem, rng)
        if state.k % every == 0 or _budget_done(budget, state.k, state.queries):
            gap = observe()
            if budget.target_gap is not None and gap <= budget.target_gap:
                converged = True
    if builder.ks[-1] != state.k:
        observe()
    return builder.build(converged)


def run_projected_zo_gd(problem: OracleProblem, x0: np.ndarray, budget: Budget,
                        rng: np.random.Generator, beta: float,
                        step_scale: float = 1.0,
                        instrumentation: Instrumentation | None = None,
                        seed: int | None = None,
                        tag: str = "projected-zo-gd") -> TrialTrace:
    """Projected two-point gradient descent with alpha_k = alpha0/sqrt(k+1).

    alpha0 = step_scale/(d L); a single sphere direction per iteration, so
    exactly 2 queries per step.  The diminishing step copes with the
    estimator's non-vanishing variance at the constrained optimum, at the
    price of sublinear convergence.
    """
    if budget.target_gap is not None and instrumentation is None:
        raise ValueError("target_gap needs instrumentation to measure the gap")
    every = instrumentation.record_every if instrumentation else 1
    d = problem.dimension
    alpha0 = step_scale / (d * problem.L)
    x = project_feasible(np.asarray(x0, dtype=float), problem.psi)
    builder = _TraceBuilder(tag, {"alpha0": alpha0, "beta": beta}, seed)
    start = problem.queries
    k = 0

    def observe() -> float:
        gap = math.nan if instrumentation is None \
            else problem.F_exact(x) - instrumentation.F_star
        builder.add(k, problem.queries - start, gap)
        return math.inf if instrumentation is None else gap

    gap = observe()
    converged = budget.target_gap is not None and gap <= budget.target_gap
    while not converged and not _budget_done(budget, k, problem.queries - start):
        u = sample_sphere_batch(d, 1, rng).directions[0]
        f_x = problem.eval_f(x)
        g = two_point(problem, x, u, beta, f_x)
        alpha = alpha0 / math.sqrt(k + 1.0)
        x = prox(x - alpha * g, alpha, problem.psi)
        k += 1
        if k % every == 0 or _budget_done(budget, k, problem.queries - start):
            gap = observe()
            if budget.target_gap is not None and gap <= budget.target_gap:
                converged = True
    if builder.ks[-1] != k:
        observe()
    return builder.build(converged)


def run_zo_svrg(problem: OracleProblem, x0: np.ndarray, budget: Budget,
                rng: np.random.Generator, beta: float,
                option: SamplingOption = SamplingOption.COORDINATE,
                batch_size: int = 1, epoch_length: int | None = None,
                instrumentation: Instrumentation | None = None,
                seed: int | None = None, tag: str = "zo-svrg") -> TrialTrace:
    """Epoch-based variance-reduced proximal steps (no momentum).

    Each epoch recomputes the anchor gradient at the current point (d+1
    queries), then takes epoch_length (default d) proximal steps
    x <- prox_{alpha psi}(x - alpha g) using the same variance-reduced
    estimator as the accelerated solver.  The step follows the standard
    proximal-SVRG convention alpha = 1/(10 Lhat), where Lhat = max(A/4, 1) L
    is the effective smoothness seen by the estimator (A the sampling
    variance constant); for single-coordinate sampling Lhat = d L.
    """
    if budget.target_gap is not None and instrumentation is None:
        raise ValueError("target_gap needs instrumentation to measure the gap")
    every = instrumentation.record_every if instrumentation else 1
    d = problem.dimension
    m = epoch_length if epoch_length is not None else d
    A = variance_constant(option, d, batch_size)
    L_hat = max(A / 4.0, 1.0) * problem.L
    alpha = 1.0 / (10.0 * L_hat)
    x = project_feasible(np.asarray(x0, dtype=float), problem.psi)
    builder = _TraceBuilder(tag, {"alpha": alpha, "beta": beta,
                                  "option": option.value,
                                  "batch_size": batch_size,
                                  "epoch_length": m}, seed)
    start = problem.queries
    k = 0

    def observe() -> float:
        gap = math.nan if instrumentation is None \
            else problem.F_exact(x) - instrumentation.F_star
        builder.add(k, problem.queries - start, gap)
        return math.inf if instrumentation is None else gap

    gap = observe()
    converged = budget.target_gap is not None and gap <= budget.target_gap
    done = converged or _budget_done(budget, k, problem.queries - start)
    while not done:
        w = x.copy()
        ref = full_estimate(problem, w, beta).vector
        for _ in range(m):
            batch = sample_batch(option, d, batch_size, rng)
            g = vr_gradient(problem, x, w, ref, batch, beta)
            x = prox(x - alpha * g.vector, alpha, problem.psi)
            k += 1
            if k % every == 0 or _budget_done(budget, k, problem.queries - start):
                gap = observe()
                if budget.target_gap is not None and gap <= budget.target_gap:
                    converged = True
            if converged or _budget_done(budget, k, problem.queries - start):
                done = True
                break
    if builder.ks[-1] != k:
        observe()
    return builder.build(converged)


def run_naive_accel(problem: OracleProblem, x0: np.ndarray, budget: Budget,
                    rng: np.random.Generator, beta: float,
                    instrumentation: Instrumentation | None = None,
                    seed: int | None = None,
                    tag: str = "naive-accel") -> TrialTrace:
    """Two-point estimates plugged straight into a projected accelerated scheme:

        x_{k+1} = P(y_k - g_k / (d L)),
        y_{k+1} = x_{k+1} - (1 - sqrt(mu/L)) / (1 + sqrt(mu/L)) (x_{k+1} - x_k),

    with g_k the single two-point sphere estimate at y_k and P the box
    projection (identity when unconstrained).  Exactly 2 queries per step.
    Demonstrates fast unconstrained convergence but stagnation under
    constraints, where the estimator's variance does not vanish.
    """
    if problem.psi.mu_psi != 0.0:
        raise ValueError("this scheme supports only zero or box regularizers")
    if budget.target_gap is not None and instrumentation is None:
        raise ValueError("target_gap needs instrumentation to measure the gap")
    every = instrumentation.record_every if instrumentation else 1
    d = problem.dimension
    L = problem.L
    mu = problem.mu
    momentum = (1.0 - math.sqrt(mu / L)) / (1.0 + math.sqrt(mu / L))
    x = project_feasible(np.asarray(x0, dtype=float), problem.psi)
    y = x.copy()
    builder = _TraceBuilder(tag, {"beta": beta, "momentum": momentum}, seed)
    start = problem.queries
    k = 0

    def observe() -> float:
        gap = math.nan if instrumentation is None \
            else problem.F_exact(x) - instrumentation.F_star
        builder.add(k, problem.queries - start, gap)
        return math.inf if instrumentation is None else gap

    gap = observe()
    converged = budget.target_gap is not None and gap <= budget.target_gap
    while not converged and not _budget_done(budget, k, problem.queries - start):
        u = sample_sphere_batch(d, 1, rng).directions[0]
        f_y = problem.eval_f(y)
        g = two_point(problem, y, u, beta, f_y)
        x_next = project_feasible(y - g / (d * L), problem.psi)
        y = x_next - momentum * (x_next - x)
        x = x_next
        k += 1
        if k % every == 0 or _budget_done(budget, k, problem.queries - start):
            gap = observe()
            if budget.target_gap is not None and gap <= budget.target_gap:
                converged = True
    if builder.ks[-1] != k:
        observe()
    return builder.build(converged)
