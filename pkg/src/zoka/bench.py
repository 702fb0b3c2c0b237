"""Benchmark harness: problem/solver configs, seeded multi-trial runs,
quantile bands, and plot-ready CSV output.

Comparisons are made against cumulative oracle queries (not iterations),
since query counts are the quantity the complexity guarantees speak about
and iteration costs differ across batch sizes.  Quantiles are taken on
log10 of the gap, floored at 1e-16, to match log-scale plotting; the mean
column is the arithmetic mean of the floored gap.

Output layout, per solver, under the configured directory:

    <out>/<solver>/trial_<i>.csv   header: k,queries,gap,lyapunov
    <out>/<solver>/band.csv        header: queries,q05,median,q95,mean
    <out>/<solver>/meta.json       tag, seed, trials, parameter echo

All files are written atomically (temp file + rename) with repr-formatted
floats, so identical configs reproduce byte-identical artifacts, serial or
parallel (per-trial rng streams are independent; the ZOKA_THREADS
environment variable caps trial parallelism).
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimators import SamplingOption
from .problems import (
    OracleProblem,
    PsiSpec,
    load_dataset_csv,
    make_logistic_problem,
    make_quadratic_problem,
    solve_reference,
    synthesize_dataset,
)
from .solvers import (
    Budget,
    Instrumentation,
    KatyushaParams,
    PresetKind,
    TrialTrace,
    preset,
    run_katyusha,
    run_naive_accel,
    run_projected_zo_gd,
    run_zo_svrg,
    smoothing_radius,
)

__all__ = [
    "ConfigError",
    "SolverSpec",
    "ProblemSpec",
    "ExperimentConfig",
    "QuantileBand",
    "SolverRun",
    "parse_config",
    "build_problem",
    "build_benchmark_problem",
    "compute_band",
    "run_experiment",
    "run_fig2_demo",
    "default_fig1_config",
    "fig2_configs",
    "write_trace_csv",
    "read_trace_csv",
    "write_band_csv",
    "KNOWN_SOLVERS",
    "GAP_FLOOR",
]

GAP_FLOOR = 1e-16
DEFAULT_MAX_QUERIES = 200_000
BENCHMARK_D = 40
BENCHMARK_N = 30
BENCHMARK_MU = 0.02
BENCHMARK_BOX = 0.5
BENCHMARK_DATA_SEED = 7

KNOWN_SOLVERS = ("katyusha-minibatch", "katyusha-fullbatch", "zo-svrg",
                 "projected-zo-gd", "naive-accel")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class SolverSpec:
    """One solver entry: a known tag plus optional overrides.

    beta/p/theta/M override the preset-derived values for the katyusha
    variants; beta also sets the baselines' smoothing radius (their default
    is the minibatch preset radius at the same epsilon, so comparisons share
    the smoothing scale).
    """

    tag: str
    name: str | None = None
    option: str = "coordinate"
    batch_size: int = 1
    epsilon: float = 1e-6
    beta: float | None = None
    p: float | None = None
    theta: float | None = None
    M: float | None = None
    step_scale: float = 1.0
    epoch_length: int | None = None
    w_update_uses_y_next: bool = False

    def __post_init__(self):
        if self.tag not in KNOWN_SOLVERS:
            raise ConfigError(
                f"unknown solver tag {self.tag!r}; known: {', '.join(KNOWN_SOLVERS)}")
        if self.option not in ("coordinate", "sphere"):
            raise ConfigError(f"unknown sampling option {self.option!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    @property
    def label(self) -> str:
        return self.name if self.name is not None else self.tag

    @property
    def sampling(self) -> SamplingOption:
        return SamplingOption(self.option)


@dataclass
class ProblemSpec:
    """Benchmark problem description.

    kind="logistic": regularized logistic regression, psi = (mu/2)||x||^2
    plus an optional box [-box, box]^d.  kind="quadratic": a fixed diagonal
    quadratic with eigenvalues spread over [eig_min, eig_max], centered at
    componentwise [center_lo, center_hi] so the planted minimizer lies
    outside the box; mu then comes from the smallest eigenvalue and the box
    (if any) is the sole psi.
    """

    kind: str = "logistic"
    d: int = BENCHMARK_D
    n: int = BENCHMARK_N
    mu: float = BENCHMARK_MU
    box: float | None = BENCHMARK_BOX
    data_seed: int = BENCHMARK_DATA_SEED
    dataset_csv: str | None = None
    eig_min: float = 0.1
    eig_max: float = 1.0
    center_lo: float = 0.8
    center_hi: float = 1.6

    def __post_init__(self):
        if self.kind not in ("logistic", "quadratic"):
            raise ConfigError(f"unknown problem kind {self.kind!r}")
        if self.box is not None and self.box <= 0:
            raise ConfigError("box half-width must be positive")


@dataclass
class ExperimentConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    solvers: list[SolverSpec] = field(default_factory=list)
    trials: int = 50
    seed: int = 0
    record_every: int = 25
    max_queries: int | None = DEFAULT_MAX_QUERIES
    max_iters: int | None = None
    target_gap: float | None = None
    output: str = "out"
    threads: int | None = None
    with_lyapunov: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        for limit in (self.max_queries, self.max_iters):
            if limit is not None and limit <= 0:
                raise ConfigError("budget limits must be positive")
        if self.max_queries is None and self.max_iters is None:
            raise ConfigError("need max_queries or max_iters")
        labels = [s.label for s in self.solvers]
        if len(set(labels)) != len(labels):
            raise ConfigError("duplicate solver labels; set name to disambiguate")

    @property
    def budget(self) -> Budget:
        return Budget(max_iters=self.max_iters, max_queries=self.max_queries,
                      target_gap=self.target_gap)


def _build_from_table(cls, table: dict, context: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"unknown {context} keys: {', '.join(sorted(unknown))}")
    try:
        return cls(**table)
    except TypeError as exc:
        raise ConfigError(f"bad {context} section: {exc}") from exc


def parse_config(path: str | Path) -> ExperimentConfig:
    """Load an ExperimentConfig from TOML or JSON (chosen by extension)."""
    path = Path(path)
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    elif path.suffix == ".json":
        with open(path) as fh:
            raw = json.load(fh)
    else:
        raise ConfigError(f"config must be .toml or .json, got {path.name!r}")

    raw = dict(raw)
    problem_table = dict(raw.pop("problem", {}))
    if problem_table.get("box") is False:
        problem_table["box"] = None
    solver_tables = raw.pop("solver", None)
    if solver_tables is None:
        solver_tables = raw.pop("solvers", [])
    if not isinstance(solver_tables, list):
        raise ConfigError("solver must be an array of tables")
    budget_table = dict(raw.pop("budget", {}))

    top = {}
    for key in ("trials", "seed", "record_every", "output", "threads",
                "with_lyapunov"):
        if key in raw:
            top[key] = raw.pop(key)
    if raw:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(raw))}")

    allowed_budget = {"max_queries", "max_iters", "target_gap"}
    unknown = set(budget_table) - allowed_budget
    if unknown:
        raise ConfigError(f"unknown budget keys: {', '.join(sorted(unknown))}")

    problem = _build_from_table(ProblemSpec, problem_table, "problem")
    solvers = [_build_from_table(SolverSpec, dict(t), f"solver[{i}]")
               for i, t in enumerate(solver_tables)]
    if not solvers:
        raise ConfigError("config defines no solvers")
    return ExperimentConfig(problem=problem, solvers=solvers,
                            **budget_table, **top)


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------

def build_problem(spec: ProblemSpec) -> tuple[OracleProblem, np.ndarray, float, np.ndarray]:
    """Construct the problem with its reference solution and starting point.

    Returns (problem, x_star, F_star, x0); x0 is the origin (always feasible
    for the supported constraint sets).  Warns when a configured box turns
    out inactive at the solution, since the constrained experiments are
    meaningless in that regime.
    """
    if spec.kind == "logistic":
        if spec.dataset_csv is not None:
            dataset = load_dataset_csv(spec.dataset_csv)
        else:
            dataset = synthesize_dataset(spec.d, spec.n, spec.data_seed)
        box = (-spec.box, spec.box) if spec.box is not None else None
        problem = make_logistic_problem(dataset, mu=spec.mu, box=box)
    else:
        d = spec.d
        H = np.diag(np.linspace(spec.eig_min, spec.eig_max, d))
        c = np.linspace(spec.center_lo, spec.center_hi, d)
        if spec.box is not None:
            psi = PsiSpec.box(-spec.box, spec.box)
        else:
            psi = PsiSpec.zero()
        problem = make_quadratic_problem(H, c, psi)

    x_star, F_star = solve_reference(problem)
    if problem.psi.has_box:
        at_bound = ((np.abs(x_star - problem.psi.lo) <= 1e-7)
                    | (np.abs(x_star - problem.psi.hi) <= 1e-7))
        if not np.any(at_bound):
            warnings.warn("box constraint is inactive at the solution; "
                          "constrained comparisons will not exercise it",
                          stacklevel=2)
    x0 = np.zeros(problem.dimension)
    return problem, x_star, F_star, x0


def build_benchmark_problem(data_seed: int = BENCHMARK_DATA_SEED):
    """The d=40, n=30, mu=0.02 box-constrained logistic benchmark problem.

    Returns (problem, x_star, F_star).
    """
    spec = ProblemSpec(kind="logistic", d=BENCHMARK_D, n=BENCHMARK_N,
                       mu=BENCHMARK_MU, box=BENCHMARK_BOX, data_seed=data_seed)
    problem, x_star, F_star, _ = build_problem(spec)
    return problem, x_star, F_star


# ---------------------------------------------------------------------------
# solver runners
# ---------------------------------------------------------------------------

def _katyusha_params(spec: SolverSpec, problem: OracleProblem,
                     x0: np.ndarray) -> KatyushaParams:
    if spec.tag == "katyusha-fullbatch":
        kind = PresetKind.FULLBATCH_COORDINATE
        batch = problem.dimension
    else:
        kind = (PresetKind.MINIBATCH_COORDINATE
                if spec.sampling is SamplingOption.COORDINATE
                else PresetKind.MINIBATCH_SPHERE)
        batch = spec.batch_size
    params = preset(kind, d=problem.dimension, L=problem.L, mu=problem.mu,
                    mu_f=problem.mu_f, batch_size=batch, epsilon=spec.epsilon,
                    x0_norm=float(np.linalg.norm(x0)),
                    w_update_uses_y_next=spec.w_update_uses_y_next)
    overrides = {k: v for k, v in (("beta", spec.beta), ("p", spec.p),
                                   ("theta", spec.theta), ("M", spec.M))
                 if v is not None}
    if overrides:
        params = dataclasses.replace(params, **overrides)
    return params


def _default_baseline_beta(spec: SolverSpec, problem: OracleProblem,
                           x0: np.ndarray) -> float:
    if spec.beta is not None:
        return spec.beta
    return smoothing_radius(PresetKind.MINIBATCH_COORDINATE,
                            d=problem.dimension, L=problem.L, mu=problem.mu,
                            epsilon=spec.epsilon,
                            x0_norm=float(np.linalg.norm(x0)))


def _make_runner(spec: SolverSpec, problem: OracleProblem, x0: np.ndarray,
                 budget: Budget, inst: Instrumentation):
    """Build trial_fn(problem_clone, rng, seed) -> TrialTrace for one solver
    table entry."""
    tag = spec.label
    if spec.tag in ("katyusha-minibatch", "katyusha-fullbatch"):
        params = _katyusha_params(spec, problem, x0)

        def trial(prob, rng, seed):
            return run_katyusha(prob, params, x0, budget, rng,
                                instrumentation=inst, seed=seed, tag=tag)
    elif spec.tag == "zo-svrg":
        beta = _default_baseline_beta(spec, problem, x0)

        def trial(prob, rng, seed):
            return run_zo_svrg(prob, x0, budget, rng, beta,
                               option=spec.sampling, batch_size=spec.batch_size,
                               epoch_length=spec.epoch_length,
                               instrumentation=inst, seed=seed, tag=tag)
    elif spec.tag == "projected-zo-gd":
        beta = _default_baseline_beta(spec, problem, x0)

        def trial(prob, rng, seed):
            return run_projected_zo_gd(prob, x0, budget, rng, beta,
                                       step_scale=spec.step_scale,
                                       instrumentation=inst, seed=seed, tag=tag)
    else:  # naive-accel
        beta = _default_baseline_beta(spec, problem, x0)

        def trial(prob, rng, seed):
            return run_naive_accel(prob, x0, budget, rng, beta,
                                   instrumentation=inst, seed=seed, tag=tag)

    return trial


def _thread_count(requested: int | None) -> int:
    env = os.environ.get("ZOKA_THREADS")
    cap = int(env) if env else None
    count = requested if requested is not None else (cap if cap else 1)
    if cap is not None:
        count = min(count, cap)
    return max(1, count)


def _run_trials(trial_fn, problem: OracleProblem, trials: int, base_seed: int,
                threads: int) -> list[TrialTrace]:
    """Trial i runs on its own problem clone with rng seeded base_seed + i."""

    def job(i: int) -> TrialTrace:
        t0 = time.perf_counter()
        trace = trial_fn(problem.clone(), np.random.default_rng(base_seed + i),
                         base_seed + i)
        trace.wall_seconds = time.perf_counter() - t0
        return trace

    if threads <= 1:
        return [job(i) for i in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, range(trials)))


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

@dataclass
class QuantileBand:
    queries: np.ndarray
    q05: np.ndarray
    median: np.ndarray
    q95: np.ndarray
    mean: np.ndarray


def _query_grid(traces: list[TrialTrace], points: int = 400) -> np.ndarray:
    lo = max(int(t.queries[0]) for t in traces)
    hi = min(int(t.queries[-1]) for t in traces)
    if hi <= lo:
        return np.array([lo], dtype=np.int64)
    grid = np.geomspace(max(lo, 1), hi, points)
    grid = np.unique(np.round(grid).astype(np.int64))
    grid = grid[(grid >= lo) & (grid <= hi)]
    return np.unique(np.concatenate([[lo], grid, [hi]])).astype(np.int64)


def compute_band(traces: list[TrialTrace], points: int = 400) -> QuantileBand:
    """Align trials onto a common query grid (last observation carried
    forward, never extrapolating past a trial's records) and reduce.

    The grid spans [max of first records, min of last records] so every
    point is covered by every trial.
    """
    grid = _query_grid(traces, points)
    gaps = np.empty((len(traces), grid.size))
    for i, t in enumerate(traces):
        idx = np.searchsorted(t.queries, grid, side="right") - 1
        gaps[i] = t.gap[idx]
    floored = np.maximum(gaps, GAP_FLOOR)
    logs = np.log10(floored)
    q05, med, q95 = np.quantile(logs, [0.05, 0.5, 0.95], axis=0)
    return QuantileBand(queries=grid, q05=10.0 ** q05, median=10.0 ** med,
                        q95=10.0 ** q95, mean=floored.mean(axis=0))


# ---------------------------------------------------------------------------
# CSV / JSON output
# ---------------------------------------------------------------------------

def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_trace_csv(path: str | Path, trace: TrialTrace) -> None:
    lines = ["k,queries,gap,lyapunov"]
    for k, q, g, l in zip(trace.ks, trace.queries, trace.gap, trace.lyapunov):
        lines.append(f"{int(k)},{int(q)},{repr(float(g))},{repr(float(l))}")
    _write_atomic(Path(path), "\n".join(lines) + "\n")


def read_trace_csv(path: str | Path, solver: str = "",
                   seed: int | None = None) -> TrialTrace:
    """Parse a trial CSV back into a TrialTrace (lossless round trip)."""
    lines = Path(path).read_text().strip().splitlines()
    if lines[0] != "k,queries,gap,lyapunov":
        raise ValueError(f"unexpected trace header {lines[0]!r}")
    rows = [line.split(",") for line in lines[1:]]
    return TrialTrace(
        ks=np.array([int(r[0]) for r in rows], dtype=np.int64),
        queries=np.array([int(r[1]) for r in rows], dtype=np.int64),
        gap=np.array([float(r[2]) for r in rows]),
        lyapunov=np.array([float(r[3]) for r in rows]),
        solver=solver, seed=seed)


def write_band_csv(path: str | Path, band: QuantileBand) -> None:
    lines = ["queries,q05,median,q95,mean"]
    for q, a, b, c, m in zip(band.queries, band.q05, band.median, band.q95,
                             band.mean):
        lines.append(f"{int(q)},{repr(float(a))},{repr(float(b))},"
                     f"{repr(float(c))},{repr(float(m))}")
    _write_atomic(Path(path), "\n".join(lines) + "\n")


def _write_meta(path: Path, spec: SolverSpec, config: ExperimentConfig,
                traces: list[TrialTrace]) -> None:
    meta = {
        "tag": spec.tag,
        "name": spec.label,
        "trials": config.trials,
        "base_seed": config.seed,
        "params": traces[0].params,
        "problem": dataclasses.asdict(config.problem),
    }
    _write_atomic(path, json.dumps(meta, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------

@dataclass
class SolverRun:
    spec: SolverSpec
    traces: list[TrialTrace]
    band: QuantileBand
    directory: Path


def run_experiment(config: ExperimentConfig, echo=None) -> dict[str, SolverRun]:
    """Run every configured solver for `trials` seeded trials and write the
    per-trial and band CSVs.  Returns the in-memory results keyed by solver
    label."""
    say = echo if echo is not None else (lambda msg: None)
    problem, x_star, F_star, x0 = build_problem(config.problem)
    inst = Instrumentation(x_star=x_star, F_star=F_star,
                           record_every=config.record_every,
                           with_lyapunov=config.with_lyapunov)
    budget = config.budget
    threads = _thread_count(config.threads)
    out_root = Path(config.output)
    out_root.mkdir(parents=True, exist_ok=True)

    results: dict[str, SolverRun] = {}
    for spec in config.solvers:
        say(f"running {spec.label}: {config.trials} trials "
            f"({threads} thread{'s' if threads > 1 else ''})")
        trial_fn = _make_runner(spec, problem, x0, budget, inst)
        t0 = time.perf_counter()
        traces = _run_trials(trial_fn, problem, config.trials, config.seed,
                             threads)
        band = compute_band(traces)
        directory = out_root / spec.label
        directory.mkdir(parents=True, exist_ok=True)
        for i, trace in enumerate(traces):
            write_trace_csv(directory / f"trial_{i}.csv", trace)
        write_band_csv(directory / "band.csv", band)
        _write_meta(directory / "meta.json", spec, config, traces)
        say(f"  {spec.label} done in {time.perf_counter() - t0:.1f}s; "
            f"median final gap {band.median[-1]:.3e}")
        results[spec.label] = SolverRun(spec, traces, band, directory)
    return results


def default_fig1_config(output: str = "out/fig1", trials: int = 50,
                        seed: int = 2024,
                        max_queries: int = DEFAULT_MAX_QUERIES,
                        record_every: int = 25) -> ExperimentConfig:
    """The stock four-solver comparison on the logistic benchmark problem."""
    solvers = [
        SolverSpec("katyusha-minibatch", option="coordinate", batch_size=1),
        SolverSpec("katyusha-fullbatch"),
        SolverSpec("zo-svrg", option="coordinate", batch_size=1),
        SolverSpec("projected-zo-gd"),
    ]
    return ExperimentConfig(problem=ProblemSpec(), solvers=solvers,
                            trials=trials, seed=seed,
                            record_every=record_every,
                            max_queries=max_queries, output=output)


def fig2_configs(output: str = "out/fig2", trials: int = 50, seed: int = 11,
                 max_queries: int = DEFAULT_MAX_QUERIES, beta: float = 1e-7,
                 record_every: int = 50) -> dict[str, ExperimentConfig]:
    """Paired configs for the naive accelerated scheme on a quadratic:
    unconstrained versus box-constrained with the minimizer planted outside
    the box."""
    cases = {}
    for label, box in (("unconstrained", None), ("constrained", 0.5)):
        problem = ProblemSpec(kind="quadratic", d=20, box=box)
        solver = SolverSpec("naive-accel", beta=beta)
        cases[label] = ExperimentConfig(
            problem=problem, solvers=[solver], trials=trials, seed=seed,
            record_every=record_every, max_queries=max_queries,
            output=str(Path(output) / label))
    return cases


def run_fig2_demo(output: str = "out/fig2", trials: int = 50, seed: int = 11,
                  max_queries: int = DEFAULT_MAX_QUERIES, beta: float = 1e-7,
                  echo=None) -> dict[str, QuantileBand]:
    """Run both fig-2 cases; returns the two bands keyed by case label."""
    bands = {}
    for label, config in fig2_configs(output, trials, seed, max_queries,
                                      beta).items():
        runs = run_experiment(config, echo=echo)
        bands[label] = runs["naive-accel"].band
    return bands
