import dataclasses
import json

import numpy as np
import pytest

from zoka.bench import (
    ConfigError,
    ExperimentConfig,
    ProblemSpec,
    SolverSpec,
    _query_grid,
    _thread_count,
    build_problem,
    compute_band,
    default_fig1_config,
    fig2_configs,
    parse_config,
    read_trace_csv,
    run_experiment,
    write_trace_csv,
)
from zoka.solvers import TrialTrace

TOML_TEXT = """
trials = 3
seed = 5
record_every = 10
output = "out/test"

[problem]
kind = "logistic"
d = 8
n = 6
mu = 0.05
box = 0.4
data_seed = 2

[budget]
max_queries = 3000

[[solver]]
tag = "katyusha-minibatch"
batch_size = 1

[[solver]]
tag = "projected-zo-gd"
name = "pzogd"
"""


def make_trace(ks, queries, gap, solver="t", seed=0):
    ks = np.asarray(ks, dtype=np.int64)
    return TrialTrace(ks=ks, queries=np.asarray(queries, dtype=np.int64),
                      gap=np.asarray(gap, dtype=float),
                      lyapunov=np.full(len(ks), np.nan), solver=solver,
                      seed=seed)


class TestParseConfig:
    def test_toml_round_trip(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(TOML_TEXT)
        cfg = parse_config(path)
        assert cfg.trials == 3 and cfg.seed == 5 and cfg.record_every == 10
        assert cfg.problem.d == 8 and cfg.problem.box == 0.4
        assert cfg.max_queries == 3000
        assert [s.tag for s in cfg.solvers] == ["katyusha-minibatch",
                                                "projected-zo-gd"]
        assert cfg.solvers[1].label == "pzogd"

    def test_json_equivalent(self, tmp_path):
        doc = {
            "trials": 3, "seed": 5, "record_every": 10, "output": "out/test",
            "problem": {"kind": "logistic", "d": 8, "n": 6, "mu": 0.05,
                        "box": 0.4, "data_seed": 2},
            "budget": {"max_queries": 3000},
            "solver": [{"tag": "katyusha-minibatch", "batch_size": 1},
                       {"tag": "projected-zo-gd", "name": "pzogd"}],
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(doc))
        toml_path = tmp_path / "cfg.toml"
        toml_path.write_text(TOML_TEXT)
        assert parse_config(path) == parse_config(toml_path)

    def test_box_false_means_unconstrained(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("""
[problem]
kind = "quadratic"
d = 4
box = false

[[solver]]
tag = "naive-accel"
""")
        cfg = parse_config(path)
        assert cfg.problem.box is None

    def test_unknown_top_level_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text('bogus = 1\n[[solver]]\ntag = "zo-svrg"\n')
        with pytest.raises(ConfigError, match="bogus"):
            parse_config(path)

    def test_unknown_solver_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text('[[solver]]\ntag = "zo-svrg"\nwhatever = 2\n')
        with pytest.raises(ConfigError, match="whatever"):
            parse_config(path)

    def test_unknown_tag_rejected_before_running(self):
        with pytest.raises(ConfigError, match="unknown solver tag"):
            SolverSpec(tag="katyusha-turbo")

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            ExperimentConfig(solvers=[SolverSpec(tag="zo-svrg"),
                                      SolverSpec(tag="zo-svrg")])

    def test_needs_some_budget(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(solvers=[SolverSpec(tag="zo-svrg")],
                             max_queries=None, max_iters=None)


class TestBands:
    def test_locf_never_extrapolates_before_first_record(self):
        t1 = make_trace([0, 1], [10, 100], [1.0, 0.1])
        t2 = make_trace([0, 1], [20, 90], [2.0, 0.2])
        grid = _query_grid([t1, t2])
        # grid must start late enough that every trace has a record
        assert grid[0] == 20
        assert grid[-1] == 90

    def test_trials_equal_one_gives_degenerate_band(self):
        t = make_trace([0, 1, 2], [4, 8, 16], [1.0, 0.5, 0.25])
        band = compute_band([t])
        assert np.allclose(band.q05, band.median)
        assert np.allclose(band.q95, band.median)

    def test_quantile_ordering_and_floor(self):
        rng = np.random.default_rng(0)
        traces = [make_trace([0, 1], [1, 100],
                             [1.0, 10.0 ** rng.uniform(-20, -1)], seed=i)
                  for i in range(40)]
        band = compute_band(traces)
        assert np.all(band.q05 <= band.median + 1e-18)
        assert np.all(band.median <= band.q95 + 1e-18)
        # floored at 1e-16 before the log-space quantiles
        assert np.all(band.q05 >= 1e-16)

    def test_band_median_is_log_space(self):
        # two trials with gaps 1e-2 and 1e-6: log-space median is 1e-4
        t1 = make_trace([0], [5], [1e-2])
        t2 = make_trace([0], [5], [1e-6])
        band = compute_band([t1, t2])
        assert band.median[0] == pytest.approx(1e-4, rel=1e-9)
        # the mean stays arithmetic
        assert band.mean[0] == pytest.approx(0.5 * (1e-2 + 1e-6), rel=1e-12)


class TestTraceCsv:
    def test_round_trip(self, tmp_path):
        t = make_trace([0, 5, 10], [4, 14, 24], [1.0, 1e-3, 1e-9],
                       solver="abc", seed=3)
        path = tmp_path / "trial_0.csv"
        write_trace_csv(path, t)
        back = read_trace_csv(path, solver="abc", seed=3)
        assert np.array_equal(back.ks, t.ks)
        assert np.array_equal(back.queries, t.queries)
        assert np.array_equal(back.gap, t.gap)
        assert back.solver == "abc" and back.seed == 3

    def test_header_is_fixed_contract(self, tmp_path):
        t = make_trace([0], [1], [1.0])
        path = tmp_path / "x.csv"
        write_trace_csv(path, t)
        assert path.read_text().splitlines()[0] == "k,queries,gap,lyapunov"

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_trace_csv(path)


class TestBuildProblem:
    def test_quadratic_minimizer_outside_box(self):
        spec = ProblemSpec(kind="quadratic", d=6, mu=0.1, box=0.5)
        problem, x_star, F_star, x0 = build_problem(spec)
        assert problem.dimension == 6
        # the planted center starts at 0.8 > box, so the box binds
        assert np.all(x_star <= 0.5 + 1e-12)
        assert np.any(np.abs(np.abs(x_star) - 0.5) < 1e-7)
        assert F_star > 0
        assert np.array_equal(x0, np.zeros(6))

    def test_inactive_box_warns(self):
        spec = ProblemSpec(kind="quadratic", d=4, mu=0.1, box=100.0)
        with pytest.warns(UserWarning, match="box"):
            build_problem(spec)

    def test_logistic_benchmark_scale(self):
        spec = ProblemSpec(kind="logistic", d=10, n=8, mu=0.05, box=0.5,
                           data_seed=3)
        problem, x_star, F_star, _ = build_problem(spec)
        assert problem.mu == pytest.approx(0.05)
        assert problem.mu_f == 0.0
        assert problem.F_exact(x_star) == pytest.approx(F_star)


class TestRunExperiment:
    def small_config(self, tmp_path, threads=None):
        return ExperimentConfig(
            problem=ProblemSpec(kind="logistic", d=6, n=5, mu=0.1, box=0.3,
                                data_seed=1),
            solvers=[SolverSpec(tag="katyusha-minibatch", batch_size=1),
                     SolverSpec(tag="zo-svrg")],
            trials=3, seed=9, record_every=5, max_queries=800,
            output=str(tmp_path / "out"), threads=threads)

    def test_outputs_and_determinism(self, tmp_path):
        cfg = self.small_config(tmp_path / "a")
        runs = run_experiment(cfg)
        assert set(runs) == {"katyusha-minibatch", "zo-svrg"}
        for label, run in runs.items():
            base = tmp_path / "a" / "out" / label
            files = sorted(p.name for p in base.iterdir())
            assert files == ["band.csv", "meta.json", "trial_0.csv",
                             "trial_1.csv", "trial_2.csv"]
            assert len(run.traces) == 3
        cfg2 = self.small_config(tmp_path / "b")
        run_experiment(cfg2)
        for label in runs:
            for name in ("band.csv", "trial_0.csv", "trial_2.csv"):
                a = (tmp_path / "a" / "out" / label / name).read_bytes()
                b = (tmp_path / "b" / "out" / label / name).read_bytes()
                assert a == b, f"{label}/{name} differs between identical runs"

    def test_band_csv_header(self, tmp_path):
        cfg = self.small_config(tmp_path)
        runs = run_experiment(cfg)
        path = tmp_path / "out" / "katyusha-minibatch" / "band.csv"
        assert path.read_text().splitlines()[0] == "queries,q05,median,q95,mean"
        band = runs["katyusha-minibatch"].band
        assert np.all(np.diff(band.queries) >= 0)

    def test_trial_seeds_differ(self, tmp_path):
        cfg = self.small_config(tmp_path)
        runs = run_experiment(cfg)
        gaps = [t.gap[-1] for t in runs["katyusha-minibatch"].traces]
        assert len(set(gaps)) > 1


class TestThreads:
    def test_default_serial(self, monkeypatch):
        monkeypatch.delenv("ZOKA_THREADS", raising=False)
        assert _thread_count(None) == 1

    def test_env_caps_request(self, monkeypatch):
        monkeypatch.setenv("ZOKA_THREADS", "2")
        assert _thread_count(8) == 2
        assert _thread_count(None) == 2
        monkeypatch.setenv("ZOKA_THREADS", "1")
        assert _thread_count(4) == 1


class TestFigureConfigs:
    def test_fig1_matches_benchmark_defaults(self):
        cfg = default_fig1_config()
        assert cfg.problem.kind == "logistic"
        assert cfg.problem.d == 40 and cfg.problem.n == 30
        assert cfg.problem.mu == 0.02 and cfg.problem.box == 0.5
        tags = [s.tag for s in cfg.solvers]
        assert tags == ["katyusha-minibatch", "katyusha-fullbatch",
                        "zo-svrg", "projected-zo-gd"]
        assert cfg.trials == 50 and cfg.max_queries == 200_000

    def test_fig2_pair(self):
        cfgs = fig2_configs()
        assert set(cfgs) == {"unconstrained", "constrained"}
        unc, con = cfgs["unconstrained"], cfgs["constrained"]
        assert unc.problem.kind == "quadratic" and unc.problem.d == 20
        assert unc.problem.box is None and con.problem.box == 0.5
        for cfg in (unc, con):
            assert [s.tag for s in cfg.solvers] == ["naive-accel"]
            assert cfg.solvers[0].beta == 1e-7

    def test_fig2_outputs_nested(self):
        cfgs = fig2_configs(output="base")
        assert cfgs["unconstrained"].output.endswith("unconstrained")
        assert cfgs["constrained"].output.endswith("constrained")
