"""Command-line entry point (installed as `bench`).

Subcommands:
    run <config>   run an experiment described by a TOML or JSON config
    fig1           stock four-solver comparison on the logistic benchmark
    fig2           naive accelerated scheme, unconstrained vs box-constrained
    verify         empirical checks of the error bounds and decay guarantee
    presets        print derived solver parameters for a preset family
"""

from __future__ import annotations

import argparse
import sys

from . import bench
from .solvers import PresetKind, preset

_PRESET_BY_COROLLARY = {
    1: PresetKind.MINIBATCH_COORDINATE,
    2: PresetKind.MINIBATCH_SPHERE,
    3: PresetKind.FULLBATCH_COORDINATE,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Zeroth-order composite optimization benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config", help="path to a .toml or .json config")

    p_fig1 = sub.add_parser(
        "fig1", help="four-solver comparison on the logistic benchmark")
    p_fig1.add_argument("--output", default="out/fig1")
    p_fig1.add_argument("--trials", type=int, default=50)
    p_fig1.add_argument("--seed", type=int, default=2024)
    p_fig1.add_argument("--max-queries", type=int,
                        default=bench.DEFAULT_MAX_QUERIES)
    p_fig1.add_argument("--record-every", type=int, default=25)

    p_fig2 = sub.add_parser(
        "fig2", help="naive accelerated scheme: unconstrained vs constrained")
    p_fig2.add_argument("--output", default="out/fig2")
    p_fig2.add_argument("--trials", type=int, default=50)
    p_fig2.add_argument("--seed", type=int, default=11)
    p_fig2.add_argument("--max-queries", type=int,
                        default=bench.DEFAULT_MAX_QUERIES)
    p_fig2.add_argument("--beta", type=float, default=1e-7)

    p_verify = sub.add_parser(
        "verify", help="check estimator bounds and the decay guarantee")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--trials", type=int, default=50,
                          help="trials for the decay regression")
    p_verify.add_argument("--mc-samples", type=int, default=100_000)

    p_presets = sub.add_parser(
        "presets", help="print derived parameters for a preset family")
    p_presets.add_argument("--corollary", type=int, choices=(1, 2, 3),
                           required=True,
                           help="1 = coordinate minibatch, 2 = sphere "
                                "minibatch, 3 = full batch")
    p_presets.add_argument("--d", type=int, required=True)
    p_presets.add_argument("--L", type=float, required=True)
    p_presets.add_argument("--mu", type=float, required=True)
    p_presets.add_argument("--batch", type=int, default=1)
    p_presets.add_argument("--eps", type=float, default=1e-6)
    p_presets.add_argument("--mu-f", type=float, default=0.0)
    p_presets.add_argument("--x0-norm", type=float, default=0.0)
    return parser


def _cmd_run(args) -> int:
    config = bench.parse_config(args.config)
    bench.run_experiment(config, echo=print)
    print(f"wrote results under {config.output}")
    return 0


def _cmd_fig1(args) -> int:
    config = bench.default_fig1_config(
        output=args.output, trials=args.trials, seed=args.seed,
        max_queries=args.max_queries, record_every=args.record_every)
    bench.run_experiment(config, echo=print)
    print(f"wrote results under {args.output}")
    return 0


def _cmd_fig2(args) -> int:
    bands = bench.run_fig2_demo(output=args.output, trials=args.trials,
                                seed=args.seed, max_queries=args.max_queries,
                                beta=args.beta, echo=print)
    for label, band in bands.items():
        print(f"{label}: median final gap {band.median[-1]:.3e}")
    print(f"wrote results under {args.output}")
    return 0


def _cmd_verify(args) -> int:
    from .verify import verify_theory

    results = verify_theory(seed=args.seed, decay_trials=args.trials,
                            mc_samples=args.mc_samples)
    failures = 0
    for r in results:
        print(r.line())
        failures += 0 if r.passed else 1
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 1 if failures else 0


def _cmd_presets(args) -> int:
    kind = _PRESET_BY_COROLLARY[args.corollary]
    params = preset(kind, d=args.d, L=args.L, mu=args.mu, mu_f=args.mu_f,
                    batch_size=args.batch, epsilon=args.eps,
                    x0_norm=args.x0_norm)
    for key, value in params.echo().items():
        print(f"{key} = {value}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "fig1": _cmd_fig1,
    "fig2": _cmd_fig2,
    "verify": _cmd_verify,
    "presets": _cmd_presets,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
