"""Command-line front end.

Three subcommands: ``run`` simulates one configured scenario and writes
trace.csv/metrics.csv, ``benchmark`` times the solver backends across a
horizon list into timing.csv, and ``compare`` runs two configurations
side by side and emits their metric deltas.  Files carry SI units;
printed summaries use micrometers and milliseconds.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .harness import (METRIC_COLUMNS, RunMetrics, Scenario, benchmark_solvers,
                      metrics_to_csv, run_closed_loop, timing_to_csv,
                      trace_to_csv)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpcc",
        description="Contouring-control simulation and solver benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    run.add_argument("config", help="scenario configuration file")
    _common_flags(run)
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("benchmark", help="time solver backends")
    bench.add_argument("config", help="configuration with a benchmark section")
    bench.add_argument("--jobs", type=int, default=1, metavar="N",
                       help="accepted for compatibility; timing runs are "
                            "pinned to sequential execution")
    _common_flags(bench)
    bench.set_defaults(func=cmd_benchmark)

    comp = sub.add_parser("compare", help="run two scenarios and diff them")
    comp.add_argument("config_a", help="first configuration")
    comp.add_argument("config_b", help="second configuration")
    _common_flags(comp)
    comp.set_defaults(func=cmd_compare)
    return parser


def _common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--out", default=None, metavar="DIR",
                     help="output directory (overrides the config)")
    sub.add_argument("--quiet", action="store_true",
                     help="suppress the printed summary")


def _outdir(args, cfg: RunConfig) -> Path:
    out = Path(args.out) if args.out else Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _summary(scenario: Scenario, metrics: RunMetrics) -> str:
    return (f"{scenario.controller} N={scenario.N} "
            f"rms={metrics.rms_tracking * 1e6:.3f}um "
            f"inf={metrics.inf_tracking * 1e6:.3f}um "
            f"maneuver={metrics.maneuver_time:.3f}s "
            f"solve={metrics.solve_time_mean * 1e3:.3f}/"
            f"{metrics.solve_time_max * 1e3:.3f}ms "
            f"completed={metrics.completed}")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(args, cfg)
    metrics, trace = run_closed_loop(cfg.scenario)
    if cfg.output.trace:
        trace_to_csv(trace, out / "trace.csv")
    if cfg.output.metrics:
        metrics_to_csv(metrics, out / "metrics.csv")
    if not args.quiet:
        print(_summary(cfg.scenario, metrics))
    return 0 if metrics.completed else 2


def cmd_benchmark(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(args, cfg)
    bench = cfg.benchmark
    base = cfg.scenario
    templates = []
    for controller in bench.controllers:
        for backend in bench.backends:
            keep = controller == base.controller
            templates.append(Scenario(
                geometry=base.geometry,
                controller=controller,
                N=base.N, T=base.T,
                weights=base.weights if keep else None,
                limits=base.limits,
                backend=backend,
                trust_halfwidth=base.trust_halfwidth if controller == "local"
                else None,
                seed=base.seed))
    rows = benchmark_solvers(templates, bench.N_list, bench.repetitions)
    timing_to_csv(rows, out / "timing.csv")
    if not args.quiet:
        for row in rows:
            print(f"{row['controller']:6s} {row['backend']:10s} "
                  f"N={row['N']:<4d} mean={row['mean_ms']:8.3f}ms "
                  f"max={row['max_ms']:8.3f}ms exponent={row['exponent']:.2f}")
    return 0


def cmd_compare(args) -> int:
    cfg_a = load_config(args.config_a)
    cfg_b = load_config(args.config_b)
    out = _outdir(args, cfg_a)
    metrics_a, _ = run_closed_loop(cfg_a.scenario)
    metrics_b, _ = run_closed_loop(cfg_b.scenario)
    rows_a = metrics_a.row()
    rows_b = metrics_b.row()
    delta = tuple(b - a for a, b in zip(rows_a, rows_b))
    with open(out / "comparison.csv", "w", encoding="ascii") as fh:
        fh.write("label," + ",".join(METRIC_COLUMNS) + "\n")
        for label, row in (("a", rows_a), ("b", rows_b), ("delta", delta)):
            cells = ",".join(format(float(c), ".17g") if isinstance(c, float)
                             else str(c) for c in row)
            fh.write(f"{label},{cells}\n")
    if not args.quiet:
        print("a: " + _summary(cfg_a.scenario, metrics_a))
        print("b: " + _summary(cfg_b.scenario, metrics_b))
        print(f"delta: rms={delta[0] * 1e6:+.3f}um inf={delta[1] * 1e6:+.3f}um "
              f"maneuver={delta[2]:+.3f}s solve={delta[4] * 1e3:+.3f}ms")
    return 0 if metrics_a.completed and metrics_b.completed else 2


if __name__ == "__main__":
    sys.exit(main())
