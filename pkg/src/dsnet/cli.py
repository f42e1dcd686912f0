"""Command-line interface.

Commands operate on network / cost-model JSON files and emit CSV or JSON
tables plus a run manifest.  Exit codes: 0 success, 2 configuration
error, 3 infeasibility, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .baselines import greedy_allocate, random_allocate
from .cascade import FluctuationSpec, run_to_fixpoint, trace_lines
from .costs import (
    SolverParams,
    load_cost_model,
    min_feasible_cost,
    reduce_cost,
    solve_p2,
    total_cost,
)
from .design import (
    design_proportional_network,
    design_uniform_network,
    mtlf_proportional,
    mtlf_uniform,
    mtrf_proportional,
    mtrf_uniform,
)
from .errors import ConfigError, ConvergenceError, InfeasibleError
from .experiments import (
    ExperimentConfig,
    generate_instance,
    run_cost_comparison,
    run_mitigation_study,
    run_robustness_comparison,
    write_manifest,
    write_table,
)
from .mitigation import MitigationBudget, MitigationParams, mitigate
from .model import (
    Network,
    check_stability,
    load_network,
    offered_totals,
    save_network,
)

EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NO_CONVERGENCE = 4


def _add_common(parser):
    parser.add_argument("--config", help="JSON experiment config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--scale", choices=("desk", "paper"), default="desk")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")


def _load_config(args) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.from_file(args.config)
        if args.seed:
            config = ExperimentConfig.from_dict(
                dict(config.to_dict(), seed=args.seed))
        return config
    return ExperimentConfig.for_scale(args.scale, seed=args.seed)


def _out_dir(args) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_targets(text):
    if text is None:
        return None
    return tuple(int(x) for x in text.split(",") if x != "")


def _build_spec(args) -> FluctuationSpec:
    return FluctuationSpec(args.kind, args.magnitude,
                           _parse_targets(args.targets))


def cmd_generate(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    for r in range(args.first, args.first + args.count):
        resources, loads, cost_model = generate_instance(config, r)
        save_network(Network(resources, loads), out / f"instance_{r:04d}.json")
        from .costs import save_cost_model
        save_cost_model(cost_model, out / f"costs_{r:04d}.json")
    write_manifest(config, out / "manifest.json", "generate",
                   {"first": args.first, "count": args.count})
    print(f"wrote {args.count} instance(s) to {out}")
    return 0


def cmd_design(args) -> int:
    network = load_network(args.network)
    out = _out_dir(args)
    resources, loads = network.resources, network.loads
    if args.method == "uniform":
        designed, result = design_uniform_network(resources, loads,
                                                  args.epsilon)
        print(f"mtrf_uniform={mtrf_uniform(designed):.6g} "
              f"mtlf_uniform={mtlf_uniform(designed):.6g} "
              f"engaged={len(result.engaged)}")
    elif args.method == "proportional":
        designed, result = design_proportional_network(resources, loads)
        print(f"mtrf_proportional={result.mtrf:.6g} "
              f"mtlf_proportional={result.mtlf:.6g}")
    elif args.method == "ga":
        designed = network.with_allocation(
            greedy_allocate(resources, loads, args.freeze))
    else:
        designed = network.with_allocation(
            random_allocate(resources, loads, args.freeze, seed=args.seed))
    report = check_stability(designed)
    if not report.stable:
        raise InfeasibleError(f"designed network unstable: {report}")
    target = out / f"designed_{args.method}.json"
    save_network(designed, target)
    print(f"wrote {target}")
    return 0


def cmd_cost(args) -> int:
    network = load_network(args.network)
    cost_model = load_cost_model(args.costs)
    out = _out_dir(args)
    current = total_cost(network.allocation, cost_model)
    print(f"current_cost={current:.6g}")
    params = SolverParams()
    optimal = solve_p2(offered_totals(network), network.loads, cost_model,
                       params)
    print(f"optimized_cost={total_cost(optimal, cost_model):.6g}")
    floor, _ = min_feasible_cost(network.resources, network.loads, cost_model,
                                 params)
    print(f"min_feasible_cost={floor:.6g}")
    save_network(network.with_allocation(optimal), out / "cost_optimal.json")
    if args.reduce_to is not None:
        reduction = reduce_cost(network, cost_model, args.epsilon,
                                args.reduce_to, args.regime, rng=args.seed)
        save_network(network.with_allocation(reduction.allocation),
                     out / "cost_reduced.json")
        write_table([{"iteration": i, "cost": float(c)}
                     for i, c in enumerate(reduction.costs)],
                    out / f"reduction_trace.{args.format}", args.format)
        status = "reached" if reduction.reached_objective else "best-effort"
        print(f"reduced_cost={reduction.costs[-1]:.6g} ({status}, "
              f"{reduction.iterations} iterations)")
    return 0


def cmd_cascade(args) -> int:
    network = load_network(args.network)
    trace = run_to_fixpoint(network, _build_spec(args), args.regime)
    out = _out_dir(args)
    target = out / "cascade_trace.txt"
    target.write_text("\n".join(trace_lines(trace)) + "\n")
    print(f"rounds={trace.n_rounds} "
          f"surviving_supplies={trace.surviving_supplies} "
          f"surviving_demands={trace.surviving_demands}")
    print(f"wrote {target}")
    return 0


def cmd_mitigate(args) -> int:
    network = load_network(args.network)
    budget = MitigationBudget(gamma=args.gamma, upsilon=args.upsilon)
    params = MitigationParams(nu=args.nu, epsilon=args.readjust_epsilon,
                              seed=args.seed)
    trace, allocation = mitigate(network, _build_spec(args), args.regime,
                                 budget, params)
    out = _out_dir(args)
    (out / "mitigation_trace.txt").write_text(
        "\n".join(trace_lines(trace)) + "\n")
    save_network(network.with_allocation(allocation),
                 out / "mitigated_network.json")
    print(f"rounds={trace.n_rounds} "
          f"surviving_supplies={trace.surviving_supplies} "
          f"surviving_demands={trace.surviving_demands}")
    return 0


def cmd_compare_robustness(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    result = run_robustness_comparison(config)
    write_table(result.rows, out / f"robustness.{args.format}", args.format)
    write_table(result.summary, out / f"robustness_summary.{args.format}",
                args.format)
    write_manifest(config, out / "manifest.json", "compare-robustness")
    for line in result.summary:
        print(f"{line['metric']}: mean gain {line['gain_pct_mean']:.1f}% "
              f"(vs GA {line['gain_pct_vs_ga']:.1f}%, "
              f"vs RA {line['gain_pct_vs_ra']:.1f}%)")
    return 0


def cmd_compare_cost(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    result = run_cost_comparison(config,
                                 trace_realizations=args.trace_realizations)
    write_table(result.rows, out / f"cost.{args.format}", args.format)
    write_table(result.summary, out / f"cost_summary.{args.format}",
                args.format)
    if result.reduction_traces:
        write_table(result.reduction_traces,
                    out / f"cost_reduction_traces.{args.format}", args.format)
        write_table(result.post_reduction,
                    out / f"cost_post_reduction.{args.format}", args.format)
    write_manifest(config, out / "manifest.json", "compare-cost")
    s = result.summary[0]
    print(f"mean saving vs RA: {s['mean_saving_pct_vs_ra']:.1f}% "
          f"(cheaper in {100 * s['opt_cheaper_than_ra_fraction']:.0f}% "
          "of realizations)")
    return 0


def cmd_study_mitigation(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    fractions = tuple(float(x) for x in args.varpi.split(","))
    counts = tuple(int(x) for x in args.failures.split(","))
    result = run_mitigation_study(config, fractions, counts,
                                  regime=args.regime)
    write_table(result.rows, out / f"mitigation.{args.format}", args.format)
    write_table(result.summary, out / f"mitigation_summary.{args.format}",
                args.format)
    write_manifest(config, out / "manifest.json", "study-mitigation",
                   {"varpi": list(fractions), "failures": list(counts)})
    for line in result.summary:
        print(f"failures={line['initial_failures']} "
              f"varpi={line['varpi']}: "
              f"mean survivors {line['mean_survivors_total']:.1f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsnet",
        description="Demand-supply network design, cascades, and mitigation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw random instances")
    _add_common(p)
    p.add_argument("--first", type=int, default=0,
                   help="first realization index")
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("design", help="design an allocation for a network")
    _add_common(p)
    p.add_argument("--network", required=True)
    p.add_argument("--method", required=True,
                   choices=("uniform", "proportional", "ga", "ra"))
    p.add_argument("--epsilon", type=float, default=0.01,
                   help="per-link seed for the uniform design spread")
    p.add_argument("--freeze", type=float, default=0.1,
                   help="baseline freeze fraction")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("cost", help="cost-optimal allocation for a network")
    _add_common(p)
    p.add_argument("--network", required=True)
    p.add_argument("--costs", required=True)
    p.add_argument("--reduce-to", type=float, default=None,
                   help="also run iterative cost reduction to this target")
    p.add_argument("--epsilon", type=float, default=0.01,
                   help="cost-reduction step size")
    p.add_argument("--regime", choices=("uniform", "proportional"),
                   default="uniform")
    p.set_defaults(func=cmd_cost)

    def add_spec_args(q):
        q.add_argument("--network", required=True)
        q.add_argument("--kind", required=True, choices=(
            "supply_internal_failure", "uniform_resource_drop",
            "uniform_load_rise", "proportional_resource_drop",
            "proportional_load_rise"))
        q.add_argument("--magnitude", type=float, default=0.0)
        q.add_argument("--targets", default=None,
                       help="comma-separated node ids (default: whole layer)")
        q.add_argument("--regime", choices=("uniform", "proportional"),
                       default="uniform")

    p = sub.add_parser("cascade", help="run a cascade to its fixpoint")
    _add_common(p)
    add_spec_args(p)
    p.set_defaults(func=cmd_cascade)

    p = sub.add_parser("mitigate", help="run a cascade with the controller")
    _add_common(p)
    add_spec_args(p)
    p.add_argument("--gamma", type=int, required=True,
                   help="max intentional failures per round")
    p.add_argument("--upsilon", type=float, required=True,
                   help="max re-adjusted mass per round")
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--readjust-epsilon", type=float, default=0.05)
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("compare-robustness",
                       help="tolerance metrics vs baselines")
    _add_common(p)
    p.set_defaults(func=cmd_compare_robustness)

    p = sub.add_parser("compare-cost", help="allocation cost vs baselines")
    _add_common(p)
    p.add_argument("--trace-realizations", type=int, default=1)
    p.set_defaults(func=cmd_compare_cost)

    p = sub.add_parser("study-mitigation",
                       help="survivor counts with and without adaptation")
    _add_common(p)
    p.add_argument("--varpi", default="0,0.15,0.35",
                   help="comma-separated budget fractions")
    p.add_argument("--failures", default="5,10,15,20,25,30",
                   help="comma-separated initial supply failure counts")
    p.add_argument("--regime", choices=("uniform", "proportional"),
                   default="uniform")
    p.set_defaults(func=cmd_study_mitigation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
