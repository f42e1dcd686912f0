"""Monte Carlo experiment harness.

Generates random network instances, runs the designers and baselines over
many realizations, and emits flat result tables (plus a machine-readable
run manifest).  Every table is reproducible bit-for-bit from the
configuration and seed: each realization and trial owns an RNG stream
derived from (seed, realization, trial).
"""

from __future__ import annotations

import csv
import json
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import greedy_allocate, random_allocate
from .cascade import FluctuationSpec, run_to_fixpoint
from .costs import CostModel, min_feasible_cost, reduce_cost, solve_p2, total_cost
from .design import (
    design_proportional_network,
    design_uniform_network,
    mtlf_proportional,
    mtlf_uniform,
    mtrf_proportional,
    mtrf_uniform,
)
from .errors import ConfigError, InfeasibleError
from .mitigation import MitigationBudget, MitigationParams, mitigate
from .model import Network, check_stability

_SCALE_DEFAULTS = {
    # Desk scale keeps the full-scale ratios at a size test suites can run.
    "desk": dict(n_supplies=50, n_demands=40, n_realizations=50, n_trials=20),
    "paper": dict(n_supplies=250, n_demands=200, n_realizations=200,
                  n_trials=100),
}


@dataclass
class ExperimentConfig:
    """Instance-generation and trial-count settings for one run."""

    n_supplies: int = 50
    n_demands: int = 40
    resource_range: tuple[float, float] = (10.0, 280.0)
    load_range: tuple[float, float] = (10.0, 200.0)
    cost_alpha_range: tuple[float, float] = (10.0, 100.0)
    cost_beta_range: tuple[float, float] = (1.1, 1.4)
    n_realizations: int = 50
    n_trials: int = 20
    seed: int = 0
    scale: str = "desk"
    freeze_fraction: float = 0.1
    reduction_epsilon: float = 0.01

    def __post_init__(self):
        self.resource_range = tuple(float(x) for x in self.resource_range)
        self.load_range = tuple(float(x) for x in self.load_range)
        self.cost_alpha_range = tuple(float(x) for x in self.cost_alpha_range)
        self.cost_beta_range = tuple(float(x) for x in self.cost_beta_range)
        for name in ("n_supplies", "n_demands", "n_realizations", "n_trials"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("resource_range", "load_range", "cost_alpha_range",
                     "cost_beta_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} is empty: {lo} > {hi}")
        if self.resource_range[0] < 0 or self.load_range[0] < 0:
            raise ConfigError("resource and load ranges must be nonnegative")
        if self.cost_alpha_range[0] <= 0:
            raise ConfigError("alpha range must be positive")
        if self.cost_beta_range[0] <= 1:
            raise ConfigError("beta range must stay above 1")
        if not 0 <= self.freeze_fraction < 1:
            raise ConfigError("freeze_fraction must be in [0, 1)")
        if self.n_supplies * self.resource_range[1] <= \
                self.n_demands * self.load_range[0]:
            raise ConfigError(
                "resource/load ranges make every realization infeasible")

    @classmethod
    def for_scale(cls, scale: str, seed: int = 0, **overrides) -> "ExperimentConfig":
        if scale not in _SCALE_DEFAULTS:
            raise ConfigError(f"unknown scale {scale!r}")
        fields = dict(_SCALE_DEFAULTS[scale], scale=scale, seed=seed)
        fields.update(overrides)
        return cls(**fields)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        scale = data.pop("scale", "desk")
        seed = data.pop("seed", 0)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls.for_scale(scale, seed=seed, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


def generate_instance(config: ExperimentConfig, realization_index: int,
                      ) -> tuple[np.ndarray, np.ndarray, CostModel]:
    """Draw one (resources, loads, cost model) realization.

    Deterministic per (config.seed, realization_index).  Realizations
    violating total-resources > total-loads are rejected and redrawn.
    """
    rng = np.random.default_rng([config.seed, realization_index])
    for _ in range(1000):
        resources = rng.uniform(*config.resource_range, config.n_supplies)
        loads = rng.uniform(*config.load_range, config.n_demands)
        if resources.sum() > loads.sum():
            break
    else:
        raise ConfigError(
            "could not draw a feasible realization in 1000 attempts")
    shape = (config.n_supplies, config.n_demands)
    alpha = rng.uniform(*config.cost_alpha_range, shape)
    beta = rng.uniform(*config.cost_beta_range, shape)
    return resources, loads, CostModel(alpha, beta)


def _baseline_networks(config, resources, loads, realization):
    """GA and RA networks for a realization (RA redraws on rare freeze
    infeasibility)."""
    ga = Network(resources, loads, greedy_allocate(
        resources, loads, config.freeze_fraction))
    ra_alloc = None
    for retry in range(20):
        try:
            ra_alloc = random_allocate(
                resources, loads, config.freeze_fraction,
                seed=[config.seed, realization, 101, retry])
            break
        except InfeasibleError:
            continue
    if ra_alloc is None:
        raise InfeasibleError("random allocator could not satisfy the loads")
    return ga, Network(resources, loads, ra_alloc)


def _require_stable(network: Network, label: str) -> Network:
    report = check_stability(network)
    if not report.stable:
        raise RuntimeError(f"{label} produced an unstable allocation: "
                           f"{report.overloaded[:3]} {report.deficient[:3]}")
    return network


@dataclass
class RobustnessComparison:
    rows: list[dict]
    summary: list[dict]


def run_robustness_comparison(config: ExperimentConfig) -> RobustnessComparison:
    """Tolerance metrics of the optimal designs vs the GA/RA baselines.

    One row per realization with all four metrics (MTRF/MTLF under the
    uniform and proportional regimes) for each method; the summary holds
    the mean percentage gains over each baseline and their average.
    """
    rows = []
    for r in range(config.n_realizations):
        resources, loads, _ = generate_instance(config, r)
        uni_net, _ = design_uniform_network(resources, loads)
        prop_net, _ = design_proportional_network(resources, loads)
        _require_stable(uni_net, "design_uniform")
        _require_stable(prop_net, "design_proportional")
        ga, ra = _baseline_networks(config, resources, loads, r)
        _require_stable(ga, "greedy_allocate")
        _require_stable(ra, "random_allocate")
        row = {"realization": r}
        for label, net in (("opt", None), ("ga", ga), ("ra", ra)):
            uni = uni_net if net is None else net
            prop = prop_net if net is None else net
            row[f"mtrf_uniform_{label}"] = mtrf_uniform(uni)
            row[f"mtlf_uniform_{label}"] = mtlf_uniform(uni)
            row[f"mtrf_proportional_{label}"] = mtrf_proportional(prop)
            row[f"mtlf_proportional_{label}"] = mtlf_proportional(prop)
        rows.append(row)

    summary = []
    metrics = ("mtrf_uniform", "mtlf_uniform", "mtrf_proportional",
               "mtlf_proportional")
    for metric in metrics:
        gains = {}
        for base in ("ga", "ra"):
            pct = [100.0 * (row[f"{metric}_opt"] - row[f"{metric}_{base}"])
                   / row[f"{metric}_{base}"] for row in rows]
            gains[base] = float(np.mean(pct))
        summary.append({
            "metric": metric,
            "gain_pct_vs_ga": gains["ga"],
            "gain_pct_vs_ra": gains["ra"],
            "gain_pct_mean": (gains["ga"] + gains["ra"]) / 2.0,
        })
    return RobustnessComparison(rows=rows, summary=summary)


@dataclass
class CostComparison:
    rows: list[dict]
    summary: list[dict]
    reduction_traces: list[dict] = field(default_factory=list)
    post_reduction: list[dict] = field(default_factory=list)


def run_cost_comparison(config: ExperimentConfig, trace_realizations: int = 1,
                        trace_max_iterations: int = 40_000) -> CostComparison:
    """Allocation cost of the cost-effective design vs the baselines.

    The cost-effective design solves the minimum-cost allocation with the
    robustness-optimal offered totals.  For the first
    ``trace_realizations`` realizations the iterative cost-reduction pass
    is additionally run on every method's allocation (toward 1.05x the
    minimum feasible cost, capped at ``trace_max_iterations`` steps) and
    its cost-per-iteration trace plus post-reduction tolerance recorded.
    """
    rows = []
    traces = []
    post = []
    for r in range(config.n_realizations):
        resources, loads, cost_model = generate_instance(config, r)
        design = design_uniform_network(resources, loads)[1]
        opt_alloc = solve_p2(design.offered_totals, loads, cost_model)
        opt_net = _require_stable(Network(resources, loads, opt_alloc),
                                  "solve_p2")
        ga, ra = _baseline_networks(config, resources, loads, r)
        cost_opt = total_cost(opt_alloc, cost_model)
        cost_ga = total_cost(ga.allocation, cost_model)
        cost_ra = total_cost(ra.allocation, cost_model)
        rows.append({
            "realization": r,
            "cost_opt": cost_opt,
            "cost_ga": cost_ga,
            "cost_ra": cost_ra,
            "saving_pct_vs_ra": 100.0 * (cost_ra - cost_opt) / cost_ra,
        })
        if r < trace_realizations:
            floor, _ = min_feasible_cost(resources, loads, cost_model)
            objective = 1.05 * floor
            for m, net in (("opt", opt_net), ("ga", ga), ("ra", ra)):
                reduction = reduce_cost(
                    net, cost_model, config.reduction_epsilon, objective,
                    regime="uniform", rng=[config.seed, r, 301],
                    max_iterations=trace_max_iterations)
                for i, c in enumerate(reduction.costs):
                    traces.append({"realization": r, "method": m,
                                   "iteration": i, "cost": float(c)})
                reduced_net = Network(resources, loads, reduction.allocation)
                _require_stable(reduced_net, "reduce_cost")
                post.append({
                    "realization": r,
                    "method": m,
                    "final_cost": float(reduction.costs[-1]),
                    "objective_cost": objective,
                    "reached_objective": reduction.reached_objective,
                    "mtrf_uniform": mtrf_uniform(reduced_net),
                })
    summary = [{
        "mean_cost_opt": float(np.mean([w["cost_opt"] for w in rows])),
        "mean_cost_ga": float(np.mean([w["cost_ga"] for w in rows])),
        "mean_cost_ra": float(np.mean([w["cost_ra"] for w in rows])),
        "mean_saving_pct_vs_ra": float(np.mean(
            [w["saving_pct_vs_ra"] for w in rows])),
        "opt_cheaper_than_ra_fraction": float(np.mean(
            [w["cost_opt"] < w["cost_ra"] for w in rows])),
    }]
    return CostComparison(rows=rows, summary=summary,
                          reduction_traces=traces, post_reduction=post)


@dataclass
class MitigationStudy:
    rows: list[dict]
    summary: list[dict]


def run_mitigation_study(config: ExperimentConfig,
                         budget_fractions=(0.0, 0.15, 0.35),
                         initial_failure_counts=(5, 10, 15, 20, 25, 30),
                         regime: str = "uniform") -> MitigationStudy:
    """Survivors with and without adaptation on randomly failed supplies.

    Per (realization, trial, count): fail ``count`` random supplies of a
    random-allocation network, then run the cascade for every budget
    fraction varpi (gamma = round(varpi * D) intentional failures and
    upsilon = varpi * total-load re-adjustment per round; varpi = 0 is the
    plain, unmitigated cascade).  The re-adjustment step is scaled to the
    budget so runs stay fast at any scale.
    """
    counts = tuple(int(c) for c in initial_failure_counts)
    if any(c <= 0 or c > config.n_supplies for c in counts):
        raise ConfigError("initial failure counts must be in [1, n_supplies]")
    fractions = tuple(float(v) for v in budget_fractions)
    if any(v < 0 for v in fractions):
        raise ConfigError("budget fractions must be nonnegative")
    rows = []
    for r in range(config.n_realizations):
        resources, loads, _ = generate_instance(config, r)
        _, ra = _baseline_networks(config, resources, loads, r)
        total_load = float(loads.sum())
        for trial in range(config.n_trials):
            for count in counts:
                rng = np.random.default_rng([config.seed, r, trial, count])
                failed = rng.choice(config.n_supplies, size=count,
                                    replace=False)
                spec = FluctuationSpec.supply_internal_failure(
                    sorted(int(k) for k in failed))
                baseline = run_to_fixpoint(ra, spec, regime)
                for varpi in fractions:
                    if varpi == 0.0:
                        trace = baseline
                    else:
                        budget = MitigationBudget(
                            gamma=int(round(varpi * config.n_demands)),
                            upsilon=varpi * total_load)
                        params = MitigationParams(
                            nu=max(0.01, budget.upsilon / 1000.0),
                            seed=(config.seed * 1_000_003 + r * 10_007
                                  + trial * 101 + count) % 2**32,
                        )
                        trace, _ = mitigate(ra, spec, regime, budget, params)
                    rows.append({
                        "realization": r,
                        "trial": trial,
                        "initial_failures": count,
                        "varpi": varpi,
                        "surviving_supplies": trace.surviving_supplies,
                        "surviving_demands": trace.surviving_demands,
                        "survivors_total": trace.surviving_supplies
                        + trace.surviving_demands,
                        "unmitigated_total": baseline.surviving_supplies
                        + baseline.surviving_demands,
                    })
    summary = []
    for count in counts:
        for varpi in fractions:
            sel = [w for w in rows if w["initial_failures"] == count
                   and w["varpi"] == varpi]
            summary.append({
                "initial_failures": count,
                "varpi": varpi,
                "mean_surviving_supplies": float(np.mean(
                    [w["surviving_supplies"] for w in sel])),
                "mean_surviving_demands": float(np.mean(
                    [w["surviving_demands"] for w in sel])),
                "mean_survivors_total": float(np.mean(
                    [w["survivors_total"] for w in sel])),
                "n_trials": len(sel),
            })
    return MitigationStudy(rows=rows, summary=summary)


def write_table(rows: list[dict], path, fmt: str = "csv") -> None:
    """Write a flat table as headered CSV or a JSON array."""
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            if not rows:
                return
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    elif fmt == "json":
        with open(path, "w") as fh:
            json.dump(rows, fh, indent=1)
            fh.write("\n")
    else:
        raise ConfigError(f"unknown output format {fmt!r}")


def write_manifest(config: ExperimentConfig, path, command: str,
                   extra: dict | None = None) -> None:
    """Record the exact inputs behind a result directory."""
    doc = {
        "command": command,
        "config": config.to_dict(),
        "versions": {
            "dsnet": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
