"""Demand-supply interdependent networks.

Robustness quantification and robustness-maximizing resource
configurations, cost-minimal allocation under heterogeneous link costs,
a discrete-round cascading-failure simulator, mitigation via intentional
failures and resource re-adjustment, plus GA/RA reference allocators and
a Monte Carlo comparison harness.
"""

__version__ = "0.1.0"

from .baselines import greedy_allocate, random_allocate
from .cascade import (
    CascadeState,
    CascadeTrace,
    FluctuationSpec,
    inject,
    run_to_fixpoint,
    step,
    trace_lines,
)
from .costs import (
    CostModel,
    CostReduction,
    SolverParams,
    link_cost,
    load_cost_model,
    min_feasible_cost,
    reduce_cost,
    save_cost_model,
    solve_p2,
    solve_transport,
    total_cost,
)
from .design import (
    ProportionalDesignResult,
    UniformDesignResult,
    design_proportional,
    design_proportional_network,
    design_uniform,
    design_uniform_network,
    materialize_allocation,
    mtlf_proportional,
    mtlf_uniform,
    mtrf_proportional,
    mtrf_uniform,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    InfeasibleError,
    NumericallyInfeasibleError,
    ReadjustBudgetError,
)
from .experiments import (
    ExperimentConfig,
    generate_instance,
    run_cost_comparison,
    run_mitigation_study,
    run_robustness_comparison,
)
from .mitigation import (
    FixedTopologyProblem,
    MitigationBudget,
    MitigationParams,
    absorb_feasible,
    fixed_topology_readjust,
    min_intentional_failures,
    mitigate,
    readjust,
)
from .model import (
    DemandNode,
    Network,
    StabilityReport,
    SupplyNode,
    TOLERANCE,
    aggregate_offered,
    aggregate_received,
    check_stability,
    engaged_suppliers,
    free_capacities,
    free_capacity,
    load_network,
    offered_totals,
    received_totals,
    save_network,
)

__all__ = [name for name in dir() if not name.startswith("_")]
