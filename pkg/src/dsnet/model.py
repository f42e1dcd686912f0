"""Demand-supply bipartite network model.

Supply nodes hold resource pools, demand nodes request loads, and a dense
S x D allocation matrix records how much each supply node shares with each
demand node.  An edge exists wherever the allocation entry is positive.

A network is stable when no supply node offers more than its resource
(no overload) and every demand node receives at least its load (no
deficiency).  All comparisons use the absolute tolerance ``TOLERANCE`` so
results are deterministic under floating point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError

# Absolute tolerance for every stability / engagement comparison.
TOLERANCE = 1e-9


@dataclass(frozen=True)
class SupplyNode:
    """A supply-layer node with a nonnegative resource pool."""

    id: int
    resource: float

    def __post_init__(self):
        if self.resource < 0:
            raise ValueError(f"supply {self.id}: resource must be >= 0")


@dataclass(frozen=True)
class DemandNode:
    """A demand-layer node with a nonnegative requested load."""

    id: int
    load: float

    def __post_init__(self):
        if self.load < 0:
            raise ValueError(f"demand {self.id}: load must be >= 0")


@dataclass
class StabilityReport:
    """Outcome of a stability check.

    ``overloaded`` lists (supply id, excess offered beyond the resource);
    ``deficient`` lists (demand id, shortfall below the load).  The network
    is stable iff both lists are empty.
    """

    overloaded: list[tuple[int, float]]
    deficient: list[tuple[int, float]]

    @property
    def stable(self) -> bool:
        return not self.overloaded and not self.deficient


class Network:
    """Immutable supply/demand network with its allocation matrix.

    Construction enforces the non-triviality assumption that total
    resources strictly exceed total loads; violating it raises
    :class:`InfeasibleError`.  Node identity is the positional index.
    """

    __slots__ = ("resources", "loads", "allocation")

    def __init__(self, resources, loads, allocation=None):
        resources = np.asarray(resources, dtype=float).copy()
        loads = np.asarray(loads, dtype=float).copy()
        if resources.ndim != 1 or loads.ndim != 1:
            raise ValueError("resources and loads must be 1-D")
        if (resources < 0).any():
            raise ValueError("resources must be nonnegative")
        if (loads < 0).any():
            raise ValueError("loads must be nonnegative")
        if resources.sum() <= loads.sum():
            raise InfeasibleError(
                "total resources must strictly exceed total loads "
                f"({resources.sum()} <= {loads.sum()})",
                deficit=float(loads.sum() - resources.sum()),
            )
        if allocation is None:
            allocation = np.zeros((resources.size, loads.size))
        else:
            allocation = np.asarray(allocation, dtype=float).copy()
            if allocation.shape != (resources.size, loads.size):
                raise ValueError(
                    f"allocation shape {allocation.shape} does not match "
                    f"({resources.size}, {loads.size})"
                )
            if (allocation < 0).any():
                raise ValueError("allocation entries must be nonnegative")
        resources.setflags(write=False)
        loads.setflags(write=False)
        allocation.setflags(write=False)
        object.__setattr__(self, "resources", resources)
        object.__setattr__(self, "loads", loads)
        object.__setattr__(self, "allocation", allocation)

    def __setattr__(self, name, value):
        raise AttributeError("Network is immutable; use with_allocation()")

    @property
    def n_supplies(self) -> int:
        return self.resources.size

    @property
    def n_demands(self) -> int:
        return self.loads.size

    @property
    def supplies(self) -> list[SupplyNode]:
        return [SupplyNode(i, float(r)) for i, r in enumerate(self.resources)]

    @property
    def demands(self) -> list[DemandNode]:
        return [DemandNode(i, float(l)) for i, l in enumerate(self.loads)]

    def with_allocation(self, allocation) -> "Network":
        """Return a copy of this network carrying a different allocation."""
        return Network(self.resources, self.loads, allocation)

    def copy(self) -> "Network":
        return Network(self.resources, self.loads, self.allocation)

    def __repr__(self):
        return f"Network(S={self.n_supplies}, D={self.n_demands})"


def _check_index(n: int, index: int, kind: str) -> None:
    if not 0 <= index < n:
        raise IndexError(f"{kind} index {index} out of range [0, {n})")


def aggregate_offered(network: Network, supply_id: int) -> float:
    """Total resources the supply node currently offers (its row sum)."""
    _check_index(network.n_supplies, supply_id, "supply")
    return float(network.allocation[supply_id].sum())


def aggregate_received(network: Network, demand_id: int) -> float:
    """Total resources the demand node currently receives (its column sum)."""
    _check_index(network.n_demands, demand_id, "demand")
    return float(network.allocation[:, demand_id].sum())


def free_capacity(network: Network, supply_id: int) -> float:
    """Headroom of a supply node: resource minus offered total.

    Negative values signal an overloaded node.
    """
    _check_index(network.n_supplies, supply_id, "supply")
    return float(network.resources[supply_id] - network.allocation[supply_id].sum())


def offered_totals(network: Network) -> np.ndarray:
    """Vector of per-supply offered totals (allocation row sums)."""
    return network.allocation.sum(axis=1)


def received_totals(network: Network) -> np.ndarray:
    """Vector of per-demand received totals (allocation column sums)."""
    return network.allocation.sum(axis=0)


def free_capacities(network: Network) -> np.ndarray:
    """Vector of per-supply free capacities."""
    return network.resources - offered_totals(network)


def engaged_suppliers(network: Network, tol: float = TOLERANCE) -> set[int]:
    """Ids of supply nodes actually involved in provisioning (offered > tol)."""
    return set(np.flatnonzero(offered_totals(network) > tol).tolist())


def check_stability(network: Network, tol: float = TOLERANCE) -> StabilityReport:
    """Report overloaded supplies and deficient demands with magnitudes."""
    offered = offered_totals(network)
    received = received_totals(network)
    over = offered - network.resources
    short = network.loads - received
    overloaded = [(int(k), float(over[k])) for k in np.flatnonzero(over > tol)]
    deficient = [(int(g), float(short[g])) for g in np.flatnonzero(short > tol)]
    return StabilityReport(overloaded=overloaded, deficient=deficient)


def save_network(network: Network, path) -> None:
    """Write a network file: supplies, demands, and row-major allocation."""
    doc = {
        "supplies": [float(r) for r in network.resources],
        "demands": [float(l) for l in network.loads],
        "allocation": [[float(x) for x in row] for row in network.allocation],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_network(path) -> Network:
    """Read a network file written by :func:`save_network`."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return Network(doc["supplies"], doc["demands"], doc["allocation"])
    except KeyError as exc:
        raise ValueError(f"network file {path} missing field {exc}") from exc
