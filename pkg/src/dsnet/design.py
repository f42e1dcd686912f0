"""Robustness metrics and robustness-maximizing resource configurations.

Two fluctuation regimes are covered:

* uniform: every targeted node gains/loses the same absolute amount, and a
  demand node spreads extra draining evenly over its neighbors;
* proportional: fluctuations scale with the node's own resource/load, and
  draining is spread proportionally to current allocations.

For each regime the module computes the network's tolerance metrics (MTRF
against resource drops, MTLF against load rises) and the allocation that
maximizes them: equalize free capacities of the strongest suppliers under
the uniform regime, offer proportionally to resources under the
proportional regime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError
from .model import (
    TOLERANCE,
    Network,
    free_capacities,
    offered_totals,
)

# Default per-link seed used to connect every engaged supplier to every
# demand when spreading an offered-totals design into a full matrix.
DEFAULT_SPREAD_EPSILON = 0.01


@dataclass
class UniformDesignResult:
    """Optimal offered totals under uniform fluctuations.

    ``offered_totals`` has one entry per supply node (idle nodes hold 0),
    ``engaged`` lists the engaged supply ids ordered by decreasing resource,
    ``v_star`` is the engaged count, and ``mtrf`` the common free capacity
    the design achieves.
    """

    offered_totals: np.ndarray
    engaged: list[int]
    v_star: int
    mtrf: float


@dataclass
class ProportionalDesignResult:
    """Optimal weight matrix under proportional fluctuations.

    ``weights[i, g]`` is the fraction of demand g's load served by supply i;
    every column sums to one.  ``mtlf`` and ``mtrf`` are the attained
    optimal tolerances.
    """

    weights: np.ndarray
    mtlf: float
    mtrf: float

    def allocation(self, loads) -> np.ndarray:
        """Materialize the weight matrix against concrete loads."""
        return self.weights * np.asarray(loads, dtype=float)


def design_uniform(resources, loads) -> UniformDesignResult:
    """Offered totals maximizing the minimum engaged free capacity.

    Sorts suppliers by resource (ties broken by index, tied groups engaged
    atomically), engages the strongest prefix whose shared capacity level
    clears the next resource value, and levels all engaged free capacities
    at the resulting common value, which equals the design's MTRF.
    """
    resources = np.asarray(resources, dtype=float)
    loads = np.asarray(loads, dtype=float)
    if (resources < 0).any() or (loads < 0).any():
        raise ValueError("resources and loads must be nonnegative")
    total_load = float(loads.sum())
    if resources.sum() <= total_load:
        raise InfeasibleError(
            "total resources must strictly exceed total loads",
            deficit=float(total_load - resources.sum()),
        )
    n = resources.size
    order = np.lexsort((np.arange(n), -resources))
    sorted_r = resources[order]
    prefix = np.cumsum(sorted_r)
    next_r = np.append(sorted_r[1:], 0.0)
    slack = 1e-12 * max(1.0, abs(total_load))
    satisfied = prefix - np.arange(1, n + 1) * next_r >= total_load - slack
    v = int(np.argmax(satisfied)) + 1  # first index meeting the condition
    # Engage tied groups atomically: never split equal resources.
    while v < n and sorted_r[v] == sorted_r[v - 1]:
        v += 1
    mtrf = (prefix[v - 1] - total_load) / v
    offered = np.zeros(n)
    engaged_idx = order[:v]
    offered[engaged_idx] = np.maximum(resources[engaged_idx] - mtrf, 0.0)
    return UniformDesignResult(
        offered_totals=offered,
        engaged=[int(i) for i in engaged_idx],
        v_star=v,
        mtrf=float(mtrf),
    )


def materialize_allocation(offered_totals, loads, epsilon: float = 0.0) -> np.ndarray:
    """Expand per-supply offered totals into a full allocation matrix.

    Row sums equal ``offered_totals``, column sums equal ``loads``.  With
    ``epsilon > 0`` every engaged supplier first seeds epsilon units on
    every demand (connecting each demand to all engaged suppliers, which
    maximizes load-rise tolerance), then the remainders are placed by a
    deterministic north-west-corner fill.
    """
    offered = np.asarray(offered_totals, dtype=float)
    loads = np.asarray(loads, dtype=float)
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    total = float(loads.sum())
    if abs(offered.sum() - total) > 1e-9 * max(1.0, abs(total)):
        raise InfeasibleError(
            f"offered totals sum {offered.sum()} != total load {total}"
        )
    n_s, n_d = offered.size, loads.size
    engaged = offered > TOLERANCE
    rho = np.zeros((n_s, n_d))
    if epsilon > 0 and engaged.any():
        n_eng = int(engaged.sum())
        if epsilon * n_eng > loads.min() + 1e-12:
            raise InfeasibleError(
                f"epsilon {epsilon} too large: seeding {n_eng} suppliers "
                f"exceeds the smallest load {loads.min()}"
            )
        if (epsilon * n_d > offered[engaged] + 1e-12).any():
            raise InfeasibleError(
                f"epsilon {epsilon} too large for some engaged supplier's "
                "offered total"
            )
        rho[engaged] = epsilon
    row_rem = offered - rho.sum(axis=1)
    col_rem = loads - rho.sum(axis=0)
    g = 0
    for k in np.flatnonzero(engaged):
        need = float(row_rem[k])
        while need > 1e-12 and g < n_d:
            avail = col_rem[g]
            if avail <= 1e-12:
                g += 1
                continue
            take = need if need < avail else avail
            rho[k, g] += take
            col_rem[g] = avail - take
            need -= take
    return rho


def design_uniform_network(resources, loads,
                           epsilon: float = DEFAULT_SPREAD_EPSILON,
                           ) -> tuple[Network, UniformDesignResult]:
    """Design for the uniform regime and materialize a full network.

    ``epsilon`` is an upper bound on the per-link seed; it is clamped so
    the seeding stays feasible when the marginal engaged supplier offers
    little or the smallest load is tight.
    """
    result = design_uniform(resources, loads)
    loads = np.asarray(loads, dtype=float)
    offered = result.offered_totals
    engaged = offered > TOLERANCE
    eps = epsilon
    if eps > 0 and engaged.any():
        n_eng = int(engaged.sum())
        eps = min(eps,
                  0.5 * float(loads.min()) / n_eng,
                  0.5 * float(offered[engaged].min()) / loads.size)
        eps = max(eps, 0.0)
    allocation = materialize_allocation(offered, loads, eps)
    return Network(resources, loads, allocation), result


def design_proportional(resources, loads) -> ProportionalDesignResult:
    """Weight matrix attaining the proportional-regime tolerance bounds.

    Every supplier is engaged and offers resources in proportion to its
    own pool; the emitted representative uses the constant-column weights
    w[i, g] = R_i / sum(R), which are column-stochastic and satisfy the
    per-row resource condition by construction.
    """
    resources = np.asarray(resources, dtype=float)
    loads = np.asarray(loads, dtype=float)
    total_r = float(resources.sum())
    total_l = float(loads.sum())
    if total_r <= total_l:
        raise InfeasibleError(
            "total resources must strictly exceed total loads",
            deficit=total_l - total_r,
        )
    if total_l <= 0:
        raise InfeasibleError("total load must be positive")
    column = resources / total_r
    weights = np.repeat(column[:, None], loads.size, axis=1)
    return ProportionalDesignResult(
        weights=weights,
        mtlf=total_r / total_l,
        mtrf=1.0 - total_l / total_r,
    )


def design_proportional_network(resources, loads,
                                ) -> tuple[Network, ProportionalDesignResult]:
    """Design for the proportional regime and materialize a full network."""
    result = design_proportional(resources, loads)
    return Network(resources, loads, result.allocation(loads)), result


def mtrf_uniform(network: Network) -> float:
    """Largest uniform resource drop every engaged supplier tolerates.

    Equals the minimum free capacity over engaged suppliers.
    """
    caps = free_capacities(network)
    engaged = offered_totals(network) > TOLERANCE
    if not engaged.any():
        raise ValueError("MTRF undefined on idle network (no engaged supplier)")
    return float(caps[engaged].min())


def mtlf_uniform(network: Network) -> float:
    """Smallest single-demand load rise that overloads some neighbor.

    A rise of delta at demand g puts delta / |N(g)| on each neighbor, so
    the metric is the minimum of capacity * |N(g)| over all edges.
    """
    mask = network.allocation > TOLERANCE
    neighbor_counts = mask.sum(axis=0)
    if (neighbor_counts == 0).any():
        raise ValueError("MTLF undefined: some demand has no supplier")
    caps = free_capacities(network)
    candidates = caps[:, None] * neighbor_counts[None, :]
    return float(candidates[mask].min())


def mtrf_proportional(network: Network) -> float:
    """Largest proportional resource reduction keeping all suppliers stable."""
    offered = offered_totals(network)
    engaged = offered > TOLERANCE
    if not engaged.any():
        raise ValueError("MTRF undefined on idle network (no engaged supplier)")
    res = network.resources[engaged]
    if (res <= 0).any():
        raise ValueError("engaged supplier with zero resource")
    return float((1.0 - offered[engaged] / res).min())


def mtlf_proportional(network: Network) -> float:
    """Largest proportional load multiplier keeping all suppliers stable.

    Returns 1 when some engaged supplier has no headroom.
    """
    offered = offered_totals(network)
    engaged = offered > TOLERANCE
    if not engaged.any():
        raise ValueError("MTLF undefined on idle network (no engaged supplier)")
    return float((network.resources[engaged] / offered[engaged]).min())
