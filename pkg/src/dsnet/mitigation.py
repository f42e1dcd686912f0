"""Network adaptation: confining an ongoing cascade.

Two mechanisms, applied by a per-round controller under operator budgets
(at most ``gamma`` intentional failures and ``upsilon`` units of resource
re-adjustment per time instant):

* intentional failure: cut every edge of the worst-deficiency demand
  node, sacrificing it to relieve pressure on the supply layer;
* resource re-adjustment: absorb the remaining deficiencies from the
  most fluctuation-tolerant suppliers, then spend leftover budget moving
  offered resources from the least to the most tolerant supplier to
  balance free capacities.

Each round the controller sacrifices demands (largest deficiency first,
capped by gamma) only while the total deficiency exceeds the total free
capacity of the alive suppliers; when the remaining deficiencies fit both
the capacity and the budget it re-adjusts and the cascade stops, and
otherwise it lets the cascade run one more round and retries.

A fixed-topology variant restricts the extra allocations to existing
edges and solves the resulting linear feasibility problem numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cascade import (
    CascadeRound,
    CascadeState,
    CascadeTrace,
    FluctuationSpec,
    MitigationAction,
    REGIMES,
    _snapshot,
    inject,
    step,
)
from .errors import InfeasibleError, NumericallyInfeasibleError, ReadjustBudgetError
from .model import Network, TOLERANCE


@dataclass(frozen=True)
class MitigationBudget:
    """Per-time-instant operator capability.

    ``gamma``: maximum number of intentional demand failures.
    ``upsilon``: maximum total re-adjusted resource mass.
    """

    gamma: int
    upsilon: float

    def __post_init__(self):
        if self.gamma < 0 or self.upsilon < 0:
            raise ValueError("budgets must be nonnegative")


@dataclass
class MitigationParams:
    """Re-adjustment tuning.

    ``nu`` is the per-step transfer size for deficiency absorption
    (``None`` picks min(0.01, smallest deficiency / 10) per call);
    ``epsilon`` is the row fraction moved per capacity-balancing sweep,
    clamped so the recipient never overloads, the budget is respected,
    and the donor/recipient tolerance order never inverts.
    """

    nu: float | None = None
    epsilon: float = 0.05
    seed: int | None = None


@dataclass
class FixedTopologyProblem:
    """Feasibility data for re-adjustment restricted to existing edges.

    ``mask`` is the S x D binary adjacency, ``deficiencies`` the
    per-demand shortfall vector, ``capacities`` the per-supply free
    capacities available for extra allocations.
    """

    mask: np.ndarray
    deficiencies: np.ndarray
    capacities: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=float)
        self.deficiencies = np.asarray(self.deficiencies, dtype=float)
        self.capacities = np.asarray(self.capacities, dtype=float)
        if self.mask.shape != (self.capacities.size, self.deficiencies.size):
            raise ValueError("mask shape does not match vectors")
        if not np.isin(self.mask, (0.0, 1.0)).all():
            raise ValueError("mask must be binary")
        if (self.deficiencies < 0).any() or (self.capacities < 0).any():
            raise ValueError("deficiencies and capacities must be nonnegative")


def min_intentional_failures(deficiencies_sorted_desc, upsilon: float) -> int:
    """Fewest worst-first demand sacrifices so the rest fits the budget.

    ``deficiencies_sorted_desc`` must be positive and sorted descending.
    """
    deltas = np.asarray(deficiencies_sorted_desc, dtype=float)
    if deltas.size and (np.diff(deltas) > 0).any():
        raise ValueError("deficiencies must be sorted descending")
    remaining = deltas.sum()
    for f in range(deltas.size + 1):
        if remaining <= upsilon + 1e-12:
            return f
        remaining -= deltas[f]
    return deltas.size


def absorb_feasible(state: CascadeState, gamma: int) -> bool:
    """Can re-adjustment absorb the cascade after up to gamma sacrifices?

    True iff the total free capacity of the operational suppliers covers
    the deficiencies that remain after removing the gamma largest.
    """
    caps = state.effective_resources - state.allocation.sum(axis=1)
    total_capacity = float(caps[state.alive_supply_mask()].sum())
    deltas = np.sort(np.asarray(list(state.deficiencies.values())))[::-1]
    remaining = float(deltas[gamma:].sum()) if gamma < deltas.size else 0.0
    return total_capacity >= remaining - 1e-12


def _tolerance_scores(effective_resources, row_sums, alive_mask, regime):
    """Fluctuation tolerance per supplier; -inf marks dead nodes."""
    if regime == "uniform":
        scores = effective_resources - row_sums
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = np.where(row_sums > TOLERANCE,
                              effective_resources / np.maximum(row_sums, 1e-300),
                              np.inf)
    return np.where(alive_mask, scores, -np.inf)


def _pick_extreme(scores, rng, largest=True):
    """Index attaining the max (or min) score, ties uniform at random.

    Dead nodes carry -inf and are never eligible.
    """
    idx = np.flatnonzero(~np.isneginf(scores))
    if idx.size == 0:
        raise ValueError("no operational supplier")
    vals = scores[idx]
    best = vals.max() if largest else vals.min()
    if np.isposinf(best):
        ties = idx[np.isposinf(vals)] if largest else idx
    elif largest:
        ties = idx[vals >= best - 1e-12 * (1 + abs(best))]
    else:
        ties = idx[vals <= best + 1e-12 * (1 + abs(best))]
    return int(ties[rng.integers(ties.size)])


def _readjust(state: CascadeState, budget: MitigationBudget,
              params: MitigationParams, regime: str, rng,
              ) -> tuple[np.ndarray, list[MitigationAction], float]:
    """Run the two re-adjustment phases on a copy of the state's allocation.

    Returns (new allocation, aggregated trace actions, budget spent).
    """
    alloc = state.allocation.copy()
    eff_r = state.effective_resources
    alive = state.alive_supply_mask()
    row_sums = alloc.sum(axis=1)
    deltas = dict(state.deficiencies)
    spent = 0.0
    actions: list[MitigationAction] = []

    nu = params.nu
    if nu is None:
        nu = min(0.01, min(deltas.values()) / 10.0) if deltas else 0.01

    # Phase 1: absorb deficiencies from the most tolerant suppliers.
    transfers: dict[tuple[int, int], float] = {}
    pending = sorted(deltas)
    while pending:
        g = int(rng.choice(pending))
        scores = _tolerance_scores(eff_r, row_sums, alive, regime)
        k = _pick_extreme(scores, rng, largest=True)
        capacity = float(eff_r[k] - row_sums[k])
        if capacity <= TOLERANCE:
            raise InfeasibleError(
                "no free capacity left while deficiencies remain",
                deficit=float(sum(deltas.values())),
            )
        amount = min(nu, deltas[g], capacity)
        if spent + amount > budget.upsilon + max(nu, 1e-9):
            raise ReadjustBudgetError(
                "re-adjustment budget exhausted before absorbing all "
                "deficiencies",
                residual_deficiencies={g: float(d) for g, d in deltas.items()},
            )
        alloc[k, g] += amount
        row_sums[k] += amount
        deltas[g] -= amount
        spent += amount
        transfers[(k, g)] = transfers.get((k, g), 0.0) + amount
        if deltas[g] <= TOLERANCE:
            del deltas[g]
            pending.remove(g)
    for (k, g), amount in sorted(transfers.items()):
        actions.append(MitigationAction("transfer", (k, g), amount,
                                        budget.upsilon - spent))

    # Phase 2: balance tolerances with the remaining budget.
    guard = 0
    while spent <= budget.upsilon:
        guard += 1
        if guard > 100_000:
            break
        scores = _tolerance_scores(eff_r, row_sums, alive, regime)
        k_hi = _pick_extreme(scores, rng, largest=True)
        k_lo = _pick_extreme(scores, rng, largest=False)
        if k_hi == k_lo:
            break
        if np.isfinite(scores[k_hi]) and scores[k_hi] - scores[k_lo] <= TOLERANCE:
            break
        donor_total = float(row_sums[k_lo])
        if donor_total <= TOLERANCE:
            break
        eps = params.epsilon
        # Never overload the recipient.
        recipient_cap = float(eff_r[k_hi] - row_sums[k_hi])
        if eps * donor_total > recipient_cap:
            eps = recipient_cap / donor_total
        # Respect the remaining budget (each move charges twice the mass).
        remaining = budget.upsilon - spent
        if 2.0 * eps * donor_total > remaining:
            eps = remaining / (2.0 * donor_total)
        # Keep the tolerance order: halve until the move does not invert it.
        while eps > 1e-15:
            moved = eps * donor_total
            new_lo = _tolerance_scores(
                eff_r, row_sums + _row_delta(row_sums.size, k_lo, -moved, k_hi, moved),
                alive, regime)
            if new_lo[k_lo] <= new_lo[k_hi] + 1e-12:
                break
            eps *= 0.5
        if eps <= 1e-15:
            break
        moved = eps * donor_total
        alloc[k_hi, :] += eps * alloc[k_lo, :]
        alloc[k_lo, :] *= 1.0 - eps
        row_sums[k_hi] += moved
        row_sums[k_lo] -= moved
        spent += 2.0 * moved
        actions.append(MitigationAction("transfer", (k_lo, k_hi), moved,
                                        budget.upsilon - spent))
    return alloc, actions, spent


def _row_delta(n, i, vi, j, vj):
    delta = np.zeros(n)
    delta[i] = vi
    delta[j] = vj
    return delta


def readjust(state: CascadeState, budget: MitigationBudget,
             params: MitigationParams | None = None,
             regime: str = "uniform") -> np.ndarray:
    """Absorb the state's deficiencies and balance capacities.

    Returns the re-adjusted allocation; the input state is not modified.
    Raises :class:`ReadjustBudgetError` if the budget runs out while
    deficiencies remain.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    params = params or MitigationParams()
    rng = np.random.default_rng(params.seed)
    alloc, _, _ = _readjust(state, budget, params, regime, rng)
    return alloc


def mitigate(network: Network, spec: FluctuationSpec, regime: str,
             budget: MitigationBudget, params: MitigationParams | None = None,
             ) -> tuple[CascadeTrace, np.ndarray]:
    """Run a cascade with the adaptation controller in the loop.

    The controller is guarded to take no action in rounds where inaction
    causes no failure, so mitigation never does worse than the plain
    cascade there.  Returns the trace (with controller actions attached
    to their rounds) and the final allocation.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    params = params or MitigationParams()
    rng = np.random.default_rng(params.seed)
    state = inject(network, spec)
    rounds: list[CascadeRound] = [_snapshot(state)]
    limit = network.n_supplies + network.n_demands + 8

    while not state.at_fixpoint():
        if len(rounds) > limit:
            raise RuntimeError("mitigation controller did not terminate")
        # Guard: when the natural round is harmless, let it happen.
        peek = step(state, regime)
        if not peek.round_failures:
            state = peek
            rounds.append(_snapshot(state))
            continue

        actions: list[MitigationAction] = []
        deficits = state.deficiencies
        order = sorted(deficits, key=lambda g: (-deficits[g], g))
        used = 0
        for g in order:
            if used >= budget.gamma:
                break
            if sum(state.deficiencies.values()) <= state.total_free_capacity() + 1e-12:
                break
            magnitude = float(state.deficiency[g])
            state.allocation[:, g] = 0.0
            state.failed_demands.add(g)
            state.deficiency[g] = 0.0
            used += 1
            actions.append(MitigationAction("intentional_fail", (g,), magnitude,
                                            float(budget.gamma - used)))

        remaining = sum(state.deficiencies.values())
        if (remaining <= state.total_free_capacity() + 1e-12
                and remaining <= budget.upsilon + 1e-12):
            new_alloc, transfer_actions, _ = _readjust(
                state, budget, params, regime, rng)
            state.allocation = new_alloc
            state.deficiency[:] = 0.0
            actions.extend(transfer_actions)
            rounds[-1].actions.extend(actions)
        else:
            actions.append(MitigationAction("wait", (), 0.0,
                                            float(budget.upsilon)))
            rounds[-1].actions.extend(actions)
            state = step(state, regime)
            rounds.append(_snapshot(state))

    trace = CascadeTrace(
        rounds=rounds,
        surviving_supplies=network.n_supplies - len(state.failed_supplies),
        surviving_demands=network.n_demands - len(state.failed_demands),
    )
    return trace, state.allocation


def _project_row_cap(row: np.ndarray, cap: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) <= cap}."""
    clipped = np.maximum(row, 0.0)
    total = clipped.sum()
    if total <= cap:
        return clipped
    # Projection onto the simplex {x >= 0, sum(x) = cap}.
    sorted_desc = np.sort(clipped)[::-1]
    cumulative = np.cumsum(sorted_desc) - cap
    indices = np.arange(1, clipped.size + 1)
    candidates = sorted_desc - cumulative / indices
    k = np.count_nonzero(candidates > 0)
    theta = cumulative[k - 1] / k
    return np.maximum(clipped - theta, 0.0)


def fixed_topology_readjust(problem: FixedTopologyProblem, tol: float = 1e-8,
                            max_iterations: int = 20_000) -> np.ndarray:
    """Extra allocations supported on existing edges that cover the
    deficiencies without overloading any supplier.

    First checks the necessary condition: the joint free capacity of the
    suppliers adjacent to some deficient demand must cover the total
    deficiency (raises :class:`InfeasibleError` with the deficit when it
    fails).  A solution is then sought by alternating projection between
    the per-column sum constraints and the support/nonnegativity/row-cap
    set; a stall raises :class:`NumericallyInfeasibleError`, since the
    necessary condition is not sufficient.
    """
    mask = problem.mask
    deltas = problem.deficiencies
    caps = problem.capacities
    deficient = deltas > TOLERANCE
    if not deficient.any():
        return np.zeros_like(mask)
    support_sizes = mask[:, deficient].sum(axis=0)
    if (support_sizes == 0).any():
        missing = np.flatnonzero(deficient)[np.flatnonzero(support_sizes == 0)]
        raise InfeasibleError(
            f"deficient demands {missing.tolist()} have no neighbors",
            deficit=float(deltas[missing].sum()),
        )
    pool = mask[:, deficient].any(axis=1)
    available = float(caps[pool].sum())
    needed = float(deltas[deficient].sum())
    if available < needed - 1e-12:
        raise InfeasibleError(
            "neighbors of the deficient demands lack the required capacity",
            deficit=needed - available,
        )

    cols = np.flatnonzero(deficient)
    sub_mask = mask[:, cols]
    sub_sizes = sub_mask.sum(axis=0)
    target = deltas[cols]
    x = np.zeros_like(sub_mask)
    for _ in range(max_iterations):
        # Project onto the column-sum affine set (support-restricted).
        adjust = (target - x.sum(axis=0)) / sub_sizes
        x = (x + adjust[None, :]) * sub_mask
        # Project onto support / nonnegativity / row caps.
        x = np.maximum(x, 0.0) * sub_mask
        row_sums = x.sum(axis=1)
        for i in np.flatnonzero(row_sums > caps + 1e-15):
            x[i] = _project_row_cap(x[i], caps[i]) * sub_mask[i]
        residual = float(np.abs(x.sum(axis=0) - target).max())
        if residual <= tol:
            out = np.zeros_like(mask)
            out[:, cols] = x
            return out
    raise NumericallyInfeasibleError(
        f"alternating projection stalled (residual {residual:.3e}); "
        "the necessary condition is not sufficient",
    )
