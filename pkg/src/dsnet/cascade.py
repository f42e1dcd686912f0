"""Discrete-round cascading-failure engine.

A cascade starts from an injected stress (internal supply failures, or
resource/load fluctuations) and evolves in synchronous rounds:

1. every deficient demand drains its shortfall from the neighbors that
   were alive at the start of the round, split evenly (uniform regime) or
   proportionally to current allocations (proportional regime); a
   deficient demand that entered the round with no alive neighbor fails;
2. every supply node whose offered total now exceeds its effective
   resource fails entirely, zeroing its row (no partial service);
3. deficiencies are recomputed for the surviving demands.

Rounds repeat until neither the failed sets nor the deficiencies change.
The engine is deterministic: identical inputs produce identical traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Network, TOLERANCE

REGIMES = ("uniform", "proportional")

KIND_INTERNAL = "supply_internal_failure"
KIND_UNIFORM_RESOURCE_DROP = "uniform_resource_drop"
KIND_UNIFORM_LOAD_RISE = "uniform_load_rise"
KIND_PROPORTIONAL_RESOURCE_DROP = "proportional_resource_drop"
KIND_PROPORTIONAL_LOAD_RISE = "proportional_load_rise"

_SUPPLY_KINDS = (KIND_INTERNAL, KIND_UNIFORM_RESOURCE_DROP,
                 KIND_PROPORTIONAL_RESOURCE_DROP)

CAUSE_INTERNAL = "internal"
CAUSE_OVERLOAD = "overload"
CAUSE_ISOLATION = "deficiency-isolation"


@dataclass(frozen=True)
class FluctuationSpec:
    """Which stress is injected into a stable network.

    ``targets`` is a tuple of node ids on the affected layer; ``None``
    targets the whole layer.  Magnitudes: additive drop/rise amounts must
    be nonnegative, a proportional resource drop lies in [0, 1), and a
    proportional load multiplier is at least 1.
    """

    kind: str
    magnitude: float = 0.0
    targets: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind == KIND_INTERNAL:
            if not self.targets:
                raise ValueError("internal failure needs at least one target")
        elif self.kind in (KIND_UNIFORM_RESOURCE_DROP, KIND_UNIFORM_LOAD_RISE):
            if self.magnitude < 0:
                raise ValueError("additive fluctuation must be >= 0")
        elif self.kind == KIND_PROPORTIONAL_RESOURCE_DROP:
            if not 0.0 <= self.magnitude < 1.0:
                raise ValueError("proportional resource drop must be in [0, 1)")
        elif self.kind == KIND_PROPORTIONAL_LOAD_RISE:
            if self.magnitude < 1.0:
                raise ValueError("proportional load multiplier must be >= 1")
        else:
            raise ValueError(f"unknown fluctuation kind {self.kind!r}")

    @classmethod
    def supply_internal_failure(cls, targets) -> "FluctuationSpec":
        return cls(KIND_INTERNAL, 0.0, tuple(int(i) for i in targets))

    @classmethod
    def uniform_resource_drop(cls, delta, targets=None) -> "FluctuationSpec":
        return cls(KIND_UNIFORM_RESOURCE_DROP, float(delta), _as_targets(targets))

    @classmethod
    def uniform_load_rise(cls, delta_prime, targets=None) -> "FluctuationSpec":
        return cls(KIND_UNIFORM_LOAD_RISE, float(delta_prime), _as_targets(targets))

    @classmethod
    def proportional_resource_drop(cls, xi, targets=None) -> "FluctuationSpec":
        return cls(KIND_PROPORTIONAL_RESOURCE_DROP, float(xi), _as_targets(targets))

    @classmethod
    def proportional_load_rise(cls, xi_prime, targets=None) -> "FluctuationSpec":
        return cls(KIND_PROPORTIONAL_LOAD_RISE, float(xi_prime), _as_targets(targets))

    @property
    def supply_side(self) -> bool:
        return self.kind in _SUPPLY_KINDS


def _as_targets(targets):
    return None if targets is None else tuple(int(i) for i in targets)


@dataclass(frozen=True)
class FailureEvent:
    node_kind: str  # "supply" | "demand"
    node_id: int
    cause: str      # internal | overload | deficiency-isolation
    magnitude: float


@dataclass(frozen=True)
class MitigationAction:
    """Controller action appended to a trace round.

    ``action`` is one of intentional_fail / transfer / wait;
    ``remaining_budget`` is the unspent re-adjustment budget (for
    intentional_fail: remaining intentional-failure count).
    """

    action: str
    node_ids: tuple[int, ...]
    magnitude: float
    remaining_budget: float


@dataclass
class CascadeRound:
    index: int
    failures: list[FailureEvent]
    deficiencies: dict[int, float]
    free_capacities: dict[int, float]
    actions: list[MitigationAction] = field(default_factory=list)


@dataclass
class CascadeTrace:
    rounds: list[CascadeRound]
    surviving_supplies: int
    surviving_demands: int

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    def failures_by_round(self) -> dict[int, list[FailureEvent]]:
        return {r.index: list(r.failures) for r in self.rounds if r.failures}


def trace_lines(trace: CascadeTrace) -> list[str]:
    """Serialize a trace as newline-delimited 5-field records.

    Failure records: ``round,cause,node_kind,node_id,magnitude``.
    Action records: ``round,action,ids-joined-by-;,magnitude,remaining``.
    Two terminal summary records carry the survivor counts.
    """
    lines = []
    for rnd in trace.rounds:
        for ev in rnd.failures:
            lines.append(
                f"{rnd.index},{ev.cause},{ev.node_kind},{ev.node_id},"
                f"{ev.magnitude:.12g}"
            )
        for act in rnd.actions:
            ids = ";".join(str(i) for i in act.node_ids)
            lines.append(
                f"{rnd.index},{act.action},{ids},{act.magnitude:.12g},"
                f"{act.remaining_budget:.12g}"
            )
    last = trace.rounds[-1].index if trace.rounds else 0
    lines.append(f"{last},survivors,supply,{trace.surviving_supplies},0")
    lines.append(f"{last},survivors,demand,{trace.surviving_demands},0")
    return lines


class CascadeState:
    """Mutable per-round view of an ongoing cascade.

    Carries the current allocation, the effective (post-fluctuation)
    resources and loads, the failed node sets, and the per-demand
    deficiency vector.  Failed supply rows and failed demand columns are
    kept at zero.
    """

    __slots__ = ("time", "allocation", "effective_resources",
                 "effective_loads", "failed_supplies", "failed_demands",
                 "deficiency", "round_failures")

    def __init__(self, time, allocation, effective_resources, effective_loads,
                 failed_supplies=None, failed_demands=None, deficiency=None,
                 round_failures=None):
        self.time = int(time)
        self.allocation = np.asarray(allocation, dtype=float)
        self.effective_resources = np.asarray(effective_resources, dtype=float)
        self.effective_loads = np.asarray(effective_loads, dtype=float)
        self.failed_supplies = set(failed_supplies or ())
        self.failed_demands = set(failed_demands or ())
        if deficiency is None:
            deficiency = np.zeros(self.effective_loads.size)
        self.deficiency = np.asarray(deficiency, dtype=float)
        self.round_failures = list(round_failures or ())

    @property
    def n_supplies(self) -> int:
        return self.effective_resources.size

    @property
    def n_demands(self) -> int:
        return self.effective_loads.size

    @property
    def operational_supplies(self) -> set[int]:
        return set(range(self.n_supplies)) - self.failed_supplies

    @property
    def operational_demands(self) -> set[int]:
        return set(range(self.n_demands)) - self.failed_demands

    @property
    def deficiencies(self) -> dict[int, float]:
        return {int(g): float(self.deficiency[g])
                for g in np.flatnonzero(self.deficiency > TOLERANCE)}

    def alive_supply_mask(self) -> np.ndarray:
        mask = np.ones(self.n_supplies, dtype=bool)
        if self.failed_supplies:
            mask[list(self.failed_supplies)] = False
        return mask

    def supply_free_capacities(self) -> dict[int, float]:
        caps = self.effective_resources - self.allocation.sum(axis=1)
        return {int(k): float(caps[k])
                for k in range(self.n_supplies) if k not in self.failed_supplies}

    def total_free_capacity(self) -> float:
        caps = self.effective_resources - self.allocation.sum(axis=1)
        return float(caps[self.alive_supply_mask()].sum())

    def overloaded_supplies(self) -> set[int]:
        rows = self.allocation.sum(axis=1)
        over = self.alive_supply_mask() & (rows > self.effective_resources + TOLERANCE)
        return set(np.flatnonzero(over).tolist())

    def at_fixpoint(self) -> bool:
        """True when no deficiency remains and no alive supplier is overloaded."""
        if (self.deficiency > TOLERANCE).any():
            return False
        return not self.overloaded_supplies()

    def copy(self) -> "CascadeState":
        return CascadeState(
            self.time, self.allocation.copy(), self.effective_resources.copy(),
            self.effective_loads.copy(), set(self.failed_supplies),
            set(self.failed_demands), self.deficiency.copy(),
            list(self.round_failures),
        )


def inject(network: Network, spec: FluctuationSpec) -> CascadeState:
    """Apply a stress to a network, producing the time-zero cascade state."""
    n_s, n_d = network.n_supplies, network.n_demands
    limit = n_s if spec.supply_side else n_d
    targets = spec.targets if spec.targets is not None else tuple(range(limit))
    for i in targets:
        if not 0 <= i < limit:
            raise IndexError(f"spec target {i} out of range [0, {limit})")

    allocation = network.allocation.copy()
    eff_r = network.resources.copy()
    eff_l = network.loads.copy()
    failed_supplies: set[int] = set()
    events: list[FailureEvent] = []

    if spec.kind == KIND_INTERNAL:
        for k in targets:
            offered = float(allocation[k].sum())
            allocation[k, :] = 0.0
            failed_supplies.add(k)
            events.append(FailureEvent("supply", k, CAUSE_INTERNAL, offered))
    elif spec.kind == KIND_UNIFORM_RESOURCE_DROP:
        eff_r[list(targets)] -= spec.magnitude
    elif spec.kind == KIND_UNIFORM_LOAD_RISE:
        eff_l[list(targets)] += spec.magnitude
    elif spec.kind == KIND_PROPORTIONAL_RESOURCE_DROP:
        eff_r[list(targets)] *= 1.0 - spec.magnitude
    elif spec.kind == KIND_PROPORTIONAL_LOAD_RISE:
        eff_l[list(targets)] *= spec.magnitude

    received = allocation.sum(axis=0)
    deficiency = np.where(eff_l - received > TOLERANCE, eff_l - received, 0.0)
    return CascadeState(
        time=0,
        allocation=allocation,
        effective_resources=eff_r,
        effective_loads=eff_l,
        failed_supplies=failed_supplies,
        failed_demands=set(),
        deficiency=deficiency,
        round_failures=events,
    )


def step(state: CascadeState, regime: str) -> CascadeState:
    """Advance one synchronous round.

    Returns the successor state; at a fixpoint the input state is returned
    unchanged (same object, time not advanced).
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    if state.at_fixpoint():
        return state
    nxt = state.copy()
    alloc = nxt.allocation
    alive_at_start = nxt.alive_supply_mask()
    events: list[FailureEvent] = []

    # Phase 1: deficient demands drain from round-start alive neighbors;
    # demands that entered the round with no alive neighbor fail now.
    for g in np.flatnonzero(nxt.deficiency > TOLERANCE):
        g = int(g)
        column = alloc[:, g]
        neighbors = alive_at_start & (column > TOLERANCE)
        delta = float(nxt.deficiency[g])
        if not neighbors.any():
            nxt.failed_demands.add(g)
            nxt.deficiency[g] = 0.0
            alloc[:, g] = 0.0
            events.append(FailureEvent("demand", g, CAUSE_ISOLATION, delta))
            continue
        if regime == "uniform":
            alloc[neighbors, g] += delta / neighbors.sum()
        else:
            share = column[neighbors] / column[neighbors].sum()
            alloc[neighbors, g] += delta * share

    # Phase 2: overloaded suppliers fail entirely.
    row_sums = alloc.sum(axis=1)
    overloaded = alive_at_start & (row_sums > nxt.effective_resources + TOLERANCE)
    for k in np.flatnonzero(overloaded):
        k = int(k)
        excess = float(row_sums[k] - nxt.effective_resources[k])
        alloc[k, :] = 0.0
        nxt.failed_supplies.add(k)
        events.append(FailureEvent("supply", k, CAUSE_OVERLOAD, excess))

    # Phase 3: recompute deficiencies of surviving demands.
    received = alloc.sum(axis=0)
    shortfall = nxt.effective_loads - received
    nxt.deficiency = np.where(shortfall > TOLERANCE, shortfall, 0.0)
    if nxt.failed_demands:
        nxt.deficiency[list(nxt.failed_demands)] = 0.0

    nxt.time += 1
    nxt.round_failures = events
    return nxt


def _snapshot(state: CascadeState) -> CascadeRound:
    return CascadeRound(
        index=state.time,
        failures=list(state.round_failures),
        deficiencies=state.deficiencies,
        free_capacities=state.supply_free_capacities(),
    )


def run_to_fixpoint(network: Network, spec: FluctuationSpec,
                    regime: str) -> CascadeTrace:
    """Run a cascade to its fixpoint and record the full trace."""
    state = inject(network, spec)
    rounds = [_snapshot(state)]
    limit = network.n_supplies + network.n_demands + 2
    while not state.at_fixpoint():
        state = step(state, regime)
        rounds.append(_snapshot(state))
        if len(rounds) > limit:  # monotone failures bound the round count
            raise RuntimeError("cascade did not reach a fixpoint")
    return CascadeTrace(
        rounds=rounds,
        surviving_supplies=network.n_supplies - len(state.failed_supplies),
        surviving_demands=network.n_demands - len(state.failed_demands),
    )
