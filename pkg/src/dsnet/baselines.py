"""Reference allocators used as comparison baselines.

Both allocators freeze a fraction of every supply node's resources while
building the allocation (keeping finished networks away from the failure
threshold) and satisfy every load exactly.  Robustness metrics computed
afterwards use the full, unfrozen resources.
"""

from __future__ import annotations

import numpy as np

from .errors import InfeasibleError


def _validate(resources, loads, freeze_fraction):
    resources = np.asarray(resources, dtype=float)
    loads = np.asarray(loads, dtype=float)
    if not 0.0 <= freeze_fraction < 1.0:
        raise ValueError("freeze_fraction must be in [0, 1)")
    if (resources < 0).any() or (loads < 0).any():
        raise ValueError("resources and loads must be nonnegative")
    spare = (1.0 - freeze_fraction) * resources
    total_l = loads.sum()
    if spare.sum() < total_l - 1e-9 * max(1.0, total_l):
        raise InfeasibleError(
            "unfrozen resources cannot cover the total load",
            deficit=float(total_l - spare.sum()),
        )
    return resources, loads, spare


def greedy_allocate(resources, loads, freeze_fraction: float = 0.1,
                    seed=None) -> np.ndarray:
    """Largest-spare supplier fills the largest-unsatisfied demand.

    Fully deterministic: ties break toward the lowest index, so ``seed``
    is accepted for signature parity but unused.
    """
    del seed
    resources, loads, spare = _validate(resources, loads, freeze_fraction)
    spare = spare.copy()
    unsat = loads.copy()
    rho = np.zeros((resources.size, loads.size))
    while unsat.max(initial=0.0) > 1e-12:
        k = int(np.argmax(spare))
        g = int(np.argmax(unsat))
        amount = min(spare[k], unsat[g])
        if amount <= 1e-15:
            raise InfeasibleError("ran out of unfrozen spare resources")
        rho[k, g] += amount
        spare[k] -= amount
        unsat[g] -= amount
    return rho


def random_allocate(resources, loads, freeze_fraction: float = 0.1,
                    seed=None) -> np.ndarray:
    """Random stable allocation.

    Repeatedly picks a uniformly random (supplier with spare, demand with
    unsatisfied load) pair and transfers a uniform random fraction of the
    feasible amount.  After S*D*50 draws every transfer uses the full
    feasible amount, which guarantees termination.  Same seed, same matrix.
    """
    rng = np.random.default_rng(seed)
    resources, loads, spare = _validate(resources, loads, freeze_fraction)
    spare = spare.copy()
    unsat = loads.copy()
    n_s, n_d = resources.size, loads.size
    rho = np.zeros((n_s, n_d))
    max_random_draws = n_s * n_d * 50
    draws = 0
    while unsat.max(initial=0.0) > 1e-12:
        ks = np.flatnonzero(spare > 1e-12)
        gs = np.flatnonzero(unsat > 1e-12)
        if ks.size == 0:
            raise InfeasibleError("ran out of unfrozen spare resources")
        k = int(ks[rng.integers(ks.size)])
        g = int(gs[rng.integers(gs.size)])
        feasible = min(spare[k], unsat[g])
        fraction = 1.0 if draws >= max_random_draws else 1.0 - rng.uniform()
        amount = fraction * feasible
        rho[k, g] += amount
        spare[k] -= amount
        unsat[g] -= amount
        draws += 1
    return rho
