"""Data-noise coupling strategies for flow-matching training.

Four ways to pair a data minibatch with noise:

* ``independent`` -- fresh noise, no matching;
* ``minibatch_ot`` -- fresh noise re-paired by an exact within-batch
  optimal assignment, nothing persisted;
* ``loom`` -- noise comes from a persistent per-dataset store; each batch
  re-solves its local assignment and writes the improvement back, so the
  global matching cost is non-increasing over training and converges to a
  pairing with no improving cycle shorter than the batch size;
* ``phi_mix`` -- per element, the stored pairing with probability phi and
  fresh noise otherwise (the stored caches are never overwritten by fresh
  draws).

``run_until_stationary`` drives the loom update alone (no training) until
reassignments stop, for convergence diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ot import pairwise_distances, solve_assignment
from .store import NoiseRef, NoiseStore


@dataclass
class CoupledBatch:
    data_indices: np.ndarray
    data: np.ndarray
    noise: np.ndarray
    noise_refs: list[NoiseRef | None] | None
    reassignment_count: int
    local_ot_cost: float


def _paired_cost(data: np.ndarray, noise: np.ndarray) -> float:
    diff = data - noise
    return float(np.sqrt((diff * diff).sum(axis=1)).sum())


def independent_batch(
    data: np.ndarray, m: int, rng: np.random.Generator
) -> CoupledBatch:
    """Uniform data rows (with replacement) paired with fresh N(0, I) noise."""
    n = data.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    if m < 1:
        raise ValueError("batch size must be >= 1")
    idx = rng.integers(0, n, size=m)
    noise = rng.standard_normal((m, data.shape[1]))
    x = data[idx]
    return CoupledBatch(idx, x, noise, None, 0, _paired_cost(x, noise))


def minibatch_ot_batch(
    data: np.ndarray, m: int, rng: np.random.Generator
) -> CoupledBatch:
    """Fresh noise re-paired by the exact optimal assignment within the batch.

    Nothing is persisted; every batch discards its local solution.
    """
    batch = independent_batch(data, m, rng)
    costs = pairwise_distances(batch.data, batch.noise)
    perm, total = solve_assignment(costs)
    return CoupledBatch(
        batch.data_indices,
        batch.data,
        batch.noise[perm.mapping],
        None,
        0,
        total,
    )


def loom_update(
    store: NoiseStore,
    data: np.ndarray,
    indices: np.ndarray,
    cache: int,
) -> tuple[np.ndarray, float, float]:
    """Locally re-solve and persist the assignment for the given data rows.

    Returns (permutation over the fetched slots, cost before, cost after).
    The permutation is written into the store only on strict improvement,
    so the global matching cost never increases; equal-cost alternatives
    leave the store untouched.
    """
    indices = np.asarray(indices, dtype=np.int64)
    m = indices.shape[0]
    slots = store.assigned_slots(indices, cache)
    x = data[indices]
    z = store.noise_rows(slots, cache)
    if m == 0:
        return np.empty(0, dtype=np.int64), 0.0, 0.0
    costs = pairwise_distances(x, z)
    before = float(costs.diagonal().sum())
    perm, after = solve_assignment(costs)
    if after < before:
        store.apply_local_permutation(cache, indices, perm.mapping)
        return perm.mapping, before, after
    return np.arange(m, dtype=np.int64), before, before


def loom_batch(
    store: NoiseStore,
    data: np.ndarray,
    m: int,
    rng: np.random.Generator,
) -> CoupledBatch:
    """One persistent-assignment training batch.

    Samples m distinct data rows, draws one cache level for the whole
    batch, re-solves the local assignment and composes the improvement into
    the stored permutation before returning the re-paired batch.
    """
    n = data.shape[0]
    if m > n:
        raise ValueError(f"batch size {m} exceeds dataset size {n}")
    if data.shape[1] != store.dim or n != store.n:
        raise ValueError("dataset shape does not match the noise store")
    idx = rng.choice(n, size=m, replace=False)
    cache = int(rng.integers(store.k))
    perm, _, after = loom_update(store, data, idx, cache)
    slots = store.assigned_slots(idx, cache)
    refs: list[NoiseRef | None] = [NoiseRef(int(s), cache) for s in slots]
    return CoupledBatch(
        idx,
        data[idx],
        store.noise_rows(slots, cache),
        refs,
        int((perm != np.arange(m)).sum()),
        after,
    )


def phi_mix_batch(
    store: NoiseStore,
    data: np.ndarray,
    m: int,
    phi: float,
    rng: np.random.Generator,
) -> CoupledBatch:
    """Per-element blend of the stored coupling and fresh noise.

    Each of the m elements keeps its assigned noise with probability phi
    (those elements get the usual local re-solve) and is paired with a
    fresh draw otherwise; fresh draws never replace the cached noise. The
    boundary values delegate outright: phi=1 is exactly ``loom_batch`` and
    phi=0 exactly ``independent_batch``.
    """
    if not 0.0 <= phi <= 1.0:
        raise ValueError("phi must lie in [0, 1]")
    if phi == 1.0:
        return loom_batch(store, data, m, rng)
    if phi == 0.0:
        return independent_batch(data, m, rng)
    n = data.shape[0]
    if m > n:
        raise ValueError(f"batch size {m} exceeds dataset size {n}")
    idx = rng.choice(n, size=m, replace=False)
    cache = int(rng.integers(store.k))
    assigned = rng.random(m) < phi
    noise = np.empty((m, store.dim))
    refs: list[NoiseRef | None] = [None] * m
    reassigned = 0
    sub = idx[assigned]
    if sub.size:
        perm, _, _ = loom_update(store, data, sub, cache)
        reassigned = int((perm != np.arange(sub.size)).sum())
        slots = store.assigned_slots(sub, cache)
        noise[assigned] = store.noise_rows(slots, cache)
        for pos, s in zip(np.flatnonzero(assigned), slots):
            refs[pos] = NoiseRef(int(s), cache)
    fresh = ~assigned
    noise[fresh] = rng.standard_normal((int(fresh.sum()), store.dim))
    x = data[idx]
    return CoupledBatch(idx, x, noise, refs, reassigned, _paired_cost(x, noise))


def global_matching_cost(
    store: NoiseStore, data: np.ndarray, cache: int | None = None
) -> float:
    """Exact matching cost of the stored assignment(s), O(n * dim).

    With ``cache=None`` returns the sum over all cache levels.
    """
    caches = range(store.k) if cache is None else (cache,)
    total = 0.0
    for c in caches:
        z = store.noise_rows(store.assignments[c], c)
        total += _paired_cost(data, z)
    return total


# -- convergence of the assignment updates alone ------------------------------


@dataclass
class ConvergenceReport:
    iterations: int
    updates_until_stable: int
    final_cost: float
    stationary: bool
    reassignments: np.ndarray
    local_costs: np.ndarray
    global_iters: np.ndarray
    global_costs: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        lookup = {int(i): c for i, c in zip(self.global_iters, self.global_costs)}
        with open(path, "w") as fh:
            fh.write("iter,reassignments,local_ot_cost,global_cost\n")
            for i in range(self.iterations):
                g = lookup.get(i)
                fh.write(
                    f"{i},{int(self.reassignments[i])},{self.local_costs[i]!r},"
                    f"{'' if g is None else repr(g)}\n"
                )


def run_until_stationary(
    store: NoiseStore,
    data: np.ndarray,
    m: int,
    patience: int | None = None,
    rng: np.random.Generator | None = None,
    global_every: int = 100,
    max_iters: int | None = None,
) -> ConvergenceReport:
    """Drive loom updates (no training) until reassignments die out.

    Stops once ``patience`` consecutive batches made no reassignment --
    a probabilistic stationarity certificate -- or at ``max_iters``.
    Default patience is 10 * ceil(n / m).
    """
    rng = rng or np.random.default_rng()
    n = data.shape[0]
    if patience is None:
        patience = 10 * -(-n // m)
    if patience < 1:
        raise ValueError("patience must be >= 1")
    if max_iters is None:
        max_iters = 500 * patience
    reassigned: list[int] = []
    local: list[float] = []
    g_iters: list[int] = []
    g_costs: list[float] = []
    quiet = 0
    last_change = 0
    it = 0
    while it < max_iters:
        idx = rng.choice(n, size=m, replace=False)
        cache = int(rng.integers(store.k))
        perm, _, after = loom_update(store, data, idx, cache)
        changed = int((perm != np.arange(m)).sum())
        reassigned.append(changed)
        local.append(after)
        if it % global_every == 0:
            g_iters.append(it)
            g_costs.append(global_matching_cost(store, data))
        it += 1
        if changed:
            quiet = 0
            last_change = it
        else:
            quiet += 1
            if quiet >= patience:
                break
    return ConvergenceReport(
        iterations=it,
        updates_until_stable=last_change,
        final_cost=global_matching_cost(store, data),
        stationary=quiet >= patience,
        reassignments=np.array(reassigned, dtype=np.int64),
        local_costs=np.array(local),
        global_iters=np.array(g_iters, dtype=np.int64),
        global_costs=np.array(g_costs),
    )


# -- strategy objects for the trainer ------------------------------------------


class CouplingStrategy:
    """Samples coupled batches; concrete kinds bind their data sources."""

    kind: str
    m: int

    def sample(self, rng: np.random.Generator) -> CoupledBatch:
        raise NotImplementedError


class IndependentCoupling(CouplingStrategy):
    kind = "independent"

    def __init__(self, data: np.ndarray, m: int):
        self.data = data
        self.m = m

    def sample(self, rng: np.random.Generator) -> CoupledBatch:
        return independent_batch(self.data, self.m, rng)


class MinibatchOTCoupling(CouplingStrategy):
    kind = "minibatch_ot"

    def __init__(self, data: np.ndarray, m: int):
        self.data = data
        self.m = m

    def sample(self, rng: np.random.Generator) -> CoupledBatch:
        return minibatch_ot_batch(self.data, self.m, rng)


class LoomCoupling(CouplingStrategy):
    kind = "loom"

    def __init__(self, data: np.ndarray, store: NoiseStore, m: int):
        self.data = data
        self.store = store
        self.m = m

    def sample(self, rng: np.random.Generator) -> CoupledBatch:
        return loom_batch(self.store, self.data, self.m, rng)


class PhiMixCoupling(CouplingStrategy):
    kind = "phi_mix"

    def __init__(self, data: np.ndarray, store: NoiseStore, m: int, phi: float):
        self.data = data
        self.store = store
        self.m = m
        self.phi = phi

    def sample(self, rng: np.random.Generator) -> CoupledBatch:
        return phi_mix_batch(self.store, self.data, self.m, self.phi, rng)
