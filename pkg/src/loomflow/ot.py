"""Exact optimal assignment between equal-size point sets.

The solver is an O(n^3) shortest-augmenting-path method on a dense cost
matrix. It returns dual variables, which lets the wrapper resolve degenerate
optima: among all optimal assignments (perfect matchings of the tight graph
``cost[i, j] == u[i] + v[j]``) the lexicographically smallest mapping is
returned, so output is deterministic even on tied inputs.

A factorial brute-force solver is kept alongside as an independent oracle,
and alternating-cycle search certifies whether a given matching can be
improved by rotating any subset of at most ``max_len`` pairs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .jit import njit

BRUTE_FORCE_MAX = 10


@dataclass
class Assignment:
    """A bijection i -> mapping[i] from data indices to noise indices."""

    mapping: np.ndarray

    def __post_init__(self) -> None:
        self.mapping = np.asarray(self.mapping, dtype=np.int64)
        validate_bijection(self.mapping)

    @classmethod
    def identity(cls, n: int) -> "Assignment":
        return cls(np.arange(n, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.mapping.shape[0]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Assignment) and np.array_equal(
            self.mapping, other.mapping
        )


@dataclass(frozen=True)
class AlternatingCycle:
    """Pairs (i_1, ..., i_k) whose noise slots rotate: tau'(i_a) = tau(i_{a+1}).

    ``gain`` is the cost decrease achieved by the rotation; it is positive
    exactly when the cycle is an improving (negative) alternating cycle of
    the current matching.
    """

    data_indices: tuple[int, ...]
    gain: float

    @property
    def length(self) -> int:
        return len(self.data_indices)


def validate_bijection(mapping: np.ndarray) -> None:
    n = mapping.shape[0]
    if mapping.ndim != 1 or n == 0:
        raise ValueError("mapping must be a nonempty 1-D index array")
    seen = np.zeros(n, dtype=bool)
    if mapping.min() < 0 or mapping.max() >= n:
        raise ValueError("mapping values out of range")
    seen[mapping] = True
    if not seen.all():
        raise ValueError("mapping is not a bijection (duplicate values)")


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance table, rows of ``a`` against rows of ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :]
    sq -= 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return np.sqrt(sq)


def build_cost_matrix(data: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Cost table entries[i][j] = ||data[i] - noise[j]||_2."""
    data = np.asarray(data, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if data.ndim != 2 or noise.ndim != 2:
        raise ValueError("point sets must be 2-D arrays (rows are points)")
    if data.shape != noise.shape:
        raise ValueError(
            f"data {data.shape} and noise {noise.shape} must have equal "
            "cardinality and dimension"
        )
    if not (np.isfinite(data).all() and np.isfinite(noise).all()):
        raise ValueError("non-finite coordinates in input points")
    return pairwise_distances(data, noise)


def _check_cost_matrix(costs: np.ndarray) -> np.ndarray:
    costs = np.ascontiguousarray(costs, dtype=np.float64)
    if costs.ndim != 2 or costs.shape[0] != costs.shape[1]:
        raise ValueError(f"cost matrix must be square, got {costs.shape}")
    if costs.shape[0] == 0:
        raise ValueError("cost matrix is empty")
    if not np.isfinite(costs).all():
        raise ValueError("cost matrix has non-finite entries")
    if costs.min() < 0:
        raise ValueError("cost matrix has negative entries")
    return costs


@njit(cache=True)
def _lap_kernel(cost):  # pragma: no cover - exercised via solve_assignment
    """Shortest-augmenting-path solve; returns (row->col, duals u, duals v)."""
    n = cost.shape[0]
    col_of_row = np.full(n, -1, np.int64)
    row_of_col = np.full(n, -1, np.int64)
    u = np.zeros(n, np.float64)
    v = np.zeros(n, np.float64)
    dist = np.empty(n, np.float64)
    pred = np.empty(n, np.int64)
    done = np.empty(n, np.bool_)

    for start in range(n):
        for j in range(n):
            dist[j] = cost[start, j] - v[j]
            pred[j] = start
            done[j] = False
        mu = 0.0
        sink = -1
        while sink == -1:
            jmin = -1
            best = np.inf
            for j in range(n):
                if not done[j] and dist[j] < best:
                    best = dist[j]
                    jmin = j
            mu = best
            done[jmin] = True
            if row_of_col[jmin] == -1:
                sink = jmin
            else:
                i = row_of_col[jmin]
                slack0 = mu - (cost[i, col_of_row[i]] - u[i] - v[col_of_row[i]])
                for j in range(n):
                    if not done[j]:
                        nd = slack0 + cost[i, j] - u[i] - v[j]
                        if nd < dist[j]:
                            dist[j] = nd
                            pred[j] = i
        u[start] += mu
        for j in range(n):
            if done[j] and j != sink:
                row = row_of_col[j]
                v[j] += dist[j] - mu
                u[row] -= dist[j] - mu
        j = sink
        while True:
            i = pred[j]
            row_of_col[j] = i
            col_of_row[i], j = j, col_of_row[i]
            if i == start:
                break
    return col_of_row, u, v


def _kuhn_match(adj: list[np.ndarray], n_cols: int) -> np.ndarray:
    """Maximum bipartite matching (Kuhn); returns col index per row or -1."""
    match_col = np.full(len(adj), -1, dtype=np.int64)
    match_row = np.full(n_cols, -1, dtype=np.int64)

    def try_row(r: int, visited: np.ndarray) -> bool:
        for c in adj[r]:
            if not visited[c]:
                visited[c] = True
                if match_row[c] == -1 or try_row(match_row[c], visited):
                    match_row[c] = r
                    match_col[r] = c
                    return True
        return False

    for r in range(len(adj)):
        try_row(r, np.zeros(n_cols, dtype=bool))
    return match_col


def _lex_smallest_matching(tight: np.ndarray) -> np.ndarray:
    """Lexicographically smallest perfect matching of a tight graph.

    Fixes rows in order, choosing the smallest column that still leaves the
    remaining rows perfectly matchable. Only called when the optimum is
    degenerate, so the quadratic number of feasibility checks is acceptable.
    """
    n = tight.shape[0]
    free_col = np.ones(n, dtype=bool)
    mapping = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        fixed = False
        for j in np.flatnonzero(tight[i] & free_col):
            rest_rows = list(range(i + 1, n))
            cols = free_col.copy()
            cols[j] = False
            adj = [np.flatnonzero(tight[r] & cols) for r in rest_rows]
            sub = _kuhn_match(adj, n)
            if not rest_rows or (sub >= 0).all():
                mapping[i] = j
                free_col[j] = False
                fixed = True
                break
        if not fixed:  # pragma: no cover - tight graph always has a matching
            raise RuntimeError("tight graph lost its perfect matching")
    return mapping


def solve_assignment(costs: np.ndarray) -> tuple[Assignment, float]:
    """Minimum-cost assignment of rows to columns of a square cost matrix.

    Returns the optimal mapping and its total cost. Ties between optimal
    assignments are broken toward the lexicographically smallest mapping.
    """
    costs = _check_cost_matrix(costs)
    n = costs.shape[0]
    mapping, u, v = _lap_kernel(costs)
    mapping = np.asarray(mapping, dtype=np.int64)
    tol = 1e-9 * max(1.0, float(costs.max()))
    reduced = costs - u[:, None] - v[None, :]
    tight = reduced <= tol
    if (tight.sum(axis=1) > 1).any():
        mapping = _lex_smallest_matching(tight)
    total = float(costs[np.arange(n), mapping].sum())
    return Assignment(mapping), total


def brute_force_assignment(costs: np.ndarray) -> tuple[Assignment, float]:
    """Exhaustive minimum over all n! permutations; oracle for the solver.

    Permutations are scanned in lexicographic order with strict improvement,
    so ties resolve to the lexicographically smallest mapping, matching
    :func:`solve_assignment`.
    """
    costs = _check_cost_matrix(costs)
    n = costs.shape[0]
    if n > BRUTE_FORCE_MAX:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX}, got {n}")
    rows = np.arange(n)
    best_perm: tuple[int, ...] | None = None
    best_cost = np.inf
    for perm in itertools.permutations(range(n)):
        c = costs[rows, perm].sum()
        if c < best_cost:
            best_cost = c
            best_perm = perm
    assert best_perm is not None
    return Assignment(np.array(best_perm, dtype=np.int64)), float(best_cost)


def matching_cost(
    assignment: Assignment, data: np.ndarray, noise: np.ndarray
) -> float:
    """Total transport cost sum_i ||data[i] - noise[tau(i)]||_2."""
    data = np.asarray(data, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if data.shape != noise.shape or data.shape[0] != assignment.n:
        raise ValueError("assignment and point sets have mismatched sizes")
    diff = data - noise[assignment.mapping]
    return float(np.sqrt((diff * diff).sum(axis=1)).sum())


def _cycles_of_permutation(perm: np.ndarray) -> list[tuple[int, ...]]:
    """Nontrivial cycles of a permutation given as an index array."""
    n = perm.shape[0]
    seen = np.zeros(n, dtype=bool)
    cycles = []
    for s in range(n):
        if seen[s] or perm[s] == s:
            seen[s] = True
            continue
        cyc = []
        a = s
        while not seen[a]:
            seen[a] = True
            cyc.append(a)
            a = perm[a]
        cycles.append(tuple(cyc))
    return cycles


def find_negative_cycles(
    assignment: Assignment,
    data: np.ndarray,
    noise: np.ndarray,
    max_len: int,
) -> list[AlternatingCycle]:
    """Improving alternating cycles of length <= max_len, if any exist.

    Every data-index subset of size 2..max_len is re-solved in isolation;
    a subset whose local optimum strictly beats the current pairing yields
    the cycles of that local optimum. The returned list is empty exactly
    when no subset of at most ``max_len`` pairs can be improved, i.e. when
    the matching has no negative alternating cycle of that length.
    """
    n = assignment.n
    if max_len > n:
        raise ValueError(f"max_len {max_len} exceeds set size {n}")
    data = np.asarray(data, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    matched = noise[assignment.mapping]
    tol = 1e-12 * max(1.0, float(np.abs(data).max()) + float(np.abs(noise).max()))

    found: dict[tuple[int, ...], AlternatingCycle] = {}
    for size in range(2, max_len + 1):
        for subset in itertools.combinations(range(n), size):
            idx = np.array(subset, dtype=np.int64)
            local = pairwise_distances(data[idx], matched[idx])
            incumbent = float(local.diagonal().sum())
            perm, best = solve_assignment(local)
            if best >= incumbent - tol:
                continue
            for cyc in _cycles_of_permutation(perm.mapping):
                members = tuple(int(idx[a]) for a in cyc)
                key = _canonical_cycle(members)
                if key in found:
                    continue
                gain = _cycle_gain(assignment, data, noise, members)
                if gain > tol:
                    found[key] = AlternatingCycle(members, gain)
    return list(found.values())


def _canonical_cycle(members: tuple[int, ...]) -> tuple[int, ...]:
    k = members.index(min(members))
    return members[k:] + members[:k]


def _cycle_gain(
    assignment: Assignment,
    data: np.ndarray,
    noise: np.ndarray,
    members: tuple[int, ...],
) -> float:
    tau = assignment.mapping
    old = 0.0
    new = 0.0
    k = len(members)
    for a in range(k):
        i = members[a]
        nxt = members[(a + 1) % k]
        old += float(np.linalg.norm(data[i] - noise[tau[i]]))
        new += float(np.linalg.norm(data[i] - noise[tau[nxt]]))
    return old - new


def apply_cycle(assignment: Assignment, cycle: AlternatingCycle) -> Assignment:
    """Rotate noise slots along the cycle; cost drops by exactly cycle.gain."""
    if cycle.gain <= 0:
        raise ValueError("cycle has no positive gain")
    if cycle.length < 2 or len(set(cycle.data_indices)) != cycle.length:
        raise ValueError("cycle indices must be distinct, length >= 2")
    mapping = assignment.mapping.copy()
    members = cycle.data_indices
    rotated = [assignment.mapping[members[(a + 1) % cycle.length]]
               for a in range(cycle.length)]
    for a, i in enumerate(members):
        mapping[i] = rotated[a]
    return Assignment(mapping)
