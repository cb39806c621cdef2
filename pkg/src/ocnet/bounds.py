"""Analytical energy bounds and the stripe construction that attains H_1's optimum.

With a corner outlet, the k-th "stripe" C_k of an n x n grid is the set of
nodes at Chebyshev distance k-1 from the outlet; |C_k| = 2k-1 and every node
in C_k has a neighbor in C_{k-1}. Counting the area that must pass through
each stripe yields:

    minimum of H_1 over all spanning trees  =  (4n^3 - 3n^2 - n) / 6
    H_{1/2} over any spanning tree          >= (3/2) n^2 - (7/2) n + 1

plus a generic-gamma stripe bound and the concentration lemma that underlies
it (over integer vectors A >= 1 with a fixed sum, sum A_i**gamma is minimized
by concentrating everything in a single entry). The stripe tree - every link
crossing from C_k into C_{k-1} - achieves the H_1 optimum exactly.

Everything here is a pure function. Exact-rational bound values are returned
as Python ints (both closed forms are integral for integer n), so exact
equality checks need no tolerance.

``enumerate_spanning_trees`` is the brute-force oracle used to validate both
the bounds and the optimizer on tiny grids; it refuses grids whose spanning
tree count (via the matrix-tree determinant) exceeds its budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigurationError, UnsupportedConfigurationError
from .grid import Grid, chebyshev_distance
from .metrics import NO_PARENT, Tree

DEFAULT_ENUMERATION_BUDGET = 200_000


@dataclass(frozen=True)
class BoundResult:
    """One tabulated bound value (CSV row of the bounds command)."""

    n: int
    gamma: float
    value: float
    kind: str  # lemma1 | h1_exact | h05_lower | stripe_generic


def lemma1_min(n: int, m: int, gamma: float) -> float:
    """Minimum of sum(A_i**gamma) over integer A >= 1 with sum(A) = n + m.

    Attained by A = (1, ..., 1, m+1): concentration is optimal because
    x**gamma is concave on [0, 1] exponents.
    """
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    if m < 0:
        raise ConfigurationError(f"m must be >= 0, got {m}")
    if not 0.0 <= gamma <= 1.0:
        raise ConfigurationError(f"gamma must lie in [0,1], got {gamma}")
    return (n - 1) + float(m + 1) ** gamma


def h1_optimal(n: int) -> int:
    """Exact minimum of H_1 over spanning trees of the n x n 8-neighbor grid."""
    if n < 2:
        raise ConfigurationError(f"n must be >= 2, got {n}")
    num = 4 * n**3 - 3 * n**2 - n
    assert num % 6 == 0
    return num // 6


def h05_lower(n: int) -> int:
    """Lower bound on H_{1/2} over spanning trees: (3/2)n^2 - (7/2)n + 1."""
    if n < 2:
        raise ConfigurationError(f"n must be >= 2, got {n}")
    num = 3 * n**2 - 7 * n + 2
    assert num % 2 == 0
    return num // 2


def stripe_lower_bound(n: int, gamma: float) -> float:
    """Generic-gamma stripe bound; equals h05_lower(n) exactly at gamma = 0.5.

    n^2 - 3n + n^(2*gamma+1) - n^(2*gamma) - sum_{k=2..n} k^(2*gamma)
    """
    if n < 2:
        raise ConfigurationError(f"n must be >= 2, got {n}")
    if not 0.0 <= gamma <= 1.0:
        raise ConfigurationError(f"gamma must lie in [0,1], got {gamma}")
    two_g = 2.0 * gamma
    tail = 0.0
    for k in range(2, n + 1):
        tail += float(k) ** two_g
    return n * n - 3.0 * n + float(n) ** (two_g + 1.0) - float(n) ** two_g - tail


def stripe_tree(grid: Grid) -> Tree:
    """Spanning tree whose every link drops one stripe toward a corner outlet.

    Any stripe-respecting parent choice attains the H_1 optimum; parents are
    resolved to the smallest eligible node id so the construction is
    deterministic. Only defined for 2D grids with the outlet in a corner.
    """
    if grid.dimension != 2:
        raise UnsupportedConfigurationError("stripe tree is defined for 2D grids only")
    ox, oy = grid.node_coord(grid.outlet)
    if not (ox in (0, grid.side - 1) and oy in (0, grid.side - 1)):
        raise UnsupportedConfigurationError(
            f"stripe tree requires a corner outlet, got coordinate ({ox}, {oy})"
        )
    n = grid.node_count
    parent = np.full(n, NO_PARENT, dtype=np.int32)
    link_length = np.zeros(n, dtype=np.float64)
    dist = np.array([chebyshev_distance(grid, v) for v in range(n)])
    for v in range(n):
        if v == grid.outlet:
            continue
        ids, lens = grid.neighbor_slice(v)
        chosen = -1
        chosen_len = 0.0
        for j, l in zip(ids, lens):
            if dist[j] < dist[v]:
                chosen = int(j)
                chosen_len = float(l)
                break  # neighbor ids are sorted, first hit is the smallest
        assert chosen >= 0, "every non-outlet node has a lower-stripe neighbor"
        parent[v] = chosen
        link_length[v] = chosen_len
    return Tree(grid, parent, link_length)


def spanning_tree_count(grid: Grid) -> int:
    """Number of spanning trees of the grid, via the matrix-tree determinant."""
    n = grid.node_count
    lap = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        ids, _ = grid.neighbor_slice(i)
        lap[i, i] = len(ids)
        for j in ids:
            lap[i, j] -= 1.0
    sign, logdet = np.linalg.slogdet(lap[1:, 1:])
    return int(round(sign * np.exp(logdet)))


def enumerate_spanning_trees(
    grid: Grid, budget: int = DEFAULT_ENUMERATION_BUDGET
) -> Iterator[Tree]:
    """Yield every spanning tree of the grid, as a Tree rooted at the outlet.

    Backtracks over parent assignments in node order with an incremental
    cycle check, so every completed assignment is a valid tree and none is
    produced twice. Refuses grids with more than ``budget`` spanning trees
    (the default admits the 2x2 and 3x3 8-neighbor grids).
    """
    count = spanning_tree_count(grid)
    if count > budget:
        raise ConfigurationError(
            f"grid has {count} spanning trees, over the enumeration budget {budget}"
        )
    n = grid.node_count
    root = grid.outlet
    order = [v for v in range(n) if v != root]
    parent = np.full(n, NO_PARENT, dtype=np.int32)
    link_length = np.zeros(n, dtype=np.float64)
    assigned = np.zeros(n, dtype=bool)
    assigned[root] = True

    nbrs = [grid.neighbor_slice(v) for v in range(n)]

    def emit() -> Tree:
        return Tree(grid, parent.copy(), link_length.copy())

    # iterative backtracking over candidate-parent indices
    depth = 0
    cand_idx = [0] * len(order)
    while depth >= 0:
        if depth == len(order):
            yield emit()
            depth -= 1
            if depth >= 0:
                v = order[depth]
                parent[v] = NO_PARENT
                assigned[v] = False
                cand_idx[depth] += 1
            continue
        v = order[depth]
        ids, lens = nbrs[v]
        k = cand_idx[depth]
        advanced = False
        while k < len(ids):
            u = int(ids[k])
            # would v -> u close a cycle among already-assigned nodes?
            x = u
            cyc = False
            while assigned[x] and parent[x] != NO_PARENT:
                if x == v:
                    cyc = True
                    break
                x = int(parent[x])
            if x == v:
                cyc = True
            if not cyc:
                parent[v] = u
                link_length[v] = float(lens[k])
                assigned[v] = True
                cand_idx[depth] = k
                depth += 1
                if depth < len(order):
                    cand_idx[depth] = 0
                advanced = True
                break
            k += 1
        if not advanced:
            cand_idx[depth] = 0
            depth -= 1
            if depth >= 0:
                v = order[depth]
                parent[v] = NO_PARENT
                assigned[v] = False
                cand_idx[depth] += 1


def bound_table(n_values, gammas) -> list[BoundResult]:
    """Tabulate all bound kinds for plotting against observed energies."""
    rows: list[BoundResult] = []
    for n in n_values:
        for g in gammas:
            rows.append(BoundResult(n, g, float(stripe_lower_bound(n, g)), "stripe_generic"))
            if g == 1.0:
                rows.append(BoundResult(n, g, float(h1_optimal(n)), "h1_exact"))
            if g == 0.5:
                rows.append(BoundResult(n, g, float(h05_lower(n)), "h05_lower"))
            rows.append(
                BoundResult(n, g, lemma1_min(2 * n - 1, n * n - 1, g), "lemma1")
            )
    return rows
