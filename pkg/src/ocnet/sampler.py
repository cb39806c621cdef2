"""Random spanning tree generation (the optimizer's initial state).

Frontier-growth sampling: start the tree at the outlet, keep the set of grid
links with exactly one endpoint inside the tree, and repeatedly attach a
uniformly random frontier link (directed toward the tree). The result is a
valid spanning tree for any connected grid; the distribution is uniform over
frontier links at each step, not uniform over spanning trees, which is fine
because sampled trees are immediately optimized.

Randomness comes from numpy's PCG64 generator, seeded explicitly, so
(grid, seed) -> tree is a pure function and runs reproduce across platforms.
Each call owns its generator state; calls with distinct seeds can run in
parallel.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid
from .metrics import NO_PARENT, Tree


def random_spanning_tree(grid: Grid, seed: int) -> Tree:
    """Sample a random spanning tree of ``grid`` rooted at its outlet."""
    rng = np.random.Generator(np.random.PCG64(seed))
    n = grid.node_count
    parent = np.full(n, NO_PARENT, dtype=np.int32)
    link_length = np.zeros(n, dtype=np.float64)
    in_tree = np.zeros(n, dtype=bool)

    root = grid.outlet
    in_tree[root] = True
    frontier: list[tuple[int, int, float]] = [
        (root, j, l) for j, l in grid.iter_neighbors(root)
    ]
    attached = 1
    while attached < n:
        k = int(rng.integers(len(frontier)))
        u, v, l = frontier[k]
        frontier[k] = frontier[-1]
        frontier.pop()
        if in_tree[v]:
            # stale link (both ends joined since insertion); discarding keeps
            # the draw uniform over the remaining valid frontier links
            continue
        parent[v] = u
        link_length[v] = l
        in_tree[v] = True
        attached += 1
        for w, lw in grid.iter_neighbors(v):
            if not in_tree[w]:
                frontier.append((v, w, lw))
    return Tree(grid, parent, link_length)
