"""Directed spanning trees and their drainage metrics.

A channel network is a spanning tree over a grid, directed so every node has
a path to the single outlet (root). The quantities attached to each node x:

    area A(x)             nodes whose outlet path passes through x (incl. x)
    volume C(x)           sum of areas of all nodes strictly upstream of x
    upstream length L(x)  length of the mainstream path from x to a source,
                          following the largest-area child at each junction

and the energy of a whole configuration with exponent gamma in [0, 1]:

    H_gamma = sum over non-root nodes i of A(i)**gamma * l(i)

where l(i) is the length of the link out of node i. All metric passes are
iterative (children-before-parents order via a pending-children queue), so
deep trees cannot overflow the interpreter stack; areas and volumes are held
as 64-bit integers. Metric functions never mutate the tree, so they can run
concurrently on distinct trees.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, StructuralError
from .grid import Grid, GridSpec, build_grid

NO_PARENT = -1

TREE_FORMAT = "ocnet-tree/1"


@dataclass(frozen=True)
class EnergyParams:
    """Energy exponent; gamma=0 weighs only link length, gamma=1 only area."""

    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")


@dataclass
class NodeMetrics:
    """Per-node drainage metrics of one tree (parallel arrays over node id)."""

    areas: np.ndarray  # int64, >= 1
    volumes: np.ndarray  # int64, >= 0
    upstream_lengths: np.ndarray  # float64, >= 0


class Tree:
    """Directed spanning tree over a grid, rooted at the grid outlet.

    ``parent[i]`` is the node that link i points to (NO_PARENT for the root);
    ``link_length[i]`` is the length of that link (0.0 at the root). Only the
    optimizer mutates a tree, and only through its own update path; everything
    else treats trees as read-only values.
    """

    __slots__ = ("grid", "parent", "link_length")

    def __init__(self, grid: Grid, parent: np.ndarray, link_length: np.ndarray):
        self.grid = grid
        self.parent = parent
        self.link_length = link_length

    @classmethod
    def from_parents(cls, grid: Grid, parents, validate: bool = True) -> "Tree":
        """Build a tree from a parent map, looking up link lengths in the grid."""
        parent = np.asarray(parents, dtype=np.int32).copy()
        if parent.shape != (grid.node_count,):
            raise StructuralError(
                f"parent array has shape {parent.shape}, expected ({grid.node_count},)"
            )
        link_length = np.zeros(grid.node_count, dtype=np.float64)
        for i in range(grid.node_count):
            if parent[i] != NO_PARENT:
                link_length[i] = grid.link_length(i, int(parent[i]))
        tree = cls(grid, parent, link_length)
        if validate:
            tree.validate()
        return tree

    @property
    def root(self) -> int:
        return self.grid.outlet

    @property
    def node_count(self) -> int:
        return self.grid.node_count

    def copy(self) -> "Tree":
        return Tree(self.grid, self.parent.copy(), self.link_length.copy())

    def children_counts(self) -> np.ndarray:
        counts = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            p = self.parent[i]
            if p != NO_PARENT:
                counts[p] += 1
        return counts

    def validate(self) -> None:
        """Check all structural invariants; raises StructuralError on failure."""
        n = self.node_count
        roots = np.flatnonzero(self.parent == NO_PARENT)
        if len(roots) != 1 or roots[0] != self.grid.outlet:
            raise StructuralError(
                f"tree must have exactly the grid outlet {self.grid.outlet} as root, "
                f"found root set {roots.tolist()}"
            )
        for i in range(n):
            p = int(self.parent[i])
            if p == NO_PARENT:
                continue
            expected = self.grid.link_length(i, p)  # raises if not adjacent
            if not math.isclose(expected, float(self.link_length[i]), rel_tol=0, abs_tol=1e-12):
                raise StructuralError(
                    f"link {i}->{p} stored length {self.link_length[i]} != grid length {expected}"
                )
        # every node must reach the root in < n parent steps
        depth_known = np.full(n, -1, dtype=np.int64)
        depth_known[self.grid.outlet] = 0
        for i in range(n):
            path = []
            x = i
            while depth_known[x] < 0:
                path.append(x)
                x = int(self.parent[x])
                if len(path) > n:
                    raise StructuralError("cycle detected: parent walk exceeded node count")
            d = depth_known[x]
            for node in reversed(path):
                d += 1
                depth_known[node] = d

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        """Flat, lossless record of the tree (documented schema TREE_FORMAT)."""
        return {
            "format": TREE_FORMAT,
            "dimension": self.grid.dimension,
            "side": self.grid.side,
            "length_mode": self.grid.length_mode,
            "outlet": int(self.grid.outlet),
            "parent": [int(p) for p in self.parent],
        }

    @classmethod
    def from_dict(cls, record: dict, grid: Grid | None = None) -> "Tree":
        if record.get("format") != TREE_FORMAT:
            raise ConfigurationError(f"unknown tree format {record.get('format')!r}")
        if grid is None:
            spec = GridSpec(
                dimension=record["dimension"],
                side=record["side"],
                length_mode=record["length_mode"],
            )
            grid = build_grid(spec)
            grid.outlet = record["outlet"]
        else:
            if (
                grid.dimension != record["dimension"]
                or grid.side != record["side"]
                or grid.length_mode != record["length_mode"]
                or grid.outlet != record["outlet"]
            ):
                raise ConfigurationError("tree record does not match supplied grid")
        return cls.from_parents(grid, record["parent"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path, grid: Grid | None = None) -> "Tree":
        return cls.from_dict(json.loads(Path(path).read_text()), grid=grid)


def _bottom_up_order(tree: Tree) -> np.ndarray:
    """Node ids in children-before-parents order (iterative, no recursion)."""
    n = tree.node_count
    pending = tree.children_counts()
    order = np.empty(n, dtype=np.int64)
    stack = [i for i in range(n) if pending[i] == 0]
    k = 0
    while stack:
        v = stack.pop()
        order[k] = v
        k += 1
        p = int(tree.parent[v])
        if p != NO_PARENT:
            pending[p] -= 1
            if pending[p] == 0:
                stack.append(p)
    if k != n:
        raise StructuralError("cycle detected: bottom-up pass did not cover all nodes")
    return order


def compute_areas(tree: Tree) -> np.ndarray:
    """Contributing area per node: A(x) = 1 + sum of children's areas."""
    n = tree.node_count
    areas = np.ones(n, dtype=np.int64)
    for v in _bottom_up_order(tree):
        p = int(tree.parent[v])
        if p != NO_PARENT:
            areas[p] += areas[v]
    return areas


def compute_volumes(tree: Tree, areas: np.ndarray) -> np.ndarray:
    """Water volume per node: C(x) = sum over children y of (C(y) + A(y)).

    Equivalently the sum of areas of all nodes strictly upstream of x.
    """
    n = tree.node_count
    volumes = np.zeros(n, dtype=np.int64)
    for v in _bottom_up_order(tree):
        p = int(tree.parent[v])
        if p != NO_PARENT:
            volumes[p] += volumes[v] + areas[v]
    return volumes


def compute_upstream_lengths(tree: Tree, areas: np.ndarray) -> np.ndarray:
    """Mainstream length per node, following the largest-area child.

    L(x) = 0 at sources; otherwise L(x) = l(y) + L(y) for the child y of x
    with maximal area. Ties between children of equal area resolve toward the
    longer upstream path, which is deterministic given the tree.
    """
    n = tree.node_count
    lengths = np.zeros(n, dtype=np.float64)
    best_area = np.zeros(n, dtype=np.int64)
    for v in _bottom_up_order(tree):
        p = int(tree.parent[v])
        if p != NO_PARENT:
            cand = lengths[v] + tree.link_length[v]
            if areas[v] > best_area[p] or (
                areas[v] == best_area[p] and cand > lengths[p]
            ):
                best_area[p] = areas[v]
                lengths[p] = cand
    return lengths


def compute_metrics(tree: Tree) -> NodeMetrics:
    """All per-node metrics in one pass bundle."""
    areas = compute_areas(tree)
    return NodeMetrics(
        areas=areas,
        volumes=compute_volumes(tree, areas),
        upstream_lengths=compute_upstream_lengths(tree, areas),
    )


def energy(tree: Tree, areas: np.ndarray, params: EnergyParams) -> float:
    """H_gamma = sum over non-root i of A(i)**gamma * l(i).

    Accumulation runs in ascending node id so results are bit-reproducible.
    """
    gamma = params.gamma
    parent = tree.parent
    ll = tree.link_length
    total = 0.0
    if gamma == 0.0:
        for i in range(tree.node_count):
            if parent[i] != NO_PARENT:
                total += ll[i]
    elif gamma == 1.0:
        for i in range(tree.node_count):
            if parent[i] != NO_PARENT:
                total += areas[i] * ll[i]
    elif gamma == 0.5:
        for i in range(tree.node_count):
            if parent[i] != NO_PARENT:
                total += math.sqrt(areas[i]) * ll[i]
    else:
        for i in range(tree.node_count):
            if parent[i] != NO_PARENT:
                total += float(areas[i]) ** gamma * ll[i]
    return total


def is_upstream(tree: Tree, x: int, y: int) -> bool:
    """True iff x lies on the path from y to the root (x <= y; reflexive)."""
    node = y
    while node != NO_PARENT:
        if node == x:
            return True
        node = int(tree.parent[node])
    return False
