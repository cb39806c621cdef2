"""Lattice grids of potential links in two and three dimensions.

A grid is the fixed substrate a channel network lives on: every lattice node
is a candidate channel cell, and every pair of nodes whose coordinates differ
by at most one step along each axis is joined by a potential link (8 neighbors
for an interior 2D node, 26 for an interior 3D node).

Node ids are row-major encodings of lattice coordinates, so serialized trees
are portable between runs:

    2D: id = x * side + y              for coordinate (x, y)
    3D: id = (x * side + y) * side + z for coordinate (x, y, z)

Link lengths are either all 1 (``unit`` mode, the default used by the scaling
experiments) or the Euclidean offset length 1, sqrt(2), sqrt(3) (``euclidean``
mode, used when comparing against Steiner trees).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

LENGTH_MODES = ("unit", "euclidean")


@dataclass(frozen=True)
class GridSpec:
    """Declarative description of a lattice grid.

    Attributes:
        dimension: 2 or 3.
        side: nodes per axis; the grid has side**dimension nodes.
        length_mode: "unit" or "euclidean" link lengths.
        outlet: lattice coordinate of the outlet (root); defaults to the
            origin corner.
    """

    dimension: int
    side: int
    length_mode: str = "unit"
    outlet: tuple[int, ...] | None = None

    def validate(self) -> None:
        if self.dimension not in (2, 3):
            raise ConfigurationError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.side < 2:
            raise ConfigurationError(f"side must be >= 2, got {self.side}")
        if self.length_mode not in LENGTH_MODES:
            raise ConfigurationError(
                f"length_mode must be one of {LENGTH_MODES}, got {self.length_mode!r}"
            )
        if self.outlet is not None:
            if len(self.outlet) != self.dimension:
                raise ConfigurationError(
                    f"outlet coordinate {self.outlet} does not match dimension {self.dimension}"
                )
            if not all(0 <= c < self.side for c in self.outlet):
                raise ConfigurationError(
                    f"outlet coordinate {self.outlet} outside grid of side {self.side}"
                )

    @property
    def outlet_coord(self) -> tuple[int, ...]:
        return self.outlet if self.outlet is not None else (0,) * self.dimension

    @property
    def node_count(self) -> int:
        return self.side**self.dimension


@dataclass
class Grid:
    """Immutable lattice with CSR-style adjacency.

    ``indptr``/``neighbors``/``lengths`` store, for node ``i``, its neighbor
    ids and link lengths in ``neighbors[indptr[i]:indptr[i+1]]`` (sorted by
    neighbor id). The structure is symmetric: j appears in i's list iff i
    appears in j's, with the same length. Grids are never mutated after
    construction, so they are safe to share across worker threads.
    """

    dimension: int
    side: int
    length_mode: str
    node_count: int
    outlet: int
    coords: np.ndarray  # (node_count, dimension) int32
    indptr: np.ndarray  # (node_count + 1,) int64
    neighbors: np.ndarray  # (2 * link_count,) int32
    lengths: np.ndarray  # (2 * link_count,) float64
    _coord_index: dict = field(repr=False, default_factory=dict)

    def node_id(self, coord: tuple[int, ...]) -> int:
        """Row-major id of a lattice coordinate."""
        nid = 0
        for c in coord:
            if not 0 <= c < self.side:
                raise ConfigurationError(f"coordinate {coord} outside grid")
            nid = nid * self.side + c
        return nid

    def node_coord(self, node: int) -> tuple[int, ...]:
        return tuple(int(c) for c in self.coords[node])

    def degree(self, node: int) -> int:
        return int(self.indptr[node + 1] - self.indptr[node])

    def neighbor_slice(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        """(neighbor ids, link lengths) arrays for one node."""
        lo, hi = self.indptr[node], self.indptr[node + 1]
        return self.neighbors[lo:hi], self.lengths[lo:hi]

    def iter_neighbors(self, node: int):
        lo, hi = self.indptr[node], self.indptr[node + 1]
        for k in range(lo, hi):
            yield int(self.neighbors[k]), float(self.lengths[k])

    def link_length(self, i: int, j: int) -> float:
        """Length of the potential link i--j; raises if not adjacent."""
        ids, lens = self.neighbor_slice(i)
        k = np.searchsorted(ids, j)
        if k < len(ids) and ids[k] == j:
            return float(lens[k])
        raise ConfigurationError(f"nodes {i} and {j} are not adjacent")

    def undirected_link_count(self) -> int:
        return len(self.neighbors) // 2


def build_grid(spec: GridSpec) -> Grid:
    """Construct the lattice of potential links described by ``spec``.

    Every pair of nodes whose coordinates differ by at most 1 along each axis
    (excluding the node itself) is linked. In ``euclidean`` mode the link
    length is the Euclidean norm of the coordinate offset.
    """
    spec.validate()
    n = spec.side
    dim = spec.dimension
    coords = np.array(
        list(itertools.product(range(n), repeat=dim)), dtype=np.int32
    )
    node_count = len(coords)

    offsets = [o for o in itertools.product((-1, 0, 1), repeat=dim) if any(o)]
    offset_len = {
        o: (math.sqrt(sum(c * c for c in o)) if spec.length_mode == "euclidean" else 1.0)
        for o in offsets
    }

    indptr = np.zeros(node_count + 1, dtype=np.int64)
    nbr_chunks: list[list[int]] = []
    len_chunks: list[list[float]] = []
    for nid in range(node_count):
        c = coords[nid]
        nbrs: list[tuple[int, float]] = []
        for o in offsets:
            q = c + o
            if np.all((q >= 0) & (q < n)):
                qid = 0
                for comp in q:
                    qid = qid * n + int(comp)
                nbrs.append((qid, offset_len[o]))
        nbrs.sort()
        nbr_chunks.append([j for j, _ in nbrs])
        len_chunks.append([l for _, l in nbrs])
        indptr[nid + 1] = indptr[nid] + len(nbrs)

    grid = Grid(
        dimension=dim,
        side=n,
        length_mode=spec.length_mode,
        node_count=node_count,
        outlet=0,
        coords=coords,
        indptr=indptr,
        neighbors=np.array(list(itertools.chain.from_iterable(nbr_chunks)), dtype=np.int32),
        lengths=np.array(list(itertools.chain.from_iterable(len_chunks)), dtype=np.float64),
    )
    grid.outlet = grid.node_id(spec.outlet_coord)
    grid.neighbors.setflags(write=False)
    grid.lengths.setflags(write=False)
    grid.coords.setflags(write=False)
    grid.indptr.setflags(write=False)
    return grid


def chebyshev_distance(grid: Grid, node: int) -> int:
    """Chebyshev (max-axis) distance from ``node`` to the grid outlet.

    Nodes at distance k-1 form the k-th "stripe" around a corner outlet; on a
    2D grid with a corner outlet the k-th stripe has 2k-1 members.
    """
    if not 0 <= node < grid.node_count:
        raise ConfigurationError(f"node {node} not in grid")
    d = np.abs(grid.coords[node] - grid.coords[grid.outlet])
    return int(d.max())
