"""Greedy single-link rewiring that locally minimizes H_gamma.

One iteration: pick a uniform random non-root node i, pick a uniform random
grid neighbor j of i other than its current parent, and redirect i's outgoing
link to j. Proposals that would create a loop are discarded; otherwise the
move is kept iff it strictly lowers the energy. The run stops when, over the
most recent ``window`` iterations, the fraction of accepted moves drops to
the improvement-ratio threshold (1% by default, 2% for large grids), or at
the ``max_iterations`` safety cap.

The inner loop is compiled with numba and works on flat arrays; energy and
area changes are applied incrementally along the two root paths affected by
a rewire. Full recomputations at a configurable cadence (every
``verify_every_improvements`` accepted moves) cross-check the incremental
state against the from-scratch metrics and raise VerificationError on any
mismatch. A single run is strictly sequential; parallelism belongs at the
ensemble level (independent runs, one per seed).

Randomness: the run consumes a flat stream of float64 draws from PCG64(seed),
two per iteration (node choice, neighbor choice), so results are exactly
reproducible for a given (initial tree, config).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigurationError, VerificationError
from .grid import Grid
from .metrics import NO_PARENT, EnergyParams, Tree, compute_areas
from .metrics import energy as full_energy

# acceptance guard against pure rounding noise in incremental deltas
ACCEPT_EPS = 1e-12

DEFAULT_THRESHOLD_SMALL = 0.01
DEFAULT_THRESHOLD_LARGE = 0.02
LARGE_NETWORK_CUTOFF = 3600
MIN_WINDOW = 1000

_RAND_CHUNK = 1 << 19  # float64 draws fetched from the generator per refill

# kernel exit codes
_CONVERGED = 0
_NEED_RAND = 1
_VERIFY_DUE = 2
_MAX_ITERS = 3


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs for one optimization run.

    ``improvement_ratio_threshold``, ``window`` and ``max_iterations`` default
    to size-dependent values resolved against the grid at run time:
    threshold 0.01 (0.02 above ``large_network_cutoff`` nodes), window
    max(1000, 50 * node_count), max_iterations 5000 * node_count.
    ``lifetime_ratio`` switches the convergence test from the sliding window
    to the all-time improvements/iterations ratio.
    """

    gamma: float
    seed: int = 0
    improvement_ratio_threshold: float | None = None
    window: int | None = None
    max_iterations: int | None = None
    large_network_cutoff: int = LARGE_NETWORK_CUTOFF
    lifetime_ratio: bool = False
    verify_every_improvements: int = 10_000
    trajectory_points: int = 512

    def resolve(self, node_count: int) -> "ResolvedConfig":
        threshold = self.improvement_ratio_threshold
        if threshold is None:
            threshold = (
                DEFAULT_THRESHOLD_LARGE
                if node_count > self.large_network_cutoff
                else DEFAULT_THRESHOLD_SMALL
            )
        if not 0.0 < threshold < 1.0:
            raise ConfigurationError(f"improvement ratio threshold must be in (0,1), got {threshold}")
        window = self.window if self.window is not None else max(MIN_WINDOW, 50 * node_count)
        if window < MIN_WINDOW:
            raise ConfigurationError(f"window must be >= {MIN_WINDOW}, got {window}")
        max_iterations = (
            self.max_iterations if self.max_iterations is not None else 5000 * node_count
        )
        if max_iterations < 1:
            raise ConfigurationError("max_iterations must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0,1], got {self.gamma}")
        return ResolvedConfig(
            gamma=self.gamma,
            seed=self.seed,
            threshold=threshold,
            window=window,
            max_iterations=max_iterations,
            lifetime_ratio=self.lifetime_ratio,
            verify_every_improvements=self.verify_every_improvements,
            trajectory_points=max(2, self.trajectory_points),
        )


@dataclass(frozen=True)
class ResolvedConfig:
    gamma: float
    seed: int
    threshold: float
    window: int
    max_iterations: int
    lifetime_ratio: bool
    verify_every_improvements: int
    trajectory_points: int


@dataclass
class OptimizeReport:
    """Outcome bookkeeping for one run.

    Always satisfies improvements + rejected_loops + rejected_worse ==
    iterations and final_energy <= initial_energy.
    """

    iterations: int
    improvements: int
    rejected_loops: int
    rejected_worse: int
    initial_energy: float
    final_energy: float
    converged: bool
    energy_trajectory: list[tuple[int, float]] = field(default_factory=list)


def propose_rewire(tree: Tree, grid: Grid, rng: np.random.Generator) -> tuple[int, int]:
    """One uniform rewire proposal: (node i, candidate parent j != parent[i]).

    Consumes two float64 draws, mapped by the same floor scheme the compiled
    loop uses, so proposal statistics match the optimizer exactly.
    """
    n = grid.node_count
    root = grid.outlet
    k = min(int(rng.random() * (n - 1)), n - 2)
    i = k if k < root else k + 1
    ids, _ = grid.neighbor_slice(i)
    choices = len(ids) - 1
    m = min(int(rng.random() * choices), choices - 1)
    parent_i = int(tree.parent[i])
    for j in ids:
        if int(j) == parent_i:
            continue
        if m == 0:
            return i, int(j)
        m -= 1
    raise AssertionError("unreachable: parent must appear among grid neighbors")


def creates_loop(tree: Tree, i: int, j: int) -> bool:
    """True iff redirecting i's link to j would create a cycle.

    Equivalent to i lying on j's current path to the root.
    """
    x = j
    parent = tree.parent
    while x != NO_PARENT:
        if x == i:
            return True
        x = int(parent[x])
    return False


def delta_energy(
    tree: Tree,
    areas: np.ndarray,
    i: int,
    j: int,
    params: EnergyParams,
    new_length: float | None = None,
) -> float:
    """Energy change of redirecting i to j, computed incrementally.

    Only the two root paths (from the old parent and from j) change area, and
    their shared suffix above the lowest common node cancels; everything else
    is untouched. Requires that the rewire is loop-free.
    """
    if creates_loop(tree, i, j):
        raise ConfigurationError(f"rewire {i}->{j} would create a loop")
    if new_length is None:
        new_length = tree.grid.link_length(i, j)
    gamma = params.gamma
    parent = tree.parent
    ll = tree.link_length
    a_i = float(areas[i])

    on_new_path = set()
    x = j
    while x != NO_PARENT:
        on_new_path.add(x)
        x = int(parent[x])

    delta = (a_i**gamma) * (new_length - ll[i])
    # old-parent path up to (excluding) the first node shared with the new path
    x = int(parent[i])
    while x not in on_new_path:
        a = float(areas[x])
        delta += ((a - a_i) ** gamma - a**gamma) * ll[x]
        x = int(parent[x])
    lca = x
    x = j
    while x != lca:
        a = float(areas[x])
        delta += ((a + a_i) ** gamma - a**gamma) * ll[x]
        x = int(parent[x])
    return delta


@njit(cache=True, nogil=True)
def _run_kernel(
    parent,
    link_len,
    areas,
    indptr,
    nbr_ids,
    nbr_len,
    root,
    gamma,
    g_case,
    state,  # int64[:]: 0 iters, 1 improvements, 2 rej_loops, 3 rej_worse,
    #         4 rand_cursor, 5 win_count, 6 next_verify_improvements
    fstate,  # float64[:]: 0 energy
    rand_buf,
    window_buf,
    window,
    allowed_in_window,
    lifetime_mode,
    threshold,
    max_iterations,
    path_mark,
    traj_iters,
    traj_energy,
    traj_state,  # int64[:]: 0 count, 1 stride
    epoch_box,  # int64[:]: growing mark epoch
):
    n = parent.shape[0]
    t = state[0]
    improvements = state[1]
    rej_loops = state[2]
    rej_worse = state[3]
    cursor = state[4]
    win_count = state[5]
    next_verify = state[6]
    e = fstate[0]
    epoch = epoch_box[0]
    nbuf = rand_buf.shape[0]

    status = _MAX_ITERS
    while True:
        if t >= max_iterations:
            status = _MAX_ITERS
            break
        if cursor + 2 > nbuf:
            status = _NEED_RAND
            break
        r1 = rand_buf[cursor]
        r2 = rand_buf[cursor + 1]
        cursor += 2

        k = int(r1 * (n - 1))
        if k > n - 2:
            k = n - 2
        i = k if k < root else k + 1

        lo = indptr[i]
        hi = indptr[i + 1]
        choices = hi - lo - 1
        m = int(r2 * choices)
        if m > choices - 1:
            m = choices - 1
        p_old = parent[i]
        j = -1
        l_new = 0.0
        for q in range(lo, hi):
            cand = nbr_ids[q]
            if cand == p_old:
                continue
            if m == 0:
                j = cand
                l_new = nbr_len[q]
                break
            m -= 1

        improved = 0
        # loop check: does i lie on j's root path?
        x = j
        is_loop = False
        while x != -1:
            if x == i:
                is_loop = True
                break
            x = parent[x]
        if is_loop:
            rej_loops += 1
        else:
            # mark new path (j -> root) with a fresh epoch
            epoch += 1
            x = j
            while x != -1:
                path_mark[x] = epoch
                x = parent[x]
            a_i = float(areas[i])
            delta = 0.0
            if g_case == 1:  # gamma == 0
                delta = l_new - link_len[i]
            elif g_case == 2:  # gamma == 0.5
                delta = math.sqrt(a_i) * (l_new - link_len[i])
                x = p_old
                while path_mark[x] != epoch:
                    a = float(areas[x])
                    delta += (math.sqrt(a - a_i) - math.sqrt(a)) * link_len[x]
                    x = parent[x]
                lca = x
                x = j
                while x != lca:
                    a = float(areas[x])
                    delta += (math.sqrt(a + a_i) - math.sqrt(a)) * link_len[x]
                    x = parent[x]
            elif g_case == 3:  # gamma == 1
                delta = a_i * (l_new - link_len[i])
                x = p_old
                while path_mark[x] != epoch:
                    delta += -a_i * link_len[x]
                    x = parent[x]
                lca = x
                x = j
                while x != lca:
                    delta += a_i * link_len[x]
                    x = parent[x]
            else:
                delta = a_i**gamma * (l_new - link_len[i])
                x = p_old
                while path_mark[x] != epoch:
                    a = float(areas[x])
                    delta += ((a - a_i) ** gamma - a**gamma) * link_len[x]
                    x = parent[x]
                lca = x
                x = j
                while x != lca:
                    a = float(areas[x])
                    delta += ((a + a_i) ** gamma - a**gamma) * link_len[x]
                    x = parent[x]

            if delta < -ACCEPT_EPS:
                # apply: areas shrink on the old path, grow on the new one
                x = p_old
                while path_mark[x] != epoch:
                    areas[x] -= areas[i]
                    x = parent[x]
                lca = x
                x = j
                while x != lca:
                    areas[x] += areas[i]
                    x = parent[x]
                parent[i] = j
                link_len[i] = l_new
                e += delta
                improvements += 1
                improved = 1
            else:
                rej_worse += 1

        # sliding-window bookkeeping
        slot = t % window
        win_count += improved - window_buf[slot]
        window_buf[slot] = improved
        t += 1

        if traj_state[0] < traj_iters.shape[0] and (t - 1) % traj_state[1] == 0:
            traj_iters[traj_state[0]] = t - 1
            traj_energy[traj_state[0]] = e
            traj_state[0] += 1

        if t >= window:
            if lifetime_mode:
                if improvements <= int(threshold * t + 1e-9):
                    status = _CONVERGED
                    break
            else:
                if win_count <= allowed_in_window:
                    status = _CONVERGED
                    break

        if improved == 1 and next_verify > 0 and improvements >= next_verify:
            status = _VERIFY_DUE
            break

    state[0] = t
    state[1] = improvements
    state[2] = rej_loops
    state[3] = rej_worse
    state[4] = cursor
    state[5] = win_count
    state[6] = next_verify
    fstate[0] = e
    epoch_box[0] = epoch
    return status


def _gamma_case(gamma: float) -> int:
    if gamma == 0.0:
        return 1
    if gamma == 0.5:
        return 2
    if gamma == 1.0:
        return 3
    return 0


def _verify_state(tree: Tree, areas: np.ndarray, tracked_energy: float, gamma: float) -> None:
    """Cross-check incremental state against from-scratch recomputation."""
    tree.validate()
    fresh_areas = compute_areas(tree)
    if not np.array_equal(fresh_areas, areas):
        bad = int(np.flatnonzero(fresh_areas != areas)[0])
        raise VerificationError(
            f"incremental area mismatch at node {bad}: "
            f"tracked {areas[bad]}, recomputed {fresh_areas[bad]}"
        )
    fresh_energy = full_energy(tree, fresh_areas, EnergyParams(gamma))
    if abs(fresh_energy - tracked_energy) > 1e-9 * max(1.0, abs(fresh_energy)):
        raise VerificationError(
            f"incremental energy drift: tracked {tracked_energy!r}, "
            f"recomputed {fresh_energy!r}"
        )


def optimize(tree: Tree, grid: Grid, config: OptimizerConfig) -> tuple[Tree, OptimizeReport]:
    """Locally minimize H_gamma from ``tree`` by greedy random rewiring.

    Returns a new tree (the input is left untouched) plus a report. Failing
    to converge inside ``max_iterations`` is reported via
    ``report.converged == False``, not an exception.
    """
    if tree.grid is not grid and tree.grid.node_count != grid.node_count:
        raise ConfigurationError("tree does not belong to the supplied grid")
    rc = config.resolve(grid.node_count)

    work = tree.copy()
    parent = work.parent
    link_len = work.link_length
    areas = compute_areas(work)
    e0 = full_energy(work, areas, EnergyParams(rc.gamma))

    state = np.zeros(7, dtype=np.int64)
    state[6] = rc.verify_every_improvements if rc.verify_every_improvements > 0 else -1
    fstate = np.array([e0], dtype=np.float64)
    window_buf = np.zeros(rc.window, dtype=np.int64)
    path_mark = np.zeros(grid.node_count, dtype=np.int64)
    epoch_box = np.zeros(1, dtype=np.int64)
    allowed = int(rc.threshold * rc.window + 1e-9)

    traj_cap = rc.trajectory_points
    stride = max(1, rc.max_iterations // traj_cap)
    traj_iters = np.zeros(traj_cap, dtype=np.int64)
    traj_energy = np.zeros(traj_cap, dtype=np.float64)
    traj_state = np.array([0, stride], dtype=np.int64)

    rng = np.random.Generator(np.random.PCG64(rc.seed))
    rand_buf = rng.random(_RAND_CHUNK)
    g_case = _gamma_case(rc.gamma)

    while True:
        status = _run_kernel(
            parent,
            link_len,
            areas,
            grid.indptr,
            grid.neighbors,
            grid.lengths,
            grid.outlet,
            rc.gamma,
            g_case,
            state,
            fstate,
            rand_buf,
            window_buf,
            rc.window,
            allowed,
            rc.lifetime_ratio,
            rc.threshold,
            rc.max_iterations,
            path_mark,
            traj_iters,
            traj_energy,
            traj_state,
            epoch_box,
        )
        if status == _NEED_RAND:
            rand_buf = rng.random(_RAND_CHUNK)
            state[4] = 0
            continue
        if status == _VERIFY_DUE:
            _verify_state(work, areas, float(fstate[0]), rc.gamma)
            state[6] += rc.verify_every_improvements
            continue
        break

    final_areas = compute_areas(work)
    final_e = full_energy(work, final_areas, EnergyParams(rc.gamma))
    if abs(final_e - float(fstate[0])) > 1e-9 * max(1.0, abs(final_e)):
        raise VerificationError(
            f"final energy drift: tracked {float(fstate[0])!r}, recomputed {final_e!r}"
        )

    trajectory = [
        (int(traj_iters[k]), float(traj_energy[k])) for k in range(int(traj_state[0]))
    ]
    report = OptimizeReport(
        iterations=int(state[0]),
        improvements=int(state[1]),
        rejected_loops=int(state[2]),
        rejected_worse=int(state[3]),
        initial_energy=e0,
        final_energy=final_e,
        converged=(status == _CONVERGED),
        energy_trajectory=trajectory,
    )
    return work, report
