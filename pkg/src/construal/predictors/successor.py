"""Successor-representation overlap and spectral bottleneck distance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ..engine import plan_with_construal
from ..maze import DEFAULT_DISCOUNT, GridMaze, manhattan, reachable_cells, true_mdp
from ..mdp import optimal_stochastic_policy, policy_matrix, successor_representation, value_iteration

ZERO_TOL = 1e-8


def sr_overlap(maze: GridMaze, discount: float = DEFAULT_DISCOUNT) -> np.ndarray:
    """Start-state successor mass on each obstacle's cells.

    The successor matrix comes from the optimal stochastic policy of the
    maze with every obstacle removed.
    """
    from ..maze import compose_construed_mdp

    mdp = compose_construed_mdp(maze, 0, discount)
    policy, _, _ = plan_with_construal(maze, 0, discount)
    M = successor_representation(mdp, policy)
    row = M[maze.start_index]
    return np.array([sum(row[maze.index(c)] for c in ob.cells) for ob in maze.obstacles])


@dataclass(frozen=True)
class BottleneckSet:
    states: frozenset        # bottleneck state indices
    optimal: frozenset       # subset visited by the optimal stochastic policy
    vector: dict             # state index -> partition eigenvector entry


def _adjacency(maze: GridMaze, discount: float):
    mdp = true_mdp(maze, discount)
    nodes = reachable_cells(maze, mdp)
    if maze.goal_index not in nodes:
        raise ValueError("goal is not reachable from the start")
    pos = {s: i for i, s in enumerate(nodes)}
    A = np.zeros((len(nodes), len(nodes)))
    for a in range(mdp.n_actions):
        block = mdp.action_block(a).tocoo()
        for s, t, p in zip(block.row, block.col, block.data):
            if p > 0 and s in pos and t in pos:
                A[pos[s], pos[t]] = 1.0
    return mdp, nodes, np.maximum(A, A.T)


def find_bottlenecks(maze: GridMaze, spectral: str = "fiedler",
                     discount: float = DEFAULT_DISCOUNT) -> BottleneckSet:
    """Bottlenecks from the sign structure of a Laplacian eigenvector.

    ``spectral="fiedler"`` uses the eigenvector of the second-smallest
    eigenvalue of ``L = D - A``; ``"paper-literal"`` uses the second-largest.
    States whose entry is numerically zero are bottlenecks, as are both
    ends of every edge whose entries differ in sign.
    """
    mdp, nodes, A = _adjacency(maze, discount)
    L = np.diag(A.sum(axis=1)) - A
    _, vecs = sla.eigh(L)
    if spectral == "fiedler":
        vec = vecs[:, 1] if len(nodes) > 1 else vecs[:, 0]
    elif spectral == "paper-literal":
        vec = vecs[:, -2] if len(nodes) > 1 else vecs[:, 0]
    else:
        raise ValueError(f"unknown spectral convention {spectral!r}")
    scale = np.max(np.abs(vec))
    sign = np.where(np.abs(vec) <= ZERO_TOL * scale, 0, np.sign(vec)).astype(int)

    marked = set(np.flatnonzero(sign == 0).tolist())
    rows, cols = np.nonzero(np.triu(A, 1))
    for i, j in zip(rows, cols):
        if sign[i] != sign[j]:
            marked.update((int(i), int(j)))
    states = frozenset(nodes[i] for i in marked)

    _, q = value_iteration(mdp)
    on_policy = policy_matrix(mdp, optimal_stochastic_policy(q))
    visited = {maze.start_index}
    stack = [maze.start_index]
    while stack:
        s = stack.pop()
        for t in on_policy.indices[on_policy.indptr[s]:on_policy.indptr[s + 1]]:
            if t not in visited:
                visited.add(int(t))
                stack.append(int(t))
    return BottleneckSet(states, frozenset(states & visited),
                         {s: float(vec[i]) for i, s in enumerate(nodes)})


def bottleneck_distance(maze: GridMaze, spectral: str = "fiedler",
                        discount: float = DEFAULT_DISCOUNT) -> np.ndarray:
    """Minimum Manhattan distance from each obstacle to an optimal bottleneck.

    Falls back to the full bottleneck set when the optimal policy visits
    none of them.
    """
    found = find_bottlenecks(maze, spectral, discount)
    targets = found.optimal or found.states
    cells = [maze.cell(s) for s in sorted(targets)]
    return np.array([
        min(manhattan(o, b) for o in ob.cells for b in cells) for ob in maze.obstacles
    ], dtype=float)
