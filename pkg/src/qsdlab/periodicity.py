"""Detection of the cyclic-class structure of an absorbed chain.

The surviving transitions of the chain (strictly positive matrix entries)
form a digraph.  When that digraph is strongly connected it has a unique
period t, and the states split into classes A_0, ..., A_{t-1} such that
every surviving step moves from class i to class (i + 1) mod t.  Chains
whose surviving digraph is not strongly connected are rejected: different
components could carry different periods and are out of scope here.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .chain import AbsorbedKernel, CyclicStructure
from .errors import DimensionMismatch, NoSurvivingTransition, NotStronglyConnected


def _bfs_reachable(adj: list[list[int]], root: int, n: int) -> np.ndarray:
    seen = np.zeros(n, dtype=bool)
    seen[root] = True
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def detect_cyclic_structure(kernel: AbsorbedKernel) -> CyclicStructure:
    """Find the period and cyclic classes of the surviving-transition graph.

    Support edges use the strict threshold > 0: input probabilities are
    data, and a tiny positive entry is a real transition.  The class of
    index 0 is anchored at the lexicographically smallest state label so
    that repeated runs label classes identically.

    Raises
    ------
    NoSurvivingTransition
        All mass is absorbed in one step; the period is undefined.
    NotStronglyConnected
        The surviving digraph has more than one strongly connected part.
    """
    n = kernel.n
    m = kernel.matrix
    adj: list[list[int]] = [list(np.flatnonzero(m[i] > 0.0)) for i in range(n)]
    radj: list[list[int]] = [list(np.flatnonzero(m[:, j] > 0.0)) for j in range(n)]
    if not any(adj):
        raise NoSurvivingTransition("every state is absorbed in one step")

    root = int(np.argmin(np.array(kernel.states, dtype=object)))
    fwd = _bfs_reachable(adj, root, n)
    bwd = _bfs_reachable(radj, root, n)
    if not (fwd.all() and bwd.all()):
        missing = [kernel.states[i] for i in np.flatnonzero(~(fwd & bwd))]
        raise NotStronglyConnected(
            f"surviving digraph is not strongly connected (e.g. {missing[:4]})"
        )

    # Breadth-first levels from the root; the period is the gcd of
    # level(u) + 1 - level(v) over all edges u -> v.
    level = np.full(n, -1, dtype=int)
    level[root] = 0
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)

    t = 0
    for u in range(n):
        for v in adj[u]:
            t = math.gcd(t, level[u] + 1 - level[v])
    if t == 0:  # unreachable for a finite strongly connected graph
        raise NotStronglyConnected("no cycle found in surviving digraph")

    classes = (level - level[root]) % t
    return CyclicStructure(t, kernel.states, classes)


def verify_partition(kernel: AbsorbedKernel, cyclic: CyclicStructure) -> float:
    """Largest per-state surviving mass that leaves its successor class.

    Returns the max over states x in class i of the mass x sends outside
    class (i + 1) mod t.  Zero means the cyclic-class property holds
    exactly; callers decide what residual they tolerate.
    """
    if len(cyclic.states) != kernel.n:
        raise DimensionMismatch("cyclic structure does not match kernel size")
    t = cyclic.period
    worst = 0.0
    for i in range(t):
        rows = cyclic.members(i)
        ok_cols = cyclic.members((i + 1) % t)
        outside = np.setdiff1d(np.arange(kernel.n), ok_cols, assume_unique=False)
        if rows.size and outside.size:
            misplaced = kernel.matrix[np.ix_(rows, outside)].sum(axis=1)
            worst = max(worst, float(misplaced.max()))
    return worst
