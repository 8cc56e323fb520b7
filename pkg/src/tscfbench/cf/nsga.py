"""NSGA-II core: fast non-dominated sorting and crowding distance."""

from __future__ import annotations

import numpy as np


def dominates(a, b) -> bool:
    """Minimization dominance: a <= b everywhere and a < b somewhere."""
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def fast_non_dominated_sort(objectives) -> list[list[int]]:
    """Partition objective vectors into Pareto fronts (best front first).

    Deb's scheme: track, for each solution, the set it dominates and the
    count of solutions dominating it; peel fronts by decrementing counts.
    """
    objs = np.asarray(objectives, dtype=np.float64)
    n = len(objs)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(objs[i], objs[j]):
                dominated_by[i].append(j)
                counts[j] += 1
            elif dominates(objs[j], objs[i]):
                dominated_by[j].append(i)
                counts[i] += 1
    fronts = [list(np.flatnonzero(counts == 0))]
    while fronts[-1]:
        nxt = []
        for p in fronts[-1]:
            for q in dominated_by[p]:
                counts[q] -= 1
                if counts[q] == 0:
                    nxt.append(q)
        fronts.append(nxt)
    fronts.pop()
    return fronts


def crowding_distance(objectives) -> np.ndarray:
    """Crowding distances for one front; boundary points get +inf."""
    objs = np.asarray(objectives, dtype=np.float64)
    n, m = objs.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(m):
        order = np.argsort(objs[:, k], kind="stable")
        lo, hi = objs[order[0], k], objs[order[-1], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if hi == lo:
            continue
        spread = objs[order[2:], k] - objs[order[:-2], k]
        dist[order[1:-1]] += spread / (hi - lo)
    return dist
