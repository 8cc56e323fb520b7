"""Rank aggregation across datasets and the Friedman/Nemenyi machinery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError

# 1 is the best rank; direction says which raw value deserves it
METRIC_DIRECTIONS = {
    "validity": "max",
    "l1": "min",
    "l2": "min",
    "linf": "min",
    "l0": "min",
    "thresh_l0": "min",
    "sens": "min",
    "num_seg": "min",
    "dist_all": "min",
    "dist_class": "min",
    "gtime": "min",
    "gtime_all": "min",
    "gtime_valid": "min",
    "consist_bc": "max",
    "consist_bv": "max",
}

# Critical values of the chi-square distribution, df = 1..9
_CHI2_CRIT = {
    0.05: [3.841, 5.991, 7.815, 9.488, 11.070, 12.592, 14.067, 15.507, 16.919],
    0.10: [2.706, 4.605, 6.251, 7.779, 9.236, 10.645, 12.017, 13.362, 14.684],
}

# Nemenyi q_alpha constants for 2..10 methods (studentized range / sqrt 2)
_NEMENYI_Q = {
    0.05: [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164],
    0.10: [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920],
}


def rank_values(values: list[float | None], direction: str) -> list[float]:
    """Ranks with 1 best; mid-rank ties; None ranks last at exactly M.

    Absent values (aborted pairs, metrics with no valid CFs) are pinned to
    rank M rather than excluded, so they still weigh down the average.
    """
    m = len(values)
    present = [i for i, v in enumerate(values) if v is not None]
    ranks: list[float] = [float(m)] * m
    if not present:
        return ranks
    keyed = [(-values[i] if direction == "max" else values[i]) for i in present]
    order = sorted(range(len(present)), key=lambda j: keyed[j])
    pos = 0
    while pos < len(order):
        end = pos
        while end + 1 < len(order) and keyed[order[end + 1]] == keyed[order[pos]]:
            end += 1
        mid = (pos + end) / 2 + 1  # ranks are 1-based
        for j in range(pos, end + 1):
            ranks[present[order[j]]] = mid
        pos = end + 1
    return ranks


@dataclass
class RankingResult:
    methods: list[str]
    metric: str
    per_dataset_ranks: dict[str, list[float]]  # dataset -> rank per method
    average_ranks: dict[str, float]
    excluded_datasets: list[str]


def aggregate_rankings(
    per_dataset_values: dict[str, dict[str, float | None]],
    methods: list[str],
    metric: str,
    direction: str | None = None,
) -> RankingResult:
    """Per-dataset ranks and their average per method.

    `per_dataset_values` maps dataset -> {method -> value or None}.
    Datasets where the metric is absent for every method are excluded
    (noted in the result) rather than dragging everyone to rank M.
    """
    if len(methods) < 2:
        raise ValueError("ranking needs at least 2 methods")
    direction = direction or METRIC_DIRECTIONS.get(metric, "min")
    per_dataset_ranks: dict[str, list[float]] = {}
    excluded: list[str] = []
    for ds, by_method in per_dataset_values.items():
        values = [by_method.get(m) for m in methods]
        if all(v is None for v in values):
            excluded.append(ds)
            continue
        per_dataset_ranks[ds] = rank_values(values, direction)
    if not per_dataset_ranks:
        return RankingResult(methods, metric, {}, {}, excluded)
    matrix = np.array(list(per_dataset_ranks.values()))
    avg = matrix.mean(axis=0)
    return RankingResult(
        methods=methods,
        metric=metric,
        per_dataset_ranks=per_dataset_ranks,
        average_ranks={m: float(r) for m, r in zip(methods, avg)},
        excluded_datasets=excluded,
    )


@dataclass
class FriedmanResult:
    statistic: float
    critical: float
    significant: bool
    cd: float
    average_ranks: list[float]
    groups: list[tuple[int, ...]]  # index groups not separated by the CD


def nemenyi_cd(n_methods: int, n_datasets: int, alpha: float = 0.05) -> float:
    if alpha not in _NEMENYI_Q:
        raise ConfigError(f"alpha {alpha} not in supported table {{0.05, 0.10}}")
    if not 2 <= n_methods <= len(_NEMENYI_Q[alpha]) + 1:
        raise ConfigError(f"Nemenyi table covers 2..10 methods, got {n_methods}")
    q = _NEMENYI_Q[alpha][n_methods - 2]
    return q * np.sqrt(n_methods * (n_methods + 1) / (6.0 * n_datasets))


def friedman_nemenyi(ranks: np.ndarray, alpha: float = 0.05) -> FriedmanResult:
    """Friedman chi-square over a D x M rank matrix plus the Nemenyi CD.

    Methods whose average ranks differ by less than the CD are joined into
    groups (maximal intervals in rank order, nested ones dropped).
    """
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.ndim != 2:
        raise ValueError("ranks must be a D x M matrix")
    d, m = ranks.shape
    if d < 2 or m < 2:
        raise ValueError("need at least 2 datasets and 2 methods")
    if alpha not in _CHI2_CRIT:
        raise ConfigError(f"alpha {alpha} not in supported table {{0.05, 0.10}}")
    if m - 1 > len(_CHI2_CRIT[alpha]):
        raise ConfigError(f"chi-square table covers up to 10 methods, got {m}")
    avg = ranks.mean(axis=0)
    stat = 12.0 * d / (m * (m + 1)) * float(np.sum((avg - (m + 1) / 2.0) ** 2))
    critical = _CHI2_CRIT[alpha][m - 2]
    cd = nemenyi_cd(m, d, alpha)

    order = np.argsort(avg, kind="stable")
    sorted_ranks = avg[order]
    groups: list[tuple[int, ...]] = []
    for i in range(m):
        j = i
        while j + 1 < m and sorted_ranks[j + 1] - sorted_ranks[i] < cd:
            j += 1
        group = tuple(int(k) for k in order[i : j + 1])
        if groups and set(group) <= set(groups[-1]):
            continue
        groups.append(group)
    return FriedmanResult(
        statistic=float(stat),
        critical=float(critical),
        significant=bool(stat > critical),
        cd=float(cd),
        average_ranks=[float(r) for r in avg],
        groups=groups,
    )
