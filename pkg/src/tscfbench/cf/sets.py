"""Shapelet-guided counterfactuals.

Mining samples random subsequences per channel under a time budget, scores
them by the information gain of their best distance split, estimates a
per-shapelet detection threshold from the train-split distance
distribution, and drops shapelets detected in more than one class.
Generation removes detected original-class shapelets (replacing them with
the NUN's values) and introduces target-class shapelets, rescaled onto the
window they overwrite, until the prediction flips.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from ..classifier import ClassifierModel, predict_batch
from ..dataset import TimeSeries, stack_labels, stack_values
from .base import (
    STATUS_NO_CF,
    STATUS_OK,
    STATUS_TIMED_OUT,
    Budget,
    CFRequest,
    Counterfactual,
    stops,
)
from .nun import nun


@dataclass(frozen=True)
class Shapelet:
    values: np.ndarray  # (L,)
    channel: int
    source_class: int
    quality: float  # information gain of the best distance split
    detect_threshold: float


@dataclass(frozen=True)
class ShapeletSet:
    shapelets: tuple[Shapelet, ...]

    def __len__(self) -> int:
        return len(self.shapelets)

    def by_quality(self) -> list[Shapelet]:
        return sorted(self.shapelets, key=lambda s: -s.quality)


@dataclass(frozen=True)
class SetsConfig:
    tau_quantile: float = 0.05
    per_class: int = 5
    length_fracs: tuple[float, ...] = (0.1, 0.2, 0.3)
    mine_budget: float = 5.0


def _znorm(v: np.ndarray) -> np.ndarray:
    std = v.std()
    if std == 0:
        return np.zeros_like(v)
    return (v - v.mean()) / std


def min_zdist(shapelet: np.ndarray, channel_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min sliding z-normalized distance of a shapelet to each series.

    channel_values is (m, T); returns (distances (m,), argmin starts (m,)).
    Distance is the root mean squared difference of z-normalized windows,
    which keeps thresholds comparable across shapelet lengths.
    """
    m, t = channel_values.shape
    length = len(shapelet)
    zs = _znorm(shapelet)
    win = np.lib.stride_tricks.sliding_window_view(channel_values, length, axis=1)
    mean = win.mean(axis=2, keepdims=True)
    std = win.std(axis=2, keepdims=True)
    std = np.where(std == 0, 1.0, std)
    zw = (win - mean) / std
    d = np.sqrt(((zw - zs) ** 2).mean(axis=2))  # (m, T-L+1)
    return d.min(axis=1), d.argmin(axis=1)


def _entropy(labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def information_gain(distances: np.ndarray, labels: np.ndarray) -> float:
    """Best information gain over all distance-threshold splits."""
    order = np.argsort(distances)
    d, y = distances[order], labels[order]
    base = _entropy(y)
    n = len(y)
    best = 0.0
    for i in range(n - 1):
        if d[i] == d[i + 1]:
            continue
        left, right = y[: i + 1], y[i + 1 :]
        gain = base - (len(left) * _entropy(left) + len(right) * _entropy(right)) / n
        if gain > best:
            best = gain
    return best


def sets_mine(
    train,
    model: ClassifierModel,
    budget: float,
    per_class: int,
    cfg: SetsConfig | None = None,
    seed: int = 0,
) -> ShapeletSet:
    """Mine class-specific shapelets; time is split equally across channels."""
    if budget <= 0:
        raise ValueError("mining budget must be positive")
    cfg = cfg or SetsConfig()
    values = stack_values(train)  # (m, N, T)
    labels = stack_labels(train)
    m, n, t = values.shape
    rng = np.random.default_rng(seed)

    lengths = sorted({max(3, min(t - 1, round(f * t))) for f in cfg.length_fracs})
    candidates: dict[tuple, tuple[Shapelet, np.ndarray]] = {}
    per_channel = budget / n
    for c in range(n):
        deadline = time.perf_counter() + per_channel
        while time.perf_counter() < deadline:
            i = int(rng.integers(m))
            length = int(lengths[rng.integers(len(lengths))])
            s = int(rng.integers(t - length + 1))
            key = (c, i, s, length)
            if key in candidates:
                continue
            seg = values[i, c, s : s + length].copy()
            dists, _ = min_zdist(seg, values[:, c, :])
            gain = information_gain(dists, labels)
            thresh = float(np.quantile(dists, cfg.tau_quantile))
            candidates[key] = (
                Shapelet(seg, c, int(labels[i]), gain, thresh),
                dists,
            )

    # drop shapelets whose detections span more than one class
    survivors: list[Shapelet] = []
    for shapelet, dists in candidates.values():
        detected = labels[dists <= shapelet.detect_threshold]
        if len(np.unique(detected)) <= 1:
            survivors.append(shapelet)

    kept: list[Shapelet] = []
    for cls in np.unique(labels):
        of_class = [s for s in survivors if s.source_class == cls]
        of_class.sort(key=lambda s: -s.quality)
        kept.extend(of_class[:per_class])
    return ShapeletSet(tuple(kept))


def scale_to_window(shapelet: np.ndarray, w_min: float, w_max: float) -> np.ndarray:
    """Affinely map the shapelet's min/max onto the window's min/max.

    Degenerate ranges (constant shapelet or constant window) collapse to a
    translation that puts the shapelet's minimum at the window level.
    """
    s_min, s_max = float(shapelet.min()), float(shapelet.max())
    if s_max > s_min and w_max > w_min:
        return (shapelet - s_min) / (s_max - s_min) * (w_max - w_min) + w_min
    return shapelet - s_min + w_min


def sets(
    request: CFRequest,
    shapelets: ShapeletSet,
    train,
    model: ClassifierModel,
    train_pred: np.ndarray | None = None,
) -> Counterfactual:
    start = time.perf_counter()
    x = request.instance

    def finish(perturbed, valid, status):
        return Counterfactual(
            original=x, perturbed=perturbed, target=request.target, valid=valid,
            gen_time=time.perf_counter() - start, method="sets", status=status,
        )

    if len(shapelets) == 0:
        return finish(None, False, STATUS_NO_CF)
    budget = Budget(request.time_budget)
    neighbor = nun(train, model, x, request.target, train_pred)
    ordered = shapelets.by_quality()

    # positions are anchored on the original instance; edits accumulate
    plans = []
    for sh in ordered:
        dists, starts = min_zdist(sh.values, x.values[sh.channel][None])
        if sh.source_class == request.original_pred:
            if neighbor is not None and dists[0] <= sh.detect_threshold:
                plans.append(("remove", sh, int(starts[0])))
        elif sh.source_class == request.target:
            plans.append(("introduce", sh, int(starts[0])))
    if not plans:
        return finish(None, False, STATUS_NO_CF)

    n = x.channels
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            work = x.values.copy()
            edited = False
            for action, sh, s in plans:
                if sh.channel not in subset:
                    continue
                if budget.exhausted():
                    return finish(None, False, STATUS_TIMED_OUT)
                length = len(sh.values)
                window = work[sh.channel, s : s + length]
                if action == "remove":
                    work[sh.channel, s : s + length] = neighbor.values[
                        sh.channel, s : s + length
                    ]
                else:
                    work[sh.channel, s : s + length] = scale_to_window(
                        sh.values, float(window.min()), float(window.max())
                    )
                edited = True
                probs = predict_batch(model, work[None])[0]
                if stops(probs, request.target, request.stop_prob):
                    return finish(TimeSeries(work), True, STATUS_OK)
            if not edited:
                continue
    return finish(None, False, STATUS_NO_CF)
