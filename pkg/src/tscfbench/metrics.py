"""Evaluation metrics for counterfactuals.

Covers proximity norms, plain and threshold-based sparsity, sensitivity to
sub-threshold changes, segment counts with gap tolerance, latent-space
plausibility ratios, and cross-model consistency. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassifierModel, latent_batch, predict_batch, predict_labels
from .dataset import TimeSeries


@dataclass(frozen=True)
class SparsityConfig:
    """Threshold fraction for perceptible changes and segment gap tolerance.

    `tau` scales the per-channel value range into a change threshold;
    `tolerance_frac` is the fraction of the series length below which a gap
    between changed runs still counts as one segment. `per_channel_range`
    switches to a single global range when False.
    """

    tau: float = 0.0025
    tolerance_frac: float = 0.01
    per_channel_range: bool = True

    def __post_init__(self):
        if not 0 <= self.tau < 1:
            raise ValueError(f"tau must be in [0, 1), got {self.tau}")
        if not 0 <= self.tolerance_frac < 1:
            raise ValueError(
                f"tolerance_frac must be in [0, 1), got {self.tolerance_frac}"
            )


@dataclass(frozen=True)
class PlausibilityConfig:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass
class MetricReport:
    """Per-instance metric values; None marks a metric that does not apply."""

    valid: bool
    l1: float | None = None
    l2: float | None = None
    linf: float | None = None
    l0: float | None = None
    thresh_l0: float | None = None
    thresh_l0_count: int | None = None
    sens: int | None = None
    num_seg: int | None = None
    dist_all: float | None = None
    dist_class: float | None = None
    gen_time: float | None = None

    def as_dict(self) -> dict:
        return {
            "valid": self.valid,
            "l1": self.l1,
            "l2": self.l2,
            "linf": self.linf,
            "l0": self.l0,
            "thresh_l0": self.thresh_l0,
            "thresh_l0_count": self.thresh_l0_count,
            "sens": self.sens,
            "num_seg": self.num_seg,
            "dist_all": self.dist_all,
            "dist_class": self.dist_class,
            "gen_time": self.gen_time,
        }


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, TimeSeries) else np.asarray(x, dtype=np.float64)


def _pair(x, xc) -> tuple[np.ndarray, np.ndarray]:
    a, b = _values(x), _values(xc)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def proximity(x, xc) -> tuple[float, float, float]:
    """(L1, L2, Linf) norms of the flattened difference."""
    a, b = _pair(x, xc)
    d = (a - b).ravel()
    return float(np.abs(d).sum()), float(np.sqrt((d * d).sum())), float(np.abs(d).max())


def sparsity_l0(x, xc) -> float:
    """Fraction of feature points that changed at all (exact inequality)."""
    a, b = _pair(x, xc)
    return float((a != b).mean())


def supra_threshold_mask(x, xc, cfg: SparsityConfig) -> np.ndarray:
    """Boolean (N, T) mask of changes at or above tau * range.

    The range is per channel of the original instance (or global when
    configured). A zero range degenerates to counting any nonzero change.
    """
    a, b = _pair(x, xc)
    delta = np.abs(a - b)
    if cfg.per_channel_range:
        rng = a.max(axis=1) - a.min(axis=1)  # (N,)
    else:
        rng = np.full(a.shape[0], a.max() - a.min())
    theta = cfg.tau * rng
    mask = np.empty(a.shape, dtype=bool)
    for c in range(a.shape[0]):
        if theta[c] > 0:
            mask[c] = delta[c] >= theta[c]
        else:
            mask[c] = delta[c] > 0
    return mask


def thresh_l0(x, xc, cfg: SparsityConfig | None = None) -> float:
    """Fraction of feature points changed perceptibly (>= tau * range)."""
    cfg = cfg or SparsityConfig()
    return float(supra_threshold_mask(x, xc, cfg).mean())


def thresh_l0_count(x, xc, cfg: SparsityConfig | None = None) -> int:
    cfg = cfg or SparsityConfig()
    return int(supra_threshold_mask(x, xc, cfg).sum())


def sensitivity(x, xc, model: ClassifierModel, cfg: SparsityConfig | None = None) -> int:
    """1 when stripping sub-threshold changes flips the CF's prediction.

    Builds x' keeping the CF's values only where the change is perceptible
    and compares argmax predictions of x' and the CF. Callers must pass a
    valid CF; the metric is meaningless otherwise.
    """
    cfg = cfg or SparsityConfig()
    a, b = _pair(x, xc)
    mask = supra_threshold_mask(a, b, cfg)
    x_prime = np.where(mask, b, a)
    preds = predict_labels(model, np.stack([x_prime, b]))
    return int(preds[0] != preds[1])


def _segment_count(marks: np.ndarray, tol_steps: int) -> int:
    idx = np.flatnonzero(marks)
    if idx.size == 0:
        return 0
    gaps = np.diff(idx) - 1
    return 1 + int((gaps > tol_steps).sum())


def gap_tolerance_steps(steps: int, tolerance_frac: float) -> int:
    """Tolerance in steps; at least 1 whenever a nonzero fraction is set."""
    if tolerance_frac == 0:
        return 0
    return max(1, math.ceil(tolerance_frac * steps))


def num_segments(x, xc, cfg: SparsityConfig | None = None) -> int:
    """Number of perceptibly-changed runs, merging sub-tolerance gaps.

    Computed per channel and summed: each channel renders as its own curve,
    so its segments count separately.
    """
    cfg = cfg or SparsityConfig()
    a, b = _pair(x, xc)
    mask = supra_threshold_mask(a, b, cfg)
    tol = gap_tolerance_steps(a.shape[1], cfg.tolerance_frac)
    return sum(_segment_count(mask[c], tol) for c in range(a.shape[0]))


# ---------------------------------------------------------------------------
# plausibility (latent-space neighbor distances)


def dist_nbr(
    reps: np.ndarray,
    query: np.ndarray,
    k: int,
    exclude_index: int | None = None,
) -> float:
    """Mean squared Euclidean distance to the k nearest representations.

    `exclude_index` drops one row (used when the query is itself a member
    of `reps`). Fewer than k rows available means all of them are used.
    """
    reps = np.asarray(reps, dtype=np.float64)
    if exclude_index is not None:
        reps = np.delete(reps, exclude_index, axis=0)
    if len(reps) == 0:
        raise ValueError("no representations to compare against")
    d2 = np.sum((reps - np.asarray(query, dtype=np.float64)) ** 2, axis=1)
    kk = min(k, len(d2))
    nearest = np.partition(d2, kk - 1)[:kk]
    return float(nearest.mean())


def _denominator(reps: np.ndarray, k: int) -> float:
    if len(reps) < 2:
        return 0.0
    return float(
        np.mean([dist_nbr(reps, reps[i], k, exclude_index=i) for i in range(len(reps))])
    )


def dist_all(
    train_reps: np.ndarray, query: np.ndarray, cfg: PlausibilityConfig | None = None
) -> float:
    """Neighbor distance of the query over the training-set average.

    1.0 reads as "as in-distribution as a typical training point"; the
    training-side distances exclude each point itself. A degenerate
    denominator (all representations identical) yields +inf.
    """
    cfg = cfg or PlausibilityConfig()
    denom = _denominator(np.asarray(train_reps), cfg.k)
    if denom == 0.0:
        return math.inf
    return dist_nbr(train_reps, query, cfg.k) / denom


def dist_class(
    train_reps: np.ndarray,
    pred_labels: np.ndarray,
    query: np.ndarray,
    target: int,
    cfg: PlausibilityConfig | None = None,
) -> float:
    """dist_all restricted to training points the model predicts as `target`."""
    cfg = cfg or PlausibilityConfig()
    reps = np.asarray(train_reps)[np.asarray(pred_labels) == target]
    if len(reps) == 0:
        raise ValueError(f"no training representations predicted as class {target}")
    denom = _denominator(reps, cfg.k)
    if denom == 0.0:
        return math.inf
    return dist_nbr(reps, query, cfg.k) / denom


class PlausibilityIndex:
    """Precomputed latent representations and denominators for one model.

    Denominators are the expensive part (one self-excluded kNN query per
    training point); computing them once lets per-CF queries stay cheap.
    """

    def __init__(self, model: ClassifierModel, train_values: np.ndarray,
                 cfg: PlausibilityConfig | None = None):
        self.cfg = cfg or PlausibilityConfig()
        self.model = model
        self.reps = latent_batch(model, train_values)
        self.pred_labels = predict_labels(model, train_values)
        self._denom_all = _denominator(self.reps, self.cfg.k)
        self._denom_class: dict[int, float] = {}

    def dist_all(self, query: np.ndarray) -> float:
        if self._denom_all == 0.0:
            return math.inf
        return dist_nbr(self.reps, query, self.cfg.k) / self._denom_all

    def dist_class(self, query: np.ndarray, target: int) -> float:
        reps = self.reps[self.pred_labels == target]
        if len(reps) == 0:
            raise ValueError(f"no training representations predicted as class {target}")
        if target not in self._denom_class:
            self._denom_class[target] = _denominator(reps, self.cfg.k)
        denom = self._denom_class[target]
        if denom == 0.0:
            return math.inf
        return dist_nbr(reps, query, self.cfg.k) / denom


# ---------------------------------------------------------------------------
# consistency across models


@dataclass(frozen=True)
class ConsistencyResult:
    eligible: int
    valid: int
    consistent: int
    consist_bc: float | None
    consist_bv: float | None


def consistency(
    cfs: list,
    model_a: ClassifierModel,
    model_b: ClassifierModel,
    test: list,
) -> ConsistencyResult:
    """Fraction of model-A counterfactuals that stay valid under model B.

    Only instances correctly predicted by both models are eligible.
    consistBC divides by all eligible instances, consistBV by the eligible
    CFs that were valid under model A; both are None when their denominator
    is zero.
    """
    if len(cfs) != len(test):
        raise ValueError("counterfactual list must align with the test instances")
    values = np.stack([inst.series.values for inst in test])
    labels = np.array([inst.label for inst in test])
    correct_a = predict_labels(model_a, values) == labels
    correct_b = predict_labels(model_b, values) == labels
    eligible_idx = np.flatnonzero(correct_a & correct_b)

    valid = consistent = 0
    for i in eligible_idx:
        cf = cfs[i]
        if cf is None or cf.perturbed is None:
            continue
        pv = cf.perturbed.values[None]
        if int(predict_labels(model_a, pv)[0]) != cf.target:
            continue
        valid += 1
        if int(predict_labels(model_b, pv)[0]) == cf.target:
            consistent += 1
    eligible = int(len(eligible_idx))
    return ConsistencyResult(
        eligible=eligible,
        valid=valid,
        consistent=consistent,
        consist_bc=(consistent / eligible) if eligible else None,
        consist_bv=(consistent / valid) if valid else None,
    )


# ---------------------------------------------------------------------------
# full per-instance evaluation


def evaluate_counterfactual(
    x: TimeSeries,
    cf,
    model: ClassifierModel,
    plaus: PlausibilityIndex | None = None,
    sparsity: SparsityConfig | None = None,
) -> MetricReport:
    """Assemble a MetricReport, re-verifying validity against the model.

    Validity is always recomputed from the stored perturbed series; the
    generating method's own flag is never trusted. Metrics that only make
    sense for valid CFs stay None otherwise.
    """
    sparsity = sparsity or SparsityConfig()
    gen_time = getattr(cf, "gen_time", None) if cf is not None else None
    if cf is None or cf.perturbed is None:
        return MetricReport(valid=False, gen_time=gen_time)
    pv = cf.perturbed.values
    valid = int(predict_labels(model, pv[None])[0]) == cf.target
    report = MetricReport(valid=valid, gen_time=gen_time)
    if not valid:
        return report
    report.l1, report.l2, report.linf = proximity(x, cf.perturbed)
    report.l0 = sparsity_l0(x, cf.perturbed)
    report.thresh_l0 = thresh_l0(x, cf.perturbed, sparsity)
    report.thresh_l0_count = thresh_l0_count(x, cf.perturbed, sparsity)
    report.sens = sensitivity(x, cf.perturbed, model, sparsity)
    report.num_seg = num_segments(x, cf.perturbed, sparsity)
    if plaus is not None:
        query = latent_batch(model, pv[None])[0]
        report.dist_all = plaus.dist_all(query)
        report.dist_class = plaus.dist_class(query, cf.target)
    return report
