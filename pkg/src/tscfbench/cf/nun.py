"""Nearest unlike neighbor search and the NUN-as-counterfactual baseline."""

from __future__ import annotations

import time

import numpy as np

from ..classifier import ClassifierModel, predict_labels
from ..dataset import TimeSeries, stack_values
from .base import STATUS_NO_CF, STATUS_OK, CFRequest, Counterfactual


def nun_index(
    train,
    model: ClassifierModel,
    x: TimeSeries,
    target: int,
    train_pred: np.ndarray | None = None,
) -> int | None:
    """Index of the closest train instance the model predicts as `target`.

    Distance is Euclidean over the flattened series; ties go to the lowest
    index. Candidates are filtered by model prediction, not ground truth,
    so the returned instance is valid by construction. None when no train
    instance is predicted as the target class.
    """
    values = stack_values(train)
    if train_pred is None:
        train_pred = predict_labels(model, values)
    candidates = np.flatnonzero(train_pred == target)
    if candidates.size == 0:
        return None
    diffs = values[candidates] - x.values[None]
    d2 = np.sum(diffs.reshape(len(candidates), -1) ** 2, axis=1)
    return int(candidates[int(np.argmin(d2))])


def nun(
    train,
    model: ClassifierModel,
    x: TimeSeries,
    target: int,
    train_pred: np.ndarray | None = None,
) -> TimeSeries | None:
    idx = nun_index(train, model, x, target, train_pred)
    return None if idx is None else train[idx].series


def nun_cf(
    request: CFRequest,
    train,
    model: ClassifierModel,
    train_pred: np.ndarray | None = None,
) -> Counterfactual:
    """Use the nearest unlike neighbor verbatim as the counterfactual."""
    start = time.perf_counter()
    neighbor = nun(train, model, request.instance, request.target, train_pred)
    elapsed = time.perf_counter() - start
    if neighbor is None:
        return Counterfactual(
            original=request.instance,
            perturbed=None,
            target=request.target,
            valid=False,
            gen_time=elapsed,
            method="nun_cf",
            status=STATUS_NO_CF,
        )
    return Counterfactual(
        original=request.instance,
        perturbed=neighbor,
        target=request.target,
        valid=True,
        gen_time=elapsed,
        method="nun_cf",
        status=STATUS_OK,
    )
