"""Shared request/result contract for all counterfactual generators."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..dataset import TimeSeries

STATUS_OK = "ok"
STATUS_NO_CF = "no_cf_found"
STATUS_TIMED_OUT = "timed_out"
STATUSES = (STATUS_OK, STATUS_NO_CF, STATUS_TIMED_OUT)


class MethodNotApplicable(ValueError):
    """The method cannot run on this input/model combination."""


@dataclass(frozen=True)
class CFRequest:
    """One counterfactual query: flip `instance` from its prediction to `target`."""

    instance: TimeSeries
    original_pred: int
    target: int
    stop_prob: float = 0.5
    time_budget: float = 3600.0

    def __post_init__(self):
        if self.target == self.original_pred:
            raise ValueError("target class must differ from the original prediction")
        if not 0 < self.stop_prob < 1:
            raise ValueError(f"stop_prob must be in (0, 1), got {self.stop_prob}")


@dataclass
class Counterfactual:
    original: TimeSeries
    perturbed: TimeSeries | None
    target: int
    valid: bool
    gen_time: float
    method: str
    status: str = STATUS_OK

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.valid and self.status != STATUS_OK:
            raise ValueError("a valid counterfactual must have status 'ok'")
        if self.perturbed is not None and (
            self.perturbed.values.shape != self.original.values.shape
        ):
            raise ValueError("original and perturbed shapes differ")


@dataclass(frozen=True)
class InvocationRecord:
    """What it takes to replay one generator call bit-exactly."""

    method: str
    config: dict = field(default_factory=dict)
    seed: int | None = None

    def as_dict(self) -> dict:
        return {"method": self.method, "config": self.config, "seed": self.seed}


class Budget:
    """Cooperative wall-clock budget checked inside generator loops."""

    def __init__(self, seconds: float):
        self.start = time.perf_counter()
        self.deadline = self.start + seconds

    def exhausted(self) -> bool:
        return time.perf_counter() >= self.deadline

    def elapsed(self) -> float:
        return time.perf_counter() - self.start


def stops(probs: np.ndarray, target: int, stop_prob: float) -> bool:
    """Early-exit test: the target class wins and clears the stop threshold."""
    return int(probs.argmax()) == target and probs[target] >= stop_prob
