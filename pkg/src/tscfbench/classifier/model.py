"""MLP and FCN classifiers trained from scratch with manual backprop.

The FCN is three conv blocks (128/256/128 filters, widths 8/5/3, each with
batchnorm + ReLU) followed by global average pooling and a dense head,
which is what makes class activation maps available. The MLP is three
500-unit ReLU layers with dropout during training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import Dataset, TimeSeries, stack_labels, stack_values
from .layers import (
    BatchNorm1d,
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool,
    ReLU,
    softmax,
)

ARCHITECTURES = ("mlp", "fcn")

FCN_FILTERS = (128, 256, 128)
FCN_WIDTHS = (8, 5, 3)
MLP_UNITS = (500, 500, 500)
MLP_DROPOUT = (0.1, 0.2, 0.2, 0.3)


class TrainingError(RuntimeError):
    pass


class UnsupportedArchitectureError(ValueError):
    """Raised when an operation needs a capability the model lacks (e.g. CAM)."""


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray  # (C,), sums to 1
    predicted: int


@dataclass(frozen=True)
class LatentRep:
    vector: np.ndarray  # penultimate-layer activations


@dataclass
class TrainConfig:
    epochs: int = 50
    batch: int = 16
    learning_rate: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class LossSpec:
    """Scalar loss whose input gradient `input_gradient` computes.

    loss(x) = lam * (p[target] - target_value)^2 + distance(x, reference)
    where distance is either absent or an L1 norm weighted by 1/mad per
    feature point.
    """

    target: int
    lam: float = 1.0
    target_value: float = 1.0
    distance: str = "none"  # "none" | "l1_mad"
    reference: np.ndarray | None = None
    mad: np.ndarray | None = None


@dataclass
class ClassifierModel:
    arch: str
    layers: list
    num_classes: int
    input_shape: tuple[int, int]  # (channels, steps)
    seed: int
    train_accuracy: float = float("nan")
    test_accuracy: float = float("nan")
    meta: dict = field(default_factory=dict)


def build_layers(arch: str, input_shape: tuple[int, int], num_classes: int,
                 rng: np.random.Generator) -> list:
    n, t = input_shape
    if arch == "fcn":
        layers: list = []
        c_in = n
        for filters, width in zip(FCN_FILTERS, FCN_WIDTHS):
            layers.append(Conv1d.init(rng, c_in, filters, width))
            layers.append(BatchNorm1d.init(filters))
            layers.append(ReLU())
            c_in = filters
        layers.append(GlobalAvgPool())
        layers.append(Dense.init(rng, FCN_FILTERS[-1], num_classes))
        return layers
    if arch == "mlp":
        layers = [Flatten()]
        d_in = n * t
        for units, rate in zip(MLP_UNITS, MLP_DROPOUT[:-1]):
            layers.append(Dropout(rate))
            layers.append(Dense.init(rng, d_in, units))
            layers.append(ReLU())
            d_in = units
        layers.append(Dropout(MLP_DROPOUT[-1]))
        layers.append(Dense.init(rng, d_in, num_classes))
        return layers
    raise UnsupportedArchitectureError(f"unknown architecture {arch!r}")


def _forward(model: ClassifierModel, xb: np.ndarray, train: bool = False,
             rng: np.random.Generator | None = None):
    caches = []
    out = xb
    for layer in model.layers:
        out, cache = layer.forward(out, train=train, rng=rng)
        caches.append(cache)
    return out, caches


def _backward_input(model: ClassifierModel, dlogits: np.ndarray, caches) -> np.ndarray:
    dout = dlogits
    for layer, cache in zip(reversed(model.layers), reversed(caches)):
        dout, _ = layer.backward(dout, cache)
    return dout


def logits_batch(model: ClassifierModel, values: np.ndarray) -> np.ndarray:
    out, _ = _forward(model, np.asarray(values, dtype=np.float64))
    return out


def predict_batch(model: ClassifierModel, values: np.ndarray) -> np.ndarray:
    """Softmax probabilities for a stacked (m, N, T) array."""
    return softmax(logits_batch(model, values))


def predict_labels(model: ClassifierModel, values: np.ndarray) -> np.ndarray:
    return predict_batch(model, values).argmax(axis=1)


def _check_shape(model: ClassifierModel, x: TimeSeries) -> None:
    if x.values.shape != model.input_shape:
        raise ValueError(
            f"input shape {x.values.shape} does not match model "
            f"input_shape {model.input_shape}"
        )


def predict(model: ClassifierModel, x: TimeSeries) -> Prediction:
    _check_shape(model, x)
    probs = predict_batch(model, x.values[None])[0]
    return Prediction(probs=probs, predicted=int(probs.argmax()))


def latent(model: ClassifierModel, x: TimeSeries) -> LatentRep:
    """Penultimate activations: post-GAP vector (FCN) or last hidden layer (MLP)."""
    _check_shape(model, x)
    return LatentRep(vector=latent_batch(model, x.values[None])[0])


def latent_batch(model: ClassifierModel, values: np.ndarray) -> np.ndarray:
    out = np.asarray(values, dtype=np.float64)
    for layer in model.layers[:-1]:
        out, _ = layer.forward(out, train=False)
    return out


def class_activation_map(model: ClassifierModel, x: TimeSeries, cls: int) -> np.ndarray:
    """CAM(t) = sum_k w[cls, k] * A_k(t) over the final conv feature maps."""
    if model.arch != "fcn":
        raise UnsupportedArchitectureError(
            "class activation maps need a conv network with a GAP + dense head"
        )
    _check_shape(model, x)
    out = x.values[None]
    for layer in model.layers[:-2]:  # stop before GAP
        out, _ = layer.forward(out, train=False)
    feature_maps = out[0]  # (filters, T)
    head = model.layers[-1].w  # (filters, C)
    return head[:, cls] @ feature_maps


def input_gradient(model: ClassifierModel, x: TimeSeries, spec: LossSpec) -> np.ndarray:
    """Exact gradient of the LossSpec scalar with respect to the input."""
    _check_shape(model, x)
    logits, caches = _forward(model, x.values[None])
    probs = softmax(logits)[0]
    p_t = probs[spec.target]
    # d loss / d p_target, then through softmax: dp_t/dz_j = p_t (1[j=t] - p_j)
    g = 2.0 * spec.lam * (p_t - spec.target_value)
    dlogits = g * p_t * (np.eye(len(probs))[spec.target] - probs)
    dx = _backward_input(model, dlogits[None], caches)[0]
    if spec.distance == "l1_mad":
        dx = dx + np.sign(x.values - spec.reference) / spec.mad
    elif spec.distance != "none":
        raise ValueError(f"unknown distance term {spec.distance!r}")
    return dx


# ---------------------------------------------------------------------------
# training


class _Adam:
    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[:] = b1 * m + (1 - b1) * g
            v[:] = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _accuracy(model: ClassifierModel, values: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float("nan")
    return float((predict_labels(model, values) == labels).mean())


def train(arch: str, data: Dataset, hyper: TrainConfig | None = None) -> ClassifierModel:
    """Train a classifier from scratch; deterministic for a fixed seed."""
    hyper = hyper or TrainConfig()
    if arch not in ARCHITECTURES:
        raise UnsupportedArchitectureError(f"unknown architecture {arch!r}")
    if not data.train:
        raise TrainingError("training split is empty")
    if data.num_classes < 2:
        raise TrainingError("need at least 2 classes to train a classifier")

    x_train = stack_values(data.train)
    y_train = stack_labels(data.train)
    rng = np.random.default_rng(hyper.seed)
    model = ClassifierModel(
        arch=arch,
        layers=build_layers(arch, (data.channels, data.steps), data.num_classes, rng),
        num_classes=data.num_classes,
        input_shape=(data.channels, data.steps),
        seed=hyper.seed,
    )

    params, grads_order = [], []
    for i, layer in enumerate(model.layers):
        for name, p in layer.params().items():
            params.append(p)
            grads_order.append((i, name))
    opt = _Adam(params, hyper.learning_rate)

    m = len(y_train)
    onehot = np.eye(data.num_classes)[y_train]
    for _ in range(hyper.epochs):
        order = rng.permutation(m)
        for start in range(0, m, hyper.batch):
            idx = order[start : start + hyper.batch]
            xb, yb = x_train[idx], onehot[idx]
            logits, caches = _forward(model, xb, train=True, rng=rng)
            probs = softmax(logits)
            loss = -np.mean(np.sum(yb * np.log(probs + 1e-12), axis=1))
            if not np.isfinite(loss):
                raise TrainingError(
                    "loss diverged to non-finite values; try a lower learning rate"
                )
            dlogits = (probs - yb) / len(idx)
            dout = dlogits
            layer_grads: dict[tuple[int, str], np.ndarray] = {}
            for li in range(len(model.layers) - 1, -1, -1):
                dout, g = model.layers[li].backward(dout, caches[li])
                for name, val in g.items():
                    layer_grads[(li, name)] = val
            opt.step([layer_grads[key] for key in grads_order])

    model.train_accuracy = _accuracy(model, x_train, y_train)
    if data.test:
        model.test_accuracy = _accuracy(model, stack_values(data.test), stack_labels(data.test))
    model.meta = {
        "epochs": hyper.epochs,
        "batch": hyper.batch,
        "learning_rate": hyper.learning_rate,
    }
    return model
