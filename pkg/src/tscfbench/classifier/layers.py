"""Network layers with explicit forward/backward passes.

Layers are plain parameter holders; `forward` returns (output, cache) and
`backward(dout, cache)` returns (dinput, param_grads). Keeping caches out
of the layer objects makes trained models immutable and safe to share
across threads.
"""

from __future__ import annotations

import numpy as np


class Dense:
    kind = "dense"

    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = w  # (in, out)
        self.b = b  # (out,)

    @classmethod
    def init(cls, rng: np.random.Generator, n_in: int, n_out: int) -> "Dense":
        limit = np.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, size=(n_in, n_out))
        return cls(w, np.zeros(n_out))

    def config(self) -> dict:
        return {}

    def params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}

    def forward(self, x, train=False, rng=None):
        return x @ self.w + self.b, (x,)

    def backward(self, dout, cache):
        (x,) = cache
        grads = {"w": x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.w.T, grads


class Conv1d:
    """Stride-1 convolution with same padding, so time length is preserved."""

    kind = "conv1d"

    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = w  # (filters, in_channels, width)
        self.b = b  # (filters,)

    @classmethod
    def init(cls, rng: np.random.Generator, c_in: int, c_out: int, width: int) -> "Conv1d":
        fan_in = c_in * width
        fan_out = c_out * width
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(c_out, c_in, width))
        return cls(w, np.zeros(c_out))

    def config(self) -> dict:
        return {}

    def params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}

    def _im2col(self, x):
        # x: (B, C, T) -> columns (B*T, C*K)
        f, c, k = self.w.shape
        left = (k - 1) // 2
        xp = np.pad(x, ((0, 0), (0, 0), (left, k - 1 - left)))
        win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)  # (B, C, T, K)
        col = win.transpose(0, 2, 1, 3).reshape(x.shape[0] * x.shape[2], c * k)
        return col

    def forward(self, x, train=False, rng=None):
        b_sz, _, t = x.shape
        f, c, k = self.w.shape
        col = self._im2col(x)
        out = col @ self.w.reshape(f, c * k).T + self.b
        out = out.reshape(b_sz, t, f).transpose(0, 2, 1)
        return out, (x.shape, col)

    def backward(self, dout, cache):
        x_shape, col = cache
        b_sz, c_in, t = x_shape
        f, c, k = self.w.shape
        dcol_out = dout.transpose(0, 2, 1).reshape(b_sz * t, f)
        grads = {
            "w": (dcol_out.T @ col).reshape(f, c, k),
            "b": dcol_out.sum(axis=0),
        }
        dcol = (dcol_out @ self.w.reshape(f, c * k)).reshape(b_sz, t, c, k)
        dcol = dcol.transpose(0, 2, 1, 3)  # (B, C, T, K)
        left = (k - 1) // 2
        dxp = np.zeros((b_sz, c_in, t + k - 1))
        for j in range(k):
            dxp[:, :, j : j + t] += dcol[:, :, :, j]
        return dxp[:, :, left : left + t], grads


class BatchNorm1d:
    """Per-channel normalization over batch and time for (B, C, T) inputs."""

    kind = "batchnorm"

    def __init__(self, gamma, beta, running_mean, running_var, momentum=0.9, eps=1e-5):
        self.gamma = gamma
        self.beta = beta
        self.running_mean = running_mean
        self.running_var = running_var
        self.momentum = momentum
        self.eps = eps

    @classmethod
    def init(cls, channels: int, momentum: float = 0.9) -> "BatchNorm1d":
        return cls(
            np.ones(channels),
            np.zeros(channels),
            np.zeros(channels),
            np.ones(channels),
            momentum=momentum,
        )

    def config(self) -> dict:
        return {"momentum": self.momentum, "eps": self.eps}

    def params(self) -> dict[str, np.ndarray]:
        return {"gamma": self.gamma, "beta": self.beta}

    def forward(self, x, train=False, rng=None):
        if train:
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            # running statistics are updated in place: training owns the model
            self.running_mean[:] = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var[:] = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
        out = self.gamma[None, :, None] * xhat + self.beta[None, :, None]
        return out, (train, xhat, inv_std, x.shape)

    def backward(self, dout, cache):
        train, xhat, inv_std, x_shape = cache
        grads = {
            "gamma": (dout * xhat).sum(axis=(0, 2)),
            "beta": dout.sum(axis=(0, 2)),
        }
        dxhat = dout * self.gamma[None, :, None]
        if not train:
            # inference: normalization is a fixed affine map
            return dxhat * inv_std[None, :, None], grads
        m = x_shape[0] * x_shape[2]
        sum_dxhat = dxhat.sum(axis=(0, 2), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        dx = (inv_std[None, :, None] / m) * (
            m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat
        )
        return dx, grads


class ReLU:
    kind = "relu"

    def config(self) -> dict:
        return {}

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x, train=False, rng=None):
        mask = x > 0
        return x * mask, (mask,)

    def backward(self, dout, cache):
        (mask,) = cache
        return dout * mask, {}


class Dropout:
    kind = "dropout"

    def __init__(self, rate: float):
        self.rate = rate

    def config(self) -> dict:
        return {"rate": self.rate}

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            return x, (None,)
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) < keep) / keep
        return x * mask, (mask,)

    def backward(self, dout, cache):
        (mask,) = cache
        return dout if mask is None else dout * mask, {}


class GlobalAvgPool:
    """(B, C, T) -> (B, C) average over time."""

    kind = "gap"

    def config(self) -> dict:
        return {}

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x, train=False, rng=None):
        return x.mean(axis=2), (x.shape[2],)

    def backward(self, dout, cache):
        (t,) = cache
        return np.repeat(dout[:, :, None], t, axis=2) / t, {}


class Flatten:
    """(B, N, T) -> (B, N*T)."""

    kind = "flatten"

    def config(self) -> dict:
        return {}

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x, train=False, rng=None):
        return x.reshape(x.shape[0], -1), (x.shape,)

    def backward(self, dout, cache):
        (shape,) = cache
        return dout.reshape(shape), {}


LAYER_KINDS = {
    cls.kind: cls
    for cls in (Dense, Conv1d, BatchNorm1d, ReLU, Dropout, GlobalAvgPool, Flatten)
}


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
