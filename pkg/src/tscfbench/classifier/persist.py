"""Model container files: a versioned .npz holding weights and metadata."""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .layers import LAYER_KINDS
from .model import ClassifierModel

FORMAT = "tscfbench-model"
VERSION = 1


class ModelIOError(RuntimeError):
    pass


def save_model(model: ClassifierModel, path: str | Path) -> None:
    layer_meta = []
    arrays: dict[str, np.ndarray] = {}
    for i, layer in enumerate(model.layers):
        entry = {"kind": layer.kind, "config": layer.config()}
        for name, p in layer.params().items():
            arrays[f"p{i}_{name}"] = p
        if layer.kind == "batchnorm":
            arrays[f"p{i}_running_mean"] = layer.running_mean
            arrays[f"p{i}_running_var"] = layer.running_var
        layer_meta.append(entry)
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "arch": model.arch,
        "num_classes": model.num_classes,
        "input_shape": list(model.input_shape),
        "seed": model.seed,
        "train_accuracy": model.train_accuracy,
        "test_accuracy": model.test_accuracy,
        "meta": model.meta,
        "layers": layer_meta,
    }
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8
    )
    # write atomically enough for tests: savez then rename is overkill here
    np.savez(path, **arrays)


def _rebuild_layer(i: int, entry: dict, arrays) -> object:
    kind = entry["kind"]
    if kind not in LAYER_KINDS:
        raise ModelIOError(f"unknown layer kind {kind!r}")
    cls = LAYER_KINDS[kind]
    cfg = entry.get("config", {})
    if kind == "dense":
        return cls(arrays[f"p{i}_w"], arrays[f"p{i}_b"])
    if kind == "conv1d":
        return cls(arrays[f"p{i}_w"], arrays[f"p{i}_b"])
    if kind == "batchnorm":
        return cls(
            arrays[f"p{i}_gamma"],
            arrays[f"p{i}_beta"],
            arrays[f"p{i}_running_mean"],
            arrays[f"p{i}_running_var"],
            momentum=cfg["momentum"],
            eps=cfg["eps"],
        )
    if kind == "dropout":
        return cls(cfg["rate"])
    return cls()


def load_model(path: str | Path) -> ClassifierModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        with np.load(path) as blob:
            arrays = {k: blob[k].copy() for k in blob.files}
    except (zipfile.BadZipFile, OSError, ValueError, EOFError) as exc:
        raise ModelIOError(f"{path}: corrupt model file ({exc})") from None
    if "__meta__" not in arrays:
        raise ModelIOError(f"{path}: corrupt model file (missing metadata)")
    try:
        meta = json.loads(bytes(arrays.pop("__meta__")).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelIOError(f"{path}: corrupt model file ({exc})") from None
    if meta.get("format") != FORMAT:
        raise ModelIOError(f"{path}: not a {FORMAT} file")
    if meta.get("version") != VERSION:
        raise ModelIOError(
            f"{path}: unsupported container version {meta.get('version')}"
        )
    try:
        layers = [
            _rebuild_layer(i, entry, arrays) for i, entry in enumerate(meta["layers"])
        ]
    except KeyError as exc:
        raise ModelIOError(f"{path}: corrupt model file (missing {exc})") from None
    return ClassifierModel(
        arch=meta["arch"],
        layers=layers,
        num_classes=meta["num_classes"],
        input_shape=tuple(meta["input_shape"]),
        seed=meta["seed"],
        train_accuracy=meta["train_accuracy"],
        test_accuracy=meta["test_accuracy"],
        meta=meta.get("meta", {}),
    )
