"""Time-series classification datasets: loading, validation, sampling.

Univariate files follow the UCR archive convention (label in the first
column, one instance per row, tab or comma separated). Multivariate data
uses a small manifest + flat-file format described in `load_multivariate`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    """Structurally malformed input file (ragged rows, bad manifest, ...)."""


class DataError(ValueError):
    """Well-formed file with unusable content (non-finite values, empty)."""


class StratifiedSampleWarning(UserWarning):
    """Requested sample size exceeds the population; all indices returned."""


@dataclass(frozen=True)
class TimeSeries:
    """An N-channel, T-step real-valued series. Values are read-only."""

    values: np.ndarray  # shape (channels, steps), float64

    def __post_init__(self):
        # copy so freezing never flips writeable on a caller's buffer
        v = np.array(self.values, dtype=np.float64, order="C")
        if v.ndim == 1:
            v = v.reshape(1, -1)
        if v.ndim != 2:
            raise ValueError(f"series must be 2-d (channels x steps), got shape {v.shape}")
        n, t = v.shape
        if n < 1 or t < 2:
            raise ValueError(f"series needs >=1 channel and >=2 steps, got {n}x{t}")
        if not np.isfinite(v).all():
            raise DataError("series contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def steps(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabeledInstance:
    series: TimeSeries
    label: int


@dataclass(frozen=True)
class Dataset:
    """A train/test split of same-shape instances with contiguous labels."""

    train: tuple[LabeledInstance, ...]
    test: tuple[LabeledInstance, ...]
    num_classes: int
    name: str = ""
    # original label -> contiguous index, as recorded by the loaders
    label_mapping: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))
        shapes = {inst.series.values.shape for inst in self.train + self.test}
        if len(shapes) > 1:
            raise DataError(f"instances disagree on shape: {sorted(shapes)}")
        for inst in self.train + self.test:
            if not 0 <= inst.label < self.num_classes:
                raise DataError(
                    f"label {inst.label} outside [0, {self.num_classes})"
                )

    @property
    def channels(self) -> int:
        return self._any_instance().series.channels

    @property
    def steps(self) -> int:
        return self._any_instance().series.steps

    def _any_instance(self) -> LabeledInstance:
        if self.train:
            return self.train[0]
        if self.test:
            return self.test[0]
        raise DataError("dataset is empty")

    def class_counts(self, split: str = "train") -> np.ndarray:
        """Per-class instance counts m_c for the given split."""
        insts = self.train if split == "train" else self.test
        counts = np.zeros(self.num_classes, dtype=np.int64)
        for inst in insts:
            counts[inst.label] += 1
        return counts


def stack_values(instances) -> np.ndarray:
    """Stack instance series into one (m, N, T) array."""
    return np.stack([inst.series.values for inst in instances])


def stack_labels(instances) -> np.ndarray:
    return np.array([inst.label for inst in instances], dtype=np.int64)


def instance_range(x: TimeSeries) -> np.ndarray:
    """Per-channel value range max - min; zero for constant channels."""
    v = x.values
    return v.max(axis=1) - v.min(axis=1)


# ---------------------------------------------------------------------------
# loading


def _sniff_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def _parse_rows(path: Path) -> list[list[float]]:
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    delim = _sniff_delimiter(lines[0])
    rows = []
    width = None
    for i, ln in enumerate(lines):
        try:
            row = [float(tok) for tok in ln.strip().split(delim)]
        except ValueError as exc:
            raise FormatError(f"{path}: row {i}: {exc}") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise FormatError(
                f"{path}: row {i} has {len(row)} columns, expected {width}"
            )
        rows.append(row)
    if width is not None and width < 3:
        raise FormatError(
            f"{path}: rows need a label plus >=2 values, got {width} columns"
        )
    return rows


def _format_label(raw: float) -> str:
    # UCR labels are small integers or occasionally reals; keep a stable key
    return str(int(raw)) if float(raw).is_integer() else repr(raw)


def _remap_labels(raw_labels: list[float]) -> dict[str, int]:
    keys = sorted({_format_label(v) for v in raw_labels}, key=float)
    return {k: i for i, k in enumerate(keys)}


def _znormalize(splits: list[list[np.ndarray]]) -> None:
    """Z-normalize all splits in place using train-split channel statistics."""
    train = splits[0]
    stacked = np.stack(train)  # (m, N, T)
    mean = stacked.mean(axis=(0, 2), keepdims=True)[0]
    std = stacked.std(axis=(0, 2), keepdims=True)[0]
    std[std == 0] = 1.0
    for split in splits:
        for i, v in enumerate(split):
            split[i] = (v - mean) / std


def load_univariate_tsv(
    path: str | Path,
    test_path: str | Path | None = None,
    name: str | None = None,
    normalize: bool = False,
) -> Dataset:
    """Load a UCR-style delimited file (label first, values after).

    `path` becomes the train split; `test_path`, when given, the test
    split. Labels from both splits are remapped to contiguous [0, C)
    preserving sorted original order; the mapping is kept on the Dataset.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    split_rows = [_parse_rows(path)]
    if test_path is not None:
        split_rows.append(_parse_rows(Path(test_path)))

    raw_labels: list[float] = []
    for rows in split_rows:
        raw_labels.extend(r[0] for r in rows)
    mapping = _remap_labels(raw_labels)

    split_values = [
        [np.array(r[1:], dtype=np.float64).reshape(1, -1) for r in rows]
        for rows in split_rows
    ]
    widths = {v.shape[1] for vs in split_values for v in vs}
    if len(widths) > 1:
        raise FormatError(f"{path}: splits disagree on series length: {sorted(widths)}")
    if normalize:
        _znormalize(split_values)

    splits = []
    for rows, values in zip(split_rows, split_values):
        splits.append(
            tuple(
                LabeledInstance(TimeSeries(v), mapping[_format_label(r[0])])
                for r, v in zip(rows, values)
            )
        )
    if test_path is None:
        splits.append(())
    return Dataset(
        train=splits[0],
        test=splits[1],
        num_classes=len(mapping),
        name=name or path.stem,
        label_mapping=mapping,
    )


def _parse_manifest(path: Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for i, ln in enumerate(path.read_text().splitlines()):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if "=" not in ln:
            raise FormatError(f"{path}: line {i}: expected key=value, got {ln!r}")
        key, val = ln.split("=", 1)
        entries[key.strip()] = val.strip()
    for key in ("channels", "steps", "classes", "train"):
        if key not in entries:
            raise FormatError(f"{path}: manifest missing required key {key!r}")
    return entries


def _parse_flat_split(
    path: Path, channels: int, steps: int
) -> tuple[list[np.ndarray], list[float]]:
    """Each instance: `channels` rows of `steps` values, then one label row."""
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    block = channels + 1
    if len(lines) % block != 0:
        raise FormatError(
            f"{path}: {len(lines)} rows is not a multiple of "
            f"{block} (={channels} channel rows + 1 label row)"
        )
    delim = _sniff_delimiter(lines[0])
    values, labels = [], []
    for b in range(len(lines) // block):
        chunk = lines[b * block : (b + 1) * block]
        mat = np.empty((channels, steps), dtype=np.float64)
        for c in range(channels):
            try:
                row = [float(tok) for tok in chunk[c].strip().split(delim)]
            except ValueError as exc:
                raise FormatError(f"{path}: instance {b} channel {c}: {exc}") from None
            if len(row) != steps:
                raise FormatError(
                    f"{path}: instance {b}: channel row has {len(row)} values, "
                    f"expected {steps}"
                )
            mat[c] = row
        label_row = chunk[channels].strip().split(delim)
        if len(label_row) != 1:
            raise FormatError(
                f"{path}: instance {b}: label row has {len(label_row)} fields, expected 1"
            )
        values.append(mat)
        labels.append(float(label_row[0]))
    return values, labels


def load_multivariate(path: str | Path, normalize: bool = False) -> Dataset:
    """Load a multivariate dataset described by a manifest file.

    The manifest is key=value text with keys: name, channels, steps,
    classes, train, and optionally test. `train`/`test` name flat files
    (relative to the manifest) where each instance occupies `channels`
    consecutive rows of `steps` values followed by one label row.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    manifest = _parse_manifest(path)
    channels = int(manifest["channels"])
    steps = int(manifest["steps"])
    classes = int(manifest["classes"])

    split_names = ["train"] + (["test"] if "test" in manifest else [])
    split_values, split_labels = [], []
    for split in split_names:
        vals, labs = _parse_flat_split(path.parent / manifest[split], channels, steps)
        split_values.append(vals)
        split_labels.append(labs)

    mapping = _remap_labels([lab for labs in split_labels for lab in labs])
    if len(mapping) > classes:
        raise FormatError(
            f"{path}: manifest declares {classes} classes but data has {len(mapping)}"
        )
    if normalize:
        _znormalize(split_values)

    splits = []
    for vals, labs in zip(split_values, split_labels):
        splits.append(
            tuple(
                LabeledInstance(TimeSeries(v), mapping[_format_label(lab)])
                for v, lab in zip(vals, labs)
            )
        )
    if "test" not in manifest:
        splits.append(())
    return Dataset(
        train=splits[0],
        test=splits[1],
        num_classes=classes,
        name=manifest.get("name", path.stem),
        label_mapping=mapping,
    )


# ---------------------------------------------------------------------------
# writing (round-trip support)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_univariate_tsv(
    dataset: Dataset, path: str | Path, test_path: str | Path | None = None
) -> None:
    """Write splits back in UCR convention, restoring original labels."""
    if dataset.channels != 1:
        raise ValueError("write_univariate_tsv requires a univariate dataset")
    inverse = {v: k for k, v in dataset.label_mapping.items()}
    targets = [(Path(path), dataset.train)]
    if test_path is not None:
        targets.append((Path(test_path), dataset.test))
    for file_path, insts in targets:
        lines = []
        for inst in insts:
            label = inverse.get(inst.label, str(inst.label))
            vals = "\t".join(_fmt(v) for v in inst.series.values[0])
            lines.append(f"{label}\t{vals}")
        file_path.write_text("\n".join(lines) + "\n")


def write_multivariate(dataset: Dataset, manifest_path: str | Path) -> None:
    """Write manifest + flat files next to `manifest_path`."""
    manifest_path = Path(manifest_path)
    stem = manifest_path.stem
    inverse = {v: k for k, v in dataset.label_mapping.items()}
    entries = {
        "name": dataset.name,
        "channels": dataset.channels,
        "steps": dataset.steps,
        "classes": dataset.num_classes,
        "train": f"{stem}_train.txt",
    }
    splits = [("train", dataset.train)]
    if dataset.test:
        entries["test"] = f"{stem}_test.txt"
        splits.append(("test", dataset.test))
    for split, insts in splits:
        lines = []
        for inst in insts:
            for c in range(dataset.channels):
                lines.append("\t".join(_fmt(v) for v in inst.series.values[c]))
            lines.append(inverse.get(inst.label, str(inst.label)))
        (manifest_path.parent / entries[split]).write_text("\n".join(lines) + "\n")
    manifest_path.write_text(
        "".join(f"{k}={v}\n" for k, v in entries.items())
    )


# ---------------------------------------------------------------------------
# sampling


def stratified_sample(instances, n: int, seed: int) -> list[int]:
    """Pick `n` indices preserving class proportions.

    Per-class quotas use largest-remainder rounding (remainder ties broken
    by ascending class index); members within a class are chosen uniformly
    at random with the given seed. Deterministic: equal arguments always
    return the same sorted index list.
    """
    labels = stack_labels(instances)
    total = len(labels)
    if n > total:
        warnings.warn(
            f"requested {n} of {total} instances; returning all",
            StratifiedSampleWarning,
            stacklevel=2,
        )
        return list(range(total))
    if n == total:
        return list(range(total))

    classes = np.unique(labels)
    quotas = {}
    remainders = []
    assigned = 0
    for c in classes:
        exact = n * int((labels == c).sum()) / total
        quotas[int(c)] = int(math.floor(exact))
        assigned += quotas[int(c)]
        remainders.append((-(exact - math.floor(exact)), int(c)))
    remainders.sort()  # largest remainder first, class index breaks ties
    for _, c in remainders[: n - assigned]:
        quotas[c] += 1

    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        take = quotas[int(c)]
        if take:
            chosen.extend(rng.choice(members, size=take, replace=False).tolist())
    return sorted(chosen)
