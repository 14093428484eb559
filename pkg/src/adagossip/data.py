"""Datasets, synthetic blobs, IID partitioning and file loaders (CSV, IDX)."""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DatasetError",
    "Dataset",
    "Partition",
    "generate_synthetic_classification",
    "partition_iid",
    "load_dataset",
    "read_idx",
]


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise DatasetError(f"features {self.features.shape} do not match labels {self.labels.shape}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)

    def split(self, n_first: int) -> tuple["Dataset", "Dataset"]:
        return self.subset(slice(0, n_first)), self.subset(slice(n_first, None))


@dataclass(frozen=True)
class Partition:
    """Per-agent index arrays into one dataset; disjoint, equal-sized."""

    shards: tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return len(self.shards)

    @property
    def shard_size(self) -> int:
        return len(self.shards[0])


def _simplex_means(classes: int, input_dim: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm centered simplex vertices scaled by ``separation``, randomly rotated."""
    if input_dim < classes:
        raise DatasetError(f"need input_dim >= classes for simplex means, got {input_dim} < {classes}")
    verts = np.eye(classes) - 1.0 / classes
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    means = np.zeros((classes, input_dim))
    means[:, :classes] = separation * verts
    q, r = np.linalg.qr(rng.standard_normal((input_dim, input_dim)))
    q *= np.sign(np.diag(r))
    return means @ q.T


def generate_synthetic_classification(
    seed: int, samples: int, input_dim: int, classes: int, class_separation: float
) -> Dataset:
    """Balanced Gaussian blobs with identity covariance, one mean per class."""
    if classes < 2 or samples < classes or input_dim < 1:
        raise DatasetError(f"invalid sizes: samples={samples}, input_dim={input_dim}, classes={classes}")
    rng = np.random.default_rng(seed)
    means = _simplex_means(classes, input_dim, class_separation, rng)
    labels = rng.permutation(np.arange(samples) % classes)
    feats = means[labels] + rng.standard_normal((samples, input_dim))
    return Dataset(feats, labels.astype(np.int64), classes)


def partition_iid(dataset: Dataset | int, n: int, seed: int) -> Partition:
    """Shuffle all indices once by ``seed`` and cut them into ``n`` equal shards.

    The ``len % n`` leftover samples are dropped.
    """
    total = dataset if isinstance(dataset, int) else len(dataset)
    if n < 1:
        raise DatasetError(f"need at least one agent, got {n}")
    if total < n:
        raise DatasetError(f"cannot split {total} samples across {n} agents")
    perm = np.random.default_rng(seed).permutation(total)
    size = total // n
    shards = tuple(perm[k * size : (k + 1) * size].copy() for k in range(n))
    for s in shards:
        s.setflags(write=False)
    return Partition(shards)


# IDX type codes -> (numpy dtype, byte size)
_IDX_TYPES = {
    0x08: (np.dtype(">u1"), 1),
    0x09: (np.dtype(">i1"), 1),
    0x0B: (np.dtype(">i2"), 2),
    0x0C: (np.dtype(">i4"), 4),
    0x0D: (np.dtype(">f4"), 4),
    0x0E: (np.dtype(">f8"), 8),
}


def read_idx(path: str | os.PathLike) -> np.ndarray:
    """Read an IDX array (the MNIST / Fashion-MNIST distribution format)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DatasetError(f"{path}: truncated IDX header: expected at least 4 bytes, got {len(raw)}")
    zero, type_code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or type_code not in _IDX_TYPES:
        raise DatasetError(f"{path}: bad IDX magic 0x{raw[:4].hex()} at offset 0")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DatasetError(f"{path}: truncated IDX header: expected {header} bytes, got {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype, size = _IDX_TYPES[type_code]
    expected = header + size * int(np.prod(dims, dtype=np.int64))
    if len(raw) != expected:
        raise DatasetError(f"{path}: expected {expected} bytes for dims {dims}, got {len(raw)}")
    return np.frombuffer(raw, dtype=dtype, offset=header).reshape(dims)


def _load_csv(path, header: bool) -> Dataset:
    feats, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise DatasetError(f"{path}:{lineno}: need at least one feature and a label")
            if feats and len(row) - 1 != len(feats[0]):
                raise DatasetError(f"{path}:{lineno}: expected {len(feats[0]) + 1} columns, got {len(row)}")
            try:
                feats.append([float(c) for c in row[:-1]])
                label = float(row[-1])
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            if label != int(label) or label < 0:
                raise DatasetError(f"{path}:{lineno}: label {row[-1]!r} is not a class id")
            labels.append(int(label))
    if not labels:
        raise DatasetError(f"{path}: no data rows")
    y = np.array(labels, dtype=np.int64)
    return Dataset(np.array(feats, dtype=np.float64), y, int(y.max()) + 1)


def load_dataset(
    path: str | os.PathLike,
    format: str = "csv",
    *,
    labels_path: str | os.PathLike | None = None,
    header: bool = False,
    num_classes: int | None = None,
) -> Dataset:
    """Load a dataset from disk.

    ``csv``: one sample per row, label in the last column; set ``header`` to
    skip a header row. ``idx``: ``path`` holds the samples and ``labels_path``
    the 1-D label array; byte-valued samples are scaled to [0, 1] and
    flattened.
    """
    if format == "csv":
        ds = _load_csv(path, header)
    elif format == "idx":
        if labels_path is None:
            raise DatasetError("idx format needs labels_path")
        images = read_idx(path)
        labels = read_idx(labels_path)
        if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
            raise DatasetError(f"{labels_path}: {labels.shape[0]} labels for {images.shape[0]} samples")
        feats = images.reshape(images.shape[0], -1).astype(np.float64)
        if images.dtype == np.dtype(">u1"):
            feats /= 255.0
        y = labels.astype(np.int64)
        ds = Dataset(feats, y, int(y.max()) + 1 if y.size else 0)
    else:
        raise DatasetError(f"unknown dataset format {format!r}")
    if num_classes is not None:
        ds = Dataset(ds.features, ds.labels, num_classes)
    return ds
