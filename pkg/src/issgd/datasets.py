"""Dataset loaders for IDX and CSV files, plus seeded synthetic generators."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IDXFormatError(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    num_classes: int | None = None  # None for regression targets

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError("inputs must be a non-empty N x d matrix")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("non-finite input")
        if len(self.targets) != self.inputs.shape[0]:
            raise ConsistencyError("inputs and targets differ in length")
        if self.num_classes is not None:
            self.targets = np.asarray(self.targets, dtype=np.int64)
            if np.any(self.targets < 0) or np.any(self.targets >= self.num_classes):
                raise ValueError("class target out of range")
        else:
            self.targets = np.asarray(self.targets, dtype=np.float64)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx)
        return Dataset(self.inputs[idx], self.targets[idx], self.num_classes)


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise IOError(f"truncated IDX file: wanted {n} bytes, got {len(data)}")
    return data


def read_idx_images(path) -> np.ndarray:
    with _open(path) as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16))
        if magic != IDX_IMAGES_MAGIC:
            raise IDXFormatError(f"bad image magic 0x{magic:08x} in {path}")
        pixels = np.frombuffer(_read_exact(f, count * rows * cols), dtype=np.uint8)
    return pixels.reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with _open(path) as f:
        magic, count = struct.unpack(">II", _read_exact(f, 8))
        if magic != IDX_LABELS_MAGIC:
            raise IDXFormatError(f"bad label magic 0x{magic:08x} in {path}")
        return np.frombuffer(_read_exact(f, count), dtype=np.uint8).copy()


def load_idx(images_path, labels_path, num_classes: int | None = None) -> Dataset:
    """Images scaled by 1/255 and flattened row-major."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 1
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(inputs, labels.astype(np.int64), num_classes)


def write_idx_images(images: np.ndarray, path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    header = struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape)
    _write(path, header + images.tobytes())


def write_idx_labels(labels: np.ndarray, path) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    _write(path, struct.pack(">II", IDX_LABELS_MAGIC, labels.size) + labels.tobytes())


def _write(path, payload: bytes):
    path = Path(path)
    if path.suffix == ".gz":
        # empty name and zero mtime keep the bytes independent of path and time
        with open(path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as f:
            f.write(payload)
    else:
        path.write_bytes(payload)


def load_csv(
    path,
    target_columns: int = 1,
    classification: bool = True,
    standardize: bool = False,
) -> Dataset:
    """Numeric CSV with a header row; the last ``target_columns`` columns are targets."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        rows = [[float(c) for c in row] for row in reader if row]
    table = np.array(rows, dtype=np.float64)
    x, y = table[:, :-target_columns], table[:, -target_columns:]
    if standardize:
        std = x.std(axis=0)
        x = (x - x.mean(axis=0)) / np.where(std > 0, std, 1.0)
    if classification:
        if target_columns != 1:
            raise ValueError("classification expects a single target column")
        labels = y[:, 0].astype(np.int64)
        return Dataset(x, labels, int(labels.max()) + 1)
    return Dataset(x, y)


def synth_blobs(K: int, per_class: int, d: int, spread: float, seed: int) -> Dataset:
    """K Gaussian blobs with unit-scale random means."""
    if K < 1 or per_class < 1 or d < 1:
        raise ValueError("sizes must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    means = rng.normal(size=(K, d))
    labels = np.repeat(np.arange(K), per_class)
    noise = rng.normal(size=(K * per_class, d))
    return Dataset(means[labels] + spread * noise, labels, K)


@dataclass
class LinearProblem:
    data: Dataset
    theta_star: np.ndarray  # (out, d) least-squares optimum
    true_weights: np.ndarray


def synth_linreg(
    N: int, d: int, noise: float, seed: int, out: int = 1, heterogeneity: float = 1.0
) -> LinearProblem:
    """Linear regression ``y = W x + noise`` without intercept.

    Row norms vary by ``exp(heterogeneity * normal)`` so per-sample gradient
    norms differ; ``theta_star`` is the exact least-squares solution.
    """
    if N < 1 or d < 1:
        raise ValueError("sizes must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    scale = np.exp(heterogeneity * rng.normal(size=(N, 1)))
    x = rng.normal(size=(N, d)) * scale
    w = rng.normal(size=(out, d))
    y = x @ w.T + noise * rng.normal(size=(N, out))
    theta_star = np.linalg.lstsq(x, y, rcond=None)[0].T
    return LinearProblem(Dataset(x, y), theta_star, w)


def uniform_batch(dataset_or_n, b: int, rng: np.random.Generator) -> np.ndarray:
    """``b`` distinct indices drawn uniformly without replacement."""
    n = dataset_or_n if isinstance(dataset_or_n, (int, np.integer)) else len(dataset_or_n)
    if b < 1:
        raise ValueError("b must be positive")
    if b > n:
        raise ValueError(f"cannot draw {b} distinct samples from {n}")
    return rng.choice(n, size=b, replace=False)
