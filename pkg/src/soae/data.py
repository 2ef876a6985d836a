"""Datasets: MNIST IDX files (optionally gzipped) and seeded Gaussian blobs."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import LabeledExample

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    pass


class BadMagicError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


@dataclass
class Dataset:
    """Flattened inputs ``X`` in ``[0, 1]`` of shape ``(n, d)`` and labels ``y``."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    image_shape: tuple[int, ...] | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise ValueError(f"X {self.X.shape} and y {self.y.shape} do not line up")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError("labels out of range")
        if self.X.size and (self.X.min() < 0.0 or self.X.max() > 1.0):
            raise ValueError("pixels must lie in [0, 1]")

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> LabeledExample:
        return LabeledExample(self.X[i], int(self.y[i]))

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    def take(self, n: int | None, start: int = 0) -> "Dataset":
        stop = None if n is None else start + n
        return Dataset(self.X[start:stop], self.y[start:stop], self.num_classes, self.image_shape)


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == GZIP_MAGIC:
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, magic: int, path) -> tuple[tuple[int, ...], bytes]:
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: missing header")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise BadMagicError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: header cut short")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    body = raw[header:]
    if len(body) < size:
        raise TruncatedFileError(f"{path}: expected {size} data bytes, found {len(body)}")
    return dims, body[:size]


def load_mnist_idx(images_path, labels_path, limit: int | None = None) -> Dataset:
    """Read an IDX image/label pair; pixels are scaled by exactly 1/255."""
    img_dims, img_body = _parse_idx(_read_bytes(images_path), IMAGE_MAGIC, images_path)
    lbl_dims, lbl_body = _parse_idx(_read_bytes(labels_path), LABEL_MAGIC, labels_path)
    if img_dims[0] != lbl_dims[0]:
        raise CountMismatchError(f"{img_dims[0]} images but {lbl_dims[0]} labels")
    n = img_dims[0] if limit is None else min(int(limit), img_dims[0])
    rows, cols = img_dims[1], img_dims[2]
    pixels = np.frombuffer(img_body, dtype=np.uint8).reshape(img_dims[0], rows * cols)[:n]
    labels = np.frombuffer(lbl_body, dtype=np.uint8)[:n]
    num_classes = max(10, int(labels.max()) + 1) if n else 10
    return Dataset(pixels.astype(np.float64) / 255.0, labels.astype(np.int64), num_classes, (rows, cols))


def write_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Inverse of :func:`load_mnist_idx` for byte-valued pixels (uncompressed)."""
    if dataset.image_shape is None or len(dataset.image_shape) != 2:
        raise ValueError("writing IDX needs a 2-D image_shape")
    rows, cols = dataset.image_shape
    pixels = np.rint(dataset.X * 255.0).astype(np.uint8)
    n = len(dataset)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4I", IMAGE_MAGIC, n, rows, cols))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2I", LABEL_MAGIC, n))
        fh.write(dataset.y.astype(np.uint8).tobytes())


def default_mnist_dir() -> Path:
    env = os.environ.get("SOAE_MNIST_DIR")
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data" / "mnist"


def load_mnist(split: str = "train", limit: int | None = None, directory=None) -> Dataset:
    """Load a split from ``directory`` (plain or ``.gz`` files)."""
    directory = Path(directory) if directory is not None else default_mnist_dir()
    paths = []
    for name in MNIST_FILES[split]:
        for candidate in (directory / name, directory / f"{name}.gz"):
            if candidate.exists():
                paths.append(candidate)
                break
        else:
            raise FileNotFoundError(f"{name}[.gz] not found in {directory}")
    return load_mnist_idx(paths[0], paths[1], limit)


def synthetic_blobs(n: int, dims: int, classes: int, spread: float, seed: int = 0) -> Dataset:
    """Gaussian clusters around uniform random centres in ``[0.2, 0.8]^dims``."""
    if classes < 1 or n < classes or dims < 2 or spread < 0:
        raise ValueError(f"invalid blob sizes n={n}, dims={dims}, classes={classes}, spread={spread}")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.2, 0.8, size=(classes, dims))
    y = np.arange(n) % classes
    rng.shuffle(y)
    X = centers[y] + spread * rng.standard_normal((n, dims))
    return Dataset(np.clip(X, 0.0, 1.0), y, classes)
