"""Datasets and non-IID client partitions."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FLOAT, RngStream
from .models import Batch


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int
    split_tag: str = "train"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=FLOAT)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.labels) < 1 or self.inputs.shape[0] != len(self.labels):
            raise ValueError("dataset needs >= 1 sample and one label per row")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("labels outside [0, num_classes)")
        if self.split_tag not in ("train", "test"):
            raise ValueError(f"bad split tag {self.split_tag!r}")

    def __len__(self):
        return len(self.labels)

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def batch(self, idx=None) -> Batch:
        if idx is None:
            return Batch(self.inputs, self.labels)
        return Batch(self.inputs[idx], self.labels[idx])


def _balanced_labels(n: int, num_classes: int) -> np.ndarray:
    counts = [n // num_classes + (c < n % num_classes) for c in range(num_classes)]
    return np.repeat(np.arange(num_classes), counts)


def generate_blobs(num_classes: int, input_dim: int, n_train: int, n_test: int,
                   class_sep: float, rng: RngStream) -> tuple[Dataset, Dataset]:
    """Isotropic unit-variance Gaussian classes with means on a sphere.

    Class means have norm ``class_sep``; train and test share them.
    """
    if min(n_train, n_test) < num_classes:
        raise ValueError("each split needs at least one sample per class")
    if class_sep < 0:
        raise ValueError("class_sep must be >= 0")
    dirs = rng.normal((num_classes, input_dim))
    means = class_sep * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)

    def draw(n, tag):
        labels = _balanced_labels(n, num_classes)[rng.permutation(n)]
        x = means[labels] + rng.normal((n, input_dim))
        return Dataset(x, labels, num_classes, tag)

    return draw(n_train, "train"), draw(n_test, "test")


# ---------------------------------------------------------------- IDX files

class IdxError(ValueError):
    """Malformed IDX file."""


class IdxMagicError(IdxError):
    pass


class IdxTypeError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


IDX_UBYTE = 0x08


def parse_idx(buf: bytes) -> np.ndarray:
    if len(buf) < 4:
        raise IdxTruncatedError("file shorter than the 4-byte magic")
    if buf[0] != 0 or buf[1] != 0:
        raise IdxMagicError(f"magic bytes {buf[:2].hex()} != 0000")
    if buf[2] != IDX_UBYTE:
        raise IdxTypeError(f"unsupported type code 0x{buf[2]:02x}, need 0x08")
    ndim = buf[3]
    head = 4 + 4 * ndim
    if len(buf) < head:
        raise IdxTruncatedError("header cut short")
    dims = struct.unpack(f">{ndim}I", buf[4:head])
    size = int(np.prod(dims, dtype=np.int64))
    have = len(buf) - head
    if have < size:
        raise IdxTruncatedError(f"payload has {have} bytes, dims {dims} need {size}")
    if have > size:
        raise IdxError(f"{have - size} trailing bytes after payload")
    return np.frombuffer(buf, dtype=np.uint8, count=size, offset=head).reshape(dims)


def read_idx(path) -> np.ndarray:
    """Read an unsigned-byte IDX file (the MNIST container format)."""
    with open(path, "rb") as f:
        return parse_idx(f.read())


def write_idx(path, array) -> None:
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        raise TypeError("only uint8 tensors can be written")
    with open(path, "wb") as f:
        f.write(bytes([0, 0, IDX_UBYTE, arr.ndim]))
        f.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        f.write(np.ascontiguousarray(arr).tobytes())


MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def load_idx_dataset(images_path, labels_path, split_tag: str, num_classes: int = 10) -> Dataset:
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(FLOAT) / 255.0
    return Dataset(x, labels.astype(np.int64), num_classes, split_tag)


def load_mnist(data_dir, files: dict | None = None) -> tuple[Dataset, Dataset]:
    """Load MNIST (or Fashion-MNIST, same layout) from ``data_dir``.

    ``files`` overrides the standard file names; relative names resolve
    against ``data_dir``.
    """
    names = dict(MNIST_FILES, **(files or {}))
    root = Path(data_dir)
    path = {k: root / os.path.expanduser(v) for k, v in names.items()}
    for p in path.values():
        if not p.is_file():
            raise FileNotFoundError(f"missing data file {p}")
    train = load_idx_dataset(path["train_images"], path["train_labels"], "train")
    test = load_idx_dataset(path["test_images"], path["test_labels"], "test")
    return train, test


# ---------------------------------------------------------------- partitions

@dataclass
class Partition:
    shards: list

    def __post_init__(self):
        self.shards = [np.sort(np.asarray(s, dtype=np.int64)) for s in self.shards]

    def __len__(self):
        return len(self.shards)

    def validate(self, n: int) -> None:
        """Raise unless the shards are non-empty and tile ``range(n)``."""
        if any(len(s) == 0 for s in self.shards):
            raise ValueError("empty client shard")
        allidx = np.concatenate(self.shards)
        if len(allidx) != n or not np.array_equal(np.sort(allidx), np.arange(n)):
            raise ValueError("shards are not a disjoint cover of the dataset")


def partition_dirichlet(labels, n_clients: int, alpha: float, rng: RngStream) -> Partition:
    """Split each class over clients by a Dirichlet(alpha) draw.

    Per class: shuffle its indices, draw client proportions, then
    multinomial counts. Empty clients afterwards take one sample from
    the current largest shard.
    """
    labels = np.asarray(labels)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n_clients < 1:
        raise ValueError("need at least one client")
    if len(labels) < n_clients:
        raise ValueError(f"{len(labels)} samples cannot cover {n_clients} clients")
    gen = rng.generator
    buckets = [[] for _ in range(n_clients)]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[gen.permutation(len(idx))]
        p = gen.dirichlet(np.full(n_clients, alpha))
        counts = gen.multinomial(len(idx), p / p.sum())
        for client, part in enumerate(np.split(idx, np.cumsum(counts)[:-1])):
            buckets[client].extend(part.tolist())
    for client in range(n_clients):
        if not buckets[client]:
            donor = max(range(n_clients), key=lambda i: (len(buckets[i]), -i))
            buckets[client].append(buckets[donor].pop())
    return Partition(buckets)


def partition_pathological(labels, n_clients: int, shards_per_client: int,
                           rng: RngStream) -> Partition:
    """Deal label-sorted contiguous shards to clients.

    The sorted index list is cut into ``n_clients * shards_per_client``
    equal shards; leftover samples go to the final shard.
    """
    labels = np.asarray(labels)
    total = n_clients * shards_per_client
    if n_clients < 1 or shards_per_client < 1:
        raise ValueError("need positive client and shard counts")
    if total > len(labels):
        raise ValueError(f"{total} shards exceed {len(labels)} samples")
    order = np.argsort(labels, kind="stable")
    size = len(labels) // total
    cuts = [order[j * size:(j + 1) * size] for j in range(total - 1)]
    cuts.append(order[(total - 1) * size:])
    deal = rng.permutation(total)
    return Partition([
        np.concatenate([cuts[j] for j in deal[i * shards_per_client:(i + 1) * shards_per_client]])
        for i in range(n_clients)
    ])


def label_entropy(labels, shard, num_classes: int) -> float:
    """Shannon entropy (nats) of the label histogram of one shard."""
    hist = np.bincount(np.asarray(labels)[shard], minlength=num_classes).astype(FLOAT)
    p = hist[hist > 0] / hist.sum()
    return float(-(p * np.log(p)).sum())
