"""Flat parameter vectors, vector arithmetic and seeded random streams.

A parameter vector is a 1-D float64 numpy array. Every submodel of an
experiment shares one fixed length ``dim``.

Random streams are derived from a lineage ``(master_seed, purpose_tag,
round, client_id)``. The construction is fixed:

    entropy = [master_seed, crc32(purpose_tag), round, client_id]
    stream  = numpy.random.Generator(PCG64(SeedSequence(entropy)))

so a lineage always yields the same draws, independent of the order in
which streams are created or which thread consumes them.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FLOAT = np.float64


class DimensionMismatch(ValueError):
    pass


def param_vector(values) -> np.ndarray:
    """Copy ``values`` into a fresh finite float64 vector."""
    vec = np.array(values, dtype=FLOAT).reshape(-1)
    if vec.size == 0:
        raise ValueError("parameter vector must have dim >= 1")
    _check_finite(vec)
    return vec


def _check_finite(vec: np.ndarray) -> None:
    if not np.all(np.isfinite(vec)):
        raise FloatingPointError("non-finite entry in parameter vector")


def _check_dims(*vecs: np.ndarray) -> None:
    dims = {v.shape for v in vecs}
    if len(dims) != 1:
        raise DimensionMismatch(f"operand shapes differ: {sorted(dims)}")


def add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    _check_dims(x, y)
    out = x + y
    _check_finite(out)
    return out


def sub(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    _check_dims(x, y)
    out = x - y
    _check_finite(out)
    return out


def scale(a: float, x: np.ndarray) -> np.ndarray:
    out = a * x
    _check_finite(out)
    return out


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return ``a * x + y`` as a new vector."""
    _check_dims(x, y)
    out = a * x + y
    _check_finite(out)
    return out


def dot(x: np.ndarray, y: np.ndarray) -> float:
    _check_dims(x, y)
    return float(np.dot(x, y))


def l2norm(x: np.ndarray) -> float:
    return float(np.sqrt(np.dot(x, x)))


_OPS = {"add": add, "sub": sub, "scale": scale, "axpy": axpy, "dot": dot, "l2norm": l2norm}


def vector_arith(op_kind: str, *operands):
    """Dispatch one of ``add, sub, scale, axpy, dot, l2norm`` by name."""
    try:
        fn = _OPS[op_kind]
    except KeyError:
        raise ValueError(f"unknown vector op {op_kind!r}") from None
    return fn(*operands)


@dataclass(frozen=True)
class Lineage:
    master_seed: int
    purpose_tag: str
    round: int
    client_id: int

    def entropy(self) -> list[int]:
        for name in ("master_seed", "round", "client_id"):
            if getattr(self, name) < 0:
                raise ValueError(f"lineage {name} must be non-negative")
        return [
            int(self.master_seed),
            zlib.crc32(self.purpose_tag.encode("utf-8")),
            int(self.round),
            int(self.client_id),
        ]


@dataclass
class RngStream:
    """A private random stream. Never share one between workers."""

    lineage: Lineage
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(self.lineage.entropy())
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def uniform(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, low: int, high: int, size=None):
        """Integers in ``[low, high)``."""
        return self.generator.integers(low, high, size=size)

    def shuffle(self, items: Sequence) -> list:
        """Fisher-Yates shuffle into a new list; ``items`` is not modified."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = int(self.generator.integers(0, i + 1))
            out[i], out[j] = out[j], out[i]
        return out

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def sample(self, population: Sequence[int], k: int) -> list[int]:
        """Uniform draw of ``k`` distinct items."""
        if k > len(population):
            raise ValueError(f"cannot draw {k} from {len(population)} items")
        if k == 0:
            return []
        picks = self.generator.choice(len(population), size=k, replace=False)
        return [population[int(i)] for i in picks]


def derive_stream(master_seed: int, purpose_tag: str, round: int = 0, client_id: int = 0) -> RngStream:
    return RngStream(Lineage(master_seed, purpose_tag, round, client_id))
