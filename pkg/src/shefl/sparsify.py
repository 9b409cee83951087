"""Top-k sparsified deltas, uplink budgets and wire accounting.

Wire layout of one delta (little-endian)::

    header   u32 dim | u16 model_index | u16 reserved (0)     8 bytes
    entries  u32 index | f32 value, repeated                  8 bytes each
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .core import FLOAT, DimensionMismatch

HEADER = struct.Struct("<IHH")
ENTRY = np.dtype([("index", "<u4"), ("value", "<f4")])
HEADER_BYTES = HEADER.size
ENTRY_BYTES = ENTRY.itemsize


@dataclass
class SparseDelta:
    dim: int
    indices: np.ndarray
    values: np.ndarray
    model_index: int = 0

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=FLOAT)
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices and values must be matching 1-D arrays")
        if len(self.indices) > self.dim:
            raise ValueError("more entries than dim")
        if len(self.indices):
            if self.indices[0] < 0 or self.indices[-1] >= self.dim:
                raise ValueError("index outside [0, dim)")
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("indices must be strictly increasing")

    def __len__(self):
        return len(self.indices)

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=FLOAT)
        out[self.indices] = self.values
        return out

    @property
    def nbytes(self) -> int:
        return HEADER_BYTES + ENTRY_BYTES * len(self)


@dataclass(frozen=True)
class Budget:
    k_l: int
    k_h: int
    k_frac: float
    r: float
    M: int
    d: int


def _exact(x) -> Fraction:
    # decimal intent of a float (0.1 -> 1/10), so that 0.1 * 1000 is exactly 100
    return Fraction(repr(x)) if isinstance(x, float) else Fraction(x)


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def compute_budgets(k_frac: float, r: float, M: int, d: int) -> Budget:
    """Per-submodel element budgets for LPC and HPC uploads.

    ``k_l = k_frac * d`` for the single LPC submodel; each of the M HPC
    submodels gets ``r * k_frac * d / M`` so one HPC sends r times the
    elements of one LPC. Both are rounded half-up and clamped to [1, d].
    """
    if not 0 < k_frac <= 1:
        raise ValueError("k_frac must be in (0, 1]")
    if r < 1:
        raise ValueError("resource ratio r must be >= 1")
    if M < 1 or d < 1:
        raise ValueError("M and d must be >= 1")
    kf, rr = _exact(k_frac), _exact(r)
    k_l = min(max(_round_half_up(kf * d), 1), d)
    k_h = min(max(_round_half_up(rr * kf * d / M), 1), d)
    return Budget(k_l=k_l, k_h=k_h, k_frac=k_frac, r=r, M=M, d=d)


def top_k(v: np.ndarray, k: int, model_index: int = 0) -> SparseDelta:
    """Keep the k largest-magnitude entries; ties go to the lower index."""
    v = np.asarray(v, dtype=FLOAT)
    d = len(v)
    if not 1 <= k <= d:
        raise ValueError(f"k={k} outside [1, {d}]")
    if k == d:
        idx = np.arange(d)
    else:
        mag = np.abs(v)
        kth = np.partition(mag, d - k)[d - k]
        above = np.flatnonzero(mag > kth)
        ties = np.flatnonzero(mag == kth)[:k - len(above)]
        idx = np.sort(np.concatenate([above, ties]))
    return SparseDelta(d, idx, v[idx], model_index)


def apply_sparse(dense: np.ndarray, delta: SparseDelta, scale: float = 1.0) -> np.ndarray:
    if dense.shape != (delta.dim,):
        raise DimensionMismatch(f"dense shape {dense.shape} vs delta dim {delta.dim}")
    out = dense.copy()
    out[delta.indices] += scale * delta.values
    return out


def quantize_wire(delta: SparseDelta) -> SparseDelta:
    """Round values to what a 32-bit wire would carry."""
    return SparseDelta(delta.dim, delta.indices,
                       delta.values.astype(np.float32).astype(FLOAT), delta.model_index)


def uplink_bytes(deltas: Iterable[SparseDelta]) -> int:
    return sum(d.nbytes for d in deltas)


def encode_delta(delta: SparseDelta) -> bytes:
    body = np.empty(len(delta), dtype=ENTRY)
    body["index"] = delta.indices
    body["value"] = delta.values
    return HEADER.pack(delta.dim, delta.model_index, 0) + body.tobytes()


def decode_delta(buf: bytes) -> SparseDelta:
    if len(buf) < HEADER_BYTES or (len(buf) - HEADER_BYTES) % ENTRY_BYTES:
        raise ValueError(f"{len(buf)} bytes is not a whole encoded delta")
    dim, model_index, _ = HEADER.unpack_from(buf)
    body = np.frombuffer(buf, dtype=ENTRY, offset=HEADER_BYTES)
    return SparseDelta(dim, body["index"].astype(np.int64),
                       body["value"].astype(FLOAT), model_index)
