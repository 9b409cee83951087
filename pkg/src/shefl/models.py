"""Small classifiers on flat parameter vectors.

Parameters are packed layer by layer: the weight matrix of shape
``(fan_in, fan_out)`` in row-major order followed by its bias. Logistic
regression is a single layer; the MLP uses ReLU hidden layers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import FLOAT, DimensionMismatch, RngStream

Prox = Tuple[float, np.ndarray]


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int
    hidden: Tuple[int, ...] = (200, 100)

    def __post_init__(self):
        if self.kind not in ("logreg", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1 or self.num_classes < 1:
            raise ValueError("input_dim and num_classes must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.kind == "mlp" and (not self.hidden or min(self.hidden) < 1):
            raise ValueError("mlp needs positive hidden widths")

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        if self.kind == "logreg":
            return (self.input_dim, self.num_classes)
        return (self.input_dim, *self.hidden, self.num_classes)

    @property
    def dim(self) -> int:
        sizes = self.layer_sizes
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    def weight_mask(self) -> np.ndarray:
        """Boolean mask over the flat vector, True on weight-matrix entries."""
        mask = np.zeros(self.dim, dtype=bool)
        off = 0
        for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            mask[off:off + a * b] = True
            off += a * b + b
        return mask


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=FLOAT)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ValueError("batch inputs must be a matrix")
        if len(self.labels) < 1 or self.inputs.shape[0] != len(self.labels):
            raise ValueError("batch needs >= 1 rows and one label per row")

    def __len__(self):
        return len(self.labels)


def unpack(spec: ModelSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into ``(W, b)`` views, one pair per layer."""
    if params.shape != (spec.dim,):
        raise DimensionMismatch(f"params have shape {params.shape}, model needs ({spec.dim},)")
    layers = []
    off = 0
    for a, b in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        w = params[off:off + a * b].reshape(a, b)
        off += a * b
        layers.append((w, params[off:off + b]))
        off += b
    return layers


def init_params(spec: ModelSpec, rng: RngStream) -> np.ndarray:
    """Normal weights with std ``1/sqrt(fan_in)``, zero biases."""
    parts = []
    for a, b in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        parts.append(rng.normal(a * b) / np.sqrt(a))
        parts.append(np.zeros(b))
    return np.concatenate(parts).astype(FLOAT)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(spec, params, inputs, check=False):
    """Return the per-layer activations and the final logits."""
    layers = unpack(spec, params)
    acts = [inputs]
    pre = []
    h = inputs
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        if check and not np.all(np.isfinite(z)):
            raise FloatingPointError(f"non-finite pre-activations in layer {i}")
        pre.append(z)
        if i < len(layers) - 1:
            h = np.maximum(z, 0.0)
            acts.append(h)
    return layers, acts, pre


def logits(spec: ModelSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    return _forward(spec, params, np.asarray(inputs, dtype=FLOAT))[2][-1]


def forward_probs(spec: ModelSpec, params: np.ndarray, batch) -> np.ndarray:
    inputs = batch.inputs if isinstance(batch, Batch) else np.asarray(batch, dtype=FLOAT)
    return _softmax(logits(spec, params, inputs))


def _cross_entropy(z: np.ndarray, labels: np.ndarray) -> float:
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(labels)), labels]))


def _penalties(spec, params, weight_decay, prox):
    loss = 0.0
    if weight_decay:
        loss += 0.5 * weight_decay * sum(float(np.vdot(w, w)) for w, _ in unpack(spec, params))
    if prox is not None:
        mu, anchor = prox
        if anchor.shape != params.shape:
            raise DimensionMismatch("prox anchor dim differs from params")
        diff = params - anchor
        loss += 0.5 * mu * float(np.dot(diff, diff))
    return loss


def _check_hypers(weight_decay, prox):
    if weight_decay < 0:
        raise ValueError("weight_decay must be >= 0")
    if prox is not None and prox[0] < 0:
        raise ValueError("prox mu must be >= 0")


def loss_value(spec: ModelSpec, params: np.ndarray, batch: Optional[Batch],
               weight_decay: float = 0.0, prox: Optional[Prox] = None) -> float:
    """Objective only. ``batch=None`` drops the data term."""
    _check_hypers(weight_decay, prox)
    loss = 0.0
    if batch is not None:
        loss += _cross_entropy(_forward(spec, params, batch.inputs)[2][-1], batch.labels)
    else:
        unpack(spec, params)
    return loss + _penalties(spec, params, weight_decay, prox)


def loss_and_grad(spec: ModelSpec, params: np.ndarray, batch: Optional[Batch],
                  weight_decay: float = 0.0,
                  prox: Optional[Prox] = None) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus L2 on weights plus optional proximal term.

    Weight decay skips biases. ``prox=(mu, anchor)`` adds
    ``mu/2 * |params - anchor|^2``. ``batch=None`` drops the data term,
    which leaves a pure quadratic.
    """
    _check_hypers(weight_decay, prox)
    grad = np.zeros_like(params)
    loss = 0.0
    if batch is not None:
        layers, acts, pre = _forward(spec, params, batch.inputs, check=True)
        z = pre[-1]
        loss += _cross_entropy(z, batch.labels)
        n = len(batch)
        dz = _softmax(z)
        dz[np.arange(n), batch.labels] -= 1.0
        dz /= n
        gl = unpack(spec, grad)
        for i in range(len(layers) - 1, -1, -1):
            gw, gb = gl[i]
            gw[...] = acts[i].T @ dz
            gb[...] = dz.sum(axis=0)
            if i > 0:
                # relu subgradient is 0 at exactly 0
                dz = (dz @ layers[i][0].T) * (pre[i - 1] > 0)
    else:
        unpack(spec, params)
    loss += _penalties(spec, params, weight_decay, prox)
    if weight_decay:
        for (w, _), (gw, _) in zip(unpack(spec, params), unpack(spec, grad)):
            gw += weight_decay * w
    if prox is not None:
        mu, anchor = prox
        grad += mu * (params - anchor)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    return loss, grad


def finite_diff_grad(spec: ModelSpec, params: np.ndarray, batch: Optional[Batch],
                     weight_decay: float = 0.0, prox: Optional[Prox] = None,
                     h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient, one coordinate at a time."""
    if h <= 0:
        raise ValueError("h must be positive")
    out = np.empty_like(params)
    w = params.copy()
    for j in range(len(w)):
        orig = w[j]
        w[j] = orig + h
        up = loss_value(spec, w, batch, weight_decay, prox)
        w[j] = orig - h
        down = loss_value(spec, w, batch, weight_decay, prox)
        w[j] = orig
        out[j] = (up - down) / (2 * h)
    return out


def predict(spec: ModelSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    return np.argmax(logits(spec, params, inputs), axis=1)
