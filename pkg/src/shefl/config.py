"""Experiment configuration.

Config files are a TOML subset: top-level ``key = value`` lines plus the
one-level sections ``[local]``, ``[blobs]`` and ``[data]``. An empty file
gives the default setup: 100 clients of which 50 are high-power, 10 per
round with 5 high-power, an ensemble of 5, top-k at 0.1 d, a 5:1 uplink
ratio, and local SGD with lr 1e-2, batch 16, weight decay 1e-3, 10
iterations and a 0.99 decay every 10 rounds.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

ALGOS = ("shefl", "fedavg", "fedprox", "fedens")
DEFAULT_THRESHOLDS = {"mnist": 0.90, "fmnist": 0.80, "blobs": 0.90}


class ConfigError(ValueError):
    pass


class ConfigSyntaxError(ConfigError):
    pass


class UnknownKeyError(ConfigError):
    pass


class ConfigValueError(ConfigError):
    pass


@dataclass(frozen=True)
class LocalHyper:
    lr: float = 1e-2
    batch: int = 16
    weight_decay: float = 1e-3
    iters: int = 10
    decay: float = 0.99
    decay_every: int = 10

    def lr_at(self, t: int) -> float:
        """Learning rate for 0-based round ``t``."""
        return self.lr * self.decay ** (t // self.decay_every)


@dataclass(frozen=True)
class BlobsConfig:
    num_classes: int = 10
    input_dim: int = 16
    class_sep: float = 10.0
    n_train: int = 10000
    n_test: int = 2000


@dataclass(frozen=True)
class DataFiles:
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None

    def overrides(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "blobs"
    model: str = "logreg"
    hidden: tuple = (200, 100)
    algo: tuple = ("shefl",)
    rounds: int = 100
    seeds: tuple = (0,)
    data_seed: Optional[int] = None
    num_clients: int = 100
    hpc_count: int = 50
    clients_per_round: int = 10
    hpc_per_round: int = 5
    M: int = 5
    k_frac: float = 0.1
    ratio_r: float = 5.0
    partition: str = "dirichlet"
    alpha: float = 0.6
    shards_per_client: int = 4
    mu: float = 0.01
    coefficients: str = "eq2"
    normalize: bool = True
    wire_quantize: bool = False
    threshold: Optional[float] = None
    wall_clock: bool = False
    local: LocalHyper = field(default_factory=LocalHyper)
    blobs: BlobsConfig = field(default_factory=BlobsConfig)
    data: DataFiles = field(default_factory=DataFiles)

    @property
    def effective_data_seed(self) -> int:
        return self.seeds[0] if self.data_seed is None else self.data_seed

    @property
    def effective_threshold(self) -> float:
        return DEFAULT_THRESHOLDS[self.dataset] if self.threshold is None else self.threshold

    def replace(self, **changes) -> "ExperimentConfig":
        return validate(dataclasses.replace(self, **changes))


_SECTIONS = {"local": LocalHyper, "blobs": BlobsConfig, "data": DataFiles}


def _fail(msg):
    raise ConfigValueError(msg)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    algos = tuple(a.lower() for a in cfg.algo)
    cfg = dataclasses.replace(cfg, algo=algos, seeds=tuple(int(s) for s in cfg.seeds),
                              hidden=tuple(int(h) for h in cfg.hidden))
    if cfg.dataset not in DEFAULT_THRESHOLDS:
        _fail(f"dataset must be one of {sorted(DEFAULT_THRESHOLDS)}")
    if cfg.model not in ("logreg", "mlp"):
        _fail("model must be logreg or mlp")
    if not algos or any(a not in ALGOS for a in algos):
        _fail(f"algo must be drawn from {ALGOS}, got {algos}")
    if not cfg.seeds or min(cfg.seeds) < 0:
        _fail("seeds must be a non-empty list of non-negative integers")
    if cfg.rounds < 1:
        _fail("rounds must be >= 1")
    if not 0 <= cfg.hpc_count <= cfg.num_clients:
        _fail("need 0 <= hpc_count <= num_clients")
    if not 0 <= cfg.hpc_per_round <= cfg.clients_per_round:
        _fail("need 0 <= hpc_per_round <= clients_per_round")
    if cfg.hpc_per_round > cfg.hpc_count:
        _fail("hpc_per_round exceeds hpc_count")
    if cfg.clients_per_round - cfg.hpc_per_round > cfg.num_clients - cfg.hpc_count:
        _fail("not enough low-power clients for clients_per_round")
    if cfg.M < 1:
        _fail("M must be >= 1")
    if not 0 < cfg.k_frac <= 1:
        _fail("k_frac must be in (0, 1]")
    if cfg.ratio_r < 1:
        _fail("ratio_r must be >= 1")
    if cfg.partition not in ("dirichlet", "pathological"):
        _fail("partition must be dirichlet or pathological")
    if cfg.alpha <= 0 or cfg.shards_per_client < 1:
        _fail("alpha must be > 0 and shards_per_client >= 1")
    if cfg.mu < 0:
        _fail("mu must be >= 0")
    if cfg.coefficients not in ("eq2", "balanced"):
        _fail("coefficients must be eq2 or balanced")
    if cfg.threshold is not None and not 0 < cfg.threshold < 1:
        _fail("threshold must be in (0, 1)")
    loc = cfg.local
    if loc.lr <= 0 or loc.batch < 1 or loc.iters < 0 or loc.weight_decay < 0:
        _fail("local: need lr > 0, batch >= 1, iters >= 0, weight_decay >= 0")
    if not 0 < loc.decay <= 1 or loc.decay_every < 1:
        _fail("local: need 0 < decay <= 1 and decay_every >= 1")
    b = cfg.blobs
    if b.num_classes < 2 or b.input_dim < 1 or b.class_sep < 0:
        _fail("blobs: bad shape or separation")
    if min(b.n_train, b.n_test) < b.num_classes:
        _fail("blobs: each split needs a sample per class")
    return cfg


def _coerce(cls, table: dict, where: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, value in table.items():
        if key not in known:
            raise UnknownKeyError(f"unknown key {where}{key!r}")
        if isinstance(value, dict):
            raise ConfigSyntaxError(f"nested table {where}{key!r} is not supported")
        default = known[key].default
        if isinstance(value, list):
            value = tuple(value)
        elif key == "algo" or key == "seeds":
            value = (value,)
        elif isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if isinstance(default, bool) and not isinstance(value, bool):
            raise ConfigValueError(f"{where}{key} must be true or false")
        out[key] = value
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate config text; missing keys take defaults."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigSyntaxError(f"config syntax error: {exc}") from None
    sections = {}
    top = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in _SECTIONS:
                raise UnknownKeyError(f"unknown section [{key}]")
            sections[key] = _SECTIONS[key](**_coerce(_SECTIONS[key], value, f"{key}."))
        else:
            top[key] = value
    top = _coerce(ExperimentConfig, top, "")
    for name in _SECTIONS:
        if name in top:
            raise ConfigSyntaxError(f"{name!r} must be a [section]")
    try:
        return validate(ExperimentConfig(**top, **sections))
    except TypeError as exc:
        raise ConfigValueError(f"bad value type: {exc}") from None


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())
