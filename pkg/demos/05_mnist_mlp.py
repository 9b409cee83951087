"""
MNIST with a two-layer MLP
==========================

Needs the four standard IDX files. Point ``MNIST_DIR`` at them, e.g.

    MNIST_DIR=~/data/mnist python demos/05_mnist_mlp.py

Each 100-round run takes a couple of minutes on one CPU core.
"""

import os
import sys

from shefl import ExperimentConfig, run_algorithm
from shefl.cli import build_datasets

data_dir = os.environ.get("MNIST_DIR", "/root/data/mnist")
cfg = ExperimentConfig().replace(dataset="mnist", model="mlp", rounds=int(sys.argv[1]) if len(sys.argv) > 1 else 20)
datasets = build_datasets(cfg, data_dir)
print("train", datasets[0].inputs.shape, "test", datasets[1].inputs.shape)

rows = run_algorithm("shefl", cfg, datasets)
for r in rows[:: max(1, cfg.rounds // 10)] + rows[-1:]:
    print(f"round {r.round:>3}  ensemble {r.test_acc:.4f}  lr {r.lr:.5f}")
