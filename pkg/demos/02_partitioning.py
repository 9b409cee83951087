"""
Non-IID client shards
=====================

Dirichlet splits divide every class across clients with proportions drawn
from Dir(alpha). Small alpha leaves most clients with one or two labels.
The label entropy of a shard (in nats) makes the difference visible.
"""

import numpy as np

from shefl import derive_stream, generate_blobs
from shefl.data import label_entropy, partition_dirichlet, partition_pathological

train, _ = generate_blobs(10, 16, 10_000, 100, 10.0, derive_stream(0, "blobs"))

for alpha in (0.1, 0.6, 10.0):
    part = partition_dirichlet(train.labels, 100, alpha, derive_stream(0, "partition"))
    ent = [label_entropy(train.labels, s, 10) for s in part.shards]
    sizes = [len(s) for s in part.shards]
    print(f"Dir({alpha:<4}) mean entropy {np.mean(ent):.2f}  shard sizes {min(sizes)}..{max(sizes)}")

# the pathological split deals label-sorted shards, 4 per client here
part = partition_pathological(train.labels, 100, 4, derive_stream(0, "partition"))
labels_per_client = [len(np.unique(train.labels[s])) for s in part.shards]
print("pathological: distinct labels per client <=", max(labels_per_client))
print("uniform upper bound on entropy:", round(np.log(10), 2))
