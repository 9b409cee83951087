"""
Top-k deltas and uplink budgets
===============================

A client never sends its full update. It keeps the k largest entries by
magnitude and ships (index, value) pairs, 8 bytes each plus an 8-byte
header. High-power clients split a bigger byte budget across all M
submodels, low-power clients spend theirs on a single one.
"""

import numpy as np

from shefl import compute_budgets, top_k
from shefl.sparsify import decode_delta, encode_delta

rng = np.random.default_rng(0)
v = rng.normal(size=12).round(2)
print("dense update :", v)

# keep 4 entries; ties go to the lower index
d = top_k(v, 4)
print("kept indices :", d.indices, "values:", d.values)
print("wire size    :", d.nbytes, "bytes")

# the wire format round-trips exactly (values travel as float32)
back = decode_delta(encode_delta(d))
print("decoded      :", back.indices, back.values)

# budgets for a 178,110-parameter MLP at the default 10% density
for r in (1, 3, 5, 10):
    b = compute_budgets(0.1, r, 5, 178_110)
    print(f"ratio {r:>2}:1  k_l={b.k_l:>6}  k_h={b.k_h:>6}  per-submodel HPC share {b.k_h / b.k_l:.2f}")
