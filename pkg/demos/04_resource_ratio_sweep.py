"""
Uplink ratio sweep
==================

Fix the low-power budget and vary how many more bytes a high-power client
may send (r:1). With a tight budget the high-power share per submodel
shrinks as r falls, so the sweep shows how sensitive accuracy is to that
split. Strongly non-IID data (Dir(0.1)) makes the effect easier to see.
"""

from shefl import ExperimentConfig, run_algorithm
from shefl.cli import build_datasets

base = ExperimentConfig().replace(alpha=0.1, rounds=60, seeds=(0, 1, 2))
datasets = build_datasets(base)

for k_frac in (0.02, 0.1):
    cells = []
    for r in (1, 3, 5, 10):
        rows = run_algorithm("shefl", base.replace(k_frac=k_frac, ratio_r=float(r)), datasets)
        last = [x.test_acc for x in rows if x.round == base.rounds]
        cells.append(f"1:{r} {sum(last) / len(last):.3f}")
    print(f"k={k_frac}d  " + "  ".join(cells))
