"""Per-sweep cost of the vanilla and accelerated samplers as n grows.

A vanilla proposal re-solves all n components, so a sweep over n/b blocks
costs O(n^2).  The accelerated sampler re-solves a fixed-size window, so a
sweep costs O(n).  The fitted log-log slopes should sit near 2 and 1.

    python demos/scaling.py                      # about ten seconds
"""

from amwg.cli import bench_scaling
from amwg.config import ExperimentConfig

cfg = ExperimentConfig(model="linear_flow", b=4, L=2, S=100, acceptance="local")
rows, slopes = bench_scaling(cfg, [40, 80, 160, 320], sweeps=2)
print("   n   sampler   seconds/sweep")
for n, t, s in rows:
    print(f"{n:>4d}   {s:<7s}   {t:.4f}")
for s, v in slopes.items():
    print(f"{s} slope {v:.2f}")
