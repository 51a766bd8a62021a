"""Case 2 at desk scale: plain, projected and projected+damped side by side.

Prints max_n e(k, n) per iteration for each variant. Plain parareal blows up
after t = 1, projection alone stays bounded but stalls, damping restores
convergence.
"""
import logging

import numpy as np

from stableparareal import harness as H
from stableparareal.config import MethodConfig, burgers_damped, preset

K = 15

logging.basicConfig(level=logging.ERROR)
base = preset("burgers_case2", "desk")
n = base.space.n
runs = {
    "plain": base.replace(method={"iterations": K}),
    "projected": base.replace(method=MethodConfig("projected", K, partition=(0, (n + 1) // 2, n + 1))),
    "projected_damped": burgers_damped(base, K),
}
ref = H.reference_snapshots(base)
exps = {name: H.run_experiment(cfg, workers=1, reference=ref) for name, cfg in runs.items()}
table = {name: exp.report for name, exp in exps.items()}

print(" k  " + "".join(f"{name:>18s}" for name in runs))
for k in range(K + 1):
    print(f"{k:2d}  " + "".join(f"{table[name].max_error(k):18.3e}" for name in runs))
nid = np.nanmax(exps["projected_damped"].trace.norm_identity)
print(f"norm identity residual (projected_damped): {nid:.1e}")
