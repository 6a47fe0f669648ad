"""Wall-clock comparison of the profile-likelihood fit and EM.

Run with ``python demos/timing_fad_vs_em.py [replicates]``.
"""

import sys

import numpy as np

from fad import PRESETS, generate
from fad.selection import compare_fits
from fad.em import fit_em
from fad.fit import fit_fad

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 3
cfg = PRESETS["paper-small"]

ratios = []
for rep in range(reps):
    data, truth = generate(cfg, rep)
    a = fit_fad(data, cfg.q_true)
    b = fit_em(data, cfg.q_true)
    c = compare_fits(a, b, truth)
    ratios.append(c.speed_ratio)
    print(
        f"rep {rep}: FAD {a.wall_time_seconds:6.2f}s ({a.iterations} it)  "
        f"EM {b.wall_time_seconds:6.2f}s ({b.iterations} it)  ratio {c.speed_ratio:6.1f}  "
        f"loglik diff {c.cross['loglik']:.1e}"
    )
print("median EM/FAD ratio:", round(float(np.median(ratios)), 1))

# one voxel-sized problem, FAD only
data, _ = generate(PRESETS["voxel-160"], 0)
r = fit_fad(data, 2)
print(f"(160, 24547, 2): {r.wall_time_seconds:.2f}s, converged={r.converged}")
