"""Fit a factor model to wide simulated data and inspect the result.

Run with ``python demos/fit_walkthrough.py``.
"""

import numpy as np

from fad import SimConfig, fit_em, fit_fad, generate
from fad.selection import compare_fits

# 100 observations of 1000 variables driven by 3 latent factors
cfg = SimConfig(n=100, p=1000, q_true=3, k_max=6, seed=42)
data, truth = generate(cfg, rep=0)
print("data:", data.n, "x", data.p)

fad = fit_fad(data, 3)
print(f"FAD  loglik {fad.loglik:.6f}  iterations {fad.iterations}  {fad.wall_time_seconds:.2f}s")
print("     converged:", fad.converged, " projected gradient:", f"{fad.grad_inf_norm:.1e}")

# loadings and uniquenesses are on the correlation scale
print("first rows of the loadings:\n", np.round(fad.lambda_hat[:4], 3))
print("uniquenesses range:", fad.psi_hat.min().round(3), "to", fad.psi_hat.max().round(3))

# every row of L L^T + Psi has unit diagonal at the optimum
print("max |diag(LL^T + Psi) - 1|:", f"{fad.score_residual(np.ones(data.p)):.1e}")

# EM reaches the same optimum, more slowly
em = fit_em(data, 3)
print(f"EM   loglik {em.loglik:.6f}  iterations {em.iterations}  {em.wall_time_seconds:.2f}s")

cmp = compare_fits(fad, em, truth)
print(cmp.summary())
