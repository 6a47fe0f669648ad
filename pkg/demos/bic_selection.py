"""Choose the number of factors by BIC over k = 1..6.

Run with ``python demos/bic_selection.py``.
"""

from fad import SimConfig, generate, select_q

cfg = SimConfig(n=100, p=1000, q_true=3, k_max=6, seed=7)
data, _ = generate(cfg, rep=0)

q_best, reports = select_q(data, cfg.k_max, threads=2)

print(" k        loglik           BIC   iters  converged")
for r in reports:
    mark = " <" if r.q == q_best else ""
    print(f"{r.q:2d}  {r.loglik:12.3f}  {r.bic:12.3f}  {r.iterations:6d}  {r.converged}{mark}")
print("chosen q =", q_best, "(true q =", cfg.q_true, ")")
