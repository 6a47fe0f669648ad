"""Leading singular triplets of a matrix through matvecs only.

Run with ``python demos/partial_svd.py``.
"""

import numpy as np

from fad import DataSet, ImplicitW, partial_svd

rng = np.random.default_rng(0)

# dense input: compare against LAPACK
A = rng.standard_normal((300, 200))
trip = partial_svd(A, 4)
print("Lanczos:", np.round(trip.values, 10))
print("dense:  ", np.round(np.linalg.svd(A, compute_uv=False)[:4], 10))
print("restarts", trip.restarts, " matvecs", trip.matvecs, " converged", trip.converged)

# implicit operator: the scaled, centred data matrix is never formed
Y = rng.standard_normal((50, 20000))
psi = rng.uniform(0.2, 0.8, Y.shape[1])
op = ImplicitW(DataSet.from_array(Y), psi)
trip = partial_svd(op, 3)
print("implicit W, top 3 values:", np.round(trip.values, 6), " matvecs", trip.matvecs)
