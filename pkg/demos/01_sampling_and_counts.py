"""
Sampling a Gaussian cluster process on a window
===============================================

Centres come from a unit-rate Poisson process on the line. Each centre
carries 0 to 3 points with i.i.d. N(0, 1) offsets. Only clusters that can
reach the window are simulated.
"""

import numpy as np

from poissoncluster import Window, catalog
from poissoncluster.properness import pgf_closed, pgf_empirical
from poissoncluster.sampler import counts_in, sample_mucl, sample_mucl_batch

model = catalog.gaussian_pairs_model()
K = Window([0.0], [1.0])
rng = np.random.default_rng(1)

# one configuration, merged into atoms with multiplicities
gamma = sample_mucl(model, K, rng)
print("one draw:", gamma)
print("truncation radius used for centres:", round(model.r_trunc, 4))

# counts in K over many draws: the mean equals lambda(K) times the mean cluster size
N = 50_000
_, draw = sample_mucl_batch(model, K, N, rng)
c = counts_in(draw, N)
print(f"mean count {c.mean():.4f} (expected {model.eta.mean_size:.4f}), variance {c.var():.4f}")

# the count generating function against its cluster formula
for q in (0.3, 0.6, 0.9):
    emp = pgf_empirical(c, K, q)
    closed = pgf_closed(model, K, q, 100_000, rng)
    print(f"E[q^N] at q={q}: sampler {emp.value:.5f} +- {emp.se:.5f}, formula {closed.value:.5f} +- {closed.se:.5f}")
