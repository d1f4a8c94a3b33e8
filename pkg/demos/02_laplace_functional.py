"""
Laplace functionals: Poisson and cluster
========================================

For nonnegative f the Poisson Laplace functional is exp(-int (1 - e^-f) dlambda).
For the cluster process the integrand is replaced by one minus the
expectation of exp(-sum f) over a cluster placed at the centre.
"""

import numpy as np

from poissoncluster import Window, catalog
from poissoncluster.laplace import (indicator_bracket, laplace_empirical_batch, laplace_mucl_closed,
                                    laplace_poisson_closed)
from poissoncluster.measures import Lebesgue
from poissoncluster.sampler import sample_mucl_batch

rng = np.random.default_rng(2)
lam = Lebesgue(1)

# a smooth plateau approximating ln2 * 1_[0,1] brackets exp(-1/2)
p = catalog.indicator_plateau()
lo, hi = indicator_bracket(lam, p)
print(f"plateau: {laplace_poisson_closed(lam, p):.6f} in [{lo:.6f}, {hi:.6f}], exp(-1/2) = {np.exp(-0.5):.6f}")

model = catalog.gaussian_pairs_model()
for f in catalog.bumps()[:3]:
    K = Window(*f.support())
    N = 50_000
    pts, draw = sample_mucl_batch(model, K, N, rng)
    emp = laplace_empirical_batch(pts, draw, N, f, K)
    closed = laplace_mucl_closed(model, f, rng=rng)
    print(f"bump at {f.center[0]:+.1f}: sampler {emp.value:.5f} +- {emp.se:.5f}, "
          f"formula {closed.value:.5f} +- {closed.se:.5f}")
