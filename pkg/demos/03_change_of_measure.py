"""
Moving points with a compactly supported diffeomorphism
=======================================================

Pushing every point through phi changes the law of the cluster process by
an explicit density R. Expectations of F after the move should match
expectations of F times R before it.
"""

import numpy as np

from poissoncluster import catalog
from poissoncluster.quasiinv import quasi_invariance_residual, rho_lambda_star, rn_l2_check
from poissoncluster.measures import ExpWeight

rng = np.random.default_rng(3)
model = catalog.gaussian_pairs_model()
phi = catalog.diffeos()[0]

# the per-cluster density, and its inverse relation
Y = np.array([[0.3], [0.8]])
a = rho_lambda_star(model, phi.inverted(), Y)
b = rho_lambda_star(model, phi, phi.value(Y))
print(f"rho for phi^-1 at y times rho for phi at phi(y): {a * b:.15f}")

for F in catalog.cylinder_functions():
    r = quasi_invariance_residual(model, phi, F, 50_000, rng)
    print(f"E[F(phi g)] = {r.lhs.value:+.5f}, E[F R] = {r.rhs.value:+.5f}, residual {r.residual:+.2e} +- {r.se:.1e}")

# on the base space the second moment of R has a closed form
chk = rn_l2_check(ExpWeight(), catalog.diffeos()[1], 200_000, rng)
print(f"E[R^2]: sampler {chk.empirical.value:.5f} +- {chk.empirical.se:.5f}, closed {chk.closed:.5f}")
