"""
Equilibrium diffusion of clusters
=================================

Every point moves by dX = beta dt + sqrt(2) dW, where beta is the log
gradient of the cluster density. For Gaussian pairs the difference of the
two points is an Ornstein-Uhlenbeck process and the centre of mass is a
Brownian motion, so started at equilibrium the process stays there.
"""

import numpy as np

from poissoncluster import Window, catalog
from poissoncluster.calculus import dirichlet_vs_generator
from poissoncluster.dynamics import direct_ensemble, pair_diffusion_check, simulate, stationarity_report

rng = np.random.default_rng(4)
model = catalog.gaussian_pairs_model()

F, G = catalog.cylinder_functions()[:2]
r = dirichlet_vs_generator(model, F, G, 50_000, rng)
# the generator side is much noisier than the form itself, so compare through the paired residual
print(f"Dirichlet form {r.lhs.value:.5f} +- {r.lhs.se:.5f}, generator pairing {r.rhs.value:.5f} +- {r.rhs.se:.5f}")
print(f"  (diffusive {r.diffusive.value:.5f}, drift {r.drift.value:.5f}), residual {r.residual:+.4f} +- {r.se:.4f}")

K = Window([0.0], [2.0])
obs = catalog.observables()
traj = simulate(model, K, 0.5, 1e-2, 500, obs, rng, checkpoints=[0.25, 0.5])
direct = direct_ensemble(model, K, obs, 500, rng)
for row in stationarity_report(traj, direct):
    print(f"observable {row.observable} t={row.time}: mean drift {row.mean_drift.value:+.4f} "
          f"+- {row.mean_drift.se:.4f}, KS p {row.ks_pvalue:.3f}, flagged {row.flagged}")

pair = pair_diffusion_check(model, T=3.0, dt=1e-2, n_paths=5000, rng=rng)
print(f"Var(y1 - y2) at t=3: {pair.diff_variance.value:.3f} (stationary value 2)")
