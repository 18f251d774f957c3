"""Twenty agents agree on the minimiser of their summed utilities
=================================================================

Each agent keeps a private quadratic; only the gradient sum is broadcast.
"""

import numpy as np

from fbconsensus import run_fig2_experiment

res = run_fig2_experiment(seed=0, horizon=2000)
r = res.report

#%%
print("closed form y*      :", r["y_star_closed_form"])
print("bisection y*        :", r["y_star"])
print("gain 0.01 < bound   :", r["mu_upper"], r["mu_admissible"])

#%%
traj = res.trajectory
for k in (0, 10, 50, 100, 250, 500, 1000, 2000):
    print(f"k={k:>4}  mean {traj.mean[k]: .6f}  V {traj.V[k]:.3e}")

#%%
print("fitted rate:", r["fitted_rho"])
print("V nonincreasing:", bool(np.all(np.diff(traj.V) <= 1e-12)))

# to plot: pylab.plot(traj.k, traj.x); pylab.axhline(r["y_star"])
