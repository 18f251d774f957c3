"""Switching among scrambling matrices
=====================================

Three fixed 5-agent matrices, picked at random or in turn at each step.
Inside the gain bound the state still reaches y* e.
"""

import numpy as np

from fbconsensus import (
    MatrixSequenceSpec,
    SwitchedSet,
    build_feedback,
    dobrushin_coefficient,
    mu_bound,
    optimal_consensus,
    random_quadratic_family,
    rate_fit,
    simulate,
)

rng = np.random.default_rng(5)

#%%
mats = []
while len(mats) < 3:
    A = rng.random((5, 5)) * (rng.random((5, 5)) > 0.4) + 0.1 * np.eye(5)
    A /= A.sum(axis=1, keepdims=True)
    if dobrushin_coefficient(A) < 1:
        mats.append(A)
print("Dobrushin coefficients:", [round(dobrushin_coefficient(m), 3) for m in mats])

#%%
fam = random_quadratic_family(5, 5)
mu = 0.5 * mu_bound(fam).upper
G = build_feedback(fam, mu)
y_star = optimal_consensus(fam)
print("mu =", mu, " y* =", y_star)

#%%
for rule in ("uniform_random", "round_robin"):
    seq = MatrixSequenceSpec.switched(SwitchedSet(mats, rule), seed=5)
    traj = simulate(seq, G, rng.uniform(-100, 100, 5), 500)
    fit = rate_fit(traj, y_star)
    print(f"{rule:<15} final error {traj.error_to(y_star)[-1]:.2e}  rho {fit.rho:.3f}")

#%%
# a gain outside the bound runs away
bad = simulate(seq, build_feedback(fam, 1.5 * mu_bound(fam).upper), np.ones(5), 500)
print("1.5x bound:", bad.status, "after", len(bad) - 1, "steps")
