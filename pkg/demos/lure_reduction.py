"""The consensus line is invariant
==================================

Starting on x = y e, the full network reproduces the scalar iteration
y(k+1) = y(k) + G(y(k) e).
"""

import numpy as np

from fbconsensus import (
    MatrixSequenceSpec,
    UtilityFamily,
    build_feedback,
    simulate,
    simulate_lure,
)

rng = np.random.default_rng(1)

#%%
fam = UtilityFamily.quadratic([0.5, 0.5, 0.5], [1.0, -2.0, 4.0])
G = build_feedback(fam, 0.1)
h = G.lure()
print("h(0) =", h(0.0), " h(-1) =", h(-1.0))

#%%
mats = []
for _ in range(3):
    A = rng.random((3, 3))
    mats.append(A / A.sum(axis=1, keepdims=True))
seq = MatrixSequenceSpec.periodic(mats)

traj = simulate(seq, G, np.full(3, 2.0), 30)
scalar = simulate_lure(G, 2.0, 30)

#%%
for k in (0, 1, 2, 5, 10, 30):
    print(f"k={k:>2}  network {traj.x[k]}  scalar {scalar.y[k]: .12f}")
print("largest gap:", np.abs(traj.x - scalar.y[:, None]).max())
