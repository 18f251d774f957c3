"""Averaging never widens the spread of opinions
================================================

V(x) = max(x) - min(x) is a Lyapunov function for any row stochastic step.
"""

import numpy as np

from fbconsensus import dobrushin_coefficient, lyapunov_v, validate_stochastic

rng = np.random.default_rng(0)

#%%
# a random 4-agent averaging matrix
A = rng.random((4, 4))
P = validate_stochastic(A / A.sum(axis=1, keepdims=True))
print(P)

#%%
x = np.array([4.0, -2.0, 0.5, 1.0])
print("V(x)  =", lyapunov_v(x))
print("V(Px) =", lyapunov_v(P @ x))

#%%
# a scrambling matrix shrinks V by at least its Dobrushin coefficient
tau = dobrushin_coefficient(P)
print("tau(P) =", tau, " ratio =", lyapunov_v(P @ x) / lyapunov_v(x))

#%%
# shifting along e leaves V unchanged
print("V(x + 7e) =", lyapunov_v(x + 7.0))
