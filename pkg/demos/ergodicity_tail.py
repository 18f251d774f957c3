"""Ergodic from one start, not from the next
============================================

P(0) = J (exact averaging) followed by the identity forever. The product
from k0 = 0 collapses at once; every tail starting later never mixes.
"""

import numpy as np

from fbconsensus import ergodic_counterexample, ergodicity_report, left_product

seq = ergodic_counterexample(3)

#%%
print(left_product(seq, 10, 0).value)
print(left_product(seq, 10, 1).value)

#%%
rep = ergodicity_report(seq, 100, tail_starts=(0, 1, 5))
for k0 in (0, 1, 5):
    t = rep.tail(k0)
    print(f"k0={k0}: {t.verdict:<24} final row difference {t.row_diff_series[-1]:.2e}")

#%%
d = rep.to_dict()
print("report fields:", sorted(d))
print("fitted (M, r) from k0=0:", rep.tail(0).fitted_M, rep.tail(0).fitted_r)
