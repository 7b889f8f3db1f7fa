"""When can the nonlinear distortions be undone?

Walk-through of the second-derivative algebra behind identifiability: the
G matrix, the channel-count regime, and an explicit pair of non-affine maps
that fools the sum-to-one constraint once there are too many channels.

Run with ``python demos/01_when_is_the_model_identifiable.py``.
"""

# %%
import numpy as np

from scpnm import identifiability as ident
from scpnm.datagen import sample_simplex
from scpnm.training import make_segments

np.set_printoptions(precision=4, suppress=True)

# %% [markdown]
# Start from the smallest interesting case, three components mixed into three
# channels with A = I. Each row of G multiplies two column differences of A.

# %%
G = ident.build_g(np.eye(3))
print("G(I3) =\n", G.data)
print("row pairs (0-based):", G.row_index)
print("sigma_min =", ident.sigma_min(G), "; sqrt(2 - sqrt 3) =", np.sqrt(2 - np.sqrt(3)))

# %% [markdown]
# G has K(K-1)/2 rows and M columns, so it can only have full column rank when
# M <= K(K-1)/2. For a Gaussian A that happens almost surely.

# %%
rng = np.random.default_rng(0)
for M, K in [(3, 3), (4, 3), (6, 4), (7, 4), (10, 5)]:
    G = ident.build_g(rng.standard_normal((M, K)))
    print(f"M={M:2d} K={K}  regime={ident.check_bound(M, K)!s:5}  rank(G)={ident.numerical_rank(G)}")

# %% [markdown]
# Outside the regime the constraint is not enough. With K=3 and M=4 we can
# build quadratic channel maps h_m whose outputs still sum to one on the
# whole simplex.

# %%
A = rng.standard_normal((4, 3))
ce = ident.build_counterexample(A, seed=1)
S = sample_simplex(3, 10_000, 0.0, seed=2)
print("curvatures iota:", ce.iota)
print("G @ iota:", ident.build_g(A).data @ ce.iota)
print("max |sum_m h_m(As) - 1| over 10k samples:", ce.constraint_error(S))
print("second derivatives 2*iota:", ce.h_second())

# %% [markdown]
# The remedy is to impose the constraint on overlapping groups of K channels,
# each of which is inside the regime.

# %%
for M in (4, 6, 7):
    print(M, [tuple(i + 1 for i in s) for s in make_segments(M, 3)])
