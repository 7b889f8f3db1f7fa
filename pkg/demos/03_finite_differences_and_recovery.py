"""Numerical building blocks: curvature estimates and linear unmixing.

Neither part trains a network, so the script runs in a second or two.
"""

# %%
import numpy as np

from scpnm.datagen import inject_pure_samples, sample_simplex
from scpnm.metrics import cross_derivative_fd, permutation_mse, second_derivative_fd
from scpnm.recovery import project_abundances, spa_vertices, unmix

# %% [markdown]
# The central second difference has error proportional to the fourth
# derivative, so cubics come out exact and a quartic shows the d^2 term.

# %%
for name, phi in [("z^2", lambda z: z**2), ("z^3", lambda z: z**3), ("z^4", lambda z: z**4)]:
    est = [second_derivative_fd(phi, 1.0, d) for d in (0.1, 0.01)]
    print(f"{name}: {est}")
print("d2/dxdy of x^2 y^2 at (1,1):", cross_derivative_fd(lambda x, y: x**2 * y**2, (1.0, 1.0), (0.1, 0.1)))

# %% [markdown]
# Linear unmixing. With a pure sample of each component the successive
# projection algorithm lands on them exactly.

# %%
rng = np.random.default_rng(3)
S, pure = inject_pure_samples(sample_simplex(3, 1000, 0.0, 4), 1, seed=5)
A = rng.standard_normal((5, 3))
F = A @ S
print("SPA picks:", sorted(spa_vertices(F, 3).tolist()), "planted:", sorted(pure.tolist()))
res = unmix(F, 3)
print("permutation MSE on clean data:", permutation_mse(S, res.Shat))

# %% [markdown]
# Noise moves the vertices a little; the simplex-constrained least squares
# still returns valid abundances.

# %%
Fn = F + 0.01 * rng.standard_normal(F.shape)
res = unmix(Fn, 3)
print("noisy permutation MSE:", permutation_mse(S, res.Shat))
print("column sums within 1e-8:", np.allclose(res.Shat.sum(axis=0), 1, atol=1e-8), "min entry:", res.Shat.min())
print("exact refit on the true vertices:", np.abs(project_abundances(F, A) - S).max())
