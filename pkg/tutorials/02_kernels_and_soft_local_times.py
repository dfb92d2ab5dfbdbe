# %% [markdown]
# # Particle kernels and soft local times
#
# Each environment particle moves by a lazy asymmetric step.  Its t-step law
# is available exactly, and for large t a closed-form local approximation
# holds.  Soft local times couple many particle endpoints with Poisson fields.

# %%
import numpy as np

from apcrw import ApcrwParams
from apcrw.kernels import (compare_asymptotic, convolve_tables, exact_kernel, slt_endpoint_samples,
                           slt_success_frequency, total_variation)

params = ApcrwParams(1.0, 0.5, 0.6)

# %% [markdown]
# ## Exact kernel and its algebra

# %%
k100 = exact_kernel(100, params)
print("total mass - 1:", k100.total() - 1)
print("mean vs t*alpha*(2q-1):", k100.mean(), k100.expected_mean())
half = exact_kernel(50, params)
print("semigroup error:", np.max(np.abs(convolve_tables(half, half).as_float() - k100.as_float())))

# %% [markdown]
# ## Leading-order approximation
# The worst relative error over `|w| <= sqrt(n)` shrinks as n grows.

# %%
for n in (1000, 4000):
    print(f"2n={2 * n}: max relative error {compare_asymptotic(n, params.q).max_rel_error:.4%}")

# %% [markdown]
# ## One particle through the soft-local-time sampler
# The endpoint law matches the exact kernel up to sampling noise.

# %%
samples = slt_endpoint_samples(0, 50, params, 50_000, seed=4)
print("total variation at t=50:", total_variation(samples, exact_kernel(50, params)))

# %% [markdown]
# ## Sandwich domination
# Success needs every site in the window to be sandwiched at once, which
# becomes likely only at long times for a window of this size.

# %%
for t in (50, 400):
    res = slt_success_frequency(1.0, 0.2, t, 1000, params, 20, seed=5)
    print(f"t={t}: success {res['success']:.2f}")
