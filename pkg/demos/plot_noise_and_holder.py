"""
Fractional Brownian drivers and Hölder seminorms
================================================

Sample a two-sided fBm path, look at its Hölder seminorms at a few
exponents and estimate the moment of the seminorm across an ensemble.
"""

# %%
# A two-sided path with Hurst index 0.75 on [-4, 4], grid h = 2^-10.
import numpy as np

from youngdde.holder_paths import beta_norm, holder_seminorm, sup_norm
from youngdde.noise_gen import FbmSpec, gamma_moment, sample_ensemble, sample_fbm_two_sided, shift_path

spec = FbmSpec(hurst=0.75, m=1, T=4.0, h=2 ** -10, seed=1)
x = sample_fbm_two_sided(spec)
print("pinned at zero:", x.path(0.0))

# %%
# The seminorm grows as the exponent approaches the Hurst index.
seg = x.segment(0.0, 1.0)
w = seg.full_window()
for beta in (0.3, 0.5, 0.7):
    print(f"beta={beta}: seminorm {holder_seminorm(seg, w, beta).seminorm:.4f}")
print("sup norm", sup_norm(seg, w), " weighted 0.55-norm", beta_norm(seg, w, 0.55))

# %%
# Shifting is exact on the grid: θ_s x is again pinned at zero.
y = shift_path(x, 1.0)
print("shifted path at 0:", y.path(0.0))
print("theta_1 x (0.5) =", y.path(0.5), " x(1.5) - x(1) =", x.path(1.5) - x.path(1.0))

# %%
# Moment of the seminorm on [-r, r], with a batch-means interval.
ens = sample_ensemble(FbmSpec(0.75, 1, 1.0, 2 ** -8, 7), 100)
print(gamma_moment(ens, beta=0.55, nu=0.7, r=1.0))
