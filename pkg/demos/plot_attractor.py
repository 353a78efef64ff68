"""
Birkhoff averages, the smallness threshold and pullback convergence
===================================================================

Estimate Ĝ, search the largest diffusion size with Ĝ + CI < λ0 r, and run
pullback experiments below it.
"""

# %%
import numpy as np

from youngdde.attractor_lab import (
    absorbing_radius, birkhoff_g_hat, epsilon_search, ensemble_seminorms, pullback_experiment,
    sample_initial_set, singleton_test,
)
from youngdde.bounds_engine import build_ledger, calibrate_interval_constants
from youngdde.delay_solver import PointDelayLinear, SystemSpec
from youngdde.noise_gen import FbmSpec, sample_ensemble, sample_fbm_two_sided

h = 2 ** -8


def system(cg, f_off=0.0):
    return SystemSpec([[-1.0]], PointDelayLinear((1.0,), [[[0.1]]], [f_off]),
                      PointDelayLinear((1.0,), [[[cg]]], [0.0]), 1.0, 0.35, 0.55, 0.7)


led = build_ledger(system(0.05))
sems = ensemble_seminorms(sample_ensemble(FbmSpec(0.75, 1, 1.0, h, 10), 200), 1.0, 0.7)
for c in (0.2, 0.05, 0.01, 0.0):
    print(f"C_g={c}: G-hat {birkhoff_g_hat(led, c, sems=sems).value:.4f}")

# %%
eps = epsilon_search(led, sems)
print(f"eps-hat {eps.epsilon:.3e}, G-hat {eps.g_hat:.3f} + CI {eps.ci:.3f} < lambda0 r {eps.target:.3f}")

# %%
# Pullback: solve from time -n r to 0 for a cloud of initial histories.
spec = system(eps.epsilon / 2)
x = sample_fbm_two_sided(FbmSpec(0.75, 1, 16.0, h, 4))
cloud = sample_initial_set(2.0, 1.0, h, count=8, seed=1)
run = pullback_experiment(spec, cloud, x, 15)
print("diameters:", np.array2string(run.diameters, precision=2))

# %%
rep = singleton_test(spec, x, 15, cloud[0], cloud[1], ledger=build_ledger(spec),
                     g_hat=birkhoff_g_hat(led, spec.C_g, sems=sems).value)
print(f"log-distance slope {rep.slope:.3f} <= {rep.slope_bound:.3f}")

# %%
# Absorbing radius partial sums need the fitted interval constants.
spec = system(eps.epsilon / 5, f_off=0.5)
led_b = calibrate_interval_constants(spec, build_ledger(spec), 50, h)
rad = absorbing_radius(x, led_b, spec.C_g, spec.f0, spec.g0, 15)
print("partial sums:", np.array2string(rad.partial_sums[::3], precision=6))
