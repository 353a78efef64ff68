"""
Constants, stopping times and the interval recurrence
=====================================================

Build the constants ledger for the scalar test system, count greedy
stopping times on each delay interval, and check the one-step norm
recurrence along a simulated trajectory.
"""

# %%
import math

from youngdde.bounds_engine import (
    build_ledger, greedy_stopping_times, nn_bound, verify_trajectory_recurrence,
)
from youngdde.delay_solver import PointDelayLinear, SystemSpec, solve_euler
from youngdde.holder_paths import history_from_function
from youngdde.noise_gen import FbmSpec, sample_fbm_two_sided

spec = SystemSpec([[-1.0]], PointDelayLinear((1.0,), [[[0.1]]], [0.0]),
                  PointDelayLinear((1.0,), [[[0.05]]], [0.0]), 1.0, 0.35, 0.55, 0.7)
led = build_ledger(spec)
for key in ("K", "L_f", "kappa", "C_A", "lam", "lambda0", "M1", "M3", "M7"):
    print(f"{key:8s} {getattr(led, key):.6g}  ({led.provenance()[key]})")
print("hypothesis C_A C_f < lambda e^{-lambda r}:", led.hypothesis)

# %%
h = 2 ** -10
x = sample_fbm_two_sided(FbmSpec(0.75, 1, 6.0, h, 2)).increments_from(0.0, 6.0)
for n in range(5):
    w = x.window(float(n), float(n + 1))
    N = greedy_stopping_times(x, w, led, spec.C_g).count
    print(f"interval {n}: N = {N}, bound {math.ceil(nn_bound(x, w, led, spec.C_g))}")

# %%
y = solve_euler(spec, history_from_function(lambda s: 2.0, 1.0, h), x, 6.0)
rep = verify_trajectory_recurrence(y, x, led, spec.C_g, spec.f0, spec.g0, path_seed=2)
print(rep.summary())
print(rep.to_csv())
