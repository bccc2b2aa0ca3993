"""Leaving a disk: Monte Carlo hit rates against the minimum action.

The event |theta_T| >= R is written as a sublevel set of a Gaussian bump,
so the instanton solver sees a smooth penalty. As eps shrinks,
-eps * log p tends to the action of the optimal exit path.
"""
import numpy as np

from fwlearn import GaussianBump, InstantonConfig, QuadraticObjective, RareEvent, SdeConfig
from fwlearn import mc_hit_probability, rate_function

spec = QuadraticObjective([0.0, 0.0])
bump = GaussianBump([0.0, 0.0], 0.5)
R, T, theta0 = 0.7, 5.0, [0.1, 0.0]
event = RareEvent(bump, bump.value([R, 0.0]))

cfg = InstantonConfig(T=T, n_steps=500, theta0=theta0, schedule=np.geomspace(1, 16, 13).round(4),
                      relaxation="aitken", refine=12)
S = rate_function(spec, event, cfg)
print(f"rate {S:.5f}  closed form {(R - 0.1 * np.exp(-T)) ** 2 / (1 - np.exp(-2 * T)):.5f}")

for eps in (0.3, 0.15, 0.1, 0.08):
    p, se = mc_hit_probability(spec, SdeConfig(eps, T, 500, seed=0), theta0, event, 50_000, threads=4)
    print(f"eps={eps:<5} p={p:.3e} +- {se:.1e}   -eps ln p={-eps * np.log(p):.4f}")
