"""Rate-law fit by gradient flow, then a bootstrap ensemble of noisy flows.

Run from the repository root: python3 demos/fit_and_ensemble.py
"""
import numpy as np

from fwlearn import SdeConfig, ensemble, gradient_flow
from fwlearn import benchmark
from fwlearn.dynamics import descent_step_bound

spec, _ = benchmark.problem()

# the flow is stiff: the step bound along the path decides h
path, theta = gradient_flow(spec, benchmark.THETA0, T=50.0, n_steps=250_000, stop_tol=1e-10)
print("steady state        ", theta)
print("objective           ", spec.value(theta))
print("step / stable bound ", path.h, descent_step_bound(spec, path.values[::250]))

# a smaller ensemble than the reference run keeps this quick
stats = ensemble(spec, SdeConfig(1e-4, 50.0, 250_000, seed=7), benchmark.THETA0, N=40, bootstrap=True, threads=4)
print("ensemble means      ", stats.means)
print("ensemble variances  ", stats.variances)
counts, edges = np.histogram(stats.terminal_samples[:, 0], bins=8)
for c, a in zip(counts, edges):
    print(f"  {a:7.4f} {'#' * c}")
