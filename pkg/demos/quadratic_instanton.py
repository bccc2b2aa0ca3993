"""Minimum-action path on a quadratic landscape, checked against its closed form.

J = |theta|^2 / 2 and the penalty Phi = |theta - b|^2 / 2 make both sweeps
linear, so the fixed point can be written down directly.
"""
import numpy as np

from fwlearn import InstantonConfig, QuadraticObjective, RareEvent, solve_instanton, verify_control
from fwlearn.largedev import el_residual, hamiltonian

b, T, lam = np.array([1.0, 0.0]), 5.0, 4.0
spec = QuadraticObjective([0.0, 0.0])
event = RareEvent(QuadraticObjective(b))
res = solve_instanton(spec, event, InstantonConfig(T=T, n_steps=10_000, theta0=[0.0, 0.0],
                                                   lambda_term=lam, relaxation="aitken"))

c = 0.5 * (1 - np.exp(-2 * T))
psi_T = lam * b / (1 + lam * c)
t = res.phi.times[:, None]
exact = -0.5 * psi_T * np.exp(-T) * np.exp(-t) + 0.5 * psi_T * np.exp(t - T)

print("iterations          ", res.iterations, res.status)
print("action / exact      ", res.action, 0.5 * psi_T @ psi_T * c)
print("path error          ", np.abs(res.phi.values - exact).max())
H = hamiltonian(spec, res.phi.values, res.psi.values)
print("Hamiltonian spread  ", H.max() - H.min())
print("EL residual         ", el_residual(spec, res.phi, res.psi))
print("control check       ", verify_control(spec, res).to_dict())
