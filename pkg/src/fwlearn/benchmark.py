"""Michaelis-Menten regression benchmark: reported values and default runs.

The integration defaults are chosen for the stiffness of this objective:
curvature along the transient from ``THETA0`` peaks near 8.1e3, so explicit
steps must stay below about 2.4e-4.
"""
import numpy as np

from .largedev import RareEvent
from .problem import Dataset, EmpiricalRisk, MichaelisMenten

THETA_STAR = np.array([3.9109, 0.0179])
REFERENCE_MEANS = np.array([3.9161, 0.0179])
REFERENCE_VARIANCES = np.array([5.3e-3, 1.9e-6])
ZETA = 1.5e-5
THETA0 = np.array([3.0, 0.1])

FIT = {"T": 50.0, "n_steps": 250_000, "stop_tol": 1e-10}
SIMULATE = {"epsilon": 1e-4, "T": 50.0, "n_steps": 250_000, "N": 350, "bootstrap": True}
INSTANTON = {
    "T": 10.0,
    "n_steps": 80_000,
    "schedule": [2.0, 8.0],
    "tol": 1e-8,
    "max_iter": 200,
    "damping": 1.0,
    "relaxation": "aitken",
}


def split(data, train_indices=None, test_indices=None):
    """Training and testing sets; ``None`` means the full dataset."""
    train = data if train_indices is None else data.subset(train_indices)
    test = data if test_indices is None else data.subset(test_indices)
    return Dataset(train.x, train.y, "train"), Dataset(test.x, test.y, "test")


def problem(data=None, train_indices=None, test_indices=None, reg_weight=0.0, zeta=ZETA):
    """Training objective and test-loss event for the rate-law fit."""
    data = Dataset.rate_data() if data is None else data
    train, test = split(data, train_indices, test_indices)
    model = MichaelisMenten()
    return EmpiricalRisk(model, train, reg_weight), RareEvent(EmpiricalRisk(model, test), zeta)
