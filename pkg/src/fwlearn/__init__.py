"""Gradient-flow learning dynamics, their small-noise limit and minimum-action paths."""
__version__ = "0.1.0"

from .dynamics import (
    DimensionMismatch,
    EnsembleStats,
    IntegrationError,
    Path,
    SdeConfig,
    consistency_probe,
    ensemble,
    euler_maruyama,
    gradient_flow,
)
from .instanton import (
    ConvergenceError,
    InstantonConfig,
    InstantonResult,
    solve_instanton,
    verify_control,
)
from .largedev import (
    RareEvent,
    action,
    el_residual,
    hamiltonian,
    lagrangian,
    log_prob_estimate,
    mc_hit_probability,
    rate_function,
)
from .problem import (
    CustomModel,
    Dataset,
    DomainError,
    EmpiricalRisk,
    GaussianBump,
    MichaelisMenten,
    QuadraticObjective,
)
