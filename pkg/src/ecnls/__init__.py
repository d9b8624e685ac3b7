"""Expectation-coupled cubic NLS on random fields, and the matching density-operator flow."""
from .diagnostics import CSV_COLUMNS, DiagnosticsRecord, energy, h1_sq, mass
from .dynamics import EvolutionConfig, IntegrationError, Trajectory, evolve, evolve_perturbed, strang_step
from .ensembles import (
    CovarianceMatrix,
    ModeEnsemble,
    MonteCarloEnsemble,
    covariance_from_modes,
    empirical_covariance,
    empirical_density,
    exact_density,
    sample_gaussian,
)
from .equilibria import EquilibriumSpec, build_equilibrium
from .operator import OperatorError, OperatorState, bures_wasserstein, evolve_operator
from .spectral import Field, GridError, TorusGrid

__version__ = "0.1.0"
