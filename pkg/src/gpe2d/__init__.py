"""Hermite-spectral ground and excited states of two-component condensates in 2D."""
from .basis import BasisSpec, DegenerateBasis, QuadratureRule, TensorBasis2D, gauss_hermite_rule
from .energy import EnergyModel, chemical_potentials, gradient, overlap_integral, total_energy
from .minimize import (
    CollapsedToGround,
    InitialGuess,
    NonConvergence,
    SolverConfig,
    solve_continued,
    solve_excited,
    solve_ground,
)
from .model import (
    CoefficientField,
    StateReport,
    SystemParams,
    read_coefficients,
    synthesize_on_grid,
    write_coefficients,
)

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "DegenerateBasis",
    "QuadratureRule",
    "TensorBasis2D",
    "gauss_hermite_rule",
    "EnergyModel",
    "chemical_potentials",
    "gradient",
    "overlap_integral",
    "total_energy",
    "CollapsedToGround",
    "InitialGuess",
    "NonConvergence",
    "SolverConfig",
    "solve_continued",
    "solve_excited",
    "solve_ground",
    "CoefficientField",
    "StateReport",
    "SystemParams",
    "read_coefficients",
    "synthesize_on_grid",
    "write_coefficients",
]
