"""Monte Carlo stochastic calculus for Hilbert-space valued processes on a finite basis."""
from .integrate import (
    LocalizedSampler, ProcessSampler, SimpleProcess, StoppingRule, duality_check, integral_path,
    integrate_cylindrical, integrate_ito, integrate_simple, isometry_check, localize, operator_pushthrough_check,
)
from .noise import CylindricalNoise, QSpec, RngSpec, TimeGrid, covariance_estimate, regular_representation, \
    sample_brownian, sample_cylindrical
from .spaces import LinearOp, SpaceScale, embedding_constant, hs_norm, inner, norm
from .spde import DiffusionFamily, DriftOp, SolutionPath, SolverDivergence, energy_residual, \
    ito_formula_residual, solve_em, solve_heun, solve_strat, truncation_convergence, uniqueness_check
from .stratonovich import StratIntegrand, SemimartingaleWitness, collapse_constant_noise, ito_correction, \
    integrate_stratonovich_1d, strat_cylindrical
from .variation import Partition, bdg_ratio, cross_variation, qv_identity_check, quadratic_variation

__version__ = "0.1.0"
