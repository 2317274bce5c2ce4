"""Numerical laboratory for fast diffusion on balls: extinction profiles, rates and bubbling."""

from .bubbles import Bubble, BubbleFit, bubble_eval, bubble_mass, corrected_bubble, fit_bubble, harmonic_correction
from .diagnostics import DiagnosticsRecord, curvature_R, energy_F, fit_rate, moments, relative_error
from .errors import (
    BracketError,
    ConfigurationError,
    ContractError,
    FastDiffError,
    FitFailure,
    IntegrationFailure,
    NumericalError,
)
from .flow import FlowParams, Trajectory, run_original, run_rescaled, step_original, step_rescaled
from .grid import Field, RadialGrid, build_grid, integrate, laplacian_radial
from .spectral import WeightedSpectrum, dirichlet_lambda1, kernel_condition, project_pi, weighted_spectrum
from .stationary import ShootingProblem, solve_stationary

__version__ = "0.1.0"
