"""Spectral analysis and Darboux transformations for the half-line discrete Schroedinger operator."""

from .darboux import DarbouxResult, DefinitenessError, add_bound_state, apply_request, remove_bound_state
from .gelfand_levitan import gl_kernel_from_densities, gl_transform, solve_gl
from .lattice import (
    JostData,
    Potential,
    RationalJost,
    SpectralPoint,
    jost_function,
    jost_solution,
    lambda_of_z,
    regular_solution,
    z_of_lambda,
)
from .oracle import truncated_spectrum
from .spectral import BoundState, SpectralData, SpectralDensity, analyze

__version__ = "0.1.0"
