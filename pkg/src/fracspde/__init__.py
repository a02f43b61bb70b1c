"""Stochastic heat equations with a fractional Laplacian: kernels, noise, solvers and statistics."""

from .kernel import Grid1D, KernelSpec, ResolutionError, kernel_values
from .noise import NoiseField, sample_noise
from .solver import (
    Coefficients,
    InitialCondition,
    PicardNotConverged,
    SimConfig,
    SolverDivergence,
    evolve_batch,
    evolve_mild,
    picard_solve,
    preset,
)

__all__ = [
    "Coefficients",
    "Grid1D",
    "InitialCondition",
    "KernelSpec",
    "NoiseField",
    "PicardNotConverged",
    "ResolutionError",
    "SimConfig",
    "SolverDivergence",
    "evolve_batch",
    "evolve_mild",
    "kernel_values",
    "picard_solve",
    "preset",
    "sample_noise",
]

__version__ = "0.1.0"
