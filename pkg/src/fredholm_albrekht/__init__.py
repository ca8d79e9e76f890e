"""Polynomial optimal stabilization of ODE systems and 1-D reaction-diffusion PDEs."""

from .albrekht import (
    LqrData,
    PolyExpansion,
    PolySystem,
    closed_loop_spectrum,
    expand,
    hjb_residual,
    solve_are,
)
from .galerkin import GalerkinSystem, project
from .polytensor import GradedPoly, SymTensor, symmetrize
from .simulate import FeedbackPolicy, SimConfig, Trajectory, decay_mask, integrate
from .spectral import SpectralModel, build_basis, compute_kernels

__version__ = "0.1.0"

__all__ = [
    "FeedbackPolicy",
    "GalerkinSystem",
    "GradedPoly",
    "LqrData",
    "PolyExpansion",
    "PolySystem",
    "SimConfig",
    "SpectralModel",
    "SymTensor",
    "Trajectory",
    "build_basis",
    "closed_loop_spectrum",
    "compute_kernels",
    "decay_mask",
    "expand",
    "hjb_residual",
    "integrate",
    "project",
    "solve_are",
    "symmetrize",
]
