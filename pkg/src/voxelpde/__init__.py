"""Voxel-grid PDE solvers with Fourier-spectral semi-implicit stepping."""

from .grid import (
    BoundarySpec,
    Dirichlet,
    GridSpec,
    NeumannFlux,
    NeumannZeroFlux,
    Periodic,
    VoxelFields,
    create,
    fill_ghosts,
)
from .problems import (
    AllenCahn,
    AllenCahnNoCurvature,
    CahnHilliard,
    Diffusion,
    GrayScott,
    MultiPhase,
    MuDiffusion,
    SmoothedBoundary,
    make_problem,
)
from .stencils import StencilContext
from .timesteppers import NonFiniteError, RunMetrics, StepperSpec, run

__version__ = "0.1.0"
