"""Graph Fourier neural ODEs for molecular dynamics."""

from . import autodiff  # noqa: F401  (sets float64 as torch default)
from .errors import GFNodeError
from .graph import (DEFAULT_CUTOFF, LaplacianSpectrum, MolecularFrame, MolecularGraph,
                    Trajectory, build_graph, eig_decompose, graph_spectrum, laplacian)
from .model import GFNodeModel, ModelConfig, predict
from .ode import SolverConfig, integrate
from .spectral import SpectralState, gft, igft, truncation_error
from .training import TrainConfig, fit, mse_loss, sample_instances

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CUTOFF", "GFNodeError", "GFNodeModel", "LaplacianSpectrum", "ModelConfig",
    "MolecularFrame", "MolecularGraph", "SolverConfig", "SpectralState", "TrainConfig",
    "Trajectory", "build_graph", "eig_decompose", "fit", "gft", "graph_spectrum", "igft",
    "integrate", "laplacian", "mse_loss", "predict", "sample_instances", "truncation_error",
]
