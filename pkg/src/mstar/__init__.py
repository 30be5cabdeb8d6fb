"""Sample-size threshold for spatial random effects in multilevel areal regression.

Submodules
----------
graph      adjacency structures, Laplacians, random and lattice maps
spectral   Laplacian eigendecomposition and Leroux precision algebra
data       datasets, covariate structures C1-C3, forward simulation
threshold  closed-form precisions and the threshold m*
sampler    MCMC for the spatial and nonspatial models
simstudy   simulation-study harness
"""

from .graph import AreaGraph, build_laplacian, generate_grid_queen, generate_random_connected, is_connected
from .spectral import CovarianceSpec, SpectralLaplacian, decompose
from .data import MultilevelDataset, TrueParams, simulate_dataset, standardize
from .threshold import INFINITE, ThresholdReport, m_star, threshold_report
from .sampler import McmcConfig, ModelParams, PosteriorSummary, run_chain
from .kernels import BACKEND

__version__ = "0.1.0"
