"""Exciton transport efficiency in open quantum networks with the TC2 master equation."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .bath import DrudeBath, ExponentialKernel, correlation_quadrature, expand_correlation, spectral_density
from .efficiency import TransferResult, compute_ete, efficiency_operator
from .ensembles import EnsembleSummary, disorder_sweep, initial_state_sweep, sample_density_hs, sample_pure_haar
from .exciton import (ChromophoreGeometry, CompactnessScale, DisorderSpec, SiteBasisHamiltonian, apply_disorder,
                      couplings_from_geometry, fmo_default_geometry, fmo_default_hamiltonian, rescale_geometry)
from .landscape import ScanAxis, ScanGrid2D, gradient_norm_field, hessian_norm_field, scan_ete_2d, trap_site_sweep
from .model import ModelConfig, evaluate
from .tc2 import (GeneratorSet, OpenSystemState, SolverOptions, TrapLossConfig, assemble_generators, derivative,
                  propagate, propagate_oracle)
