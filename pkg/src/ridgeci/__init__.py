"""Kernel plug-in estimation of density ridges with bootstrap confidence regions."""

from __future__ import annotations

from .kernel import KernelSpec, kernel_value, kernel_gradient, kernel_hess_vech, validate_kernel_moments
from .kde import KernelDensity, fit, jet_at, log_jet_at, multiplier_jet_at, empirical_refit, default_bandwidth
from .spectral import SpectralFrame, EigenGapError, spectral_frame, vech, unvech, duplication_matrix
from .field import GridSpec, RidgeField, default_grid, evaluate_field, sublevel_region, hausdorff_to_set
from .bootstrap import BootstrapConfig, BootstrapDraws, ConfidenceRegion, confidence_region, bootstrap_quantile

__version__ = "0.1.0"
