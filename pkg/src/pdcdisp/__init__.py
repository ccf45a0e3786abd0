"""Spectral modelling and dispersion inference for waveguide photon-pair sources."""
from .jsa import (Bandwidth, DispersionParams, EllipseAxes, PumpSpec, Tilt, WaveguideSpec, delta_k,
                  ellipse_eigenvalues, gamma_from_sinc_matching, gaussian_ellipse_matrix, jsa_amplitude,
                  marginal_contour_roots, marginal_spectrum, normalize_jsd, phasematching_bandwidth,
                  phasematching_tilt)
from .mc import McConfig, McPosterior, McSample, ObservationSet, accept_sample, derived_quantities, run_mc
from .spectrum import Spectrum
from .units import C_UM_PER_PS, DomainError, Measured

__version__ = "0.1.0"
