"""Sampled one-dimensional spectra shared by the analysis modules."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WAVELENGTH_NM = "wavelength_nm"
ANGULAR_FREQUENCY = "angular_frequency_rad_per_ps"
DETUNING = "detuning_rad_per_ps"

AXIS_KINDS = (WAVELENGTH_NM, ANGULAR_FREQUENCY, DETUNING)


class SpectrumFormatError(ValueError):
    pass


@dataclass
class Spectrum:
    """Intensity sampled on a strictly increasing axis.

    ``kind`` tags the axis unit, one of :data:`AXIS_KINDS`.
    """

    axis: np.ndarray
    intensity: np.ndarray
    kind: str = WAVELENGTH_NM
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=float)
        self.intensity = np.asarray(self.intensity, dtype=float)
        if self.kind not in AXIS_KINDS:
            raise SpectrumFormatError(f"unknown axis kind {self.kind!r}")
        if self.axis.ndim != 1 or self.axis.shape != self.intensity.shape:
            raise SpectrumFormatError("axis and intensity must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(self.axis)) and np.all(np.isfinite(self.intensity))):
            raise SpectrumFormatError("spectrum contains NaN or Inf")
        if self.axis.size > 1 and not np.all(np.diff(self.axis) > 0):
            raise SpectrumFormatError("axis must be strictly increasing")
        if np.any(self.intensity < 0):
            raise SpectrumFormatError("intensity must be non-negative")

    def __len__(self):
        return self.axis.size
