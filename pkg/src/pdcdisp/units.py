"""Physical constants, unit conversions and uncertainty-carrying scalars.

Internal units: angular frequency in rad/ps, length in um, time in ps.
First-order (kappa) coefficients are in ps/um, second-order (K) in ps^2/um.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: speed of light in vacuum, um/ps (exact)
C_UM_PER_PS = 299.792458


class DomainError(ValueError):
    """Raised when an argument lies outside the physical domain of an operation."""


@dataclass(frozen=True)
class Measured:
    """A value with one standard uncertainty in the same unit."""

    value: float
    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise DomainError(f"uncertainty must be non-negative, got {self.sigma}")

    def __str__(self):
        return f"{self.value:.6g} +/- {self.sigma:.2g}"

    def to_dict(self):
        return {"value": self.value, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["value"]), float(d.get("sigma", 0.0)))


def _check_positive(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"{name} must be positive and finite, got {x!r}")
    if np.any(~np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return arr


def wavelength_to_angular_frequency(wavelength_um):
    """Vacuum wavelength (um) to angular frequency (rad/ps). Accepts arrays."""
    lam = _check_positive(wavelength_um, "wavelength")
    out = 2.0 * math.pi * C_UM_PER_PS / lam
    return float(out) if out.ndim == 0 else out


def angular_frequency_to_wavelength(omega):
    """Angular frequency (rad/ps) to vacuum wavelength (um). Accepts arrays."""
    w = _check_positive(omega, "angular frequency")
    out = 2.0 * math.pi * C_UM_PER_PS / w
    return float(out) if out.ndim == 0 else out


def nm_to_omega(wavelength_nm):
    return wavelength_to_angular_frequency(np.asarray(wavelength_nm, dtype=float) * 1e-3)


def omega_to_nm(omega):
    return angular_frequency_to_wavelength(omega) * 1e3


def detuning_bandwidth_to_wavelength_fwhm(delta_omega, lambda0_um):
    """First-order conversion of a frequency width (rad/ps) to a wavelength width in nm."""
    lam = float(_check_positive(lambda0_um, "lambda0"))
    return lam**2 * float(delta_omega) / (2.0 * math.pi * C_UM_PER_PS) * 1e3


def frequency_width_from_wavelength(center_nm, fwhm_nm):
    """Width in rad/ps spanned by the wavelength interval center +/- fwhm/2 (exact, not linearized)."""
    lo = center_nm - 0.5 * fwhm_nm
    hi = center_nm + 0.5 * fwhm_nm
    if lo <= 0:
        raise DomainError("wavelength interval extends to non-positive wavelengths")
    return float(nm_to_omega(lo) - nm_to_omega(hi))
