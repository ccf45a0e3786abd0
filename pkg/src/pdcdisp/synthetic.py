"""Synthetic marginal observations generated through the full forward model."""
from __future__ import annotations

import numpy as np

from . import jsa
from .mc import ObservationSet
from .peaks import detuning_spectrum_to_wavelength, observation_from_spectrum
from .units import nm_to_omega, omega_to_nm

#: pump wavelengths (nm) of the six recorded marginal-spectrum panels
MARGINAL_PUMP_NM = (768.3, 768.0, 767.8, 767.5, 767.1, 766.7)
DETECTOR_CUTOFF_NM = 1650.0


def marginal_spectra(params, length_um, degeneracy_nm, pump_nm, band_nm=(1400.0, 1700.0),
                     n_points=1501, gamma=0.179):
    """Signal and idler marginals on a common wavelength grid (nm), as Spectrum objects."""
    omega0 = float(nm_to_omega(degeneracy_nm))
    spec = jsa.WaveguideSpec.degenerate(length_um, gamma, omega0)
    wl = np.linspace(band_nm[0], band_nm[1], n_points)
    detuning_axis = nm_to_omega(wl[::-1]) - omega0
    wp = float(nm_to_omega(pump_nm))
    out = {}
    for beam in ("signal", "idler"):
        m = jsa.marginal_spectrum(spec, params, wp, detuning_axis, beam)
        out[beam] = detuning_spectrum_to_wavelength(m, omega0)
    return out


def synthesize_observation_set(params, length_um, degeneracy_nm, pump_nm=MARGINAL_PUMP_NM,
                               band_nm=(1400.0, 1700.0), n_points=1501,
                               mask=((DETECTOR_CUTOFF_NM, None),),
                               excluded=(("signal", "lower"),), noise=0.0, seed=0,
                               delta_offset=0.0, provenance="synthetic"):
    """Run marginal spectra through peak fitting to build an :class:`ObservationSet`.

    ``delta_offset`` (rad/ps) shifts the true pump detuning relative to the
    nominal pump wavelengths recorded in the observations.
    """
    rng = np.random.default_rng(seed)
    observations = []
    for pump in pump_nm:
        true_pump_nm = pump
        if delta_offset:
            true_pump_nm = float(omega_to_nm(nm_to_omega(pump) + delta_offset))
        spectra = marginal_spectra(params, length_um, degeneracy_nm, true_pump_nm, band_nm, n_points)
        for beam, s in spectra.items():
            if noise:
                s.intensity = np.clip(s.intensity + rng.normal(0.0, noise, s.intensity.shape), 0, None)
            observations.append(observation_from_spectrum(s, pump, degeneracy_nm, beam, mask))
    return ObservationSet(observations, degeneracy_nm, list(excluded), provenance)
