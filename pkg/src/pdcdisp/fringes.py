"""Fabry-Perot transmission fringes of a multimode waveguide.

Forward model (Airy transmission per mode, incoherent sum) and the inverse:
Fourier analysis of a fringe spectrum in vacuum wavenumber 1/lambda, where
each mode shows up as a peak at its round-trip optical path 2*n_g*L.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.signal import find_peaks

from .spectrum import ANGULAR_FREQUENCY, WAVELENGTH_NM, Spectrum, SpectrumFormatError
from .units import C_UM_PER_PS, DomainError, Measured

#: normal-incidence Fresnel reflectivity of a facet with index ~3.3 in air
DEFAULT_FACET_REFLECTIVITY = 0.29


class NoFringeError(RuntimeError):
    """No Fourier peak rises above the noise floor."""


@dataclass(frozen=True)
class CavityMode:
    group_index: float
    weight: float = 1.0
    facet_reflectivity: float = DEFAULT_FACET_REFLECTIVITY

    def __post_init__(self):
        if not self.group_index > 1:
            raise DomainError("group index must exceed 1")
        if not self.weight >= 0:
            raise DomainError("mode weight must be non-negative")
        if not 0 <= self.facet_reflectivity < 1:
            raise DomainError("facet reflectivity must lie in [0, 1)")


@dataclass
class OpticalLengthPeak:
    """A Fourier-domain fringe peak.

    ``position_um`` is the round-trip optical path 2*n_g*L.
    """

    position_um: float
    position_sigma_um: float
    height: float
    relative_height: float
    fwhm_um: float
    snr: float
    group_index: Measured

    @property
    def optical_length_um(self):
        return 0.5 * self.position_um

    def to_dict(self):
        return {
            "position_um": self.position_um,
            "position_sigma_um": self.position_sigma_um,
            "height": self.height,
            "relative_height": self.relative_height,
            "fwhm_um": self.fwhm_um,
            "snr": self.snr,
            "group_index": self.group_index.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        kw = dict(d)
        kw["group_index"] = Measured.from_dict(d["group_index"])
        return cls(**kw)


@dataclass
class FringeAnalysis:
    """Peaks sorted by descending height, plus the Fourier trace they came from."""

    peaks: list
    length_um: Measured
    resolution_um: float
    noise_floor: float
    warnings: list = field(default_factory=list)
    path_um: np.ndarray = field(default=None, repr=False)
    magnitude: np.ndarray = field(default=None, repr=False)

    def __iter__(self):
        return iter(self.peaks)

    def __len__(self):
        return len(self.peaks)

    def __getitem__(self, i):
        return self.peaks[i]

    def by_group_index(self):
        return sorted(self.peaks, key=lambda p: p.group_index.value)


class WavenumberTrace(NamedTuple):
    wavenumber: np.ndarray  # 1/um, uniform
    signal: np.ndarray  # mean removed


def airy_transmission(phase, reflectivity):
    r = reflectivity
    return (1.0 - r) ** 2 / (1.0 + r * r - 2.0 * r * np.cos(phase))


def synthesize_fringes(modes, length_um, wavelength_nm, noise_sigma=0.0, rng=None):
    """Transmission spectrum of ``modes`` on a wavelength grid (nm).

    Noise is additive white Gaussian with standard deviation
    ``noise_sigma`` times the summed mode weight; negative samples are
    clipped to zero.
    """
    modes = list(modes)
    if not modes:
        raise ValueError("at least one cavity mode is required")
    if not length_um > 0:
        raise DomainError("waveguide length must be positive")
    lam_um = np.asarray(wavelength_nm, dtype=float) * 1e-3
    k0 = 2.0 * math.pi / lam_um
    intensity = np.zeros_like(lam_um)
    for m in modes:
        intensity += m.weight * airy_transmission(2.0 * k0 * m.group_index * length_um,
                                                  m.facet_reflectivity)
    if noise_sigma > 0:
        rng = np.random.default_rng(rng)
        total = sum(m.weight for m in modes)
        intensity = intensity + rng.normal(0.0, noise_sigma * total, size=intensity.shape)
    return Spectrum(np.asarray(wavelength_nm, dtype=float), np.clip(intensity, 0.0, None),
                    kind=WAVELENGTH_NM)


def _wavenumber(s):
    if s.kind == WAVELENGTH_NM:
        return 1e3 / s.axis
    if s.kind == ANGULAR_FREQUENCY:
        return s.axis / (2.0 * math.pi * C_UM_PER_PS)
    raise SpectrumFormatError(f"cannot map a {s.kind} axis to vacuum wavenumber")


def resample_uniform_wavenumber(s, n_points=None):
    """Interpolate onto a uniform 1/lambda grid (1/um) and remove the mean."""
    if len(s) < 8:
        raise SpectrumFormatError("need at least 8 samples")
    sigma = _wavenumber(s)
    d = np.diff(sigma)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise SpectrumFormatError("axis is not strictly monotone")
    y = s.intensity
    if d[0] < 0:
        sigma, y = sigma[::-1], y[::-1]
    n = len(s) if n_points is None else int(n_points)
    grid = np.linspace(sigma[0], sigma[-1], n)
    out = np.interp(grid, sigma, y)
    return WavenumberTrace(grid, out - out.mean())


def _half_max_width(mag, i, dx):
    half = 0.5 * mag[i]
    lo = i
    while lo > 0 and mag[lo] > half:
        lo -= 1
    hi = i
    while hi < mag.size - 1 and mag[hi] > half:
        hi += 1
    # linear interpolation of both crossings
    left = lo + (half - mag[lo]) / (mag[lo + 1] - mag[lo]) if mag[lo + 1] != mag[lo] else lo
    right = hi - (half - mag[hi]) / (mag[hi - 1] - mag[hi]) if mag[hi - 1] != mag[hi] else hi
    return (right - left) * dx


def _parabolic_offset(y0, y1, y2):
    den = y0 - 2.0 * y1 + y2
    return 0.0 if den == 0 else 0.5 * (y0 - y2) / den


def extract_group_indices(s, length_um, max_modes=3, *, pad_factor=8, window="hann",
                          floor_factor=8.0, sidelobe_bins=8.0, min_relative_height=0.01,
                          uncertainty="snr"):
    """Fourier-analyse a fringe spectrum and return one peak per detected mode.

    ``length_um`` may be a float or a :class:`Measured`. Peaks are searched
    above the round-trip path 2L (group index > 1); harmonics and window
    sidelobes of stronger peaks are discarded.

    Candidates must exceed ``floor_factor`` times the median Fourier
    magnitude and ``min_relative_height`` times the strongest candidate; the
    latter keeps interpolation artefacts of noise-free input out.

    ``uncertainty="snr"`` sets the position uncertainty to peak FWHM / SNR;
    ``"resolution"`` uses one unpadded resolution bin instead.
    """
    if max_modes < 1:
        raise ValueError("max_modes must be at least 1")
    L = length_um if isinstance(length_um, Measured) else Measured(float(length_um))
    if not L.value > 0:
        raise DomainError("waveguide length must be positive")

    trace = resample_uniform_wavenumber(s)
    n = trace.signal.size
    dsig = trace.wavenumber[1] - trace.wavenumber[0]
    if window == "hann":
        w = np.hanning(n)
    elif window in (None, "boxcar"):
        w = np.ones(n)
    elif window == "blackman":
        w = np.blackman(n)
    else:
        raise ValueError(f"unsupported window {window!r}")
    nfft = pad_factor * n
    mag = np.abs(np.fft.rfft(trace.signal * w, nfft))
    path = np.fft.rfftfreq(nfft, d=dsig)
    dpath = path[1]
    resolution = 1.0 / (n * dsig)

    valid = path > 2.0 * L.value
    if not np.any(valid):
        raise NoFringeError("spectrum too short to resolve any optical path above 2L")
    floor = float(np.median(mag[valid]))
    threshold = floor_factor * floor
    first = int(np.argmax(valid))
    idx, _ = find_peaks(mag[first:], height=threshold)
    idx = idx + first
    if idx.size == 0:
        raise NoFringeError("no Fourier peak above the noise floor")
    idx = idx[mag[idx] >= min_relative_height * mag[idx].max()]

    # pass 1: fold window sidelobes and unresolved neighbours into the stronger lobe
    order = idx[np.argsort(mag[idx])[::-1]]
    lobes = []
    merged = []  # (main lobe, absorbed peak) pairs of comparable height
    for i in order:
        near = [j for j in lobes if abs(path[i] - path[j]) < sidelobe_bins * resolution]
        if not near:
            lobes.append(i)
        elif mag[i] > 0.25 * mag[near[0]]:
            merged.append((near[0], i))

    # pass 2: drop repeats at integer multiples of a genuine peak's path, whichever is stronger
    bases = lobes + [i for _, i in merged]

    def is_harmonic(i):
        for j in bases:
            k = round(path[i] / path[j])
            if j != i and k >= 2 and abs(path[i] - k * path[j]) < 2.0 * k * resolution:
                return True
        return False

    accepted = [i for i in lobes if not is_harmonic(i)][:max_modes]
    warnings = [f"peaks at {path[j]:.1f} um and {path[i]:.1f} um are closer than "
                f"{sidelobe_bins:g} resolution bins and were merged"
                for j, i in merged if j in accepted]

    peaks = []
    for i in accepted:
        if 0 < i < mag.size - 1:
            y0, y1, y2 = np.log(mag[i - 1:i + 2])
            off = _parabolic_offset(y0, y1, y2)
            height = float(np.exp(y1 - 0.25 * (y0 - y2) * off))
        else:
            off, height = 0.0, float(mag[i])
        pos = float(path[i] + off * dpath)
        fwhm = _half_max_width(mag, i, dpath)
        snr = height / floor
        if uncertainty == "snr":
            sig_p = fwhm / snr
        elif uncertainty == "resolution":
            sig_p = resolution
        else:
            raise ValueError(f"unknown uncertainty model {uncertainty!r}")
        ng = pos / (2.0 * L.value)
        ng_sigma = ng * math.hypot(sig_p / pos, L.sigma / L.value)
        peaks.append(OpticalLengthPeak(pos, float(sig_p), height, 1.0, float(fwhm), float(snr),
                                       Measured(ng, float(ng_sigma))))
    top = max(p.height for p in peaks)
    for p in peaks:
        p.relative_height = p.height / top
    return FringeAnalysis(peaks, L, float(resolution), floor, warnings, path, mag)


def kappa_bar_from_optical_lengths(peak_pdc, peak_pump, length_um):
    """Mean group-index mismatch to the pump, (n_g,PDC - n_g,pump)/c, in ps/um.

    The uncertainty only carries the two peak-position uncertainties.
    """
    L = length_um.value if isinstance(length_um, Measured) else float(length_um)
    scale = 1.0 / (2.0 * L * C_UM_PER_PS)
    diff = peak_pdc.position_um - peak_pump.position_um
    sig = math.hypot(peak_pdc.position_sigma_um, peak_pump.position_sigma_um)
    return Measured(diff * scale, sig * scale)


def bandwidth_from_optical_lengths(peak_pdc, peak_pump, gamma):
    """Phasematching sigma_PM and intensity FWHM (rad/ps) with kappa_s = kappa_i.

    kappa*L equals the path difference over 2c, so the resonator length drops out.
    Returns two :class:`Measured` values.
    """
    kl = (peak_pdc.position_um - peak_pump.position_um) / (2.0 * C_UM_PER_PS)
    if kl == 0:
        raise DomainError("equal optical lengths give no phasematching confinement")
    sig_kl = math.hypot(peak_pdc.position_sigma_um, peak_pump.position_sigma_um) / (2.0 * C_UM_PER_PS)
    sigma = 2.0 / (math.sqrt(2.0 * gamma) * abs(kl))
    rel = sig_kl / abs(kl)
    fwhm = sigma * math.sqrt(2.0 * math.log(2.0))
    return Measured(sigma, sigma * rel), Measured(fwhm, fwhm * rel)
