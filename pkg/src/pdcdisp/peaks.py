"""Peak detection and Gaussian fitting for marginal spectra."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.ndimage import median_filter
from scipy.signal import find_peaks

from .spectrum import DETUNING, WAVELENGTH_NM, Spectrum
from .units import frequency_width_from_wavelength, nm_to_omega, omega_to_nm

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
DEFAULT_PROMINENCE = 0.15
#: fits broader than this (nm) are flagged: flat-topped bands near degeneracy
BROAD_FWHM_NM = 50.0


class FitFailure(RuntimeError):
    """Least squares did not converge; ``best`` holds the last parameter set."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best
        self.converged = False


@dataclass
class PeakFit:
    center: float
    fwhm: float
    amplitude: float
    covariance: np.ndarray = field(repr=False, default=None)
    kind: str = WAVELENGTH_NM

    @property
    def center_sigma(self):
        return float(math.sqrt(max(self.covariance[0, 0], 0.0))) if self.covariance is not None else math.nan


def gaussian(x, center, fwhm, amplitude):
    return amplitude * np.exp(-4.0 * math.log(2.0) * (x - center) ** 2 / fwhm**2)


def _smooth(y):
    """5-point running median; edges repeat the end sample instead of zero padding."""
    return median_filter(y, size=5, mode="nearest") if y.size >= 5 else y


def detect_peaks(s, max_peaks=2, min_prominence=DEFAULT_PROMINENCE):
    """Sample indices of the most prominent maxima after 5-point median smoothing.

    ``min_prominence`` is a fraction of the smoothed maximum. Results are
    ordered by descending prominence.
    """
    y = np.asarray(s.intensity, dtype=float)
    if y.size == 0:
        return []
    smooth = _smooth(y)
    top = smooth.max()
    if not top > 0:
        return []
    # pad with the minimum so maxima at the edges are still found
    padded = np.concatenate(([smooth.min()], smooth, [smooth.min()]))
    idx, props = find_peaks(padded, prominence=min_prominence * (top - smooth.min()))
    if idx.size == 0:
        return []
    order = np.argsort(props["prominences"])[::-1][:max_peaks]
    return [int(i) - 1 for i in idx[order]]


def _initial_width(x, y, i, base):
    half = base + 0.5 * (y[i] - base)
    lo = i
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = i
    while hi < y.size - 1 and y[hi] > half:
        hi += 1
    w = x[hi] - x[lo]
    return w if w > 0 else 3.0 * (x[1] - x[0])


def _model(params, x):
    out = np.full_like(x, params[-1])
    for k in range(0, params.size - 1, 3):
        out += gaussian(x, params[k], params[k + 1], params[k + 2])
    return out


def initial_guess(s, seeds):
    """Starting Gaussians for :func:`fit_gaussians` and the starting offset.

    Centre at the seed sample, width from the half-crossings of the smoothed
    data, amplitude from the smoothed maximum above a 5th-percentile baseline.
    """
    x = np.asarray(s.axis, dtype=float)
    y = np.asarray(s.intensity, dtype=float)
    smooth = _smooth(y)
    base = float(np.percentile(smooth, 5))
    fits = [PeakFit(float(x[i]), float(_initial_width(x, smooth, i, base)),
                    float(max(smooth[i] - base, 1e-12)), None, s.kind)
            for i in sorted(int(i) for i in seeds)]
    return fits, base


def fit_gaussians(s, seeds, max_iter=200, xtol=1e-8):
    """Least-squares fit of a sum of Gaussians plus a shared constant offset.

    ``seeds`` are sample indices (from :func:`detect_peaks`). Seeds whose
    fitted amplitude is not positive are dropped and the fit is repeated.
    """
    x = np.asarray(s.axis, dtype=float)
    y = np.asarray(s.intensity, dtype=float)
    seeds = sorted(int(i) for i in seeds)
    if not seeds:
        return []
    if x.size < 5 * len(seeds):
        raise ValueError("need at least 5 samples per seeded peak")
    start, base = initial_guess(s, seeds)
    p0 = [v for f in start for v in (f.center, f.fwhm, f.amplitude)] + [base]
    p0 = np.asarray(p0, dtype=float)

    # scale parameters to O(1) so the tolerance is meaningful
    xscale = max(float(np.ptp(x)), 1e-300)
    yscale = max(float(np.max(np.abs(y))), 1e-300)
    scale = np.ones_like(p0)
    scale[0:-1:3] = xscale
    scale[1:-1:3] = xscale
    scale[2:-1:3] = yscale
    scale[-1] = yscale
    shift = np.zeros_like(p0)
    shift[0:-1:3] = x[0]

    def resid(q):
        return (_model(q * scale + shift, x) - y) / yscale

    q0 = (p0 - shift) / scale
    res = least_squares(resid, q0, method="lm", xtol=xtol, ftol=1e-15, gtol=1e-15,
                        max_nfev=max_iter * (q0.size + 1))
    p = res.x * scale + shift
    p[1:-1:3] = np.abs(p[1:-1:3])

    amps = p[2:-1:3]
    if np.any(amps <= 0) and len(seeds) > 1:
        keep = [sd for sd, a in zip(seeds, amps) if a > 0]
        return fit_gaussians(s, keep, max_iter, xtol)

    dof = max(x.size - p.size, 1)
    s2 = 2.0 * res.cost / dof * yscale**2
    try:
        jac = res.jac / scale * yscale  # d(model)/d(p)
        cov_full = np.linalg.inv(jac.T @ jac) * s2
    except np.linalg.LinAlgError:
        cov_full = np.full((p.size, p.size), np.inf)

    fits = []
    for k in range(0, p.size - 1, 3):
        fits.append(PeakFit(float(p[k]), float(p[k + 1]), float(p[k + 2]),
                            cov_full[k:k + 3, k:k + 3].copy(), s.kind))
    fits.sort(key=lambda f: f.center)
    if res.status <= 0 or np.any(amps <= 0):
        raise FitFailure(f"Gaussian fit did not converge: {res.message}", fits)
    return fits


def fit_offset(s, fits):
    """Constant background of the last fit (recomputed from the residual mean)."""
    x = np.asarray(s.axis, dtype=float)
    model = sum((gaussian(x, f.center, f.fwhm, f.amplitude) for f in fits), np.zeros_like(x))
    return float(np.mean(s.intensity - model))


def residual_norm(s, fits, offset):
    x = np.asarray(s.axis, dtype=float)
    model = offset + sum((gaussian(x, f.center, f.fwhm, f.amplitude) for f in fits), np.zeros_like(x))
    return float(np.linalg.norm(model - s.intensity))


@dataclass
class ObservedPeak:
    """Fitted marginal peak in wavelength and as a detuning from degeneracy.

    ``fwhm_detuning`` is the full errorbar width in rad/ps.
    """

    center_nm: float
    fwhm_nm: float
    detuning: float
    fwhm_detuning: float
    low_confidence: bool = False

    def to_dict(self):
        return {"center_nm": self.center_nm, "fwhm_nm": self.fwhm_nm, "detuning_rad_per_ps": self.detuning,
                "fwhm_rad_per_ps": self.fwhm_detuning, "low_confidence": self.low_confidence}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["center_nm"]), float(d["fwhm_nm"]), float(d["detuning_rad_per_ps"]),
                   float(d["fwhm_rad_per_ps"]), bool(d.get("low_confidence", False)))


def _in_mask(wl_nm, mask):
    return any(lo <= wl_nm <= hi for lo, hi in mask)


def normalize_mask(mask):
    out = []
    for lo, hi in mask or ():
        lo = -math.inf if lo is None else float(lo)
        hi = math.inf if hi is None else float(hi)
        if not lo < hi:
            raise ValueError(f"empty mask interval [{lo}, {hi}]")
        out.append((lo, hi))
    out.sort()
    for (a0, a1), (b0, _) in zip(out, out[1:]):
        if b0 <= a1:
            raise ValueError("mask intervals must be disjoint")
    return out


@dataclass
class MarginalObservation:
    pump_wavelength_nm: float
    beam: str
    peaks: list
    mask: list = field(default_factory=list)
    band_nm: tuple = (0.0, math.inf)
    degeneracy_nm: float = math.nan

    def __post_init__(self):
        if self.beam not in ("signal", "idler"):
            raise ValueError(f"beam must be 'signal' or 'idler', got {self.beam!r}")
        self.mask = normalize_mask(self.mask)
        if not 1 <= len(self.peaks) <= 2:
            raise ValueError("an observation carries one or two peaks")

    def to_dict(self):
        return {
            "pump_wavelength_nm": self.pump_wavelength_nm,
            "beam": self.beam,
            "degeneracy_nm": self.degeneracy_nm,
            "band_nm": [self.band_nm[0], None if math.isinf(self.band_nm[1]) else self.band_nm[1]],
            "mask_nm": [[None if math.isinf(lo) else lo, None if math.isinf(hi) else hi]
                        for lo, hi in self.mask],
            "peaks": [p.to_dict() for p in self.peaks],
        }

    @classmethod
    def from_dict(cls, d, degeneracy_nm=None):
        band = d.get("band_nm") or [0.0, None]
        deg = d.get("degeneracy_nm", degeneracy_nm)
        return cls(float(d["pump_wavelength_nm"]), d["beam"],
                   [ObservedPeak.from_dict(p) for p in d["peaks"]],
                   [tuple(m) for m in d.get("mask_nm", [])],
                   (float(band[0] or 0.0), math.inf if band[1] is None else float(band[1])),
                   math.nan if deg is None else float(deg))


def observation_from_spectrum(s, pump_wavelength_nm, degeneracy_nm, beam="signal", mask=(),
                              max_peaks=2, min_prominence=DEFAULT_PROMINENCE,
                              broad_fwhm_nm=BROAD_FWHM_NM):
    """Detect and fit the peaks of one marginal spectrum on a wavelength axis.

    Peaks whose fitted centre falls inside a ``mask`` interval (nm) are
    discarded; the full FWHM becomes the detuning errorbar.
    """
    if s.kind != WAVELENGTH_NM:
        raise ValueError("observation spectra must be on a wavelength_nm axis")
    mask = normalize_mask(mask)
    seeds = detect_peaks(s, max_peaks, min_prominence)
    if not seeds:
        raise ValueError("no peak found in marginal spectrum")
    fits = fit_gaussians(s, seeds)
    omega0 = nm_to_omega(degeneracy_nm)
    peaks = []
    for f in fits:
        if _in_mask(f.center, mask) or f.center <= 0:
            continue
        peaks.append(ObservedPeak(
            f.center, f.fwhm, float(nm_to_omega(f.center) - omega0),
            frequency_width_from_wavelength(f.center, f.fwhm),
            low_confidence=f.fwhm > broad_fwhm_nm))
    peaks.sort(key=lambda p: p.detuning)
    return MarginalObservation(pump_wavelength_nm, beam, peaks, mask,
                               (float(s.axis[0]), float(s.axis[-1])), degeneracy_nm)


def detuning_spectrum_to_wavelength(s, omega0):
    """Re-express a detuning-axis spectrum on an increasing wavelength (nm) axis."""
    if s.kind != DETUNING:
        raise ValueError("expected a detuning axis")
    wl = omega_to_nm(omega0 + s.axis)
    return Spectrum(wl[::-1], s.intensity[::-1], kind=WAVELENGTH_NM, meta=dict(s.meta))
