"""Closed-form spectral model of parametric down-conversion in a waveguide.

The phase mismatch is expanded to second order around a phasematched
triplet ``omega0_p = omega0_s + omega0_i``; all frequencies below are
detunings (rad/ps) from that triplet.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .spectrum import DETUNING, Spectrum
from .units import DomainError

#: |K_s + K_i| below this (ps^2/um) makes the contour equation linear
LINEAR_THRESHOLD = 1e-18


class DegenerateInputError(ValueError):
    pass


class SingularTiltError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class DispersionParams:
    """Phase-mismatch coefficients.

    kappa_s, kappa_i are inverse group-velocity differences to the pump
    (ps/um); K_s, K_i, K_p are group-velocity dispersions (ps^2/um).
    """

    kappa_s: float
    kappa_i: float
    K_s: float = 0.0
    K_i: float = 0.0
    K_p: float = 0.0

    def __post_init__(self):
        vals = (self.kappa_s, self.kappa_i, self.K_s, self.K_i, self.K_p)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("dispersion parameters must be finite")
        if self.kappa_i == 0:
            raise DomainError("kappa_i must be non-zero")

    @classmethod
    def from_normalized(cls, kappa_ratio, Ks_norm, Ki_norm, kappa_i_abs=1.0, Kp_norm=0.0,
                        kappa_i_sign=-1.0):
        """Build from ratios to |kappa_i| (K norms in ps)."""
        kappa_i = math.copysign(kappa_i_abs, kappa_i_sign)
        return cls(kappa_ratio * kappa_i, kappa_i, Ks_norm * kappa_i_abs,
                   Ki_norm * kappa_i_abs, Kp_norm * kappa_i_abs)

    def scaled(self, factor):
        return DispersionParams(self.kappa_s * factor, self.kappa_i * factor, self.K_s * factor,
                                self.K_i * factor, self.K_p * factor)

    def swapped(self):
        """Exchange the signal and idler roles."""
        return DispersionParams(self.kappa_i, self.kappa_s, self.K_i, self.K_s, self.K_p)


@dataclass(frozen=True)
class WaveguideSpec:
    length_um: float
    gamma: float
    omega0_s: float
    omega0_i: float

    def __post_init__(self):
        if not self.length_um > 0:
            raise DomainError("waveguide length must be positive")
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")
        if not (self.omega0_s > 0 and self.omega0_i > 0):
            raise DomainError("phasematched frequencies must be positive")

    @property
    def omega0_p(self):
        return self.omega0_s + self.omega0_i

    @classmethod
    def degenerate(cls, length_um, gamma, omega0):
        return cls(length_um, gamma, omega0, omega0)


@dataclass(frozen=True)
class PumpSpec:
    """Gaussian pump; ``sigma_p`` is the 1/e half-width of the amplitude."""

    omega_c: float
    sigma_p: float = math.inf
    cw: bool = False

    def __post_init__(self):
        if not self.omega_c > 0:
            raise DomainError("pump frequency must be positive")
        if not self.cw and not self.sigma_p > 0:
            raise DomainError("sigma_p must be positive for a pulsed pump")


class EllipseAxes(NamedTuple):
    sigma_minus: float
    sigma_plus: float


class Bandwidth(NamedTuple):
    sigma_pm: float
    fwhm: float


class Tilt(NamedTuple):
    slope: float
    angle_deg: float


def delta_k(params, nu_s, nu_i):
    """Phase mismatch (1/um) at signal/idler detunings (rad/ps); broadcasts."""
    p = params
    nu_s = np.asarray(nu_s, dtype=float)
    nu_i = np.asarray(nu_i, dtype=float)
    out = (p.kappa_s * nu_s + p.kappa_i * nu_i
           + 0.5 * (p.K_s - p.K_p) * nu_s**2 + 0.5 * (p.K_i - p.K_p) * nu_i**2
           - p.K_p * nu_s * nu_i)
    return float(out) if out.ndim == 0 else out


def _sinc(x):
    return np.sinc(np.asarray(x) / np.pi)


def jsa_amplitude(spec, pump, params, nu_s, nu_i):
    """Unnormalized joint spectral amplitude for a pulsed pump."""
    if pump.cw:
        raise DomainError("CW pump has no joint amplitude grid; use marginal_spectrum")
    delta = pump.omega_c - spec.omega0_p
    nu_s = np.asarray(nu_s, dtype=float)
    nu_i = np.asarray(nu_i, dtype=float)
    phase = 0.5 * spec.length_um * np.asarray(delta_k(params, nu_s, nu_i))
    if math.isinf(pump.sigma_p):
        envelope = np.ones(np.broadcast(nu_s, nu_i).shape)
    else:
        envelope = np.exp(-((nu_s + nu_i - delta) ** 2) / pump.sigma_p**2)
    out = envelope * _sinc(phase) * np.exp(-1j * phase)
    return complex(out) if out.ndim == 0 else out


def normalize_jsd(grid, cell_area):
    """Scale |f|^2 samples so that their midpoint Riemann sum times ``cell_area`` is one."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DegenerateInputError("empty grid")
    total = grid.sum() * cell_area
    if not total > 0:
        raise DegenerateInputError("grid has no positive weight")
    return grid / total


def gaussian_ellipse_matrix(spec, pump, params):
    inv_p = 0.0 if math.isinf(pump.sigma_p) else 1.0 / pump.sigma_p**2
    b = spec.gamma * spec.length_um**2 / 4.0
    ks, ki = params.kappa_s, params.kappa_i
    return np.array([[inv_p + b * ks * ks, inv_p + b * ks * ki],
                     [inv_p + b * ks * ki, inv_p + b * ki * ki]])


def ellipse_eigenvalues(spec, pump, params):
    """Minor and major semiaxis scales of the Gaussian correlation ellipse."""
    inv_p = 0.0 if math.isinf(pump.sigma_p) else 1.0 / pump.sigma_p**2
    g = spec.gamma * spec.length_um**2
    ks, ki = params.kappa_s, params.kappa_i
    half_trace = inv_p + g / 8.0 * (ks**2 + ki**2)
    radical = math.sqrt(inv_p**2 + (g / 8.0 * (ks**2 + ki**2)) ** 2 + inv_p * g / 2.0 * ks * ki)
    big = half_trace + radical
    if not big > 0:
        raise DomainError("ellipse matrix vanishes: no pump or phasematching confinement")
    # small = det / big avoids cancellation when the ellipse is very elongated
    small = inv_p * g / 4.0 * (ks - ki) ** 2 / big
    if small < 0:
        raise DomainError("ellipse matrix is not positive semi-definite")
    major = math.inf if small == 0 else 1.0 / math.sqrt(small)
    return EllipseAxes(1.0 / math.sqrt(big), major)


def phasematching_bandwidth(spec, params):
    """Phasematching width sigma_PM and its intensity FWHM, both in rad/ps."""
    s2 = params.kappa_s**2 + params.kappa_i**2
    if not s2 > 0:
        raise DomainError("both kappa coefficients vanish")
    sigma = 1.0 / math.sqrt(spec.gamma * s2 * spec.length_um**2 / 4.0)
    return Bandwidth(sigma, sigma * math.sqrt(2.0 * math.log(2.0)))


def phasematching_tilt(params, nu_s=0.0, nu_i=0.0, nu_p=0.0):
    """Slope d(nu_i)/d(nu_s) of the constant-mismatch contour and its angle in degrees."""
    p = params
    num = p.kappa_s + p.K_s * nu_s - p.K_p * nu_p
    den = p.kappa_i + p.K_i * nu_i - p.K_p * nu_p
    if den == 0:
        raise SingularTiltError("idler-side derivative of the mismatch vanishes")
    slope = -num / den
    return Tilt(slope, math.degrees(math.atan(slope)))


def tilt_slope(kappa_s, kappa_i, K_s, K_i, K_p, nu_s, nu_i, nu_p):
    """Array version of :func:`phasematching_tilt`; singular points give +/-inf or nan."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return -(kappa_s + K_s * nu_s - K_p * nu_p) / (kappa_i + K_i * nu_i - K_p * nu_p)


def contour_coefficients(kappa_s, kappa_i, K_s, K_i, K_p, delta, drop_Kp):
    """Coefficients (a, b, c) of a*nu_s^2 + b*nu_s + c = 0 along nu_i = delta - nu_s."""
    a = 0.5 * (K_s + K_i)
    b = kappa_s - kappa_i - K_i * delta
    c = kappa_i * delta + 0.5 * K_i * delta**2
    if not drop_Kp:
        c = c - 0.5 * K_p * delta**2
    return a, b, c


def solve_contour(a, b, c):
    """Real roots of a*x^2 + b*x + c = 0 elementwise.

    Returns ``(lo, hi, n)`` with ``lo <= hi`` and NaN for missing roots;
    ``n`` counts distinct real roots (identically-zero rows give ``n = -1``).
    """
    a, b, c = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c)))
    lo = np.full(a.shape, np.nan)
    hi = np.full(a.shape, np.nan)
    n = np.zeros(a.shape, dtype=int)

    lin = np.abs(a) < LINEAR_THRESHOLD
    with np.errstate(divide="ignore", invalid="ignore"):
        one = lin & (b != 0)
        lo[one] = -c[one] / b[one]
        n[one] = 1
        n[lin & (b == 0) & (c == 0)] = -1

        quad = ~lin
        disc = b * b - 4.0 * a * c
        double = quad & (disc == 0)
        lo[double] = -b[double] / (2.0 * a[double])
        n[double] = 1

        two = quad & (disc > 0)
        sq = np.sqrt(np.where(two, disc, 0.0))
        q = -0.5 * (b + np.where(b >= 0, 1.0, -1.0) * sq)
        r1 = q / a
        r2 = np.where(q != 0, c / np.where(q != 0, q, 1.0), 0.0)
        lo[two] = np.minimum(r1, r2)[two]
        hi[two] = np.maximum(r1, r2)[two]
        n[two] = 2

        # one Newton step, kept only where it lowers the residual
        for r in (lo, hi):
            f = (a * r + b) * r + c
            d = 2.0 * a * r + b
            step = np.where(d != 0, f / np.where(d != 0, d, 1.0), 0.0)
            cand = r - step
            better = np.abs((a * cand + b) * cand + c) < np.abs(f)
            r[...] = np.where(np.isfinite(cand) & better, cand, r)
    return lo, hi, n


def marginal_contour_roots(params, delta, drop_Kp=False):
    """Signal detunings where the mismatch vanishes on the line nu_i = delta - nu_s.

    Returns a sorted list of 0, 1 or 2 roots. With ``drop_Kp`` the pump
    dispersion term -K_p*delta^2/2 is neglected.
    """
    p = params
    a, b, c = contour_coefficients(p.kappa_s, p.kappa_i, p.K_s, p.K_i, p.K_p, float(delta), drop_Kp)
    lo, hi, n = solve_contour(a, b, c)
    n = int(n)
    if n < 0:
        raise DegenerateInputError("contour equation vanishes identically")
    return [float(lo), float(hi)][:n]


def marginal_spectrum(spec, params, pump_omega, axis, beam="signal"):
    """CW-pumped single-beam spectrum |sinc(L*dk/2)|^2 on a detuning axis.

    ``axis`` holds detunings of the chosen beam; the partner is fixed by
    energy conservation with the pump.
    """
    axis = np.asarray(axis, dtype=float)
    if axis.size > 1 and not np.all(np.diff(axis) > 0):
        raise DomainError("axis must be strictly increasing")
    delta = pump_omega - spec.omega0_p
    if beam == "signal":
        dk = delta_k(params, axis, delta - axis)
    elif beam == "idler":
        dk = delta_k(params, delta - axis, axis)
    else:
        raise ValueError(f"beam must be 'signal' or 'idler', got {beam!r}")
    intensity = _sinc(0.5 * spec.length_um * np.asarray(dk)) ** 2
    return Spectrum(axis, intensity, kind=DETUNING, meta={"beam": beam, "delta": delta})


def sinc_half_max_point(tol=1e-12):
    """Positive x where sinc(x)^2 = 1/2, by bisection."""
    lo, hi = 1.0, 2.0
    f = lambda x: (math.sin(x) / x) ** 2 - 0.5  # noqa: E731
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gamma_from_sinc_matching():
    """Factor gamma such that exp(-2*gamma*x^2) and sinc(x)^2 share their FWHM."""
    x0 = sinc_half_max_point()
    return math.log(2.0) / (2.0 * x0**2)
