"""Monte Carlo rejection sampling of normalized dispersion parameters.

Parameters are expressed relative to |kappa_i| (kappa_i = -1 in normalized
units): the contour equation is homogeneous in all coefficients, so the
marginal peak positions only constrain ratios. A sample is accepted when
every observed peak lies within its FWHM errorbar of a predicted contour
root and every predicted, observable root is matched by a peak.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import jsa
from .peaks import MarginalObservation, normalize_mask
from .units import C_UM_PER_PS, Measured, nm_to_omega, omega_to_nm

PARAM_NAMES = ("kappa_ratio", "Ks_norm", "Ki_norm", "delta_offset")

DEFAULT_PRIORS = {
    "kappa_ratio": (0.90, 1.00),
    "Ks_norm": (0.0, 5e-3),
    "Ki_norm": (0.0, 5e-3),
    "delta_offset": (-1.0, 1.0),
}

BLOCK_SIZE = 1 << 16


class EmptyPosteriorError(RuntimeError):
    pass


@dataclass
class McConfig:
    n_runs: int = 1_000_000
    seed: int = 0
    priors: dict = field(default_factory=lambda: dict(DEFAULT_PRIORS))
    drop_Kp: bool = True
    Kp_norm: float = 0.0
    signal_index_higher: bool = True
    n_bins: int = 50
    workers: int = 0

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        pri = dict(DEFAULT_PRIORS)
        pri.update({k: tuple(float(x) for x in v) for k, v in self.priors.items()})
        for name in pri:
            if name not in PARAM_NAMES:
                raise ValueError(f"unknown prior {name!r}")
            lo, hi = pri[name]
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"prior range for {name} is empty or not finite")
        self.priors = pri
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    def to_dict(self):
        return {"n_runs": self.n_runs, "seed": self.seed,
                "priors": {k: list(v) for k, v in self.priors.items()},
                "drop_Kp": self.drop_Kp, "Kp_norm": self.Kp_norm,
                "constraints": {"signal_index_higher": self.signal_index_higher},
                "n_bins": self.n_bins, "workers": self.workers}

    @classmethod
    def from_dict(cls, d):
        cons = d.get("constraints", {})
        return cls(n_runs=int(d.get("n_runs", 1_000_000)), seed=int(d.get("seed", 0)),
                   priors=d.get("priors", {}), drop_Kp=bool(d.get("drop_Kp", True)),
                   Kp_norm=float(d.get("Kp_norm", 0.0)),
                   signal_index_higher=bool(cons.get("signal_index_higher", True)),
                   n_bins=int(d.get("n_bins", 50)), workers=int(d.get("workers", 0)))


@dataclass
class McSample:
    kappa_ratio: float
    Ks_norm: float
    Ki_norm: float
    delta_offset: float = 0.0

    def to_params(self, kappa_i_abs=1.0, Kp_norm=0.0):
        return jsa.DispersionParams.from_normalized(self.kappa_ratio, self.Ks_norm, self.Ki_norm,
                                                    kappa_i_abs, Kp_norm)


@dataclass
class ObservationSet:
    """Marginal observations of both beams at several pump wavelengths.

    ``excluded`` lists (beam, branch) pairs, branch being ``"lower"`` or
    ``"upper"`` in frequency, that take no part in the acceptance test.
    """

    observations: list
    degeneracy_nm: float
    excluded: list = field(default_factory=list)
    provenance: str = ""

    def __post_init__(self):
        self.excluded = [tuple(e) for e in self.excluded]
        for beam, branch in self.excluded:
            if beam not in ("signal", "idler") or branch not in ("lower", "upper"):
                raise ValueError(f"bad excluded branch {(beam, branch)!r}")
        if len({o.pump_wavelength_nm for o in self.observations}) < 2:
            raise ValueError("need observations at two or more pump wavelengths")

    @property
    def omega0(self):
        return float(nm_to_omega(self.degeneracy_nm))

    def pump_detuning(self, pump_wavelength_nm):
        return float(nm_to_omega(pump_wavelength_nm)) - 2.0 * self.omega0

    def to_dict(self):
        return {"degeneracy_nm": self.degeneracy_nm, "provenance": self.provenance,
                "excluded_branches": [{"beam": b, "branch": r} for b, r in self.excluded],
                "observations": [o.to_dict() for o in self.observations]}

    @classmethod
    def from_dict(cls, d):
        deg = float(d["degeneracy_nm"])
        obs = [MarginalObservation.from_dict(o, deg) for o in d["observations"]]
        exc = [(e["beam"], e["branch"]) for e in d.get("excluded_branches", [])]
        return cls(obs, deg, exc, d.get("provenance", ""))


def _observable(root, omega0, obs):
    w = omega0 + root
    if not w > 0:
        return False
    wl = float(omega_to_nm(w))
    lo, hi = obs.band_nm
    if not lo <= wl <= hi:
        return False
    return not any(a <= wl <= b for a, b in obs.mask)


def _peak_excluded(obs, k, excluded):
    if len(obs.peaks) != 2:
        return False
    branch = "lower" if k == 0 else "upper"
    return (obs.beam, branch) in excluded


def accept_params(params, delta_offset, obs_set, drop_Kp=True, signal_index_higher=True):
    """Acceptance test for unnormalized :class:`~pdcdisp.jsa.DispersionParams`.

    Reference implementation, one sample at a time.
    """
    if signal_index_higher and not params.kappa_s > params.kappa_i:
        return False
    omega0 = obs_set.omega0
    for obs in obs_set.observations:
        delta = obs_set.pump_detuning(obs.pump_wavelength_nm) + delta_offset
        try:
            roots = jsa.marginal_contour_roots(params, delta, drop_Kp)
        except jsa.DegenerateInputError:
            return False
        if obs.beam == "idler":
            roots = sorted(delta - r for r in roots)
        for k, pk in enumerate(obs.peaks):
            if _peak_excluded(obs, k, obs_set.excluded):
                continue
            if not any(abs(r - pk.detuning) <= 0.5 * pk.fwhm_detuning for r in roots):
                return False
        for k, r in enumerate(roots):
            if len(roots) == 2 and (obs.beam, ("lower", "upper")[k]) in obs_set.excluded:
                continue
            if not _observable(r, omega0, obs):
                continue
            if not any(abs(r - pk.detuning) <= 0.5 * pk.fwhm_detuning for pk in obs.peaks):
                return False
    return True


def accept_sample(sample, obs_set, drop_Kp=True, Kp_norm=0.0, signal_index_higher=True):
    """Acceptance test for a normalized sample (kappa_i = -1)."""
    if signal_index_higher and not sample.kappa_ratio < 1.0:
        return False
    params = sample.to_params(1.0, Kp_norm)
    return accept_params(params, sample.delta_offset, obs_set, drop_Kp, signal_index_higher)


class _CompiledObservation:
    """Flattened arrays for the vectorized acceptance test."""

    def __init__(self, obs, obs_set):
        self.beam = obs.beam
        self.delta = obs_set.pump_detuning(obs.pump_wavelength_nm)
        self.centers = np.array([p.detuning for p in obs.peaks])
        self.half = np.array([0.5 * p.fwhm_detuning for p in obs.peaks])
        self.peak_used = [not _peak_excluded(obs, k, obs_set.excluded) for k in range(len(obs.peaks))]
        self.skip = ((obs.beam, "lower") in obs_set.excluded, (obs.beam, "upper") in obs_set.excluded)
        self.band = obs.band_nm
        self.mask = list(obs.mask)
        self.omega0 = obs_set.omega0

    def observable(self, r):
        w = self.omega0 + r
        pos = np.isfinite(w) & (w > 0)
        wl = np.full(r.shape, np.nan)
        wl[pos] = omega_to_nm(w[pos])
        ok = pos & (wl >= self.band[0]) & (wl <= self.band[1])
        for a, b in self.mask:
            ok &= ~((wl >= a) & (wl <= b))
        return ok


def _accept_block(theta, compiled, drop_Kp, Kp_norm, signal_index_higher):
    """Vectorized twin of :func:`accept_sample` for rows of normalized samples."""
    ratio, ks, ki, off = theta.T
    ok = np.ones(ratio.shape, dtype=bool)
    if signal_index_higher:
        ok &= ratio < 1.0
    for c in compiled:
        delta = c.delta + off
        a, b, cc = jsa.contour_coefficients(-ratio, -1.0, ks, ki, Kp_norm, delta, drop_Kp)
        lo, hi, n = jsa.solve_contour(a, b, cc)
        ok &= n >= 0
        if c.beam == "idler":
            lo, hi = np.where(n == 2, delta - hi, delta - lo), np.where(n == 2, delta - lo, np.nan)
        roots = (lo, hi)
        for center, half, used in zip(c.centers, c.half, c.peak_used):
            if used:
                ok &= (np.abs(lo - center) <= half) | (np.abs(hi - center) <= half)
        for r, skip in zip(roots, c.skip):
            need = np.isfinite(r) & c.observable(r)
            if skip:
                need &= n != 2
            matched = np.zeros(ratio.shape, dtype=bool)
            for center, half in zip(c.centers, c.half):
                matched |= np.abs(r - center) <= half
            ok &= ~need | matched
    return ok


def _draw_block(seed, block, count, lows, widths):
    """Uniform draws for samples block*BLOCK_SIZE ... + count - 1.

    Row j depends only on (seed, global index), never on ``count``.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(block,))
    u = np.random.Generator(np.random.PCG64(ss)).random((count, len(PARAM_NAMES)))
    return lows + widths * u


def _worker_count(requested):
    if requested and requested > 0:
        return requested
    env = os.environ.get("PDC_THREADS", "0").strip()
    n = int(env) if env else 0
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def mode(self):
        k = int(np.argmax(self.counts))
        return float(0.5 * (self.edges[k] + self.edges[k + 1]))


@dataclass
class McPosterior:
    samples: np.ndarray  # accepted rows, columns PARAM_NAMES, in draw order
    n_runs: int
    histograms: dict
    config: McConfig = None

    @property
    def n_accepted(self):
        return int(self.samples.shape[0])

    @property
    def acceptance_rate(self):
        return self.n_accepted / self.n_runs

    def column(self, name):
        return self.samples[:, PARAM_NAMES.index(name)]

    def estimates(self):
        out = {}
        for name in PARAM_NAMES:
            col = self.column(name)
            out[name] = {"mode": self.histograms[name].mode(), "mean": float(col.mean()),
                         "std": float(col.std(ddof=1)) if col.size > 1 else 0.0,
                         "median": float(np.median(col))}
        return out

    def ks_ki_correlation(self):
        ks, ki = self.column("Ks_norm"), self.column("Ki_norm")
        if ks.size < 3 or ks.std() == 0 or ki.std() == 0:
            return math.nan
        return float(np.corrcoef(ks, ki)[0, 1])

    def to_dict(self, include_samples=True):
        d = {"n_runs": self.n_runs, "n_accepted": self.n_accepted,
             "acceptance_rate": self.acceptance_rate,
             "parameters": list(PARAM_NAMES),
             "estimates": self.estimates(),
             "ks_ki_correlation": self.ks_ki_correlation(),
             "histograms": {k: {"edges": h.edges.tolist(), "counts": h.counts.tolist()}
                            for k, h in self.histograms.items()}}
        if self.config is not None:
            d["config"] = self.config.to_dict()
        if include_samples:
            d["samples"] = self.samples.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        samples = np.asarray(d.get("samples", []), dtype=float).reshape(-1, len(PARAM_NAMES))
        hists = {k: Histogram(np.asarray(v["edges"], dtype=float), np.asarray(v["counts"], dtype=int))
                 for k, v in d["histograms"].items()}
        cfg = McConfig.from_dict(d["config"]) if "config" in d else None
        return cls(samples, int(d["n_runs"]), hists, cfg)


def _histograms(samples, priors, n_bins):
    out = {}
    for j, name in enumerate(PARAM_NAMES):
        lo, hi = priors[name]
        if hi == lo:
            pad = max(abs(lo), 1.0) * 1e-9
            lo, hi = lo - pad, hi + pad
        counts, edges = np.histogram(samples[:, j], bins=n_bins, range=(lo, hi))
        out[name] = Histogram(edges, counts)
    return out


def run_mc(config, obs_set, workers=None):
    """Draw ``config.n_runs`` uniform samples and keep those passing the acceptance test.

    Samples are generated in fixed blocks keyed by (seed, block index), so the
    result is identical for any number of worker threads.
    """
    lows = np.array([config.priors[k][0] for k in PARAM_NAMES])
    widths = np.array([config.priors[k][1] - config.priors[k][0] for k in PARAM_NAMES])
    compiled = [_CompiledObservation(o, obs_set) for o in obs_set.observations]
    n_blocks = -(-config.n_runs // BLOCK_SIZE)

    def task(block):
        count = min(BLOCK_SIZE, config.n_runs - block * BLOCK_SIZE)
        theta = _draw_block(config.seed, block, count, lows, widths)
        return theta[_accept_block(theta, compiled, config.drop_Kp, config.Kp_norm,
                                   config.signal_index_higher)]

    n_workers = _worker_count(config.workers if workers is None else workers)
    if n_workers == 1 or n_blocks == 1:
        parts = [task(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(task, range(n_blocks)))
    samples = np.concatenate(parts, axis=0) if parts else np.empty((0, len(PARAM_NAMES)))
    if samples.shape[0] == 0:
        raise EmptyPosteriorError(
            f"no sample out of {config.n_runs} was accepted; widen the priors or the errorbars")
    return McPosterior(samples, config.n_runs, _histograms(samples, config.priors, config.n_bins), config)


def group_index_difference(kappa_ratio, kappa_i_abs):
    """n_g,signal - n_g,idler from the normalized kappa ratio."""
    return C_UM_PER_PS * kappa_i_abs * (1.0 - np.asarray(kappa_ratio))


def tilt_curve(post, obs_set, pump_wavelengths_nm, drop_Kp=True, Kp_norm=0.0):
    """Phasematching tilt angle (deg) at the contour roots for each pump wavelength.

    Returns one record per pump wavelength and root branch with the median
    and standard deviation over accepted samples.
    """
    ratio, ks, ki, off = (post.column(n) for n in PARAM_NAMES)
    kp = 0.0 if drop_Kp else Kp_norm
    rows = []
    for wl in pump_wavelengths_nm:
        delta = obs_set.pump_detuning(wl) + off
        a, b, c = jsa.contour_coefficients(-ratio, -1.0, ks, ki, Kp_norm, delta, drop_Kp)
        lo, hi, n = jsa.solve_contour(a, b, c)
        for branch, nu_s in (("lower", lo), ("upper", hi)):
            slope = jsa.tilt_slope(-ratio, -1.0, ks, ki, kp, nu_s, delta - nu_s, delta)
            ang = np.degrees(np.arctan(slope))
            ang = ang[np.isfinite(ang)]
            if ang.size == 0:
                continue
            rows.append({"pump_wavelength_nm": float(wl), "branch": branch,
                         "signal_detuning_rad_per_ps": float(np.median(nu_s[np.isfinite(nu_s)])),
                         "angle_deg_median": float(np.median(ang)),
                         "angle_deg_std": float(ang.std(ddof=1)) if ang.size > 1 else 0.0,
                         "n_samples": int(ang.size)})
    return rows


def derived_quantities(post, kappa_i_abs, degeneracy_nm, obs_set=None, pump_wavelengths_nm=()):
    """Signal-idler group-index difference and phasematching tilt from a posterior.

    ``kappa_i_abs`` is a :class:`Measured` |kappa_i| in ps/um.
    """
    k = kappa_i_abs if isinstance(kappa_i_abs, Measured) else Measured(float(kappa_i_abs))
    ratio = post.column("kappa_ratio")
    est = post.estimates()["kappa_ratio"]
    dng_samples = group_index_difference(ratio, k.value)
    dng_mode = float(group_index_difference(est["mode"], k.value))
    stat = float(dng_samples.std(ddof=1)) if dng_samples.size > 1 else 0.0
    spread = math.hypot(stat, dng_mode * k.sigma / k.value)
    tilt_deg = np.degrees(np.arctan(-ratio))
    out = {
        "group_index_difference_signal_idler": {"value": dng_mode, "sigma": spread,
                                                "mean": float(dng_samples.mean())},
        "tilt_at_degeneracy_deg": {"value": float(math.degrees(math.atan(-est["mode"]))),
                                   "median": float(np.median(tilt_deg)),
                                   "sigma": float(tilt_deg.std(ddof=1)) if tilt_deg.size > 1 else 0.0},
        "degeneracy_nm": degeneracy_nm,
        "kappa_i_abs_ps_per_um": k.to_dict(),
    }
    if obs_set is not None and len(pump_wavelengths_nm):
        cfg = post.config or McConfig()
        out["tilt_curve"] = tilt_curve(post, obs_set, pump_wavelengths_nm, cfg.drop_Kp, cfg.Kp_norm)
    return out
