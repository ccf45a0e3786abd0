"""Command-line interface: ``pdcdisp <command> ...``.

Exit codes: 0 ok, 1 I/O or parse error, 2 no fringe found, 3 empty
posterior, 64 usage error.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import fringes, jsa, mc
from .io import FormatError, ParamFile, read_json, read_spectrum_csv, write_json, write_spectrum_csv
from .spectrum import WAVELENGTH_NM, Spectrum, SpectrumFormatError
from .units import DomainError, Measured, detuning_bandwidth_to_wavelength_fwhm, nm_to_omega, omega_to_nm

EXIT_OK, EXIT_IO, EXIT_NO_FRINGE, EXIT_EMPTY_POSTERIOR, EXIT_USAGE = 0, 1, 2, 3, 64

#: fringe spectra centred below this wavelength (nm) are taken as pump-band measurements
PUMP_BAND_LIMIT_NM = 1000.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text, n=None, name="value"):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise UsageError(f"{name}: expected {n} comma-separated numbers, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise UsageError(f"{name}: values must be finite")
    return vals


def _band_label(nm):
    return format(nm, "g").replace(".", "p")


# --- commands ---------------------------------------------------------------

def cmd_fp_analyze(args):
    if args.max_modes < 1:
        raise UsageError("--max-modes must be at least 1")
    if not args.length_um > 0 or args.length_sigma_um < 0:
        raise UsageError("--length-um must be positive and --length-sigma-um non-negative")
    s = read_spectrum_csv(args.input)
    L = Measured(args.length_um, args.length_sigma_um)
    res = fringes.extract_group_indices(s, L, args.max_modes, uncertainty=args.uncertainty)
    wl = s.axis if s.kind == WAVELENGTH_NM else omega_to_nm(s.axis)
    write_json(args.out, {
        "input": Path(args.input).name,
        "band_nm": [float(np.min(wl)), float(np.max(wl))],
        "length_um": L.to_dict(),
        "resolution_um": res.resolution_um,
        "noise_floor": res.noise_floor,
        "uncertainty_model": args.uncertainty,
        "peaks": [p.to_dict() for p in res.peaks],
        "warnings": res.warnings,
    })
    for p in res.peaks:
        print(f"path {p.position_um:.2f} um  n_g = {p.group_index.value:.4f} +/- {p.group_index.sigma:.4f}"
              f"  rel. height {p.relative_height:.3f}")
    return EXIT_OK


def cmd_synth_fringes(args):
    ng = _floats(args.ng, name="--ng")
    weights = _floats(args.weights, name="--weights") if args.weights else [1.0] * len(ng)
    if len(ng) != len(weights) or not ng:
        raise UsageError("--ng and --weights must have the same, non-zero length")
    lo, hi = _floats(args.band_nm, 2, "--band-nm")
    if not 0 < lo < hi:
        raise UsageError("--band-nm must be an increasing pair of positive wavelengths")
    if args.points < 8 or args.noise < 0 or not args.length_um > 0:
        raise UsageError("need --points >= 8, --noise >= 0 and --length-um > 0")
    try:
        modes = [fringes.CavityMode(n, w, args.reflectivity) for n, w in zip(ng, weights)]
    except DomainError as e:
        raise UsageError(str(e)) from None
    wl = np.linspace(lo, hi, args.points)
    s = fringes.synthesize_fringes(modes, args.length_um, wl, args.noise, np.random.default_rng(args.seed))
    comments = [f"synthetic Fabry-Perot fringes: ng={args.ng} weights={','.join(format(w, 'g') for w in weights)}",
                f"length_um={args.length_um:g} reflectivity={args.reflectivity:g} noise={args.noise:g}"
                # the seed only matters, and is only recorded, when noise is drawn
                + (f" seed={args.seed}" if args.noise > 0 else "")]
    write_spectrum_csv(args.out, s, comments)
    return EXIT_OK


def _bandwidth_record(pf):
    bw = jsa.phasematching_bandwidth(pf.waveguide(), pf.dispersion)
    lam0_um = pf.degeneracy_nm * 1e-3
    return {
        "sigma_pm_rad_per_ps": bw.sigma_pm,
        "fwhm_rad_per_ps": bw.fwhm,
        "fwhm_nm": detuning_bandwidth_to_wavelength_fwhm(bw.fwhm, lam0_um),
        "degeneracy_nm": pf.degeneracy_nm,
    }


def cmd_bandwidth(args):
    pf = ParamFile.load(args.params)
    rec = _bandwidth_record(pf)
    rec["inputs"] = pf.data
    write_json(args.out, rec)
    print(f"sigma_PM = {rec['sigma_pm_rad_per_ps']:.4f} rad/ps, FWHM = {rec['fwhm_rad_per_ps']:.4f} rad/ps"
          f" = {rec['fwhm_nm']:.3f} nm at {pf.degeneracy_nm:g} nm")
    return EXIT_OK


def cmd_marginals(args):
    pf = ParamFile.load(args.params)
    pumps = _floats(args.pump_nm, name="--pump-nm")
    if not pumps or not all(p > 0 for p in pumps):
        raise UsageError("--pump-nm needs at least one positive wavelength")
    parts = args.axis_nm.split(",")
    if len(parts) != 3:
        raise UsageError("--axis-nm expects lo,hi,n")
    lo, hi = _floats(",".join(parts[:2]), 2, "--axis-nm")
    try:
        n = int(parts[2])
    except ValueError:
        raise UsageError("--axis-nm: point count must be an integer") from None
    if not (0 < lo < hi and n >= 2):
        raise UsageError("--axis-nm is degenerate: need 0 < lo < hi and n >= 2")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = pf.waveguide()
    omega0 = pf.omega0
    wl = np.linspace(lo, hi, n)
    detuning_axis = nm_to_omega(wl[::-1]) - omega0
    drop = not args.keep_kp
    roots_out = []
    for pump in pumps:
        wp = float(nm_to_omega(pump))
        delta = wp - spec.omega0_p
        for beam in ("signal", "idler"):
            m = jsa.marginal_spectrum(spec, pf.dispersion, wp, detuning_axis, beam)
            s = Spectrum(wl, m.intensity[::-1].copy(), kind=WAVELENGTH_NM)
            write_spectrum_csv(out_dir / f"{beam}_{_band_label(pump)}nm.csv", s,
                               [f"{beam} marginal, pump {pump:g} nm, degeneracy {pf.degeneracy_nm:g} nm"])
        # adding 0.0 turns -0.0 into 0.0
        roots = [r + 0.0 for r in jsa.marginal_contour_roots(pf.dispersion, delta, drop)]
        idler = sorted(delta - r + 0.0 for r in roots)
        roots_out.append({
            "pump_wavelength_nm": pump,
            "pump_detuning_rad_per_ps": delta,
            "signal_detuning_rad_per_ps": roots,
            "idler_detuning_rad_per_ps": idler,
            "signal_wavelength_nm": [float(omega_to_nm(omega0 + r)) for r in roots],
            "idler_wavelength_nm": [float(omega_to_nm(omega0 + r)) for r in idler],
        })
    write_json(out_dir / "roots.json", {"degeneracy_nm": pf.degeneracy_nm, "drop_Kp": drop,
                                        "roots": roots_out})
    return EXIT_OK


def _write_hist_csv(directory, post):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, h in post.histograms.items():
        lines = [f"# posterior histogram of {name}, {post.n_accepted} accepted of {post.n_runs}",
                 "bin_low,bin_high,count"]
        lines += [f"{format(float(a), '.17g')},{format(float(b), '.17g')},{int(c)}"
                  for a, b, c in zip(h.edges[:-1], h.edges[1:], h.counts)]
        (directory / f"{name}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_mc_fit(args):
    obs = mc.ObservationSet.from_dict(read_json(args.obs))
    cfg = mc.McConfig.from_dict(read_json(args.config))
    post = mc.run_mc(cfg, obs, workers=args.workers)
    d = post.to_dict()
    d["observations"] = obs.to_dict()
    write_json(args.out, d)
    if args.hist_csv:
        _write_hist_csv(args.hist_csv, post)
    print(f"accepted {post.n_accepted} of {post.n_runs} samples "
          f"(acceptance rate {post.acceptance_rate:.3e})")
    return EXIT_OK


def _classify_fringes(records):
    """Split fp-analyze records into (pump-band, PDC-band) by band centre."""
    pump, pdc = [], []
    for rec in records:
        centre = 0.5 * (rec["band_nm"][0] + rec["band_nm"][1])
        (pump if centre < PUMP_BAND_LIMIT_NM else pdc).append(rec)
    if len(pump) != 1 or len(pdc) != 1:
        raise FormatError("report needs exactly one pump-band and one PDC-band fp-analyze result")
    return pump[0], pdc[0]


def _peaks(rec):
    peaks = [fringes.OpticalLengthPeak.from_dict(p) for p in rec["peaks"]]
    if not peaks:
        raise FormatError(f"{rec.get('input', 'fringe result')}: no peaks")
    return peaks


def build_report(posterior, fringe_records, pf):
    """Combine fringe analyses, parameters and a posterior into one summary record."""
    pump_rec, pdc_rec = _classify_fringes(fringe_records)
    pump_peaks, pdc_peaks = _peaks(pump_rec), _peaks(pdc_rec)
    tir_pdc = max(pdc_peaks, key=lambda p: p.height)
    bragg = min(pump_peaks, key=lambda p: p.group_index.value)
    others = [p for p in pump_peaks if p is not bragg]
    tir_pump = max(others, key=lambda p: p.height) if others else None

    kbar = fringes.kappa_bar_from_optical_lengths(tir_pdc, bragg, pf.length)
    sigma_pm, fwhm = fringes.bandwidth_from_optical_lengths(tir_pdc, bragg, pf.gamma)
    lam0_um = pf.degeneracy_nm * 1e-3
    fwhm_nm = Measured(detuning_bandwidth_to_wavelength_fwhm(fwhm.value, lam0_um),
                       detuning_bandwidth_to_wavelength_fwhm(fwhm.sigma, lam0_um))

    post = mc.McPosterior.from_dict(posterior)
    est = post.estimates()
    kappa_i_abs = Measured(abs(kbar.value), kbar.sigma)
    obs_set = None
    pumps = ()
    if "observations" in posterior:
        obs_set = mc.ObservationSet.from_dict(posterior["observations"])
        pumps = sorted({o.pump_wavelength_nm for o in obs_set.observations}, reverse=True)
    derived = mc.derived_quantities(post, kappa_i_abs, pf.degeneracy_nm, obs_set, pumps)

    def row(name, unit, value, sigma, **extra):
        return {"quantity": name, "unit": unit, "value": value, "sigma": sigma, **extra}

    rows = []
    if tir_pump is not None:
        rows.append(row("group_index_tir_pump_band", "", tir_pump.group_index.value, tir_pump.group_index.sigma))
    rows += [
        row("group_index_bragg_pump_band", "", bragg.group_index.value, bragg.group_index.sigma),
        row("group_index_tir_pdc_band", "", tir_pdc.group_index.value, tir_pdc.group_index.sigma),
        row("kappa_bar", "ps/um", kbar.value, kbar.sigma),
        row("pm_bandwidth_fwhm", "nm", fwhm_nm.value, fwhm_nm.sigma),
    ]
    for name, unit in (("kappa_ratio", ""), ("Ks_norm", "ps"), ("Ki_norm", "ps")):
        e = est[name]
        rows.append(row(name, unit, e["mode"], e["std"], mean=e["mean"]))
    dng = derived["group_index_difference_signal_idler"]
    rows.append(row("group_index_difference_signal_idler", "", dng["value"], dng["sigma"]))
    tilt = derived["tilt_at_degeneracy_deg"]
    rows.append(row("tilt_at_degeneracy", "deg", tilt["value"], tilt["sigma"]))
    return {
        "rows": rows,
        "pm_bandwidth": {"sigma_pm_rad_per_ps": sigma_pm.to_dict(), "fwhm_rad_per_ps": fwhm.to_dict(),
                         "fwhm_nm": fwhm_nm.to_dict(), "degeneracy_nm": pf.degeneracy_nm,
                         "gamma": pf.gamma},
        "posterior": {"n_runs": post.n_runs, "n_accepted": post.n_accepted,
                      "estimates": est, "ks_ki_correlation": post.ks_ki_correlation()},
        "tilt_curve": derived.get("tilt_curve", []),
        "sources": {"pump_band_fringes": pump_rec.get("input"), "pdc_band_fringes": pdc_rec.get("input")},
    }


def cmd_report(args):
    posterior = read_json(args.posterior)
    if "histograms" not in posterior or "n_runs" not in posterior:
        raise FormatError(f"{args.posterior}: not a posterior file")
    records = [read_json(f) for f in args.fringe]
    for f, rec in zip(args.fringe, records):
        if "peaks" not in rec or "band_nm" not in rec:
            raise FormatError(f"{f}: not an fp-analyze result")
    pf = ParamFile.load(args.params)
    rep = build_report(posterior, records, pf)
    write_json(args.out, rep)
    for r in rep["rows"]:
        print(f"{r['quantity']:<38s} {r['value']:.6g} +/- {r['sigma']:.2g} {r['unit']}")
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def build_parser():
    p = _Parser(prog="pdcdisp", description="Dispersion analysis of waveguide photon-pair sources.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("fp-analyze", help="group indices from a Fabry-Perot fringe spectrum")
    a.add_argument("--input", required=True)
    a.add_argument("--length-um", type=float, required=True)
    a.add_argument("--length-sigma-um", type=float, default=0.0)
    a.add_argument("--max-modes", type=int, required=True)
    a.add_argument("--uncertainty", choices=("snr", "resolution"), default="snr")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_fp_analyze)

    a = sub.add_parser("synth-fringes", help="synthesize a multimode fringe spectrum")
    a.add_argument("--ng", required=True, help="comma-separated group indices")
    a.add_argument("--weights", default=None, help="comma-separated mode weights (default all 1)")
    a.add_argument("--length-um", type=float, required=True)
    a.add_argument("--band-nm", required=True, help="lo,hi")
    a.add_argument("--points", type=int, default=20000)
    a.add_argument("--noise", type=float, default=0.0, help="noise sigma relative to total weight")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--reflectivity", type=float, default=fringes.DEFAULT_FACET_REFLECTIVITY)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_synth_fringes)

    a = sub.add_parser("bandwidth", help="phasematching bandwidth from a parameter file")
    a.add_argument("--params", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_bandwidth)

    a = sub.add_parser("marginals", help="CW-pumped marginal spectra and contour roots")
    a.add_argument("--params", required=True)
    a.add_argument("--pump-nm", required=True, help="comma-separated pump wavelengths")
    a.add_argument("--axis-nm", required=True, help="lo,hi,n")
    a.add_argument("--keep-kp", action="store_true", help="keep the -K_p*Delta^2/2 term in the roots")
    a.add_argument("--out-dir", required=True)
    a.set_defaults(func=cmd_marginals)

    a = sub.add_parser("mc-fit", help="Monte Carlo inference of normalized dispersion")
    a.add_argument("--obs", required=True)
    a.add_argument("--config", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--hist-csv", default=None, help="directory for per-parameter histogram CSVs")
    a.add_argument("--workers", type=int, default=None, help="worker threads (default: config, then PDC_THREADS)")
    a.set_defaults(func=cmd_mc_fit)

    a = sub.add_parser("report", help="combine fringe and Monte Carlo results")
    a.add_argument("--posterior", required=True)
    a.add_argument("--fringe", required=True, action="append",
                   help="fp-analyze JSON; give once for the pump band and once for the PDC band")
    a.add_argument("--params", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"pdcdisp {args.command}: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except fringes.NoFringeError as e:
        print(f"pdcdisp {args.command}: {e}", file=sys.stderr)
        return EXIT_NO_FRINGE
    except mc.EmptyPosteriorError as e:
        print(f"pdcdisp {args.command}: {e}", file=sys.stderr)
        return EXIT_EMPTY_POSTERIOR
    except (OSError, FormatError, SpectrumFormatError, KeyError, ValueError) as e:
        print(f"pdcdisp {args.command}: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
