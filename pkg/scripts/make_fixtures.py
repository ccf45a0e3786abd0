"""Regenerate the bundled fixtures in src/pdcdisp/data.

Run from the repository root: ``python3 scripts/make_fixtures.py``.
Every fixture is synthetic and deterministic; rerunning reproduces the
files byte for byte.
"""
from pathlib import Path

from pdcdisp import cli
from pdcdisp.io import write_json
from pdcdisp.jsa import DispersionParams
from pdcdisp.mc import McConfig
from pdcdisp.synthetic import MARGINAL_PUMP_NM, synthesize_observation_set

DATA = Path(__file__).resolve().parent.parent / "src" / "pdcdisp" / "data"

LENGTH_FP_UM = 996.0
LENGTH_FP_SIGMA_UM = 4.0
LENGTH_MARGINAL_UM = 1870.0
KAPPA_I = -1.37e-3
TRUTH = {"kappa_ratio": 0.983, "Ks_norm": 0.8e-3, "Ki_norm": 0.7e-3}
#: degeneracy (nm) at which the longest pump wavelength sits exactly on the contour
DEGENERACY_MARGINAL_NM = 1536.6


def fringes():
    common = ["--length-um", str(LENGTH_FP_UM), "--noise", "0.01"]
    runs = [
        ["--ng", "3.31", "--weights", "1", "--band-nm", "1523,1594", "--points", "20000",
         "--seed", "1", "--out", str(DATA / "telecom_fringes.csv")],
        ["--ng", "4.42,3.72", "--weights", "1,0.15", "--band-nm", "760,794", "--points", "4000",
         "--seed", "2", "--out", str(DATA / "nir_fringes.csv")],
    ]
    for extra in runs:
        assert cli.main(["synth-fringes", *common, *extra]) == 0
    # pure noise: a single mode with zero facet reflectivity is flat, leaving only the noise
    assert cli.main(["synth-fringes", "--ng", "3.31", "--reflectivity", "0", "--length-um", "996",
                     "--band-nm", "1523,1594", "--points", "4000", "--noise", "0.05", "--seed", "3",
                     "--out", str(DATA / "noise_fringes.csv")]) == 0


def params():
    write_json(DATA / "params_fp.json", {
        "waveguide": {"length_um": LENGTH_FP_UM, "length_sigma_um": LENGTH_FP_SIGMA_UM, "gamma": 0.179},
        "dispersion": {"kappa_s_ps_per_um": KAPPA_I, "kappa_i_ps_per_um": KAPPA_I},
        "pump": {"cw": True},
        "degeneracy_nm": 1550.2,
    })
    write_json(DATA / "params_marginal.json", {
        "waveguide": {"length_um": LENGTH_MARGINAL_UM, "gamma": 0.179},
        "dispersion": {"kappa_i_ps_per_um": KAPPA_I, "kappa_ratio": TRUTH["kappa_ratio"],
                       "Ks_norm_ps": TRUTH["Ks_norm"], "Ki_norm_ps": TRUTH["Ki_norm"]},
        "pump": {"cw": True, "central_wavelength_nm": 767.1},
        "degeneracy_nm": DEGENERACY_MARGINAL_NM,
        "masks_nm": [[1650.0, None]],
    })
    write_json(DATA / "mc_config.json", McConfig(n_runs=1_000_000, seed=0).to_dict())


def observations():
    truth = DispersionParams.from_normalized(TRUTH["kappa_ratio"], TRUTH["Ks_norm"], TRUTH["Ki_norm"],
                                             abs(KAPPA_I))
    note = ("synthetic stand-in for the recorded pump-detuning series: marginal spectra computed from "
            "kappa_s/kappa_i=0.983, Ks/|kappa_i|=0.8e-3 ps, Ki/|kappa_i|=0.7e-3 ps, "
            f"L={LENGTH_MARGINAL_UM:g} um, degeneracy {DEGENERACY_MARGINAL_NM} nm, "
            f"pumps {', '.join(format(p, 'g') for p in MARGINAL_PUMP_NM)} nm, detector cutoff 1650 nm; "
            "Gaussian fits on a 0.2 nm grid; no noise")
    obs = synthesize_observation_set(truth, LENGTH_MARGINAL_UM, DEGENERACY_MARGINAL_NM, provenance=note)
    write_json(DATA / "observations.json", obs.to_dict())


if __name__ == "__main__":
    DATA.mkdir(parents=True, exist_ok=True)
    fringes()
    params()
    observations()
    print(f"fixtures written to {DATA}")
