import json

import numpy as np
import pytest

from conftest import DATA
from pdcdisp import cli, jsa, mc
from pdcdisp.fringes import OpticalLengthPeak
from pdcdisp.io import ParamFile, read_json, read_spectrum_csv
from pdcdisp.peaks import detect_peaks
from pdcdisp.units import nm_to_omega

NEAR = {"kappa_ratio": [0.97, 0.995], "Ks_norm": [0.0, 2e-3], "Ki_norm": [0.0, 2e-3],
        "delta_offset": [-0.5, 0.5]}


def run(*argv):
    return cli.main([str(a) for a in argv])


def dump(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


# --- synth-fringes / fp-analyze -------------------------------------------------

def test_synth_then_analyze(tmp_path, capsys):
    csv = tmp_path / "t.csv"
    out = tmp_path / "t.json"
    assert run("synth-fringes", "--ng", "3.31", "--length-um", 996, "--band-nm", "1523,1594",
               "--noise", 0.01, "--seed", 1, "--out", csv) == 0
    assert run("fp-analyze", "--input", csv, "--length-um", 996, "--length-sigma-um", 4,
               "--max-modes", 3, "--out", out) == 0
    rec = read_json(out)
    peaks = [OpticalLengthPeak.from_dict(p) for p in rec["peaks"]]
    assert len(peaks) == 1
    assert peaks[0].group_index.value == pytest.approx(3.31, rel=5e-3)
    assert rec["band_nm"] == [1523.0, 1594.0]
    assert rec["length_um"] == {"value": 996.0, "sigma": 4.0}
    assert "n_g = 3.31" in capsys.readouterr().out


def test_fringe_period_count(tmp_path):
    csv = tmp_path / "t.csv"
    run("synth-fringes", "--ng", "3.31", "--length-um", 996, "--band-nm", "1523,1594", "--out", csv)
    y = read_spectrum_csv(csv).intensity
    maxima = np.count_nonzero((y[1:-1] > y[:-2]) & (y[1:-1] > y[2:]))
    expected = (1 / 1.523 - 1 / 1.594) * 2 * 3.31 * 996
    assert maxima == pytest.approx(expected, abs=1.5)
    assert round(expected) == 193


def test_noise_free_output_ignores_seed(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path, seed in ((a, 1), (b, 99)):
        run("synth-fringes", "--ng", "4.42,3.72", "--weights", "1,0.15", "--length-um", 996,
            "--band-nm", "760,794", "--points", 4000, "--seed", seed, "--out", path)
    assert a.read_bytes() == b.read_bytes()


def test_two_mode_nir(tmp_path):
    csv, out = tmp_path / "n.csv", tmp_path / "n.json"
    run("synth-fringes", "--ng", "4.42,3.72", "--weights", "1,0.15", "--length-um", 996,
        "--band-nm", "760,794", "--points", 4000, "--noise", 0.01, "--out", csv)
    assert run("fp-analyze", "--input", csv, "--length-um", 996, "--max-modes", 3, "--out", out) == 0
    ng = sorted(p["group_index"]["value"] for p in read_json(out)["peaks"])
    assert ng == [pytest.approx(3.72, rel=1e-2), pytest.approx(4.42, rel=1e-2)]


@pytest.mark.parametrize("argv", [
    ["--ng", "3.31,3.5", "--weights", "1"],
    ["--ng", "3.31", "--band-nm", "1594,1523"],
    ["--ng", "3.31", "--band-nm", "1523"],
    ["--ng", "0.5"],
    ["--ng", "3.31", "--points", "4"],
    ["--ng", "3.31,x"],
])
def test_synth_usage_errors(tmp_path, argv):
    base = {"--length-um": "996", "--band-nm": "1523,1594", "--out": str(tmp_path / "x.csv")}
    args = list(argv)
    for k, v in base.items():
        if k not in args:
            args += [k, v]
    assert run("synth-fringes", *args) == cli.EXIT_USAGE
    assert not (tmp_path / "x.csv").exists()


def test_max_modes_zero_is_usage_error(tmp_path):
    assert run("fp-analyze", "--input", DATA / "telecom_fringes.csv", "--length-um", 996,
               "--max-modes", 0, "--out", tmp_path / "o.json") == 64


def test_pure_noise_exits_2(tmp_path, capsys):
    assert run("fp-analyze", "--input", DATA / "noise_fringes.csv", "--length-um", 996,
               "--max-modes", 3, "--out", tmp_path / "o.json") == 2
    assert "noise floor" in capsys.readouterr().err


def test_malformed_csv_exits_1_with_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("wavelength_nm,intensity\n1500,1\n1501,NaN\n")
    assert run("fp-analyze", "--input", bad, "--length-um", 996, "--max-modes", 1,
               "--out", tmp_path / "o.json") == 1
    assert "bad.csv:3:" in capsys.readouterr().err


def test_missing_file_exits_1(tmp_path):
    assert run("fp-analyze", "--input", tmp_path / "nope.csv", "--length-um", 996, "--max-modes", 1,
               "--out", tmp_path / "o.json") == 1


@pytest.mark.parametrize("argv", [[], ["fp-analyze"], ["frobnicate"],
                                  ["fp-analyze", "--input", "x", "--length-um", "abc",
                                   "--max-modes", "1", "--out", "o"]])
def test_argparse_errors_exit_64(argv):
    with pytest.raises(SystemExit) as info:
        cli.main(argv)
    assert info.value.code == 64


# --- bandwidth -----------------------------------------------------------------

def test_bandwidth(tmp_path):
    out = tmp_path / "bw.json"
    assert run("bandwidth", "--params", DATA / "params_fp.json", "--out", out) == 0
    rec = read_json(out)
    assert round(rec["fwhm_nm"], 2) == 3.68
    assert rec["fwhm_rad_per_ps"] == pytest.approx(rec["sigma_pm_rad_per_ps"] * np.sqrt(2 * np.log(2)))
    assert rec["inputs"] == read_json(DATA / "params_fp.json")


def test_bandwidth_schema_error(tmp_path, capsys):
    d = read_json(DATA / "params_fp.json")
    del d["dispersion"]
    assert run("bandwidth", "--params", dump(tmp_path / "p.json", d), "--out", tmp_path / "o.json") == 1
    assert "schema error" in capsys.readouterr().err


# --- marginals -----------------------------------------------------------------

def test_marginals_two_peaks_and_roots(tmp_path):
    out = tmp_path / "m"
    assert run("marginals", "--params", DATA / "params_marginal.json", "--pump-nm", "767.1,766.7",
               "--axis-nm", "1400,1700,1501", "--out-dir", out) == 0
    for beam in ("signal", "idler"):
        s = read_spectrum_csv(out / f"{beam}_767p1nm.csv")
        assert len(s) == 1501 and len(detect_peaks(s)) == 2
    roots = read_json(out / "roots.json")
    pf = ParamFile.load(DATA / "params_marginal.json")
    for rec in roots["roots"]:
        delta = float(nm_to_omega(rec["pump_wavelength_nm"])) - 2 * pf.omega0
        lib = jsa.marginal_contour_roots(pf.dispersion, delta, drop_Kp=True)
        assert rec["signal_detuning_rad_per_ps"] == list(lib)
        assert rec["idler_detuning_rad_per_ps"] == sorted(delta - r for r in lib)


def test_marginals_linear_at_degeneracy(tmp_path):
    params = {"waveguide": {"length_um": 1870.0, "gamma": 0.179},
              "dispersion": {"kappa_s_ps_per_um": -1.35e-3, "kappa_i_ps_per_um": -1.37e-3},
              "degeneracy_nm": 1536.6}
    out = tmp_path / "m"
    assert run("marginals", "--params", dump(tmp_path / "p.json", params), "--pump-nm", 768.3,
               "--axis-nm", "1400,1700,3001", "--out-dir", out) == 0
    (rec,) = read_json(out / "roots.json")["roots"]
    assert rec["signal_detuning_rad_per_ps"] == [0.0]
    assert rec["signal_wavelength_nm"] == [pytest.approx(1536.6, rel=1e-12)]
    s = read_spectrum_csv(out / "signal_768p3nm.csv")
    (i,) = detect_peaks(s)
    assert s.axis[i] == pytest.approx(1536.6, abs=0.2)


@pytest.mark.parametrize("axis", ["1700,1400,100", "1400,1700,1", "1400,1700", "1400,1700,x"])
def test_marginals_degenerate_axis(tmp_path, axis):
    assert run("marginals", "--params", DATA / "params_marginal.json", "--pump-nm", 767.1,
               "--axis-nm", axis, "--out-dir", tmp_path / "m") == 64


# --- mc-fit and report ---------------------------------------------------------

@pytest.fixture(scope="module")
def small_posterior(tmp_path_factory):
    d = tmp_path_factory.mktemp("mc")
    cfg = dump(d / "cfg.json", {"n_runs": 100_000, "seed": 3, "priors": NEAR})
    assert run("mc-fit", "--obs", DATA / "observations.json", "--config", cfg, "--out", d / "post.json",
               "--hist-csv", d / "hist", "--workers", 1) == 0
    return d


def test_mc_fit_outputs(small_posterior, capsys):
    post_d = read_json(small_posterior / "post.json")
    post = mc.McPosterior.from_dict(post_d)
    assert post.n_runs == 100_000 and post.n_accepted > 0
    assert mc.ObservationSet.from_dict(post_d["observations"]) == mc.ObservationSet.from_dict(
        read_json(DATA / "observations.json"))
    for name in mc.PARAM_NAMES:
        rows = (small_posterior / "hist" / f"{name}.csv").read_text().splitlines()
        assert rows[1] == "bin_low,bin_high,count"
        assert sum(int(r.split(",")[2]) for r in rows[2:]) == post.n_accepted
        assert len(rows) == 52


def test_mc_fit_prints_acceptance(tmp_path, capsys):
    point = {k: [v, v] for k, v in (("kappa_ratio", 0.983), ("Ks_norm", 0.8e-3), ("Ki_norm", 0.7e-3),
                                    ("delta_offset", 0.0))}
    cfg = dump(tmp_path / "cfg.json", {"n_runs": 500, "priors": point})
    assert run("mc-fit", "--obs", DATA / "observations.json", "--config", cfg,
               "--out", tmp_path / "p.json") == 0
    assert "acceptance rate 1.000e+00" in capsys.readouterr().out


def test_mc_fit_empty_posterior_exits_3(tmp_path, capsys):
    cfg = dump(tmp_path / "cfg.json", {"n_runs": 2000, "priors": {"kappa_ratio": [0.90, 0.91]}})
    assert run("mc-fit", "--obs", DATA / "observations.json", "--config", cfg,
               "--out", tmp_path / "p.json") == 3
    assert "widen" in capsys.readouterr().err
    assert not (tmp_path / "p.json").exists()


@pytest.fixture(scope="module")
def fringe_records(tmp_path_factory):
    d = tmp_path_factory.mktemp("fp")
    for name in ("telecom_fringes", "nir_fringes"):
        assert run("fp-analyze", "--input", DATA / f"{name}.csv", "--length-um", 996,
                   "--length-sigma-um", 4, "--max-modes", 3, "--out", d / f"{name}.json") == 0
    return d


def test_report(tmp_path, small_posterior, fringe_records):
    out = tmp_path / "report.json"
    assert run("report", "--posterior", small_posterior / "post.json",
               "--fringe", fringe_records / "nir_fringes.json",
               "--fringe", fringe_records / "telecom_fringes.json",
               "--params", DATA / "params_fp.json", "--out", out) == 0
    rep = read_json(out)
    rows = {r["quantity"]: r for r in rep["rows"]}
    assert rows["group_index_tir_pump_band"]["value"] == pytest.approx(4.42, rel=1e-2)
    assert rows["group_index_bragg_pump_band"]["value"] == pytest.approx(3.72, rel=1e-2)
    assert rows["group_index_tir_pdc_band"]["value"] == pytest.approx(3.31, rel=5e-3)
    assert rows["kappa_bar"]["value"] == pytest.approx(-1.37e-3, rel=2e-2)
    assert rows["pm_bandwidth_fwhm"]["value"] == pytest.approx(3.7, abs=0.3)
    assert rows["tilt_at_degeneracy"]["value"] == pytest.approx(-44.5, abs=1.0)
    ratio = rows["kappa_ratio"]["value"]
    assert rows["group_index_difference_signal_idler"]["value"] == pytest.approx(
        299.792458 * abs(rows["kappa_bar"]["value"]) * (1 - ratio), rel=1e-12)
    assert rep["tilt_curve"] and rep["sources"]["pdc_band_fringes"] == "telecom_fringes.csv"


def test_report_needs_both_bands(tmp_path, small_posterior, fringe_records):
    assert run("report", "--posterior", small_posterior / "post.json",
               "--fringe", fringe_records / "telecom_fringes.json",
               "--params", DATA / "params_fp.json", "--out", tmp_path / "r.json") == 1


def test_report_rejects_non_posterior(tmp_path, fringe_records, capsys):
    assert run("report", "--posterior", fringe_records / "nir_fringes.json",
               "--fringe", fringe_records / "nir_fringes.json",
               "--fringe", fringe_records / "telecom_fringes.json",
               "--params", DATA / "params_fp.json", "--out", tmp_path / "r.json") == 1
    assert "not a posterior" in capsys.readouterr().err


def test_every_json_output_reparses(tmp_path, small_posterior, fringe_records):
    rec = read_json(fringe_records / "telecom_fringes.json")
    assert [OpticalLengthPeak.from_dict(p).to_dict() for p in rec["peaks"]] == rec["peaks"]
    post = read_json(small_posterior / "post.json")
    back = mc.McPosterior.from_dict(post).to_dict()
    assert {k: post[k] for k in back} == back
