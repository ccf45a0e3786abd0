import copy
import json
import math

import numpy as np
import pytest

from conftest import DATA
from pdcdisp import mc
from pdcdisp.io import dumps, read_json
from pdcdisp.mc import (EmptyPosteriorError, McConfig, McPosterior, McSample, ObservationSet,
                        accept_params, accept_sample, derived_quantities, group_index_difference,
                        run_mc)
from pdcdisp.peaks import MarginalObservation, ObservedPeak
from pdcdisp.units import Measured

TRUTH = McSample(0.983, 0.8e-3, 0.7e-3, 0.0)
NEAR = {"kappa_ratio": (0.97, 0.995), "Ks_norm": (0.0, 2e-3), "Ki_norm": (0.0, 2e-3),
        "delta_offset": (-0.5, 0.5)}


@pytest.fixture(scope="module")
def obs():
    return ObservationSet.from_dict(read_json(DATA / "observations.json"))


def with_peaks(obs_set, fn):
    out = copy.deepcopy(obs_set)
    for o in out.observations:
        o.peaks = [fn(o, k, p) for k, p in enumerate(o.peaks)]
    return out


# --- acceptance test ---------------------------------------------------------

def test_truth_accepted(obs):
    assert accept_sample(TRUTH, obs)


def test_ordering_gate_rejects_ratio_above_one(obs, monkeypatch):
    def boom(*args, **kwargs):
        raise AssertionError("contour evaluated")

    monkeypatch.setattr(mc.jsa, "marginal_contour_roots", boom)
    assert not accept_sample(McSample(1.10, 0.8e-3, 0.7e-3, 0.0), obs)


def test_upper_branch_off_by_two_fwhm_rejected(obs):
    def shift(o, k, p):
        if len(o.peaks) == 2 and k == 1 and o.beam == "idler":
            return ObservedPeak(p.center_nm, p.fwhm_nm, p.detuning + 2 * p.fwhm_detuning,
                                p.fwhm_detuning, p.low_confidence)
        return p

    assert not accept_sample(TRUTH, with_peaks(obs, shift))


def test_vectorized_matches_scalar(obs):
    cfg = McConfig(n_runs=1, priors=NEAR)
    lows = np.array([cfg.priors[k][0] for k in mc.PARAM_NAMES])
    widths = np.array([cfg.priors[k][1] - cfg.priors[k][0] for k in mc.PARAM_NAMES])
    theta = mc._draw_block(3, 0, 3000, lows, widths)
    compiled = [mc._CompiledObservation(o, obs) for o in obs.observations]
    fast = mc._accept_block(theta, compiled, True, 0.0, True)
    slow = np.array([accept_sample(McSample(*row), obs) for row in theta])
    assert fast.any() and not fast.all()
    assert np.array_equal(fast, slow)


@pytest.mark.parametrize("factor", [1e-3, 0.5, 7.0, 1e4])
def test_scale_invariance_of_acceptance(obs, factor):
    rng = np.random.default_rng(11)
    for _ in range(200):
        s = McSample(rng.uniform(0.97, 0.995), rng.uniform(0, 2e-3), rng.uniform(0, 2e-3),
                     rng.uniform(-0.5, 0.5))
        p = s.to_params()
        assert accept_params(p.scaled(factor), s.delta_offset, obs) == accept_params(p, s.delta_offset, obs)


def test_acceptance_monotone_in_errorbar_width(obs):
    wider = with_peaks(obs, lambda o, k, p: ObservedPeak(p.center_nm, p.fwhm_nm, p.detuning,
                                                         1.5 * p.fwhm_detuning, p.low_confidence))
    rng = np.random.default_rng(4)
    n_accepted = 0
    for _ in range(1500):
        s = McSample(rng.uniform(0.97, 0.995), rng.uniform(0, 2e-3), rng.uniform(0, 2e-3),
                     rng.uniform(-0.5, 0.5))
        if accept_sample(s, obs):
            n_accepted += 1
            assert accept_sample(s, wider)
    assert n_accepted > 0


# --- run_mc --------------------------------------------------------------------

def test_single_point_priors_accept_everything(obs):
    point = {"kappa_ratio": (0.983, 0.983), "Ks_norm": (0.8e-3, 0.8e-3),
             "Ki_norm": (0.7e-3, 0.7e-3), "delta_offset": (0.0, 0.0)}
    post = run_mc(McConfig(n_runs=1000, priors=point), obs, workers=1)
    assert post.acceptance_rate == 1.0
    assert post.estimates()["kappa_ratio"]["mode"] == pytest.approx(0.983, rel=1e-8)


def test_empty_posterior(obs):
    cfg = McConfig(n_runs=5000, priors={"kappa_ratio": (0.90, 0.91)})
    with pytest.raises(EmptyPosteriorError, match="widen"):
        run_mc(cfg, obs, workers=1)


@pytest.fixture(scope="module")
def posterior(obs):
    return run_mc(McConfig(n_runs=150_000, seed=9, priors=NEAR), obs, workers=1)


def test_determinism_across_workers(obs, posterior):
    other = run_mc(McConfig(n_runs=150_000, seed=9, priors=NEAR), obs, workers=3)
    assert other.samples.tobytes() == posterior.samples.tobytes()
    for name in mc.PARAM_NAMES:
        assert np.array_equal(other.histograms[name].counts, posterior.histograms[name].counts)


def test_sample_stream_independent_of_run_count(obs, posterior):
    short = run_mc(McConfig(n_runs=70_000, seed=9, priors=NEAR), obs, workers=1)
    assert np.array_equal(posterior.samples[:short.n_accepted], short.samples)


def test_different_seed_different_draws(obs, posterior):
    other = run_mc(McConfig(n_runs=150_000, seed=10, priors=NEAR), obs, workers=1)
    assert other.samples.tobytes() != posterior.samples.tobytes()


def test_histograms_consistent(posterior):
    for name, h in posterior.histograms.items():
        assert h.counts.sum() == posterior.n_accepted
        assert h.edges.size == 51
        lo, hi = NEAR[name]
        assert h.edges[0] == pytest.approx(lo) and h.edges[-1] == pytest.approx(hi)


def test_posterior_contains_truth_within_spread(posterior):
    est = posterior.estimates()
    for name in ("kappa_ratio", "Ks_norm", "Ki_norm"):
        e = est[name]
        assert abs(e["mode"] - getattr(TRUTH, name)) <= max(e["std"], 1e-12) + 1e-12


def test_all_accepted_samples_pass_scalar_test(obs, posterior):
    for row in posterior.samples[:50]:
        assert accept_sample(McSample(*row), obs)


def test_posterior_round_trip(posterior):
    back = McPosterior.from_dict(json.loads(dumps(posterior.to_dict())))
    assert np.array_equal(back.samples, posterior.samples)
    assert back.n_runs == posterior.n_runs
    assert back.config == posterior.config
    assert dumps(back.to_dict()) == dumps(posterior.to_dict())


def test_worker_count_from_environment(monkeypatch):
    monkeypatch.setenv("PDC_THREADS", "3")
    assert mc._worker_count(0) == 3
    assert mc._worker_count(2) == 2
    monkeypatch.setenv("PDC_THREADS", "0")
    assert mc._worker_count(0) >= 1


# --- configuration and observation sets ---------------------------------------

@pytest.mark.parametrize("kwargs", [dict(n_runs=0), dict(priors={"Ks_norm": (1e-3, 0.0)}),
                                    dict(priors={"K_p": (0.0, 1.0)}), dict(seed=-1),
                                    dict(priors={"kappa_ratio": (0.9, math.inf)})])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        McConfig(**kwargs)


def test_config_round_trip():
    cfg = McConfig(n_runs=123, seed=2**63, priors=NEAR, drop_Kp=False, Kp_norm=1e-4, n_bins=20)
    assert McConfig.from_dict(json.loads(dumps(cfg.to_dict()))) == cfg


def test_observation_set_round_trip(obs):
    back = ObservationSet.from_dict(json.loads(dumps(obs.to_dict())))
    assert back == obs


def test_observation_set_needs_two_pumps():
    pk = ObservedPeak(1500.0, 20.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        ObservationSet([MarginalObservation(767.1, "signal", [pk]),
                        MarginalObservation(767.1, "idler", [pk])], 1536.6)


def test_bad_excluded_branch():
    pk = ObservedPeak(1500.0, 20.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        ObservationSet([MarginalObservation(767.1, "signal", [pk]),
                        MarginalObservation(767.5, "signal", [pk])], 1536.6, [("signal", "middle")])


# --- derived quantities --------------------------------------------------------

def test_group_index_difference_example():
    assert float(group_index_difference(0.983, 1.37e-3)) == pytest.approx(
        299.792458 * 1.37e-3 * 0.017, rel=1e-12)
    assert round(float(group_index_difference(0.983, 1.37e-3)), 5) == 0.00698
    assert float(group_index_difference(1.0, 1.37e-3)) == 0.0


def test_derived_quantities_at_truth(obs):
    point = {"kappa_ratio": (0.983, 0.983), "Ks_norm": (0.8e-3, 0.8e-3),
             "Ki_norm": (0.7e-3, 0.7e-3), "delta_offset": (0.0, 0.0)}
    post = run_mc(McConfig(n_runs=100, priors=point), obs, workers=1)
    d = derived_quantities(post, Measured(1.37e-3, 0.0), 1536.6, obs, [767.1])
    assert d["group_index_difference_signal_idler"]["value"] == pytest.approx(6.98e-3, abs=5e-6)
    assert d["tilt_at_degeneracy_deg"]["value"] == pytest.approx(math.degrees(math.atan(-0.983)), abs=1e-6)
    assert round(d["tilt_at_degeneracy_deg"]["value"], 1) == -44.5
    assert {r["branch"] for r in d["tilt_curve"]} == {"lower", "upper"}
    assert all(r["angle_deg_std"] < 1e-9 for r in d["tilt_curve"])


def test_derived_spread_includes_kappa_uncertainty(posterior):
    a = derived_quantities(posterior, Measured(1.37e-3, 0.0), 1536.6)
    b = derived_quantities(posterior, Measured(1.37e-3, 0.1e-3), 1536.6)
    assert b["group_index_difference_signal_idler"]["sigma"] > a["group_index_difference_signal_idler"]["sigma"]
