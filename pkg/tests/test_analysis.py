import math

import numpy as np
import pytest

from vcsel_polar.analysis import (
    FitResult,
    alpha_estimates,
    analytic_fits,
    direction_spread_deg,
    estimate_correlators,
    filtered_intensity,
    fit_damped_cosine,
    invert_parameters,
    read_fits,
)
from vcsel_polar.errors import DegenerateSystem, ModelMismatch, SeriesTooShort
from vcsel_polar.fileio import write_json
from vcsel_polar.linear import CorrelationRecord, analytic_correlators
from vcsel_polar.params import derive, params_from_dimensionless, reference_params
from vcsel_polar.stochastic import FluctuationSeries, NoiseConfig, simulate


def series_of(arrays, spacing=0.01):
    a = np.atleast_2d(arrays)
    z = np.zeros_like(a)
    return FluctuationSeries(a, z, z, spacing, 1e10, 1e4)


@pytest.fixture(scope="module")
def sim_coarse():
    p = reference_params(0.1)
    return p, simulate(p, NoiseConfig(seed=21, dt=0.02, duration=2000, ensemble=4, scheme="exact"))


@pytest.fixture(scope="module")
def sim_fine():
    p = reference_params(0.01)
    return p, simulate(p, NoiseConfig(seed=22, dt=0.005, duration=1000, ensemble=4, scheme="exact"))


def test_white_noise_is_uncorrelated(rng):
    rec = estimate_correlators(series_of(rng.standard_normal((4, 40000))), max_lag=2.0)
    z = np.abs(rec["dn_dn_rel"][1:]) / rec.errors["dn_dn_rel"][1:]
    assert rec["dn_dn_rel"][0] == pytest.approx(1.0, rel=0.02)
    assert np.mean(z < 2) > 0.9 and z.max() < 5
    assert rec.meta["batches"] >= 16


def test_cosine_autocorrelation_identity():
    t = np.arange(100000) * 0.01
    amp, w = 0.3, 2 * math.pi / 0.5          # whole number of periods
    rec = estimate_correlators(series_of(amp * np.cos(w * t)), max_lag=1.0, min_batches=1,
                               demean=False)
    np.testing.assert_allclose(rec["dn_dn_rel"], 0.5 * amp ** 2 * np.cos(w * rec.tau), atol=1e-4 * amp ** 2)


def test_series_too_short():
    with pytest.raises(SeriesTooShort):
        estimate_correlators(series_of(np.zeros((1, 1000))), max_lag=1.0)


def test_chunks_equal_concatenation(rng):
    a = series_of(rng.standard_normal((2, 20000)))
    b = series_of(rng.standard_normal((2, 20000)))
    split = estimate_correlators([a, b], max_lag=0.5, min_batches=1)
    whole = estimate_correlators(a.concat(b), max_lag=0.5, min_batches=1)
    np.testing.assert_allclose(split["dn_dn_rel"], whole["dn_dn_rel"], rtol=1e-12)


def synthetic(model_vals, tau, channel="y"):
    C, a, b = model_vals
    return CorrelationRecord(tau=tau, gamma=1e10, series={channel: C * np.exp(-a * tau) * np.cos(b * tau)})


def test_noiseless_single_fit():
    tau = np.linspace(0, 3, 301)
    fit = fit_damped_cosine(synthetic((0.005, 1.0, 10.0), tau), "y")
    assert fit.params["C"] == pytest.approx(0.005, rel=1e-6)
    assert fit.params["decay"] == pytest.approx(1.0, rel=1e-6)
    assert fit.params["freq"] == pytest.approx(10.0, rel=1e-6)
    assert fit.si("freq") == pytest.approx(1e11, rel=1e-6)


def test_two_term_fit_of_closed_form(ref):
    rec = analytic_correlators(derive(ref), ref, np.linspace(0, 3, 301))
    fit = fit_damped_cosine(rec, "p2p2", "cosine_plus_exponential")
    assert fit.params["decay"] == pytest.approx(2.0, rel=1e-4)
    assert fit.params["decay2"] == pytest.approx(4.0, rel=1e-4)
    assert fit.params["E"] == pytest.approx(0.0125, rel=1e-4)


def test_fit_is_deterministic(sim_coarse):
    _, s = sim_coarse
    rec = estimate_correlators(s, max_lag=3.0)
    a = fit_damped_cosine(rec, "p3p3").to_dict()
    b = fit_damped_cosine(rec, "p3p3").to_dict()
    assert a == b


def test_model_mismatch_carries_result(ref):
    rec = analytic_correlators(derive(ref), ref, np.linspace(0, 3, 301))
    rec.errors["p2p2"] = np.full(rec.tau.size, 1e-6)
    with pytest.raises(ModelMismatch) as info:
        fit_damped_cosine(rec, "p2p2", "single")
    assert isinstance(info.value.result, FitResult)


def test_fit_result_serialization(tmp_path, ref):
    rec = analytic_correlators(derive(ref), ref, np.linspace(0, 3, 301))
    fits = {"p3p3": fit_damped_cosine(rec, "p3p3"),
            "p2p2": fit_damped_cosine(rec, "p2p2", "cosine_plus_exponential")}
    write_json(tmp_path / "fits.json", dict({k: v.to_dict() for k, v in fits.items()}, _meta={"x": 1}))
    back = read_fits(tmp_path / "fits.json")
    assert set(back) == {"p3p3", "p2p2"}
    assert back["p2p2"].params == fits["p2p2"].params
    assert back["p2p2"].model == "cosine_plus_exponential"


def test_alpha_estimators_agree(sim_fine):
    p, s = sim_fine
    rec = estimate_correlators(s, max_lag=1.0)
    f33 = fit_damped_cosine(rec, "p3p3")
    f32 = fit_damped_cosine(rec, "p3p2", "cosine_plus_exponential")
    est = alpha_estimates(rec, f32, f33)
    assert abs(est["tau0"] - est["pointwise"]) < 2 * math.hypot(est["tau0_se"], est["pointwise_se"])
    for k in ("tau0", "pointwise", "envelope"):
        assert est[k] == pytest.approx(p.alpha, rel=0.05)


def test_cross_correlation_peaks_at_zero_lag(sim_fine):
    _, s = sim_fine
    rec = estimate_correlators(s, max_lag=0.2)
    assert np.argmax(rec["p3p2"]) == 0


def test_inversion_of_closed_form_fits(ref):
    dp = derive(ref)
    got = invert_parameters(analytic_fits(dp, ref), dp.x)
    assert not got.degenerate
    for k in ("alpha", "theta", "rho", "r"):
        assert got[k] == pytest.approx(2.0, rel=1e-3)
    assert got["gamma_per_s"] == pytest.approx(1e10, rel=1e-3)
    assert got["A"] == pytest.approx(0.01, rel=1e-3)


def test_inversion_without_frequency_anisotropy():
    p = params_from_dimensionless(gamma=1e10, x=2, alpha=2, r=1, rho=2.5, theta=0, A=0.01, nu=1e11)
    dp = derive(p)
    got = invert_parameters(analytic_fits(dp, p), dp.x)
    assert abs(got["theta"]) < 1e-3
    assert got["rho"] - got["r"] == pytest.approx(1.5, rel=1e-3)
    assert got.theta_alternate is not None


def test_unresolvable_splitting_is_degenerate():
    p = params_from_dimensionless(gamma=1e10, x=2, alpha=2, r=1.5, rho=1.5, theta=0, A=0.01, nu=1e11)
    dp = derive(p)
    with pytest.raises(DegenerateSystem) as info:
        invert_parameters(analytic_fits(dp, p), dp.x)
    part = info.value.result
    assert part.degenerate
    assert part["rho_plus_theta"] == pytest.approx(1.5, rel=1e-6)
    assert part["x_plus_r_plus_rho_minus_theta"] == pytest.approx(5.0, rel=1e-6)
    assert "theta" not in part.values


def test_linear_filter_along_stationary_axis(sim_coarse):
    _, s = sim_coarse
    f = filtered_intensity(s, "linear", angle=0.0, max_lag=1.0)
    r = f.record
    assert r["filtered"][0] == pytest.approx(r["intensity"][0], rel=0.02)
    assert r["projected"][0] < 0.1 * r["intensity"][0]     # P1 only moves at second order
    assert f.mean_intensity == pytest.approx(s.n_s, rel=0.02)


def test_diagonal_filter_recovers_direction_noise(sim_coarse):
    _, s = sim_coarse
    r = filtered_intensity(s, "linear", angle=math.pi / 4, max_lag=1.0).record
    np.testing.assert_allclose(r["filtered"] - r["intensity"], r["projected"],
                               atol=3 * r.errors["residual_sum"].max())


def test_circular_filters_are_symmetric(sim_coarse):
    _, s = sim_coarse
    right = filtered_intensity(s, "right-circular", max_lag=0.5).record
    left = filtered_intensity(s, "left-circular", max_lag=0.5).record
    np.testing.assert_allclose(right["projected"], left["projected"])
    with pytest.raises(ValueError):
        filtered_intensity(s, "elliptical")


def test_direction_spread():
    assert direction_spread_deg(0.0225) == pytest.approx(4.297, abs=1e-3)
