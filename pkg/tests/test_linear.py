import math
import warnings

import numpy as np
import pytest

from vcsel_polar.errors import BelowThreshold, UnstablePolarization, UnstableSystem
from vcsel_polar.linear import (
    CorrelationRecord,
    analytic_correlators,
    analytic_eigensystem,
    build_linear_system,
    eigensystem_to_json,
    exact_frequency_splitting,
    fluctuation_matrix,
    frequency_splitting,
    linear_correlators,
    lyapunov_residual,
    numeric_eigensystem,
    stationary_covariance,
)
from vcsel_polar.params import LaserParams, derive, params_from_dimensionless, reference_params


def system(p):
    return build_linear_system(derive(p), p)


def test_reference_matrices(ref):
    s = system(ref)
    N = s.diffusion_si
    assert N[1, 1] == pytest.approx(2e16, rel=1e-12)
    assert N[3, 3] == N[4, 4] == pytest.approx(2e8, rel=1e-12)
    assert np.count_nonzero(N - np.diag(np.diag(N))) == 0
    M = s.drift_si
    assert M[0, 0] == pytest.approx(-2e10)
    assert M[0, 1] == pytest.approx(-1e12, rel=1e-12)    # -nu^2 / (gamma (x-1)) = -2 kappa (1+l)
    assert M[4, 3] == pytest.approx(+1e10 * 2 / 2)       # gamma theta / alpha
    assert M[3, 4] == pytest.approx(-1e10 * 2 / 2)
    assert np.all(M[:2, 2:] == 0) and np.all(M[2:, :2] == 0)


def test_isotropic_direction_mode_is_undamped():
    p = params_from_dimensionless(gamma=1e10, x=2, alpha=2, r=0, rho=0, theta=0, A=0.01, nu=1e11)
    assert system(p).drift[3, 3] == 0.0


def test_below_threshold_rejected():
    p = LaserParams(kappa2=1e12, gamma=1e10, Gamma=3e10, w2=2e6, alpha=2.0, D0=1e6)
    with pytest.raises(BelowThreshold):
        system(p)


def test_analytic_eigenvalues_at_reference(ref):
    lam = [t.lam for t in analytic_eigensystem(derive(ref), ref)]
    assert lam[2] == -4.0
    assert lam[3].real == -2.0 and lam[3].imag == pytest.approx(10.0)
    assert lam[0] == pytest.approx(-1.0 + 10j)


def test_analytic_right_vector_components(ref):
    b4 = analytic_eigensystem(derive(ref), ref)[3].b
    assert b4[3] / b4[4] == pytest.approx(ref.alpha)


def test_analytic_biorthogonality_leading_order():
    p = reference_params(1e-3)
    dp = derive(p)
    tr = analytic_eigensystem(dp, p)
    G = np.array([[a.a @ b.b for b in tr] for a in tr])
    assert np.max(np.abs(G - np.eye(5))) < 1e-2


@pytest.mark.parametrize("gn", [0.01, 0.1, 0.5])
def test_numeric_eigensystem_residuals(gn):
    s = system(reference_params(gn))
    tr = numeric_eigensystem(s)
    Mb, _ = s.balanced()
    sc = s.scale
    for t in tr:
        b, a = t.b / sc, t.a * sc
        assert np.linalg.norm(Mb @ b - t.lam * b) < 1e-10 * np.linalg.norm(Mb)
        assert np.linalg.norm(a @ Mb - t.lam * a) < 1e-10 * np.linalg.norm(Mb) * np.linalg.norm(a)
    G = np.array([[a.a @ b.b for b in tr] for a in tr])
    np.testing.assert_allclose(G, np.eye(5), atol=1e-10)
    lam = np.array([t.lam for t in tr])
    assert lam[0] == pytest.approx(lam[1].conjugate())
    assert lam[3] == pytest.approx(lam[4].conjugate())
    assert lam[2].imag == 0.0
    assert lam[0].real == pytest.approx(-derive(reference_params(gn)).x / 2, abs=1e-12)


def test_numeric_slow_mode_close_to_leading_order(ref):
    lam3 = numeric_eigensystem(system(ref))[2].lam
    assert abs(lam3 + 4.0) / 4.0 < 5 * 0.1 ** 2


def test_diagonal_mode_with_analytic_triples_reproduces_closed_form(ref):
    dp = derive(ref)
    s = system(ref)
    F = fluctuation_matrix(s, analytic_eigensystem(dp, ref), 0.0, mode="diagonal")
    assert F[4, 4] == pytest.approx(0.0025, rel=1e-12)
    assert F[4, 3] == pytest.approx(0.005, rel=1e-12)
    assert F[3, 3] == pytest.approx(0.0225, rel=1e-12)
    assert F[1, 1] / dp.n_s ** 2 == pytest.approx(0.005, rel=1e-12)


def test_full_sum_is_real_and_decoupled(ref):
    s = system(ref)
    F, imag = fluctuation_matrix(s, numeric_eigensystem(s), np.linspace(0, 3, 31), return_imag=True)
    assert imag < 1e-10
    assert np.all(F[:, :2, 2:] == 0) and np.all(F[:, 2:, :2] == 0)
    assert np.all(np.diagonal(F[0]) >= 0)


def test_full_vs_diagonal_differ_at_order_gamma_over_nu(ref):
    s = system(ref)
    tr = numeric_eigensystem(s)
    full = fluctuation_matrix(s, tr, 0.0)
    diag = fluctuation_matrix(s, tr, 0.0, mode="diagonal")
    d = abs(full[4, 4] / diag[4, 4] - 1)
    assert 1e-3 < d < 0.5


def test_lyapunov_oracles_agree(ref):
    s = system(ref)
    F0 = fluctuation_matrix(s, numeric_eigensystem(s), 0.0)
    assert lyapunov_residual(s, F0) < 1e-12
    S = stationary_covariance(s)
    np.testing.assert_allclose(F0 / np.outer(s.scale, s.scale), S / np.outer(s.scale, s.scale),
                               atol=1e-12)


def test_unstable_eigenvalues_raise(ref):
    s = system(ref)
    tr = numeric_eigensystem(s)
    tr[2].lam = complex(0.5, 0.0)
    with pytest.raises(UnstableSystem):
        fluctuation_matrix(s, tr, 0.0)


def test_closed_form_values(ref):
    tau = np.linspace(0, 2, 41)
    rec = analytic_correlators(derive(ref), ref, tau)
    assert rec["p3p3"][0] == pytest.approx(0.0025)
    assert rec["p3p2"][0] == pytest.approx(0.005)
    assert rec["p2p2"][0] == pytest.approx(0.0225)
    assert rec["dn_dn_rel"][0] == pytest.approx(0.005)
    np.testing.assert_allclose(rec["p3p2"], ref.alpha * rec["p3p3"], rtol=1e-14)
    assert math.degrees(0.5 * math.sqrt(rec["p2p2"][0])) == pytest.approx(4.297, abs=1e-3)


def test_closed_form_rejects_unstable_polarization():
    p = params_from_dimensionless(gamma=1e10, x=2, alpha=2, r=0, rho=-1, theta=0.5, A=0.01, nu=1e11)
    with pytest.raises(UnstablePolarization):
        analytic_correlators(derive(p), p, [0.0])


def test_slow_variance_decreases_with_damping():
    vals = []
    for rho in (0.5, 1.0, 2.0, 4.0):
        p = params_from_dimensionless(gamma=1e10, x=2, alpha=2, r=2, rho=rho, theta=1, A=0.01, nu=1e11)
        vals.append(analytic_correlators(derive(p), p, [0.0])["p2p2"][0])
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_closed_form_matches_exact_linear_at_small_ratio():
    p = reference_params(0.01)
    dp = derive(p)
    tau = np.linspace(0, 1, 11)
    a = analytic_correlators(dp, p, tau)
    e = linear_correlators(system(p), tau)
    for k in ("dn_dn_rel", "p3p3", "p2p2"):
        assert np.max(np.abs(a[k] - e[k])) < 0.02 * abs(a[k][0])


def test_frequency_splitting_reference(ref):
    fs = frequency_splitting(derive(ref), ref)
    assert fs.nu_n_minus_nu_P == pytest.approx(-1e9, rel=1e-12)
    dl = fs.delta_lambda
    assert dl[1] == -dl[0] and dl[4] == -dl[3] and dl[2] == 0


def test_splitting_cancels_without_frequency_anisotropy():
    p = params_from_dimensionless(gamma=1e10, x=2, alpha=2, r=1.5, rho=1.5, theta=0, A=0.01, nu=1e11)
    assert frequency_splitting(derive(p), p).nu_n_minus_nu_P == pytest.approx(0.0, abs=1e-6)


def test_perturbative_splitting_converges():
    errs = []
    for gn in (0.1, 0.03):
        p = reference_params(gn)
        dp = derive(p)
        pert = frequency_splitting(dp, p).nu_n_minus_nu_P
        errs.append(abs(exact_frequency_splitting(system(p)) / pert - 1))
    assert errs[0] < 0.2
    assert errs[1] < errs[0] * (0.03 / 0.1) ** 2 * 2 + 1e-6


def test_warning_for_large_ratio():
    p = reference_params(0.5)
    with pytest.warns(UserWarning):
        frequency_splitting(derive(p), p)
    with pytest.warns(UserWarning):
        analytic_eigensystem(derive(p), p)


def test_record_csv_round_trip(tmp_path, ref):
    rec = analytic_correlators(derive(ref), ref, np.linspace(0, 1, 5))
    rec.errors["p3p3"] = np.full(5, 1e-5)
    rec.to_csv(tmp_path / "c.csv")
    back = CorrelationRecord.from_csv(tmp_path / "c.csv")
    for k in rec.series:
        np.testing.assert_array_equal(back[k], rec[k])
    np.testing.assert_array_equal(back.errors["p3p3"], rec.errors["p3p3"])
    assert back.gamma == rec.gamma and back.n_s == rec.n_s
    assert back.meta["params_hash"] == ref.digest()


def test_eigensystem_json(ref):
    out = eigensystem_to_json(numeric_eigensystem(system(ref)), ref.gamma)
    assert len(out) == 5
    assert out[2]["lambda_per_s"][0] == pytest.approx(out[2]["lambda_scaled"][0] * 1e10)
