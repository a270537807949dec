import math

import pytest
from hypothesis import given, settings, strategies as st

from vcsel_polar.errors import AnisotropyNotAligned, ConfigError
from vcsel_polar.params import (
    AnisotropyVector,
    LaserParams,
    derive,
    nondimensionalize,
    params_from_dimensionless,
    reference_params,
)

rates = st.floats(min_value=1e3, max_value=1e15, allow_nan=False, allow_infinity=False)
small = st.floats(min_value=-0.9, max_value=0.9)


def test_reference_point(ref):
    dp = derive(ref)
    assert dp.x == pytest.approx(2.0, rel=1e-14)
    assert dp.A == pytest.approx(0.01, rel=1e-12)
    assert dp.n_s == pytest.approx(1e4, rel=1e-12)
    assert dp.nu == pytest.approx(1e11, rel=1e-12)
    assert (dp.rho, dp.theta, dp.r) == pytest.approx((2.0, 2.0, 2.0), rel=1e-12)
    assert ref.kappa_eff2 == pytest.approx(1e12)
    assert ref.w_eff == pytest.approx(1e6)


def test_amplitude_from_rates():
    p = LaserParams(kappa2=1e12, gamma=1e10, Gamma=3e10, w2=2e6, alpha=2.0, D0=2e6)
    dp = derive(p)
    assert dp.A == pytest.approx(0.01, rel=1e-14)
    assert dp.n_s == pytest.approx(1e4, rel=1e-12)


def test_threshold_gives_zero_nu():
    p = LaserParams(kappa2=1e12, gamma=1e10, Gamma=3e10, w2=2e6, alpha=2.0, D0=1e6)
    dp = derive(p)
    assert dp.x == 1.0
    assert dp.nu == 0.0
    assert dp.below_threshold
    above = derive(LaserParams(1e12, 1e10, 3e10, 2e6, 2.0, 1.5e6))
    assert above.nu > 0 and not above.below_threshold


def test_scaled_values_and_theta():
    p = LaserParams(kappa2=1e12, gamma=1e10, Gamma=3e10, w2=2e6, alpha=2.0, D0=2e6,
                    Omega=1e10)
    sp, unit = nondimensionalize(p)
    assert sp.kappa2 == 100.0
    assert unit == 1e-10
    assert derive(p).theta == 2.0


@given(k=rates, g=rates, ratio=st.floats(1.0, 50.0), w=rates, a=st.floats(0, 10),
       D0=st.floats(-1e9, 1e9), om=st.floats(-1e12, 1e12), ga=small, la=small)
@settings(max_examples=200, deadline=None)
def test_nondimensionalize_round_trip_is_bit_exact(k, g, ratio, w, a, D0, om, ga, la):
    p = LaserParams(kappa2=k, gamma=g, Gamma=g * ratio, w2=w, alpha=a, D0=D0,
                    g=AnisotropyVector(ga / 2, ga / 3, 0.0), l=la / 2, Omega=(om, -om / 7, om / 3))
    sp, _ = nondimensionalize(p)
    assert sp.redimensionalize() == p


def test_isotropic_gives_no_anisotropy():
    dp = derive(LaserParams(1e12, 1e10, 3e10, 2e6, 3.0, 4e6))
    assert dp.rho == 0.0 and dp.theta == 0.0


@pytest.mark.parametrize("c", [1e-3, 0.5, 7.0, 1e4])
def test_scale_covariance(ref, c):
    scaled = LaserParams(ref.kappa2 * c, ref.gamma * c, ref.Gamma * c, ref.w2 * c, ref.alpha,
                         ref.D0, g=ref.g, l=ref.l, Omega=ref.Omega.scaled(c))
    a, b = derive(ref), derive(scaled)
    for name in ("x", "rho", "theta", "r", "A"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-12)
    assert b.nu == pytest.approx(c * a.nu, rel=1e-12)


def test_nu_squared_identity(ref):
    dp = derive(ref)
    assert dp.nu ** 2 == pytest.approx(ref.kappa_eff2 * ref.gamma * (dp.x - 1), rel=1e-14)
    assert dp.A == pytest.approx(ref.kappa_eff2 * ref.w_eff / ref.gamma ** 2, rel=1e-14)


@pytest.mark.parametrize("kw", [
    dict(kappa2=-1.0), dict(gamma=0.0), dict(w2=math.inf), dict(Gamma=5e9),
    dict(alpha=-0.1), dict(g=1.0), dict(l=(0.6, 0.6, 0.6)), dict(D0=math.nan),
])
def test_invalid_parameters_rejected(kw):
    base = dict(kappa2=1e12, gamma=1e10, Gamma=3e10, w2=2e6, alpha=2.0, D0=2e6)
    base.update(kw)
    with pytest.raises(ConfigError):
        LaserParams(**base)


def test_misaligned_anisotropy_is_rejected_by_derive():
    p = LaserParams(1e12, 1e10, 3e10, 2e6, 2.0, 2e6, Omega=(0.0, 1e9, 0.0))
    with pytest.raises(AnisotropyNotAligned):
        derive(p)


def test_from_dimensionless_needs_two_timescales():
    with pytest.raises(ConfigError):
        params_from_dimensionless(gamma=1e10, x=2, alpha=2, r=2, rho=2, theta=2, A=0.01)
    with pytest.raises(ConfigError):
        params_from_dimensionless(gamma=1e10, x=0.5, alpha=2, r=0, rho=0, theta=0, nu=1e11, A=0.01)


@pytest.mark.parametrize("pair", [
    dict(A=0.01, nu=1e11), dict(kappa2_eff=1e12, w_eff=1e6),
    dict(A=0.01, kappa2_eff=1e12), dict(nu=1e11, w_eff=1e6),
])
def test_from_dimensionless_pairs_agree(pair):
    p = params_from_dimensionless(gamma=1e10, x=2, alpha=2, r=2, rho=2, theta=2, **pair)
    dp = derive(p)
    assert dp.A == pytest.approx(0.01, rel=1e-12)
    assert dp.nu == pytest.approx(1e11, rel=1e-12)
    assert dp.theta == pytest.approx(2.0, rel=1e-12)


def test_digest_tracks_values(ref):
    assert ref.digest() == reference_params().digest()
    assert ref.digest() != reference_params(0.05).digest()
    assert len(ref.digest()) == 64
