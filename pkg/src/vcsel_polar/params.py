"""Model parameters for the split-density VCSEL polarization model.

Rates are stored in SI units (1/s, rad/s for the frequency anisotropy).
Internally the dynamics run in units of the carrier decay time 1/gamma;
:func:`nondimensionalize` performs that conversion and can be undone
exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import AnisotropyNotAligned, ConfigError

__all__ = [
    "AnisotropyVector",
    "LaserParams",
    "DerivedParams",
    "ScaledParams",
    "derive",
    "nondimensionalize",
    "params_from_dimensionless",
    "reference_params",
]


@dataclass(frozen=True)
class AnisotropyVector:
    """Anisotropy expressed in the Stokes basis (e1, e2, e3)."""

    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0

    @classmethod
    def along_e1(cls, value: float) -> "AnisotropyVector":
        return cls(float(value), 0.0, 0.0)

    @classmethod
    def coerce(cls, value) -> "AnisotropyVector":
        if isinstance(value, AnisotropyVector):
            return value
        if np.isscalar(value):
            return cls.along_e1(value)
        comps = [float(c) for c in value]
        if len(comps) != 3:
            raise ConfigError(f"anisotropy vector needs 3 components, got {len(comps)}")
        return cls(*comps)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3])

    @property
    def norm(self) -> float:
        return math.sqrt(self.a1 ** 2 + self.a2 ** 2 + self.a3 ** 2)

    @property
    def is_aligned(self) -> bool:
        return self.a2 == 0.0 and self.a3 == 0.0

    def scaled(self, factor: float) -> "AnisotropyVector":
        return AnisotropyVector(self.a1 * factor, self.a2 * factor, self.a3 * factor)


@dataclass(frozen=True)
class LaserParams:
    """Physical parameters of the rate-equation model.

    Parameters
    ----------
    kappa2 : float
        Cavity photon loss rate 2*kappa (1/s).
    gamma : float
        Spontaneous carrier decay rate (1/s).
    Gamma : float
        Total decay of the density difference, spin relaxation plus gamma (1/s).
    w2 : float
        Spontaneous emission rate into the laser mode 2*w (1/s).
    alpha : float
        Linewidth enhancement factor.
    D0 : float
        Injection, expressed as a carrier number (injection current / gamma).
    g, l : AnisotropyVector
        Relative gain and loss anisotropies.
    Omega : AnisotropyVector
        Frequency anisotropy (rad/s), half the splitting of the orthogonal modes.
    """

    kappa2: float
    gamma: float
    Gamma: float
    w2: float
    alpha: float
    D0: float
    g: AnisotropyVector = field(default_factory=AnisotropyVector)
    l: AnisotropyVector = field(default_factory=AnisotropyVector)
    Omega: AnisotropyVector = field(default_factory=AnisotropyVector)

    def __post_init__(self):
        for name in ("g", "l", "Omega"):
            object.__setattr__(self, name, AnisotropyVector.coerce(getattr(self, name)))
        for name in ("kappa2", "gamma", "Gamma", "w2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite rate, got {v!r}")
        if self.Gamma < self.gamma:
            raise ConfigError("Gamma must be >= gamma (spin relaxation rate cannot be negative)")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError(f"alpha must be >= 0, got {self.alpha!r}")
        if not math.isfinite(self.D0):
            raise ConfigError("D0 must be finite")
        # keeps 2w(1+Pg) and 2kappa(1+Pl) positive for every unit P
        for name in ("g", "l"):
            if getattr(self, name).norm >= 1.0:
                raise ConfigError(f"|{name}| must be < 1")

    @property
    def is_aligned(self) -> bool:
        return self.g.is_aligned and self.l.is_aligned and self.Omega.is_aligned

    def require_aligned(self) -> None:
        if not self.is_aligned:
            raise AnisotropyNotAligned(
                "g, l and Omega must lie along e1 for the aligned-anisotropy model"
            )

    @property
    def kappa_eff2(self) -> float:
        """2*kappa*(1+l) at P = e1."""
        return self.kappa2 * (1.0 + self.l.a1)

    @property
    def w_eff(self) -> float:
        """w*(1+g) at P = e1."""
        return 0.5 * self.w2 * (1.0 + self.g.a1)

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("g", "l", "Omega"):
            v = getattr(self, name)
            d[name] = [v.a1, v.a2, v.a3]
        return d

    def digest(self) -> str:
        """Stable SHA-256 of the parameter set, used to tag output files."""
        blob = json.dumps({k: _canon(v) for k, v in self.to_dict().items()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def _canon(v):
    if isinstance(v, list):
        return [float(c).hex() for c in v]
    return float(v).hex()


@dataclass(frozen=True)
class DerivedParams:
    x: float
    rho: float
    theta: float
    r: float
    nu: float
    A: float
    n_s: float
    D_s: float
    below_threshold: bool

    @property
    def polarization_damping(self) -> float:
        """x + r + rho - theta, the scaled damping of the ellipticity oscillation."""
        return self.x + self.r + self.rho - self.theta

    @property
    def slow_damping(self) -> float:
        """rho + theta, the scaled relaxation rate of the polarization direction."""
        return self.rho + self.theta

    @property
    def stable(self) -> bool:
        return (not self.below_threshold) and self.slow_damping > 0 and self.polarization_damping > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x_plus_r_plus_rho_minus_theta"] = self.polarization_damping
        d["rho_plus_theta"] = self.slow_damping
        return d


def derive(params: LaserParams) -> DerivedParams:
    """Dimensionless combinations and the stationary operating point.

    Only valid for anisotropies along e1.  ``below_threshold`` is set rather
    than raised so that reports can still be produced for x <= 1.
    """
    params.require_aligned()
    k = params.kappa_eff2
    W = params.w_eff
    gam = params.gamma
    x = W * params.D0 / k
    n_s = gam * (x - 1.0) / W
    rho = k / gam * (params.g.a1 - params.l.a1)
    theta = params.alpha * params.Omega.a1 / gam
    r = params.Gamma / gam - 1.0
    nu2 = k * gam * (x - 1.0)
    nu = math.sqrt(nu2) if nu2 >= 0 else math.nan
    A = k * W / gam ** 2
    return DerivedParams(
        x=x, rho=rho, theta=theta, r=r, nu=nu, A=A, n_s=n_s, D_s=k / W,
        below_threshold=not (x > 1.0),
    )


_RATE_FIELDS = ("kappa2", "gamma", "Gamma", "w2")


def _split(a: float, unit: float) -> tuple[float, float]:
    hi = a / unit
    lo = float((Fraction(a) - Fraction(hi) * Fraction(unit)) / Fraction(unit))
    return hi, lo


def _join(hi: float, lo: float, unit: float) -> float:
    return float((Fraction(hi) + Fraction(lo)) * Fraction(unit))


@dataclass(frozen=True)
class ScaledParams:
    """Rates in units of gamma; ``time_unit`` is 1/gamma in seconds.

    ``residuals`` keeps the rounding left over by the division so that
    :meth:`redimensionalize` restores the SI values bit for bit.
    """

    kappa2: float
    gamma: float
    Gamma: float
    w2: float
    alpha: float
    D0: float
    g: AnisotropyVector
    l: AnisotropyVector
    Omega: AnisotropyVector
    gamma_si: float
    residuals: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def time_unit(self) -> float:
        return 1.0 / self.gamma_si

    def redimensionalize(self) -> LaserParams:
        u = self.gamma_si
        res = self.residuals
        rates = {n: _join(getattr(self, n), res.get(n, 0.0), u) for n in _RATE_FIELDS}
        om = [
            _join(getattr(self.Omega, c), res.get("Omega." + c, 0.0), u)
            for c in ("a1", "a2", "a3")
        ]
        return LaserParams(
            alpha=self.alpha, D0=self.D0, g=self.g, l=self.l,
            Omega=AnisotropyVector(*om), **rates,
        )


def nondimensionalize(params: LaserParams) -> tuple[ScaledParams, float]:
    u = params.gamma
    scaled, res = {}, {}
    for n in _RATE_FIELDS:
        scaled[n], res[n] = _split(getattr(params, n), u)
    om = []
    for c in ("a1", "a2", "a3"):
        hi, lo = _split(getattr(params.Omega, c), u)
        om.append(hi)
        res["Omega." + c] = lo
    sp = ScaledParams(
        alpha=params.alpha, D0=params.D0, g=params.g, l=params.l,
        Omega=AnisotropyVector(*om), gamma_si=u, residuals=res, **scaled,
    )
    return sp, 1.0 / u


def params_from_dimensionless(
    *,
    gamma: float,
    x: float,
    alpha: float,
    r: float,
    rho: float,
    theta: float,
    A: float | None = None,
    nu: float | None = None,
    kappa2_eff: float | None = None,
    w_eff: float | None = None,
    l: float = 0.0,
) -> LaserParams:
    """Build aligned :class:`LaserParams` from the dimensionless set.

    The two photon timescales are fixed by any two of ``A``, ``nu`` (rad/s),
    ``kappa2_eff`` = 2 kappa (1+l) and ``w_eff`` = w (1+g).
    """
    given = {k: v for k, v in dict(A=A, nu=nu, kappa2_eff=kappa2_eff, w_eff=w_eff).items()
             if v is not None}
    if len(given) != 2:
        raise ConfigError("specify exactly two of A, nu, kappa2_eff, w_eff")
    if not x > 1:
        # nu is undefined below threshold; only the (kappa, w) pair works
        if "nu" in given:
            raise ConfigError("nu cannot be used to fix timescales when x <= 1")
    k, W = kappa2_eff, w_eff
    if k is None:
        if nu is not None:
            k = nu ** 2 / (gamma * (x - 1.0))
        else:
            k = A * gamma ** 2 / W
    if W is None:
        if A is not None:
            W = A * gamma ** 2 / k
        else:
            raise ConfigError("w_eff undetermined; give A or w_eff")
    if alpha == 0 and theta != 0:
        raise ConfigError("theta != 0 needs alpha > 0")
    g = l + rho * gamma / k
    return LaserParams(
        kappa2=k / (1.0 + l),
        gamma=gamma,
        Gamma=gamma * (1.0 + r),
        w2=2.0 * W / (1.0 + g),
        alpha=alpha,
        D0=k * x / W,
        g=AnisotropyVector.along_e1(g),
        l=AnisotropyVector.along_e1(l),
        Omega=AnisotropyVector.along_e1(theta * gamma / alpha if alpha else 0.0),
    )


def reference_params(gamma_over_nu: float = 0.1, **overrides) -> LaserParams:
    """The x = alpha = r = rho = theta = 2, A = 0.01 operating point.

    With the default gamma/nu = 0.1 this is gamma = 1e10/s,
    2 kappa (1+l) = 1e12/s, w (1+g) = 1e6/s.
    """
    kw = dict(gamma=1e10, x=2.0, alpha=2.0, r=2.0, rho=2.0, theta=2.0, A=0.01)
    kw.update(overrides)
    kw["nu"] = kw["gamma"] / gamma_over_nu
    return params_from_dimensionless(**kw)

