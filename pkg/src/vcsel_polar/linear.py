"""Linearized Langevin system around the lasing fixed point.

State order is (dD, dn, d, P2, P3).  Drift and diffusion are kept in units
of gamma (time measured in 1/gamma); ``*_si`` properties convert back.

The density-difference coordinate of the linear system is the negative of
the ``d`` used by :mod:`vcsel_polar.dynamics`, which keeps the coupling
entries of the drift matrix in their conventional signs (see
:func:`dynamics_to_linear`).
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import fileio
from .errors import BelowThreshold, DefectiveMatrix, UnstablePolarization, UnstableSystem
from .params import DerivedParams, LaserParams

__all__ = [
    "STATE_LABELS",
    "LinearSystem",
    "EigenTriple",
    "CorrelationRecord",
    "FrequencySplitting",
    "build_linear_system",
    "analytic_eigensystem",
    "numeric_eigensystem",
    "fluctuation_matrix",
    "stationary_covariance",
    "lyapunov_residual",
    "analytic_correlators",
    "linear_correlators",
    "frequency_splitting",
    "exact_frequency_splitting",
    "dynamics_to_linear",
]

STATE_LABELS = ("dD", "dn", "d", "P2", "P3")
CORRELATOR_NAMES = ("dn_dn_abs", "dn_dn_rel", "p3p3", "p3p2", "p2p2")


@dataclass(frozen=True)
class LinearSystem:
    drift: np.ndarray
    diffusion: np.ndarray
    gamma: float       # 1/s
    n_s: float
    w_eff: float       # w(1+g)/gamma
    nu: float          # nu/gamma
    x: float
    note: str = "time in units of 1/gamma; state (dD, dn, d, P2, P3)"

    @property
    def drift_si(self) -> np.ndarray:
        return self.drift * self.gamma

    @property
    def diffusion_si(self) -> np.ndarray:
        return self.diffusion * self.gamma

    @property
    def scale(self) -> np.ndarray:
        """Diagonal change of variables y = scale * z; the drift of z is O(nu)."""
        return np.array([
            self.n_s * self.nu / (self.x - 1.0), self.n_s, self.nu / self.w_eff, 1.0, 1.0,
        ])

    def balanced(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.scale
        return self.drift * s[None, :] / s[:, None], self.diffusion / np.outer(s, s)


@dataclass
class EigenTriple:
    lam: complex           # units of gamma
    a: np.ndarray          # left (row) eigenvector
    b: np.ndarray          # right (column) eigenvector


@dataclass
class CorrelationRecord:
    """Correlators on a lag grid; ``tau`` is in units of 1/gamma.

    ``series`` maps names from :data:`CORRELATOR_NAMES` (plus any extras) to
    arrays, ``errors`` optionally holds matching standard errors.
    """

    tau: np.ndarray
    gamma: float
    series: dict
    errors: dict = field(default_factory=dict)
    n_s: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def tau_seconds(self) -> np.ndarray:
        return self.tau / self.gamma

    def __getitem__(self, name) -> np.ndarray:
        return self.series[name]

    def to_csv(self, path) -> None:
        cols = {"tau_scaled": self.tau, "tau_seconds": self.tau_seconds}
        for name in CORRELATOR_NAMES:
            if name in self.series:
                cols[name] = self.series[name]
        for name in self.series:
            if name not in cols:
                cols[name] = self.series[name]
        for name, err in self.errors.items():
            cols[name + "_se"] = err
        header = {"gamma_per_s": repr(self.gamma), "n_s": repr(self.n_s)}
        header.update({k: v for k, v in self.meta.items() if isinstance(v, (str, int, float))})
        fileio.write_csv(path, cols, header)

    @classmethod
    def from_csv(cls, path) -> "CorrelationRecord":
        cols, header = fileio.read_csv(path)
        tau = cols.pop("tau_scaled")
        cols.pop("tau_seconds", None)
        errors = {k[:-3]: cols.pop(k) for k in list(cols) if k.endswith("_se")}
        gamma = float(header.pop("gamma_per_s"))
        n_s = header.pop("n_s", "None")
        meta = dict(header)
        return cls(tau=tau, gamma=gamma, series=cols, errors=errors,
                   n_s=None if n_s in ("None", "") else float(n_s), meta=meta)


@dataclass(frozen=True)
class FrequencySplitting:
    delta_lambda: tuple    # 5 complex corrections, rad/s
    nu_n_minus_nu_P: float  # rad/s

    def to_dict(self) -> dict:
        return {"delta_lambda_per_s": list(self.delta_lambda),
                "nu_n_minus_nu_P_rad_per_s": self.nu_n_minus_nu_P}


def _require_lasing(derived: DerivedParams) -> None:
    if derived.below_threshold:
        raise BelowThreshold(f"x={derived.x:g} <= 1: no lasing fixed point")


def build_linear_system(
    derived: DerivedParams,
    params: LaserParams,
    carrier_noise: tuple[float, float] = (0.0, 0.0),
) -> LinearSystem:
    """Drift and diffusion matrices at the fixed point.

    ``carrier_noise`` adds diffusion (units of gamma) to the dD and d rows;
    both are zero in the quantum-noise model.
    """
    _require_lasing(derived)
    params.require_aligned()
    x, r, rho, al = derived.x, derived.r, derived.rho, params.alpha
    om = params.Omega.a1 / params.gamma     # theta/alpha, finite for alpha = 0
    nu = derived.nu / params.gamma
    W = params.w_eff / params.gamma
    k = params.kappa_eff2 / params.gamma
    n_s = derived.n_s
    M = np.zeros((5, 5))
    M[0, 0] = -x
    M[0, 1] = -nu ** 2 / (x - 1.0)
    M[1, 0] = x - 1.0
    M[2, 2] = -(x + r)
    M[2, 4] = nu ** 2 / W
    M[3, 2] = -W * al
    M[3, 3] = -rho
    M[3, 4] = -om
    M[4, 2] = -W
    M[4, 3] = om
    M[4, 4] = -rho
    N = np.zeros((5, 5))
    N[1, 1] = 2.0 * k * n_s
    N[3, 3] = N[4, 4] = 2.0 * k / n_s
    N[0, 0], N[2, 2] = carrier_noise
    return LinearSystem(drift=M, diffusion=N, gamma=params.gamma, n_s=n_s, w_eff=W, nu=nu, x=x)


def dynamics_to_linear(y, stationary) -> np.ndarray:
    """Map a dynamics state (D, n, d, P1, P2, P3) onto linear coordinates."""
    y = np.asarray(y, dtype=float)
    s = np.asarray(stationary, dtype=float)
    return np.stack([y[..., 0] - s[0], y[..., 1] - s[1], -y[..., 2], y[..., 4], y[..., 5]], axis=-1)


def analytic_eigensystem(derived: DerivedParams, params: LaserParams) -> list[EigenTriple]:
    """Leading-order eigenvalues and eigenvectors for gamma << nu.

    The d components of the fourth and fifth pair carry the sign that makes
    them eigenvectors of the drift in :func:`build_linear_system`.
    """
    _require_lasing(derived)
    x, r, rho, th, al = derived.x, derived.r, derived.rho, derived.theta, params.alpha
    nu = derived.nu / params.gamma
    W = params.w_eff / params.gamma
    if 1.0 / nu > 0.3:
        warnings.warn(f"gamma/nu = {1 / nu:.3g} > 0.3; leading-order eigensystem is inaccurate",
                      stacklevel=2)
    h = 1.0 / math.sqrt(2.0)
    out = []
    for sgn in (+1, -1):
        lam = complex(-0.5 * x, sgn * nu)
        a = h * np.array([-sgn * 1j * (x - 1) / nu, 1, 0, 0, 0], dtype=complex)
        b = h * np.array([sgn * 1j * nu / (x - 1), 1, 0, 0, 0], dtype=complex)
        out.append(EigenTriple(lam, a, b))
    out.append(EigenTriple(
        complex(-(rho + th), 0.0),
        np.array([0, 0, 0, 1, -al], dtype=complex),
        np.array([0, 0, 0, 1, 0], dtype=complex),
    ))
    S2 = x + r + rho - th
    for sgn in (+1, -1):
        lam = complex(-0.5 * S2, sgn * nu)
        a = h * np.array([0, 0, sgn * 1j * W / nu, 0, 1], dtype=complex)
        b = h * np.array([0, 0, -sgn * 1j * nu / W, al, 1], dtype=complex)
        out.append(EigenTriple(lam, a, b))
    return out


def _quadratic_roots(B: np.ndarray) -> list[complex]:
    tr = B[0, 0] + B[1, 1]
    det = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
    disc = cmath.sqrt(complex(0.25 * tr * tr - det))
    h = 0.5 * tr
    # avoid cancellation: compute the larger-magnitude root first
    big = h + disc if abs(h + disc) >= abs(h - disc) else h - disc
    small = det / big if big != 0 else h
    return [big, small]


def _cubic_roots(c2: float, c1: float, c0: float) -> list[complex]:
    """Roots of l^3 + c2 l^2 + c1 l + c0 (Cardano, then Newton polish)."""
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2 ** 3 / 27.0 - c2 * c1 / 3.0 + c0
    D = (q / 2.0) ** 2 + (p / 3.0) ** 3
    sD = cmath.sqrt(D)
    w1, w2 = -q / 2.0 + sD, -q / 2.0 - sD
    w = w1 if abs(w1) >= abs(w2) else w2
    roots = []
    if abs(w) == 0.0:
        roots = [complex(-c2 / 3.0)] * 3
    else:
        u = w ** (1.0 / 3.0)
        omega = cmath.exp(2j * math.pi / 3.0)
        for kk in range(3):
            uk = u * omega ** kk
            roots.append(uk - p / (3.0 * uk) - c2 / 3.0)

    def f(l):
        return ((l + c2) * l + c1) * l + c0

    def df(l):
        return (3 * l + 2 * c2) * l + c1

    polished = []
    for l in roots:
        for _ in range(4):
            d = df(l)
            if d == 0:
                break
            step = f(l) / d
            l_new = l - step
            if abs(f(l_new)) >= abs(f(l)):
                break
            l = l_new
        polished.append(l)
    return polished


def _null_right(B: np.ndarray) -> np.ndarray:
    rows = [B[i] for i in range(B.shape[0])]
    if B.shape[0] == 2:
        # (B - l) b = 0 -> b orthogonal (bilinear) to the larger row
        r = rows[0] if np.linalg.norm(rows[0]) >= np.linalg.norm(rows[1]) else rows[1]
        v = np.array([-r[1], r[0]])
        scale = np.linalg.norm(r)
        return v, scale
    best, bn, scale = None, -1.0, 1.0
    for i, j in ((0, 1), (0, 2), (1, 2)):
        c = np.cross(rows[i], rows[j])
        n = np.linalg.norm(c)
        if n > bn:
            best, bn = c, n
            scale = np.linalg.norm(rows[i]) * np.linalg.norm(rows[j])
    return best, scale


def _eig_block(B: np.ndarray, lams: list[complex]) -> list[tuple[complex, np.ndarray, np.ndarray]]:
    m = B.shape[0]
    normB = np.linalg.norm(B)
    out = []
    for lam in lams:
        Bl = B.astype(complex) - lam * np.eye(m)
        b, sb = _null_right(Bl)
        a, sa = _null_right(Bl.T)
        nb, na = np.linalg.norm(b), np.linalg.norm(a)
        if nb <= 1e-12 * max(sb, 1e-300) or na <= 1e-12 * max(sa, 1e-300):
            raise DefectiveMatrix(f"rank check failed for eigenvalue {lam}")
        b = b / nb
        ab = a @ b
        if abs(ab) <= 1e-8 * na:
            raise DefectiveMatrix(f"left/right eigenvectors orthogonal at {lam}: defective")
        a = a / ab
        res = max(np.linalg.norm(B @ b - lam * b), np.linalg.norm(a @ B - lam * a) / np.linalg.norm(a))
        if res > 1e-10 * max(normB, 1e-300):
            raise DefectiveMatrix(f"eigenvector residual {res:.3g} too large at {lam}")
        out.append((lam, a, b))
    return out


def numeric_eigensystem(sys: LinearSystem) -> list[EigenTriple]:
    """Exact eigentriples from the 2x2 quadratic and the 3x3 cubic.

    Ordering follows the analytic set: intensity pair (+Im first), the
    real polarization-direction mode, then the ellipticity pair.
    """
    Mb, _ = sys.balanced()
    s = sys.scale
    B1, B2 = Mb[:2, :2], Mb[2:, 2:]
    l1 = sorted(_quadratic_roots(B1), key=lambda z: (-z.imag, -z.real))
    c2 = -np.trace(B2)
    c1 = (B2[0, 0] * B2[1, 1] - B2[0, 1] * B2[1, 0]
          + B2[0, 0] * B2[2, 2] - B2[0, 2] * B2[2, 0]
          + B2[1, 1] * B2[2, 2] - B2[1, 2] * B2[2, 1])
    c0 = -np.linalg.det(B2)
    l2 = _cubic_roots(c2, c1, c0)
    # snap conjugate-pair partners and purely real roots onto exact symmetry
    l2 = sorted(l2, key=lambda z: abs(z.imag))
    real_root = complex(l2[0].real, 0.0) if abs(l2[0].imag) < 1e-12 * max(1, abs(l2[0])) else l2[0]
    rest = sorted(l2[1:], key=lambda z: -z.imag)
    l2 = [real_root] + rest
    triples = []
    for lam, a, b in _eig_block(B1, l1):
        A5 = np.zeros(5, complex)
        B5 = np.zeros(5, complex)
        A5[:2], B5[:2] = a, b
        triples.append(EigenTriple(complex(lam), A5 / s, B5 * s))
    for lam, a, b in _eig_block(B2, l2):
        A5 = np.zeros(5, complex)
        B5 = np.zeros(5, complex)
        A5[2:], B5[2:] = a, b
        triples.append(EigenTriple(complex(lam), A5 / s, B5 * s))
    return triples


def fluctuation_matrix(
    sys: LinearSystem,
    triples: list[EigenTriple],
    tau,
    mode: str = "full",
    return_imag: bool = False,
):
    """Two-time covariance F_kl(tau) = <z_k(t) z_l(t + tau)> from eigen-dyads.

    ``mode="diagonal"`` keeps only the i == j terms of the double sum.
    ``tau`` may be a scalar or an array (units of 1/gamma).
    """
    lam = np.array([t.lam for t in triples])
    if np.any(lam.real >= 0):
        raise UnstableSystem(f"eigenvalues with Re >= 0: {lam[lam.real >= 0]}")
    s = sys.scale
    A = np.array([t.a * s for t in triples])          # balanced left vectors (rows)
    Bm = np.array([t.b / s for t in triples]).T        # balanced right vectors (columns)
    _, Nb = sys.balanced()
    Nij = A @ Nb @ A.conj().T
    C = Nij / (-lam[:, None] - lam.conj()[None, :])
    if mode == "diagonal":
        C = np.diag(np.diag(C))
    elif mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    E = np.exp(np.outer(taus, lam.conj()))             # (T, 5)
    Fb = np.einsum("ik,tk,lk->til", Bm @ C, E, Bm.conj())
    imag = np.max(np.abs(Fb.imag)) / max(np.max(np.abs(Fb.real)), 1e-300)
    F = Fb.real * np.outer(s, s)[None]
    if np.ndim(tau) == 0:
        F = F[0]
    return (F, imag) if return_imag else F


def stationary_covariance(sys: LinearSystem) -> np.ndarray:
    """Equal-time covariance from a direct Lyapunov solve, independent of the eigen-dyad sum."""
    Mb, Nb = sys.balanced()
    S = scipy.linalg.solve_continuous_lyapunov(Mb, -Nb)
    S = 0.5 * (S + S.T)
    return S * np.outer(sys.scale, sys.scale)


def lyapunov_residual(sys: LinearSystem, F0: np.ndarray) -> float:
    """||M F + F M^T + N|| / ||N|| evaluated in balanced coordinates."""
    Mb, Nb = sys.balanced()
    Fb = F0 / np.outer(sys.scale, sys.scale)
    R = Mb @ Fb + Fb @ Mb.T + Nb
    return float(np.linalg.norm(R) / np.linalg.norm(Nb))


def _check_stable(derived: DerivedParams) -> None:
    _require_lasing(derived)
    if not derived.slow_damping > 0:
        raise UnstablePolarization(f"rho + theta = {derived.slow_damping:g} <= 0")
    if not derived.polarization_damping > 0:
        raise UnstablePolarization(f"x + r + rho - theta = {derived.polarization_damping:g} <= 0")


def analytic_correlators(derived: DerivedParams, params: LaserParams, tau) -> CorrelationRecord:
    """Closed-form intensity and polarization correlators on a lag grid (1/gamma)."""
    _check_stable(derived)
    tau = np.asarray(tau, dtype=float)
    x, A, al, nu = derived.x, derived.A, params.alpha, derived.nu / params.gamma
    S1, S2 = derived.slow_damping, derived.polarization_damping
    osc_n = np.exp(-0.5 * x * tau) * np.cos(nu * tau)
    osc_p = np.exp(-0.5 * S2 * tau) * np.cos(nu * tau)
    p3p3 = A / ((x - 1) * S2) * osc_p
    series = {
        "dn_dn_abs": params.kappa_eff2 / params.w_eff * (x - 1) / x * osc_n,
        "dn_dn_rel": A / (x * (x - 1)) * osc_n,
        "p3p3": p3p3,
        "p3p2": al * p3p3,
        "p2p2": al ** 2 * p3p3 + A * (1 + al ** 2) / ((x - 1) * S1) * np.exp(-S1 * tau),
    }
    return CorrelationRecord(tau=tau, gamma=params.gamma, series=series, n_s=derived.n_s,
                             meta={"source": "analytic", "params_hash": params.digest()})


def linear_correlators(
    sys: LinearSystem,
    tau,
    mode: str = "full",
    triples: list[EigenTriple] | None = None,
    params_hash: str = "",
) -> CorrelationRecord:
    """Correlators of the linear system itself, through the eigen-dyad sum."""
    triples = numeric_eigensystem(sys) if triples is None else triples
    tau = np.asarray(tau, dtype=float)
    F = fluctuation_matrix(sys, triples, tau, mode=mode)
    n_s = sys.n_s
    series = {
        "dn_dn_abs": F[:, 1, 1],
        "dn_dn_rel": F[:, 1, 1] / n_s ** 2,
        "p3p3": F[:, 4, 4],
        "p3p2": F[:, 4, 3],
        "p2p2": F[:, 3, 3],
        "p2p3": F[:, 3, 4],
        "dn_p2": F[:, 1, 3] / n_s,
        "dn_p3": F[:, 1, 4] / n_s,
    }
    return CorrelationRecord(tau=tau, gamma=sys.gamma, series=series, n_s=n_s,
                             meta={"source": f"linear-{mode}", "params_hash": params_hash})


def frequency_splitting(derived: DerivedParams, params: LaserParams) -> FrequencySplitting:
    """Second-order eigenvalue corrections and nu_n - nu_P in rad/s."""
    g, nu = params.gamma, derived.nu
    if g / nu >= 0.3:
        warnings.warn(f"gamma/nu = {g / nu:.3g} >= 0.3; perturbative splitting unreliable",
                      stacklevel=2)
    x, r, rho, th, al = derived.x, derived.r, derived.rho, derived.theta, params.alpha
    om = params.Omega.a1 / g                     # theta / alpha
    aniso = om * om * (al * al + 1.0)            # theta^2 (alpha^2 + 1) / alpha^2
    d1 = -1j * g * g * x * x / (8 * nu)
    d4 = -1j * g * g * (x + r - rho + th) ** 2 / (8 * nu) + 1j * g * g * aniso / (2 * nu)
    split = g * g / (8 * nu) * ((x + r - rho + th) ** 2 - x * x - 4 * aniso)
    return FrequencySplitting((d1, -d1, 0j, d4, -d4), split)


def exact_frequency_splitting(sys: LinearSystem, triples: list[EigenTriple] | None = None) -> float:
    """Im(lambda_1) - Im(lambda_4) of the exact eigensystem, in rad/s."""
    triples = numeric_eigensystem(sys) if triples is None else triples
    return (triples[0].lam.imag - triples[3].lam.imag) * sys.gamma


def eigensystem_to_json(triples: list[EigenTriple], gamma: float) -> list[dict]:
    return [
        {
            "lambda_scaled": [t.lam.real, t.lam.imag],
            "lambda_per_s": [t.lam.real * gamma, t.lam.imag * gamma],
            "a": [[c.real, c.imag] for c in t.a],
            "b": [[c.real, c.imag] for c in t.b],
        }
        for t in triples
    ]
