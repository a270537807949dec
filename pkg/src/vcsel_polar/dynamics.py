"""Deterministic rate equations for (D, n, d, P) and their integration.

Time is measured in units of 1/gamma throughout this module, so every
derivative returned here is d/d(gamma t).

Sign conventions
----------------
The polarization drift uses ``P x (v x P)``, which pulls ``P`` towards the
axis favoured by the net gain-loss anisotropy ``v``.  With this orientation
the stationary state ``P = e1`` is stable for rho + theta > 0, matching the
linearized Langevin matrix in :mod:`vcsel_polar.linear`.  The aligned
component form keeps the sign of the alpha term that follows from the
vector form (rotation about ``Omega + w(1+Pg) alpha d e3``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import fileio
from .errors import BelowThreshold, StateDiverged, StepTooLarge
from .params import LaserParams, derive, nondimensionalize

log = logging.getLogger(__name__)

__all__ = [
    "LaserState",
    "Trajectory",
    "general_rhs",
    "aligned_rhs",
    "integrate",
    "find_stationary",
]


@dataclass(frozen=True)
class LaserState:
    """Carrier number D, photon number n, density difference d, Stokes vector P."""

    D: float
    n: float
    d: float
    P: tuple

    def __post_init__(self):
        P = tuple(float(c) for c in self.P)
        if len(P) != 3:
            raise ValueError("P must have three components")
        object.__setattr__(self, "P", P)
        if self.n < 0:
            raise ValueError(f"photon number must be >= 0, got {self.n}")

    @classmethod
    def from_array(cls, y) -> "LaserState":
        y = [float(v) for v in y]
        return cls(y[0], y[1], y[2], (y[3], y[4], y[5]))

    def as_array(self) -> np.ndarray:
        return np.array([self.D, self.n, self.d, *self.P])

    @property
    def P_norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.P))


class _Rates(NamedTuple):
    k2: float      # 2 kappa / gamma
    Gam: float     # Gamma / gamma
    w: float       # w / gamma
    alpha: float
    D0: float
    g: tuple
    l: tuple
    Om: tuple      # Omega / gamma


def _rates(params: LaserParams) -> _Rates:
    sp, _ = nondimensionalize(params)
    return _Rates(
        k2=sp.kappa2, Gam=sp.Gamma, w=0.5 * sp.w2, alpha=sp.alpha, D0=sp.D0,
        g=(sp.g.a1, sp.g.a2, sp.g.a3), l=(sp.l.a1, sp.l.a2, sp.l.a3),
        Om=(sp.Omega.a1, sp.Omega.a2, sp.Omega.a3),
    )


def _general(D, n, d, P1, P2, P3, p: _Rates, g=None, Om=None):
    # works elementwise on floats or numpy arrays
    g = p.g if g is None else g
    Om = p.Om if Om is None else Om
    Wp = p.w * (1.0 + P1 * p.g[0] + P2 * p.g[1] + P3 * p.g[2])
    Kp = p.k2 * (1.0 + P1 * p.l[0] + P2 * p.l[1] + P3 * p.l[2])
    dD = -Wp * D * n - (D - p.D0) - Wp * d * n * P3
    dn = Wp * D * n - Kp * n + Wp * d * n * P3
    dd = -Wp * d * n - p.Gam * d - Wp * D * n * P3
    v1 = Wp * D * g[0] - Kp * p.l[0]
    v2 = Wp * D * g[1] - Kp * p.l[1]
    v3 = Wp * (D * g[2] + d) - Kp * p.l[2]
    pp = P1 * P1 + P2 * P2 + P3 * P3
    pv = P1 * v1 + P2 * v2 + P3 * v3
    u1 = Om[0]
    u2 = Om[1]
    u3 = Om[2] + Wp * p.alpha * d
    dP1 = v1 * pp - P1 * pv + (u2 * P3 - u3 * P2)
    dP2 = v2 * pp - P2 * pv + (u3 * P1 - u1 * P3)
    dP3 = v3 * pp - P3 * pv + (u1 * P2 - u2 * P1)
    return dD, dn, dd, dP1, dP2, dP3


def _aligned(D, n, d, P1, P2, P3, p: _Rates):
    W1 = p.w * (1.0 + P1 * p.g[0])
    K1 = p.k2 * (1.0 + P1 * p.l[0])
    G = W1 * D * p.g[0] - K1 * p.l[0]
    Om = p.Om[0]
    a = p.alpha
    dD = -W1 * D * n - (D - p.D0) - W1 * d * n * P3
    dn = W1 * D * n - K1 * n + W1 * d * n * P3
    dd = -W1 * d * n - p.Gam * d - W1 * D * n * P3
    dP1 = -G * (P1 * P1 - 1.0) - W1 * d * (P3 * P1 + a * P2)
    dP2 = -G * P1 * P2 - W1 * d * (P3 * P2 - a * P1) - Om * P3
    dP3 = -G * P1 * P3 - W1 * d * (P3 * P3 - 1.0) + Om * P2
    return dD, dn, dd, dP1, dP2, dP3


def general_rhs(state: LaserState, params: LaserParams) -> np.ndarray:
    """Vector-form rate equations for arbitrary anisotropy orientation.

    Returns d/d(gamma t) of (D, n, d, P1, P2, P3).  The P part is exactly
    orthogonal to P because both the gain-loss and rotation terms are.
    """
    return np.array(_general(*state.as_array(), _rates(params)))


def aligned_rhs(state: LaserState, params: LaserParams) -> np.ndarray:
    """Component form for g, l and Omega along e1."""
    params.require_aligned()
    return np.array(_aligned(*state.as_array(), _rates(params)))


@dataclass
class Trajectory:
    t: np.ndarray            # units of 1/gamma
    y: np.ndarray            # (len(t), 6): D, n, d, P1, P2, P3
    gamma: float             # 1/s, for conversion to seconds
    renorm: np.ndarray       # |1 - |P|| removed after each step

    @property
    def t_seconds(self) -> np.ndarray:
        return self.t / self.gamma

    def state(self, i: int) -> LaserState:
        return LaserState.from_array(self.y[i])

    def to_csv(self, path, params_hash: str = "") -> None:
        cols = {"t_scaled": self.t, "t_seconds": self.t_seconds}
        for k, name in enumerate(("D", "n", "d", "P1", "P2", "P3")):
            cols[name] = self.y[:, k]
        fileio.write_csv(path, cols, {"params_hash": params_hash, "gamma_per_s": self.gamma})


def _max_rate(p: _Rates) -> float:
    an = lambda v: math.sqrt(sum(c * c for c in v))
    return max(1.0, p.k2 * (1 + an(p.l)), p.Gam, 2 * p.w * (1 + an(p.g)), an(p.Om))


def _rk4(f, y, h, p):
    k1 = f(*y, p)
    k2 = f(*[a + 0.5 * h * b for a, b in zip(y, k1)], p)
    k3 = f(*[a + 0.5 * h * b for a, b in zip(y, k2)], p)
    k4 = f(*[a + h * b for a, b in zip(y, k3)], p)
    return [a + h / 6.0 * (b + 2 * c + 2 * e + q) for a, b, c, e, q in zip(y, k1, k2, k3, k4)]


def integrate(
    initial: LaserState,
    params: LaserParams,
    t_end: float,
    dt: float,
    *,
    model: str = "auto",
    record_every: int = 1,
) -> Trajectory:
    """Fixed-step RK4 with P renormalized after every step.

    ``t_end`` and ``dt`` are in units of 1/gamma.  ``model`` picks the
    right-hand side: "general", "aligned", or "auto" (aligned when possible).
    A step that would make n negative is retried with halved dt, up to ten
    times.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    p = _rates(params)
    limit = 0.01 / _max_rate(p)
    if dt > limit * (1 + 1e-12):
        raise StepTooLarge(f"dt={dt:g} exceeds 0.01/max_rate={limit:g} (units of 1/gamma)")
    if model == "auto":
        model = "aligned" if params.is_aligned else "general"
    f = {"general": _general, "aligned": _aligned}[model]
    if model == "aligned":
        params.require_aligned()

    if params.is_aligned:
        dp = derive(params)
        n_ref, D_ref = max(dp.n_s, 1.0), max(dp.D_s, abs(params.D0), 1.0)
    else:
        n_ref, D_ref = max(initial.n, 1.0), max(initial.D, abs(params.D0), 1.0)
    blowup = 1e12

    nsteps = int(math.ceil(t_end / dt - 1e-9))
    y = [float(v) for v in initial.as_array()]
    ts, ys, corr = [0.0], [list(y)], []
    t = 0.0
    for i in range(nsteps):
        h = min(dt, t_end - t)
        k = 1
        while True:
            y_new = y
            for _ in range(k):
                y_new = _rk4(f, y_new, h / k, p)
                if y_new[1] < 0:
                    break
            if y_new[1] >= 0:
                break
            if k >= 1024:
                raise StateDiverged(f"photon number went negative at t={t:g} despite step halving")
            k *= 2
        if k > 1:
            log.debug("step %d split into %d substeps to keep n >= 0", i, k)
        norm = math.sqrt(y_new[3] ** 2 + y_new[4] ** 2 + y_new[5] ** 2)
        corr.append(abs(1.0 - norm))
        y_new[3] /= norm
        y_new[4] /= norm
        y_new[5] /= norm
        if not all(math.isfinite(v) for v in y_new) or y_new[1] > blowup * n_ref or abs(y_new[0]) > blowup * D_ref:
            raise StateDiverged(f"state left the physical range at t={t + h:g}")
        y = y_new
        t += h
        if (i + 1) % record_every == 0 or i == nsteps - 1:
            ts.append(t)
            ys.append(list(y))
    corr = np.array(corr)
    if corr.size:
        log.debug("P renormalization: max %.3g, total %.3g", corr.max(), corr.sum())
    return Trajectory(t=np.array(ts), y=np.array(ys), gamma=params.gamma, renorm=corr)


def find_stationary(params: LaserParams) -> LaserState:
    """Lasing fixed point (D_s, n_s, 0, e1) of the aligned model."""
    params.require_aligned()
    dp = derive(params)
    k = params.kappa_eff2
    W = params.w_eff
    n_s = params.gamma * params.D0 / k - params.gamma / W
    if not n_s > 0:
        raise BelowThreshold(f"stationary photon number n_s={n_s:g} <= 0 (x={dp.x:g})")
    st = LaserState(dp.D_s, n_s, 0.0, (1.0, 0.0, 0.0))
    res = aligned_rhs(st, params)
    scale = np.array([dp.D_s, n_s, dp.D_s, 1.0, 1.0, 1.0])
    if np.max(np.abs(res) / scale) > 1e-10:
        raise StateDiverged(f"stationary residual too large: {res}")
    return st
