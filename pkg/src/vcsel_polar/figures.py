"""Plot-ready data for the three standard views of the model.

* anisotropy flow on the Poincare sphere, for a pure frequency anisotropy
  and a pure gain-loss anisotropy;
* the zero-lag (P2, P3) covariance with its 1- and 2-sigma contour ellipses;
* the polarization correlators against lag in units of 1/gamma.

Only numbers are produced; ``docs/`` holds gnuplot recipes for them.
"""

from __future__ import annotations

import math

import numpy as np

from .dynamics import _general, _rates
from .linear import analytic_correlators
from .params import AnisotropyVector, LaserParams, derive


def _sphere_points(n: int) -> np.ndarray:
    # rings of constant P1, so circles around e1 are sampled evenly
    pts = []
    for a in np.linspace(0.0, math.pi, n):
        m = 1 if a in (0.0, math.pi) else 2 * n
        for b in np.arange(m) * 2 * math.pi / m:
            pts.append((math.cos(a), math.sin(a) * math.cos(b), math.sin(a) * math.sin(b)))
    return np.array(pts)


def _field(params: LaserParams, pts: np.ndarray) -> np.ndarray:
    dp = derive(params)
    p = _rates(params)
    P1, P2, P3 = pts.T
    one = np.ones_like(P1)
    f = _general(dp.D_s * one, max(dp.n_s, 0.0) * one, 0.0 * one, P1, P2, P3, p)
    return np.stack(f[3:], axis=1)


def anisotropy_fields(params: LaserParams, n: int = 13) -> dict:
    """dP/d(gamma t) on the sphere with d = 0, for two single-anisotropy cases.

    "frequency" keeps only Omega (g = l = 0); "gain_loss" keeps only g and l.
    Returns name -> dict of columns P1, P2, P3, dP1, dP2, dP3.
    """
    pts = _sphere_points(n)
    zero = AnisotropyVector()
    cases = {
        "frequency": LaserParams(params.kappa2, params.gamma, params.Gamma, params.w2,
                                 params.alpha, params.D0, g=zero, l=zero, Omega=params.Omega),
        "gain_loss": LaserParams(params.kappa2, params.gamma, params.Gamma, params.w2,
                                 params.alpha, params.D0, g=params.g, l=params.l, Omega=zero),
    }
    out = {}
    for name, pp in cases.items():
        f = _field(pp, pts)
        out[name] = {"P1": pts[:, 0], "P2": pts[:, 1], "P3": pts[:, 2],
                     "dP1": f[:, 0], "dP2": f[:, 1], "dP3": f[:, 2]}
    return out


def polarization_covariance(params: LaserParams, n_points: int = 181) -> tuple[dict, dict]:
    """Zero-lag covariance of (P2, P3) and contour ellipse samples.

    The summary includes the RMS physical polarization angle, P2/2 radians,
    in degrees.
    """
    dp = derive(params)
    rec = analytic_correlators(dp, params, [0.0])
    c22, c23, c33 = rec["p2p2"][0], rec["p3p2"][0], rec["p3p3"][0]
    cov = np.array([[c22, c23], [c23, c33]])
    w, v = np.linalg.eigh(cov)
    summary = {
        "cov_p2p2": c22, "cov_p2p3": c23, "cov_p3p3": c33,
        "principal_variances": w, "principal_axes": v.T,
        "direction_rms_deg": math.degrees(0.5 * math.sqrt(c22)),
        "ellipticity_rms": math.sqrt(c33),
    }
    t = np.linspace(0, 2 * math.pi, n_points)
    L = v * np.sqrt(np.clip(w, 0, None))
    cols = {"t": t}
    for k in (1, 2):
        xy = k * (L @ np.vstack([np.cos(t), np.sin(t)]))
        cols[f"p2_{k}sigma"], cols[f"p3_{k}sigma"] = xy[0], xy[1]
    return summary, cols


def correlator_curves(params: LaserParams, tau_max: float = 3.0, n_tau: int = 301) -> dict:
    dp = derive(params)
    tau = np.linspace(0.0, tau_max, n_tau)
    rec = analytic_correlators(dp, params, tau)
    return {"tau_scaled": tau, "tau_seconds": tau / params.gamma,
            "p3p3": rec["p3p3"], "p3p2": rec["p3p2"], "p2p2": rec["p2p2"]}
