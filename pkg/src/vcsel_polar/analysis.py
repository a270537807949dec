"""Correlator estimation, damped-cosine fits, parameter inversion, filters.

Correlators are time averages over each member of a
:class:`~vcsel_polar.stochastic.FluctuationSeries`.  Standard errors come
from batch means: every member is cut into equal segments, each segment
gives an independent estimate, and the spread of those estimates sets the
error bar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import fileio
from .errors import DegenerateSystem, FitDiverged, ModelMismatch, SeriesTooShort
from .linear import CorrelationRecord
from .stochastic import FluctuationSeries

__all__ = [
    "estimate_correlators",
    "FitResult",
    "fit_damped_cosine",
    "alpha_estimates",
    "RecoveredParams",
    "invert_parameters",
    "FilteredIntensity",
    "filtered_intensity",
    "direction_spread_deg",
    "analytic_fits",
]

# (name, leading channel, lagging channel): <a(t) b(t + tau)>
_PAIRS = (
    ("dn_dn_rel", "dn_rel", "dn_rel"),
    ("p3p3", "p3", "p3"),
    ("p3p2", "p3", "p2"),
    ("p2p2", "p2", "p2"),
    ("p2p3", "p2", "p3"),
    ("dn_p2", "dn_rel", "p2"),
    ("dn_p3", "dn_rel", "p3"),
)


def _lag_grid(spacing: float, max_lag: float, lag_step: int) -> np.ndarray:
    kmax = int(math.floor(max_lag / spacing + 1e-9))
    return np.arange(0, kmax + 1, lag_step)


def _segments(n_members: int, samples: int, kmax: int, min_batches: int) -> int:
    if samples < 50 * max(kmax, 1):
        raise SeriesTooShort(
            f"{samples} samples per member is less than 50 x max lag ({50 * kmax} samples)"
        )
    want = max(1, math.ceil(min_batches / n_members))
    return max(1, min(want, samples // (50 * max(kmax, 1))))


def _batch_corr(chans: dict, pairs, lags: np.ndarray, segs: int, demean: bool) -> dict:
    """Per-segment correlations: name -> array (n_batches, len(lags))."""
    kmax = int(lags[-1])
    first = next(iter(chans.values()))
    m, samples = first.shape
    L = samples // segs
    nfft = 1 << int(math.ceil(math.log2(L + kmax + 1)))
    norm = (L - lags).astype(float)
    out = {name: [] for name, _, _ in pairs}
    needed = {c for _, a, b in pairs for c in (a, b)}
    for i in range(m):
        for j in range(segs):
            sl = slice(j * L, (j + 1) * L)
            ffts = {}
            for c in needed:
                v = chans[c][i, sl]
                if demean:
                    v = v - v.mean()
                ffts[c] = np.fft.rfft(v, nfft)
            for name, a, b in pairs:
                cc = np.fft.irfft(np.conj(ffts[a]) * ffts[b], nfft)
                out[name].append(cc[lags] / norm)
    return {k: np.array(v) for k, v in out.items()}


def _mean_se(batches: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    B = batches.shape[0]
    mean = batches.mean(axis=0)
    if B < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, batches.std(axis=0, ddof=1) / math.sqrt(B)


def estimate_correlators(
    series,
    max_lag: float,
    lag_step: int = 1,
    *,
    min_batches: int = 16,
    demean: bool = True,
) -> CorrelationRecord:
    """Time-averaged auto and cross correlators with batch-means errors.

    ``series`` may be one :class:`FluctuationSeries` or an iterable of them
    (for example ensemble chunks simulated separately); all must share the
    sampling interval.  ``max_lag`` is in units of 1/gamma, ``lag_step`` in
    samples.  Cross terms use the <P3(t) P2(t + tau)> ordering; the
    transposed ``p2p3`` is included for diagnostics.
    """
    batches: dict[str, list] = {name: [] for name, _, _ in _PAIRS}
    head = None
    lags = None
    for s in [series] if isinstance(series, FluctuationSeries) else series:
        if head is None:
            head = s
            lags = _lag_grid(s.spacing, max_lag, lag_step)
        elif s.spacing != head.spacing:
            raise ValueError("all series must share one sample spacing")
        segs = _segments(s.members, s.samples, int(lags[-1]), min_batches)
        chans = {"dn_rel": s.dn_rel, "p2": s.p2, "p3": s.p3}
        for k, v in _batch_corr(chans, _PAIRS, lags, segs, demean).items():
            batches[k].append(v)
    if head is None:
        raise SeriesTooShort("no series given")
    series_out, errors = {}, {}
    n_batches = 0
    for name in batches:
        arr = np.concatenate(batches[name], axis=0)
        n_batches = arr.shape[0]
        series_out[name], errors[name] = _mean_se(arr)
    series_out["dn_dn_abs"] = series_out["dn_dn_rel"] * head.n_s ** 2
    errors["dn_dn_abs"] = errors["dn_dn_rel"] * head.n_s ** 2
    meta = {"source": "estimate", "batches": n_batches}
    for k in ("params_hash", "seed", "mode", "scheme"):
        if k in head.provenance:
            meta[k] = head.provenance[k]
    return CorrelationRecord(tau=lags * head.spacing, gamma=head.gamma, series=series_out,
                             errors=errors, n_s=head.n_s, meta=meta)


# fitting

_NAMES = {
    "single": ("C", "S", "decay", "freq"),
    "cosine_plus_exponential": ("C", "S", "decay", "freq", "E", "decay2"),
}


@dataclass
class FitResult:
    """Fit of exp(-decay tau) (C cos(freq tau) + S sin(freq tau)) [+ E exp(-decay2 tau)].

    Rates are in units of gamma (per unit of scaled lag); ``gamma`` converts
    to SI.
    """

    model: str
    channel: str
    params: dict
    errors: dict
    rms: float
    chi2_red: float
    n_points: int
    gamma: float
    weighted: bool
    converged: bool = True
    note: str = ""

    @property
    def amplitude(self) -> float:
        """Envelope amplitude of the oscillating part, hypot(C, S)."""
        return math.hypot(self.params["C"], self.params.get("S", 0.0))

    @property
    def amplitude_se(self) -> float:
        C, S = self.params["C"], self.params.get("S", 0.0)
        eC, eS = self.errors["C"], self.errors.get("S", 0.0)
        amp = math.hypot(C, S)
        if amp == 0:
            return math.hypot(eC, eS)
        return math.hypot(C * eC, S * eS) / amp

    def si(self, name: str) -> float:
        v = self.params[name]
        return v * self.gamma if name in ("decay", "freq", "decay2") else v

    def si_error(self, name: str) -> float:
        v = self.errors[name]
        return v * self.gamma if name in ("decay", "freq", "decay2") else v

    def evaluate(self, tau) -> np.ndarray:
        return _model(self.model, [self.params[k] for k in _NAMES[self.model]], np.asarray(tau))

    def to_dict(self) -> dict:
        d = {
            "model": self.model, "channel": self.channel,
            "params_scaled": dict(self.params), "errors_scaled": dict(self.errors),
            "rms": self.rms, "chi2_red": self.chi2_red, "n_points": self.n_points,
            "gamma_per_s": self.gamma, "weighted": self.weighted,
            "converged": self.converged, "note": self.note,
            "amplitude": self.amplitude,
        }
        for k in ("decay", "freq", "decay2"):
            if k in self.params:
                unit = "_rad_per_s" if k == "freq" else "_per_s"
                d[k + unit] = self.si(k)
                d[k + unit + "_se"] = self.si_error(k)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(model=d["model"], channel=d["channel"], params=dict(d["params_scaled"]),
                   errors={k: (math.nan if v is None else v) for k, v in d["errors_scaled"].items()},
                   rms=d["rms"], chi2_red=d["chi2_red"] if d["chi2_red"] is not None else math.nan,
                   n_points=d["n_points"], gamma=d["gamma_per_s"], weighted=d["weighted"],
                   converged=d.get("converged", True), note=d.get("note", ""))


def _model(model: str, p, tau):
    C, S, a, b = p[:4]
    y = np.exp(-a * tau) * (C * np.cos(b * tau) + S * np.sin(b * tau))
    if model == "cosine_plus_exponential":
        y = y + p[4] * np.exp(-p[5] * tau)
    return y


def _dominant_freq(tau, y) -> float:
    dt = tau[1] - tau[0]
    n = 8 * len(y)
    power = np.abs(np.fft.rfft((y - y.mean()) * np.hanning(len(y)), n))
    w = 2 * np.pi * np.fft.rfftfreq(n, dt)
    lo = 2 * 2 * np.pi / (tau[-1] - tau[0])
    power[w < lo] = 0.0
    return float(w[np.argmax(power)])


def _grid_search(model, tau, y, wts, quadrature, fmax):
    span = tau[-1] - tau[0]
    dt = tau[1] - tau[0]
    decays = np.geomspace(0.2 / span, 0.5 / dt, 48)
    b0 = _dominant_freq(tau, y)
    freqs = np.linspace(0.6 * b0, min(1.4 * b0, fmax), 41) if b0 > 0 else np.linspace(fmax / 40, fmax, 40)
    combos = [(a, b) for a in decays for b in freqs]
    if model == "cosine_plus_exponential":
        combos = [(a, b, c) for a, b in combos for c in decays[::2]]
    best = (math.inf, None)
    yw = y * wts
    chunk = 4096
    for start in range(0, len(combos), chunk):
        cb = np.array(combos[start:start + chunk])
        a, b = cb[:, :1], cb[:, 1:2]
        env = np.exp(-a * tau[None, :])
        cols = [env * np.cos(b * tau[None, :])]
        if quadrature:
            cols.append(env * np.sin(b * tau[None, :]))
        if model == "cosine_plus_exponential":
            cols.append(np.exp(-cb[:, 2:3] * tau[None, :]))
        X = np.stack(cols, axis=-1) * wts[None, :, None]          # (G, n, p)
        XtX = np.einsum("gnp,gnq->gpq", X, X) + 1e-300 * np.eye(X.shape[-1])
        Xty = np.einsum("gnp,n->gp", X, yw)
        try:
            coef = np.linalg.solve(XtX, Xty[..., None])[..., 0]
        except np.linalg.LinAlgError:
            coef = np.array([np.linalg.lstsq(Xi, yw, rcond=None)[0] for Xi in X])
        res = np.einsum("gnp,gp->gn", X, coef) - yw[None, :]
        cost = np.einsum("gn,gn->g", res, res)
        i = int(np.nanargmin(cost))
        if cost[i] < best[0]:
            c = coef[i]
            p = [c[0], c[1] if quadrature else 0.0, cb[i, 0], cb[i, 1]]
            if model == "cosine_plus_exponential":
                p += [c[-1], cb[i, 2]]
            best = (float(cost[i]), p)
    return best[1]


def fit_damped_cosine(
    record: CorrelationRecord,
    channel: str,
    model: str = "single",
    *,
    quadrature: bool = True,
    tau_max: float | None = None,
    weighted: bool = True,
    mismatch_factor: float = 5.0,
) -> FitResult:
    """Least-squares fit of a damped cosine (optionally plus an exponential).

    A grid over (decay, frequency[, second decay]) with the amplitudes solved
    linearly picks the starting point; Levenberg-Marquardt refines all
    parameters.  ``quadrature`` adds the sine term that the exact linear
    correlators carry at finite gamma/nu.  Inverse-variance weights come from
    ``record.errors`` when present and usable.
    """
    if model not in _NAMES:
        raise ValueError(f"unknown model {model!r}")
    tau = np.asarray(record.tau, dtype=float)
    y = np.asarray(record[channel], dtype=float)
    sel = np.ones_like(tau, dtype=bool) if tau_max is None else tau <= tau_max * (1 + 1e-12)
    tau, y = tau[sel], y[sel]
    err = record.errors.get(channel) if weighted else None
    use_w = err is not None and np.all(np.isfinite(err[sel])) and np.all(err[sel] > 0)
    wts = 1.0 / err[sel] if use_w else np.full_like(y, 1.0 / max(np.max(np.abs(y)), 1e-300))
    dt = tau[1] - tau[0]
    fmax = 2 * np.pi / (10 * dt)
    names = _NAMES[model]
    p0 = _grid_search(model, tau, y, wts, quadrature, fmax)

    free = [k for k, n in enumerate(names) if quadrature or n != "S"]

    def full(q):
        p = np.array(p0, dtype=float)
        p[free] = q
        return p

    def resid(q):
        return (_model(model, full(q), tau) - y) * wts

    def pack(p, cov, conv, note):
        r = _model(model, p, tau) - y
        dof = max(len(y) - len(free), 1)
        chi2 = float(np.sum((r * wts) ** 2) / dof)
        errs = {n: 0.0 for n in names}
        if cov is not None:
            sd = np.sqrt(np.abs(np.diag(cov)) * chi2)
            for k, idx in enumerate(free):
                errs[names[idx]] = float(sd[k])
        else:
            errs = {n: math.nan for n in names}
        return FitResult(
            model=model, channel=channel, params={n: float(v) for n, v in zip(names, p)},
            errors=errs, rms=float(np.sqrt(np.mean(r ** 2))),
            chi2_red=chi2 if use_w else math.nan, n_points=len(y), gamma=record.gamma,
            weighted=bool(use_w), converged=conv, note=note,
        )

    grid_result = pack(np.array(p0), None, False, "best grid point")
    q0 = np.array(p0, dtype=float)[free]
    try:
        sol = least_squares(resid, q0, method="lm", x_scale="jac", xtol=1e-15, ftol=1e-15,
                            gtol=1e-15, max_nfev=2000 * len(q0))
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitDiverged(f"{channel}: optimizer failed ({exc})", result=grid_result) from exc
    p = full(sol.x)
    if not np.all(np.isfinite(p)) or sol.status <= 0:
        raise FitDiverged(f"{channel}: optimizer did not converge ({sol.message})", result=grid_result)
    # canonical sign: decay >= 0, freq >= 0
    if p[3] < 0:
        p[3], p[1] = -p[3], -p[1]
    if p[2] < 0 or (model == "cosine_plus_exponential" and p[5] < 0):
        raise FitDiverged(f"{channel}: fitted decay rate is negative", result=grid_result)
    J = sol.jac
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(J.T @ J)
    result = pack(p, cov, True, "")
    if use_w:
        wrms = math.sqrt(result.chi2_red * max(len(y) - len(free), 1) / len(y))
        if wrms > mismatch_factor:
            result.note = f"weighted residual RMS {wrms:.3g} exceeds {mismatch_factor:g} error bars"
            raise ModelMismatch(f"{channel}: {result.note}", result=result)
    return result


def alpha_estimates(record: CorrelationRecord, fit32: FitResult | None = None,
                    fit33: FitResult | None = None) -> dict:
    """Three estimates of alpha from the cross/auto ratio.

    * ``envelope``: ratio of fitted oscillation amplitudes (needs the fits);
    * ``tau0``: <P3 P2>(0) / <P3 P3>(0);
    * ``pointwise``: mean of the pointwise ratio over the first oscillation
      period where |<P3 P3>| exceeds half its zero-lag value.
    """
    y32, y33 = record["p3p2"], record["p3p3"]
    e32 = record.errors.get("p3p2")
    e33 = record.errors.get("p3p3")
    out = {}
    r0 = y32[0] / y33[0]
    out["tau0"] = r0
    if e32 is not None and e33 is not None:
        out["tau0_se"] = abs(r0) * math.hypot(e32[0] / y32[0], e33[0] / y33[0])
    nu = fit33.params["freq"] if fit33 is not None else None
    period = 2 * math.pi / nu if nu else record.tau[-1]
    mask = (record.tau <= period) & (np.abs(y33) >= 0.5 * abs(y33[0]))
    ratios = y32[mask] / y33[mask]
    out["pointwise"] = float(np.mean(ratios))
    if e32 is not None and e33 is not None:
        rel = np.hypot(e32[mask] / y32[mask], e33[mask] / y33[mask])
        out["pointwise_se"] = float(np.sqrt(np.mean((ratios * rel) ** 2)))
    if fit32 is not None and fit33 is not None:
        env = fit32.amplitude / fit33.amplitude
        out["envelope"] = env
        out["envelope_se"] = abs(env) * math.hypot(fit32.amplitude_se / fit32.amplitude,
                                                   fit33.amplitude_se / fit33.amplitude)
    return out


# inversion

_INPUTS = ("a_n", "nu_n", "C_n", "a_p", "nu_p", "c_slow", "amp32", "amp33")


@dataclass
class RecoveredParams:
    """Recovered physical parameters; rates in SI (1/s, rad/s)."""

    values: dict
    errors: dict
    x: float
    degenerate: bool = False
    theta_alternate: float | None = None
    consistency: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def __getitem__(self, name):
        return self.values[name]

    def to_dict(self) -> dict:
        return {"values": self.values, "errors": self.errors, "x_assumed": self.x,
                "degenerate": self.degenerate, "theta_alternate": self.theta_alternate,
                "consistency": self.consistency, "notes": list(self.notes)}


def _fit_inputs(fits: dict) -> tuple[dict, dict]:
    dn, p33, p22, p32 = fits["dn"], fits["p3p3"], fits["p2p2"], fits["p3p2"]
    if p22.model != "cosine_plus_exponential":
        raise ValueError("the p2p2 fit must use the cosine_plus_exponential model")
    vals = {
        "a_n": dn.si("decay"), "nu_n": dn.si("freq"), "C_n": dn.params["C"],
        "a_p": p33.si("decay"), "nu_p": p33.si("freq"), "c_slow": p22.si("decay2"),
        "amp32": p32.amplitude, "amp33": p33.amplitude,
    }
    errs = {
        "a_n": dn.si_error("decay"), "nu_n": dn.si_error("freq"), "C_n": dn.errors["C"],
        "a_p": p33.si_error("decay"), "nu_p": p33.si_error("freq"),
        "c_slow": p22.si_error("decay2"), "amp32": p32.amplitude_se, "amp33": p33.amplitude_se,
    }
    return vals, errs


def _theta_roots(u, x, alpha, K):
    a2 = 12.0 - 4.0 / alpha ** 2
    b = 8.0 * u
    c = u * u - x * x - K
    if abs(a2) < 1e-12:
        return [-c / b], False
    disc = b * b - 4 * a2 * c
    if disc < 0:
        return [-b / (2 * a2)], True
    sq = math.sqrt(disc)
    return [(-b + sq) / (2 * a2), (-b - sq) / (2 * a2)], False


def _core(q: dict, x: float, split: bool = True) -> dict:
    gamma = 2.0 * q["a_n"] / x
    nu = math.sqrt(q["nu_n"] ** 2 + q["a_n"] ** 2)
    A = q["C_n"] * x * (x - 1.0)
    alpha = q["amp32"] / q["amp33"]
    S2 = 2.0 * q["a_p"] / gamma
    S1 = q["c_slow"] / gamma
    k2 = nu ** 2 / (gamma * (x - 1.0))
    out = {
        "gamma_per_s": gamma, "nu_rad_per_s": nu, "A": A, "alpha": alpha,
        "rho_plus_theta": S1, "x_plus_r_plus_rho_minus_theta": S2,
        "kappa2_eff_per_s": k2, "w_eff_per_s": A * gamma ** 2 / k2,
        "nu_n_minus_nu_P_rad_per_s": q["nu_n"] - q["nu_p"],
    }
    if split:
        K = 8.0 * nu * (q["nu_n"] - q["nu_p"]) / gamma ** 2
        u = S2 - 2.0 * S1
        roots, clipped = _theta_roots(u, x, alpha, K)
        cands = []
        for th in roots:
            rho = S1 - th
            r = S2 - x - rho + th
            cands.append((th, rho, r))
        ok = [c for c in cands if c[2] >= 0]
        pick = max(ok or cands, key=lambda c: c[0])
        alt = [c[0] for c in ok if c is not pick]
        out.update(theta=pick[0], rho=pick[1], r=pick[2])
        out["_alternate"] = alt[0] if alt else None
        out["_clipped"] = clipped
        out["_admissible"] = bool(ok)
    return out


def invert_parameters(fits: dict, x: float, *, abs_amplitude: float | None = None,
                      rel_step: float = 1e-6) -> RecoveredParams:
    """Recover rates and anisotropies from correlator fits.

    ``fits`` maps "dn" (single fit of dn_dn_rel), "p3p3" (single),
    "p2p2" (cosine_plus_exponential) and "p3p2" (either) to
    :class:`FitResult`.  The pump ratio ``x`` is taken as known, since the
    intensity decay and amplitude alone cannot separate gamma, x and A.
    ``abs_amplitude`` is the zero-lag absolute photon-number variance, used
    for an independent check of nu.
    """
    q, qe = _fit_inputs(fits)
    dnu = q["nu_n"] - q["nu_p"]
    dnu_se = max(math.hypot(qe["nu_n"], qe["nu_p"]), 1e-9 * abs(q["nu_n"]))
    degenerate = not abs(dnu) > dnu_se
    base = _core(q, x, split=not degenerate)

    # first-order propagation by finite differences over independent inputs
    keys = [k for k in base if not k.startswith("_")]
    var = {k: 0.0 for k in keys}
    for name in _INPUTS:
        se = qe[name]
        if not (se and math.isfinite(se)):
            continue
        h = max(abs(q[name]) * rel_step, 1e-300)
        up = dict(q)
        up[name] = q[name] + h
        shifted = _core(up, x, split=not degenerate)
        for k in keys:
            var[k] += ((shifted[k] - base[k]) / h * se) ** 2
    values = {k: base[k] for k in keys}
    errors = {k: math.sqrt(v) for k, v in var.items()}
    notes = []
    if not degenerate and base.get("_clipped"):
        notes.append("negative discriminant for theta; used the vertex of the quadratic")
    if not degenerate and not base.get("_admissible", True):
        notes.append("no theta root gives r >= 0; reporting the larger root")
    consistency = {}
    if abs_amplitude is not None:
        ratio = abs_amplitude * x / (x - 1.0)             # 2 kappa (1+l) / (w (1+g))
        g = base["gamma_per_s"]
        k2 = g * math.sqrt(base["A"] * ratio)
        nu_pred = math.sqrt(k2 * g * (x - 1.0))
        consistency = {"nu_from_intensity_noise_rad_per_s": nu_pred,
                       "relative_mismatch": nu_pred / base["nu_rad_per_s"] - 1.0}
    rec = RecoveredParams(values=values, errors=errors, x=x, degenerate=degenerate,
                          theta_alternate=base.get("_alternate"), consistency=consistency,
                          notes=notes)
    if degenerate:
        rec.notes.append(
            f"frequency splitting {dnu:.4g} rad/s is below its standard error {dnu_se:.3g}; "
            "only rho+theta and x+r+rho-theta are determined"
        )
        exc = DegenerateSystem(rec.notes[-1])
        exc.result = rec
        raise exc
    return rec


def analytic_fits(derived, params) -> dict:
    """Noise-free fit results built from the closed-form correlators.

    Oscillation frequencies include the second-order eigenvalue shifts, so
    the intensity and ellipticity frequencies differ by the perturbative
    splitting.  Feeding these to :func:`invert_parameters` is a closed-loop
    check of the inversion algebra.
    """
    from .linear import frequency_splitting

    g = params.gamma
    x, al = derived.x, params.alpha
    nu = derived.nu / g
    A, S1, S2 = derived.A, derived.slow_damping, derived.polarization_damping
    dl = frequency_splitting(derived, params).delta_lambda
    nu_n = nu + dl[0].imag / g
    nu_p = nu + dl[3].imag / g
    amp33 = A / ((x - 1) * S2)

    def fr(channel, model, vals):
        names = _NAMES[model]
        return FitResult(model=model, channel=channel, params=dict(zip(names, vals)),
                         errors={n: 0.0 for n in names}, rms=0.0, chi2_red=math.nan,
                         n_points=0, gamma=g, weighted=False, note="closed form")

    return {
        "dn": fr("dn_dn_rel", "single", (A / (x * (x - 1)), 0.0, 0.5 * x, nu_n)),
        "p3p3": fr("p3p3", "single", (amp33, 0.0, 0.5 * S2, nu_p)),
        "p3p2": fr("p3p2", "single", (al * amp33, 0.0, 0.5 * S2, nu_p)),
        "p2p2": fr("p2p2", "cosine_plus_exponential",
                   (al * al * amp33, 0.0, 0.5 * S2, nu_p, A * (1 + al * al) / ((x - 1) * S1), S1)),
    }


# polarization filters

@dataclass
class FilteredIntensity:
    """Relative fluctuations of a filtered intensity and the additivity check.

    ``record`` holds the autocorrelations ``filtered`` (of dI/I_mean),
    ``intensity`` (dn/n_s), ``projected`` (the Stokes component along the
    filter axis) and the residuals ``residual_half`` = filtered - (intensity +
    projected)/2 and ``residual_sum`` = filtered - (intensity + projected).
    """

    values: np.ndarray
    mean_intensity: float
    record: CorrelationRecord


def _projection(series: FluctuationSeries, filt: str, angle: float):
    if filt == "right-circular":
        return series.p3
    if filt == "left-circular":
        return -series.p3
    if filt == "linear":
        return math.cos(2 * angle) * series.p1 + math.sin(2 * angle) * series.p2
    raise ValueError(f"unknown filter {filt!r}")


def filtered_intensity(series: FluctuationSeries, filt: str = "right-circular", *,
                       angle: float = 0.0, max_lag: float = 1.0, lag_step: int = 1,
                       min_batches: int = 16) -> FilteredIntensity:
    """Intensity behind an ideal polarizer, n (1 + P_proj)/2, relative to its mean.

    ``filt`` is "right-circular", "left-circular" or "linear" (with
    ``angle`` in radians from the stationary polarization axis).
    """
    proj = _projection(series, filt, angle)
    inten = (1.0 + series.dn_rel) * (1.0 + proj) * 0.5     # in units of n_s
    mean = float(inten.mean())
    rel = inten / mean - 1.0
    lags = _lag_grid(series.spacing, max_lag, lag_step)
    segs = _segments(series.members, series.samples, int(lags[-1]), min_batches)
    chans = {"filtered": rel, "dn_rel": series.dn_rel, "proj": proj}
    pairs = (("filtered", "filtered", "filtered"), ("intensity", "dn_rel", "dn_rel"),
             ("projected", "proj", "proj"))
    b = _batch_corr(chans, pairs, lags, segs, demean=True)
    b["half_sum"] = 0.5 * (b["intensity"] + b["projected"])
    b["full_sum"] = b["intensity"] + b["projected"]
    b["residual_half"] = b["filtered"] - b["half_sum"]
    b["residual_sum"] = b["filtered"] - b["full_sum"]
    out, errs = {}, {}
    for k, v in b.items():
        out[k], errs[k] = _mean_se(v)
    meta = {"source": f"filter-{filt}", "angle_rad": angle, "batches": b["filtered"].shape[0]}
    rec = CorrelationRecord(tau=lags * series.spacing, gamma=series.gamma, series=out,
                            errors=errs, n_s=series.n_s, meta=meta)
    return FilteredIntensity(values=rel, mean_intensity=mean * series.n_s, record=rec)


def direction_spread_deg(p2p2_zero: float) -> float:
    """RMS physical polarization angle in degrees; the angle is P2/2 radians."""
    return math.degrees(0.5 * math.sqrt(p2p2_zero))


def read_fits(path) -> dict:
    """Load fits written by the ``fit`` command; keys starting with "_" are metadata."""
    return {k: FitResult.from_dict(v) for k, v in fileio.read_json(path).items()
            if not k.startswith("_")}
