"""Langevin simulation of polarization and intensity fluctuations.

Two drivers share one output type:

* :func:`simulate_linear` integrates the linearized system
  dz = M z dt + dW with <dW dW^T> = N dt.  The recursion z_{k+1} = B z_k + q_k
  is diagonalized once, so each eigenmode becomes a scalar AR(1) filter
  evaluated with :func:`scipy.signal.lfilter`.  ``scheme="euler_maruyama"``
  uses B = I + M dt, Q = N dt; ``scheme="exact"`` uses the exact
  Ornstein-Uhlenbeck transition (B = expm(M dt), Q from Van Loan's block
  exponential), which has no step-size bias.
* :func:`simulate_nonlinear` runs Euler-Maruyama on the full aligned rate
  equations, vectorized over ensemble members.

Every member draws from ``numpy.random.default_rng([seed, member])``, so a
member's path does not depend on how the ensemble is split up.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.signal import lfilter

from . import fileio
from .dynamics import _aligned, _rates
from .errors import BelowThreshold, ConfigError, IOFailure, StateDiverged, UnstablePolarization, UnstableSystem
from .linear import LinearSystem, build_linear_system
from .params import LaserParams, derive

log = logging.getLogger(__name__)

__all__ = [
    "NoiseConfig",
    "FluctuationSeries",
    "simulate_linear",
    "simulate_nonlinear",
    "scheme_covariance",
    "read_series",
]

CHANNELS = ("dn_rel", "p2", "p3")
_BLOCK = 1 << 16          # steps per noise draw / filter chunk


@dataclass(frozen=True)
class NoiseConfig:
    """Simulation settings; all times in units of 1/gamma.

    ``duration`` is the recorded length of each ensemble member after the
    burn-in.  ``burn_in=None`` means 10/(rho+theta).
    """

    seed: int = 0
    dt: float = 1e-3
    mode: str = "linearized"
    duration: float = 100.0
    burn_in: float | None = None
    ensemble: int = 1
    scheme: str = "euler_maruyama"
    sample_every: int = 1
    frozen_noise: bool = False
    carrier_noise: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.mode not in ("linearized", "nonlinear"):
            raise ConfigError(f"mode must be 'linearized' or 'nonlinear', got {self.mode!r}")
        if self.scheme not in ("euler_maruyama", "exact"):
            raise ConfigError(f"scheme must be 'euler_maruyama' or 'exact', got {self.scheme!r}")
        if self.mode == "nonlinear" and self.scheme != "euler_maruyama":
            raise ConfigError("the nonlinear mode only supports scheme='euler_maruyama'")
        if not (self.dt > 0 and self.duration > 0):
            raise ConfigError("dt and duration must be positive")
        if self.ensemble < 1 or self.sample_every < 1:
            raise ConfigError("ensemble and sample_every must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must fit in 64 unsigned bits")

    def burn_in_for(self, slow_damping: float) -> float:
        return 10.0 / slow_damping if self.burn_in is None else self.burn_in

    def max_dt(self, x: float, polarization_damping: float, nu_scaled: float) -> float:
        return 0.02 * min(1.0 / x, 1.0 / polarization_damping, 2 * math.pi / (10 * nu_scaled))

    def validate(self, x: float, rho_plus_theta: float, polarization_damping: float,
                 nu_scaled: float) -> None:
        """Check step size and burn-in against the system's timescales.

        The step bound applies to Euler-Maruyama only; the exact scheme has
        no step-size bias, so only the sampling resolution is checked.
        """
        if self.scheme == "euler_maruyama":
            lim = self.max_dt(x, polarization_damping, nu_scaled)
            if self.dt > lim * (1 + 1e-12):
                raise ConfigError(f"dt={self.dt:g} exceeds {lim:g} for Euler-Maruyama")
        spacing = self.dt * self.sample_every
        if spacing > 2 * math.pi / (10 * nu_scaled):
            raise ConfigError(
                f"sample spacing {spacing:g} gives fewer than 10 samples per oscillation period"
            )
        if self.burn_in_for(rho_plus_theta) < 5.0 / rho_plus_theta * (1 - 1e-12):
            raise ConfigError(f"burn_in must be >= 5/(rho+theta) = {5 / rho_plus_theta:g}")


@dataclass
class FluctuationSeries:
    """Sampled deviations from the stationary state, one row per member.

    ``dn_rel`` is (n - n_s)/n_s; ``p2`` and ``p3`` are Stokes components.
    ``spacing`` is the sample interval in units of 1/gamma.
    """

    dn_rel: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    spacing: float
    gamma: float
    n_s: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        arrs = [np.atleast_2d(np.asarray(a, dtype=float)) for a in (self.dn_rel, self.p2, self.p3)]
        if len({a.shape for a in arrs}) != 1:
            raise ValueError("channel shapes differ")
        for a in arrs:
            if not np.all(np.isfinite(a)):
                raise StateDiverged("series contains non-finite values")
        self.dn_rel, self.p2, self.p3 = arrs

    @property
    def members(self) -> int:
        return self.dn_rel.shape[0]

    @property
    def samples(self) -> int:
        return self.dn_rel.shape[1]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.samples) * self.spacing

    @property
    def p1(self) -> np.ndarray:
        """P1 from the unit-sphere constraint (P1 > 0 near the lasing state)."""
        return np.sqrt(np.clip(1.0 - self.p2 ** 2 - self.p3 ** 2, 0.0, None))

    def channel(self, name: str) -> np.ndarray:
        return self.p1 if name == "p1" else getattr(self, name)

    def concat(self, other: "FluctuationSeries") -> "FluctuationSeries":
        """Stack the members of two series with the same sampling."""
        if other.spacing != self.spacing or other.samples != self.samples:
            raise ValueError("series sampling differs")
        return replace(
            self,
            dn_rel=np.vstack([self.dn_rel, other.dn_rel]),
            p2=np.vstack([self.p2, other.p2]),
            p3=np.vstack([self.p3, other.p3]),
        )

    # persistence

    def to_csv(self, path) -> None:
        m, s = self.members, self.samples
        t = np.tile(self.t, m)
        cols = {
            "member": np.repeat(np.arange(m), s).astype(float),
            "t_scaled": t,
            "t_seconds": t / self.gamma,
            "dn_rel": self.dn_rel.ravel(),
            "p2": self.p2.ravel(),
            "p3": self.p3.ravel(),
        }
        header = {"spacing_scaled": repr(self.spacing), "gamma_per_s": repr(self.gamma),
                  "n_s": repr(self.n_s)}
        header.update({k: str(v) for k, v in self.provenance.items()})
        fileio.write_csv(path, cols, header)

    def to_binary(self, path) -> None:
        fileio.atomic_write(path, _pack(self))

    @classmethod
    def from_csv(cls, path) -> "FluctuationSeries":
        cols, header = fileio.read_csv(path)
        member = cols["member"].astype(int)
        m = int(member.max()) + 1 if member.size else 0
        if m == 0 or member.size % m:
            raise IOFailure(f"{path}: ragged member blocks")
        shape = (m, member.size // m)
        prov = {k: v for k, v in header.items() if k not in ("spacing_scaled", "gamma_per_s", "n_s")}
        return cls(
            dn_rel=cols["dn_rel"].reshape(shape), p2=cols["p2"].reshape(shape),
            p3=cols["p3"].reshape(shape), spacing=float(header["spacing_scaled"]),
            gamma=float(header["gamma_per_s"]), n_s=float(header["n_s"]), provenance=prov,
        )

    @classmethod
    def from_binary(cls, path) -> "FluctuationSeries":
        try:
            with open(path, "rb") as fh:
                return _unpack(fh.read())
        except OSError as exc:
            raise IOFailure(f"cannot read {path}: {exc}") from exc


# Binary frame, all little-endian:
#   4s   magic "VPFS"
#   u4   format version (1)
#   u4   members
#   u8   samples per member
#   f8   spacing (1/gamma units), f8 gamma (1/s), f8 n_s
#   u8   seed
#   16s  mode (ascii, NUL padded)
#   64s  params hash (ascii hex)
#   then members*samples records of f8 triplets (dn_rel, p2, p3)
_HEADER = struct.Struct("<4sIIQdddQ16s64s")
_MAGIC = b"VPFS"


def _pack(s: FluctuationSeries) -> bytes:
    prov = s.provenance
    head = _HEADER.pack(
        _MAGIC, 1, s.members, s.samples, s.spacing, s.gamma, s.n_s,
        int(prov.get("seed", 0)), str(prov.get("mode", "")).encode()[:16],
        str(prov.get("params_hash", "")).encode()[:64],
    )
    body = np.stack([s.dn_rel, s.p2, s.p3], axis=-1).astype("<f8")
    return head + body.tobytes()


def _unpack(raw: bytes) -> FluctuationSeries:
    if len(raw) < _HEADER.size or raw[:4] != _MAGIC:
        raise IOFailure("not a VPFS frame")
    magic, ver, m, n, spacing, gamma, n_s, seed, mode, phash = _HEADER.unpack_from(raw)
    if ver != 1:
        raise IOFailure(f"unsupported VPFS version {ver}")
    expect = _HEADER.size + m * n * 24
    if len(raw) != expect:
        raise IOFailure(f"VPFS payload is {len(raw)} bytes, expected {expect}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(m, n, 3)
    prov = {"seed": seed, "mode": mode.rstrip(b"\0").decode(),
            "params_hash": phash.rstrip(b"\0").decode()}
    return FluctuationSeries(body[..., 0].copy(), body[..., 1].copy(), body[..., 2].copy(),
                             spacing, gamma, n_s, prov)


def read_series(path) -> FluctuationSeries:
    """Load a series from CSV or a VPFS frame, chosen by content."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(4)
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    if head == _MAGIC:
        return FluctuationSeries.from_binary(path)
    return FluctuationSeries.from_csv(path)


# linearized driver

def _transition(Mb: np.ndarray, Nb: np.ndarray, dt: float, scheme: str):
    if scheme == "euler_maruyama":
        return np.eye(len(Mb)) + Mb * dt, Nb * dt
    n = len(Mb)
    C = np.block([[-Mb, Nb], [np.zeros((n, n)), Mb.T]]) * dt
    E = scipy.linalg.expm(C)
    B = E[n:, n:].T
    Q = B @ E[:n, n:]
    return B, 0.5 * (Q + Q.T)


def _sqrt_psd(Q: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(Q)
    return v * np.sqrt(np.clip(w, 0.0, None))


def scheme_covariance(sys: LinearSystem, dt: float, scheme: str = "euler_maruyama") -> np.ndarray:
    """Stationary covariance of the discrete recursion itself (balanced coordinates).

    Comparing this with the continuous Lyapunov solution isolates the
    step-size bias of a scheme without any Monte-Carlo noise.
    """
    Mb, Nb = sys.balanced()
    B, Q = _transition(Mb, Nb, dt, scheme)
    return scipy.linalg.solve_discrete_lyapunov(B, Q)


def _check_linear_stable(sys: LinearSystem) -> None:
    lam = np.linalg.eigvals(sys.balanced()[0])
    if np.any(lam.real >= 0):
        raise UnstableSystem(f"linear drift has eigenvalues with Re >= 0: {lam[lam.real >= 0]}")


def simulate_linear(sys: LinearSystem, cfg: NoiseConfig, members=None,
                    params_hash: str = "", validate: bool = True) -> FluctuationSeries:
    """Integrate the linearized Langevin system for the requested members.

    ``members`` selects ensemble indices (default: all of ``cfg.ensemble``);
    a member's path depends only on ``cfg.seed`` and its index.
    """
    _check_linear_stable(sys)
    if cfg.mode != "linearized":
        raise ConfigError("simulate_linear needs mode='linearized'")
    slow, S2 = _polarization_rates(sys)
    if validate:
        cfg.validate(sys.x, slow, S2, sys.nu)
    members = range(cfg.ensemble) if members is None else members
    Mb, Nb = sys.balanced()
    if cfg.carrier_noise != (0.0, 0.0):
        extra = np.zeros((5, 5))
        s = sys.scale
        extra[0, 0] = cfg.carrier_noise[0] / s[0] ** 2
        extra[2, 2] = cfg.carrier_noise[1] / s[2] ** 2
        Nb = Nb + extra
    B, Q = _transition(Mb, Nb, cfg.dt, cfg.scheme)
    L = _sqrt_psd(Q)
    mu, V = np.linalg.eig(B)
    if np.linalg.cond(V) > 1e8:
        raise UnstableSystem("transition matrix is too close to defective for modal filtering")
    Vi = np.linalg.inv(V)
    G = Vi @ L
    Vout = V[[1, 3, 4], :]        # rows for dn/n_s, P2, P3 in balanced coordinates
    burn = int(math.ceil(cfg.burn_in_for(slow) / cfg.dt - 1e-9))
    keep = int(math.ceil(cfg.duration / cfg.dt - 1e-9))
    total = burn + keep
    out = []
    for m in members:
        rng = np.random.default_rng([int(cfg.seed), int(m)])
        zi = np.zeros((5, 1), dtype=complex)
        rec = np.empty((3, keep), dtype=float)
        done = 0
        while done < total:
            n = min(_BLOCK, total - done)
            u = rng.standard_normal((n, 5)) @ G.T
            w = np.empty((5, n), dtype=complex)
            for k in range(5):
                w[k], zi[k] = lfilter([1.0], [1.0, -mu[k]], u[:, k], zi=zi[k] * 1.0)
            # filter output w_j is the state after j+1 steps
            lo = max(burn - done, 0)
            if lo < n:
                a0 = done + lo - burn
                rec[:, a0:a0 + n - lo] = (Vout @ w[:, lo:]).real
            done += n
        out.append(rec[:, cfg.sample_every - 1::cfg.sample_every])
    arr = np.array(out)
    prov = {"seed": int(cfg.seed), "mode": "linearized", "scheme": cfg.scheme,
            "params_hash": params_hash, "dt_scaled": repr(cfg.dt)}
    return FluctuationSeries(arr[:, 0], arr[:, 1], arr[:, 2], cfg.dt * cfg.sample_every,
                             sys.gamma, sys.n_s, prov)


def _polarization_rates(sys: LinearSystem) -> tuple[float, float]:
    """(rho + theta, x + r + rho - theta) read off the polarization block eigenvalues."""
    lam = np.linalg.eigvals(sys.balanced()[0][2:, 2:])
    i = int(np.argmin(np.abs(lam.imag)))
    pair = np.delete(lam, i)
    return float(-lam[i].real), float(-2.0 * pair.real.mean())


# nonlinear driver

def simulate_nonlinear(params: LaserParams, cfg: NoiseConfig, validate: bool = True) -> FluctuationSeries:
    """Euler-Maruyama on the full aligned rate equations with quantum noise.

    Noise amplitudes are the stationary-point ones except that the intensity
    channel uses the instantaneous photon number (``frozen_noise`` keeps
    n_s).  P noise is drawn in 3D, projected onto the tangent plane of P and
    followed by renormalization, a small-noise approximation.
    """
    if cfg.mode != "nonlinear":
        raise ConfigError("simulate_nonlinear needs mode='nonlinear'")
    params.require_aligned()
    dp = derive(params)
    if dp.below_threshold:
        raise BelowThreshold(f"x={dp.x:g} <= 1: no lasing state to fluctuate around")
    if not (dp.slow_damping > 0 and dp.polarization_damping > 0):
        raise UnstablePolarization(
            f"rho+theta={dp.slow_damping:g}, x+r+rho-theta={dp.polarization_damping:g}"
        )
    nu = dp.nu / params.gamma
    if validate:
        cfg.validate(dp.x, dp.slow_damping, dp.polarization_damping, nu)
    p = _rates(params)
    k_eff = params.kappa_eff2 / params.gamma
    n_s, D_s = dp.n_s, dp.D_s
    E = cfg.ensemble
    dt = cfg.dt
    sq_p = math.sqrt(2.0 * k_eff / n_s * dt)
    sq_n = 2.0 * k_eff * dt
    cD = math.sqrt(cfg.carrier_noise[0] * dt)
    cd = math.sqrt(cfg.carrier_noise[1] * dt)

    D = np.full(E, D_s)
    n = np.full(E, n_s)
    d = np.zeros(E)
    P1 = np.ones(E)
    P2 = np.zeros(E)
    P3 = np.zeros(E)

    rngs = [np.random.default_rng([int(cfg.seed), m]) for m in range(E)]
    burn = int(math.ceil(cfg.burn_in_for(dp.slow_damping) / dt - 1e-9))
    keep = int(math.ceil(cfg.duration / dt - 1e-9))
    total = burn + keep
    se = cfg.sample_every
    nrec = keep // se
    rec = np.empty((3, E, nrec))
    step = 0
    while step < total:
        nb = min(_BLOCK, total - step)
        xi = np.stack([r.standard_normal((nb, 6)) for r in rngs], axis=1)   # (nb, E, 6)
        for j in range(nb):
            f = _aligned(D, n, d, P1, P2, P3, p)
            z = xi[j]
            amp_n = np.sqrt(sq_n * (n_s if cfg.frozen_noise else np.abs(n)))
            D = D + f[0] * dt + cD * z[:, 4]
            n = n + f[1] * dt + amp_n * z[:, 0]
            d = d + f[2] * dt + cd * z[:, 5]
            g1, g2, g3 = z[:, 1] * sq_p, z[:, 2] * sq_p, z[:, 3] * sq_p
            proj = P1 * g1 + P2 * g2 + P3 * g3
            P1 = P1 + f[3] * dt + g1 - proj * P1
            P2 = P2 + f[4] * dt + g2 - proj * P2
            P3 = P3 + f[5] * dt + g3 - proj * P3
            norm = np.sqrt(P1 * P1 + P2 * P2 + P3 * P3)
            P1, P2, P3 = P1 / norm, P2 / norm, P3 / norm
            step += 1
            k = step - burn
            if k > 0 and k % se == 0 and k // se <= nrec:
                i = k // se - 1
                rec[0, :, i] = (n - n_s) / n_s
                rec[1, :, i] = P2
                rec[2, :, i] = P3
        if not (np.all(np.isfinite(n)) and np.all(n > 0) and np.all(np.isfinite(D))):
            raise StateDiverged(f"nonlinear state left the physical range near step {step}")
    prov = {"seed": int(cfg.seed), "mode": "nonlinear", "scheme": cfg.scheme,
            "params_hash": params.digest(), "dt_scaled": repr(dt),
            "frozen_noise": bool(cfg.frozen_noise)}
    return FluctuationSeries(rec[0], rec[1], rec[2], dt * se, params.gamma, n_s, prov)


def simulate(params: LaserParams, cfg: NoiseConfig) -> FluctuationSeries:
    """Dispatch on ``cfg.mode``."""
    if cfg.mode == "nonlinear":
        return simulate_nonlinear(params, cfg)
    dp = derive(params)
    sys = build_linear_system(dp, params)
    if not (dp.slow_damping > 0 and dp.polarization_damping > 0):
        raise UnstablePolarization(
            f"rho+theta={dp.slow_damping:g}, x+r+rho-theta={dp.polarization_damping:g}"
        )
    return simulate_linear(sys, cfg, params_hash=params.digest())
