"""Run configuration: JSON with unit-suffixed keys, validated by a schema.

Example::

    {
      "laser": {"gamma_per_s": 1e10, "kappa2_per_s": 1e12, "Gamma_per_s": 3e10,
                "w2_per_s": 1960784.3, "alpha": 2.0, "g": 0.02,
                "Omega_rad_per_s": 1e10},
      "derived": {"x": 2.0},
      "simulation": {"seed": 1, "dt_scaled": 0.02, "duration_scaled": 2000,
                     "ensemble": 20, "scheme": "exact"}
    }

Exactly one of ``laser.D0`` and ``derived.x`` must be present.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .errors import ConfigError, IOFailure
from .params import LaserParams, params_from_dimensionless
from .stochastic import NoiseConfig

OUTPUT_ENV = "VCSEL_POLAR_OUT"

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}]}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "vcsel-polar run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["laser"],
    "properties": {
        "laser": {
            "type": "object",
            "additionalProperties": False,
            "required": ["gamma_per_s", "kappa2_per_s", "Gamma_per_s", "w2_per_s", "alpha"],
            "properties": {
                "gamma_per_s": _pos,
                "kappa2_per_s": _pos,
                "Gamma_per_s": _pos,
                "w2_per_s": _pos,
                "alpha": {"type": "number", "minimum": 0},
                "D0": _num,
                "g": _vec,
                "l": _vec,
                "Omega_rad_per_s": _vec,
            },
        },
        "derived": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"x": _num, "rho": _num, "theta": _num, "r": _num, "A": _pos},
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed": {"type": "integer", "minimum": 0},
                "dt_scaled": _pos,
                "mode": {"enum": ["linearized", "nonlinear"]},
                "duration_scaled": _pos,
                "burn_in_scaled": {"type": "number", "minimum": 0},
                "ensemble": {"type": "integer", "minimum": 1},
                "scheme": {"enum": ["euler_maruyama", "exact"]},
                "sample_every": {"type": "integer", "minimum": 1},
                "frozen_noise": {"type": "boolean"},
                "carrier_noise_scaled": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_lag_scaled": _pos,
                "lag_step": {"type": "integer", "minimum": 1},
                "min_batches": {"type": "integer", "minimum": 1},
                "tau_max_fit_scaled": _pos,
                "quadrature": {"type": "boolean"},
                "p3p2_model": {"enum": ["single", "cosine_plus_exponential"]},
                "x_known": _num,
            },
        },
        "figures": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tau_max_scaled": _pos,
                "n_tau": {"type": "integer", "minimum": 2},
                "sphere_points": {"type": "integer", "minimum": 2},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "binary"]}, "minItems": 1},
            },
        },
    },
}


@dataclass
class RunConfig:
    params: LaserParams
    noise: NoiseConfig
    analysis: dict = field(default_factory=dict)
    figures: dict = field(default_factory=dict)
    output_dir: Path = Path("vcsel_polar_out")
    formats: tuple = ("csv",)
    raw: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.noise.seed


def _vec_value(v):
    return v if v is not None else 0.0


def _build_params(laser: dict, derived: dict) -> LaserParams:
    has_D0, has_x = "D0" in laser, "x" in derived
    if has_D0 == has_x:
        raise ConfigError("exactly one of laser.D0 and derived.x must be given")
    base = LaserParams(
        kappa2=laser["kappa2_per_s"], gamma=laser["gamma_per_s"], Gamma=laser["Gamma_per_s"],
        w2=laser["w2_per_s"], alpha=laser["alpha"], D0=laser.get("D0", 0.0),
        g=_vec_value(laser.get("g")), l=_vec_value(laser.get("l")),
        Omega=_vec_value(laser.get("Omega_rad_per_s")),
    )
    if not derived:
        return base
    if not base.is_aligned:
        raise ConfigError("derived overrides need g, l and Omega along e1")
    gam = base.gamma
    k = base.kappa_eff2
    W = base.w_eff
    x = derived["x"] if has_x else W * base.D0 / k
    kw = dict(
        gamma=gam, x=x, alpha=base.alpha,
        r=derived.get("r", base.Gamma / gam - 1.0),
        rho=derived.get("rho", k / gam * (base.g.a1 - base.l.a1)),
        theta=derived.get("theta", base.alpha * base.Omega.a1 / gam),
        kappa2_eff=k, l=base.l.a1,
    )
    if "A" in derived:
        kw["A"] = derived["A"]
    else:
        kw["w_eff"] = W
    return params_from_dimensionless(**kw)


def parse_config(data: dict, *, out=None, seed=None, frozen_noise=False) -> RunConfig:
    """Validate a config mapping and build the run objects."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            msgs.append(f"{where}: {e.message}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(msgs))
    params = _build_params(data["laser"], data.get("derived", {}))
    sim = data.get("simulation", {})
    noise = NoiseConfig(
        seed=seed if seed is not None else sim.get("seed", 0),
        dt=sim.get("dt_scaled", 1e-3),
        mode=sim.get("mode", "linearized"),
        duration=sim.get("duration_scaled", 100.0),
        burn_in=sim.get("burn_in_scaled"),
        ensemble=sim.get("ensemble", 1),
        scheme=sim.get("scheme", "euler_maruyama"),
        sample_every=sim.get("sample_every", 1),
        frozen_noise=bool(frozen_noise or sim.get("frozen_noise", False)),
        carrier_noise=tuple(sim.get("carrier_noise_scaled", (0.0, 0.0))),
    )
    outcfg = data.get("output", {})
    directory = out or outcfg.get("directory") or os.environ.get(OUTPUT_ENV) or "vcsel_polar_out"
    return RunConfig(
        params=params, noise=noise, analysis=dict(data.get("analysis", {})),
        figures=dict(data.get("figures", {})), output_dir=Path(directory),
        formats=tuple(outcfg.get("formats", ["csv"])), raw=data,
    )


def load_config(path, **overrides) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IOFailure(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(data, **overrides)
