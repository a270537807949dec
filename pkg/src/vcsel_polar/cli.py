"""Command line front end: ``vcsel-polar <command> --config run.json``.

Exit codes: 0 success, 1 config/schema, 2 below threshold, 3 unstable,
4 numerical failure, 5 I/O.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, fileio, figures
from .analysis import (
    estimate_correlators,
    fit_damped_cosine,
    invert_parameters,
    read_fits,
)
from .config import OUTPUT_ENV, RunConfig, load_config
from .errors import (
    BelowThreshold,
    DegenerateSystem,
    FitError,
    UnstablePolarization,
    VcselPolarError,
)
from .linear import (
    CorrelationRecord,
    analytic_correlators,
    build_linear_system,
    eigensystem_to_json,
    exact_frequency_splitting,
    frequency_splitting,
    linear_correlators,
    numeric_eigensystem,
)
from .params import derive
from .stochastic import read_series, simulate

log = logging.getLogger("vcsel_polar")

VERSION = f"v{__version__}"


def _stamp(cfg: RunConfig) -> dict:
    return {"params_hash": cfg.params.digest(), "seed": cfg.seed, "version": VERSION}


def _csv_header(cfg: RunConfig, extra: dict | None = None) -> dict:
    h = _stamp(cfg)
    h.update(extra or {})
    return h


def cmd_derive(cfg: RunConfig) -> int:
    p = cfg.params
    dp = derive(p)
    report = dict(_stamp(cfg))
    report["params_si"] = p.to_dict()
    report["derived"] = dp.to_dict()
    report["stability"] = {
        "above_threshold": not dp.below_threshold,
        "rho_plus_theta_positive": dp.slow_damping > 0,
        "x_plus_r_plus_rho_minus_theta_positive": dp.polarization_damping > 0,
    }
    report["nu_rad_per_s"] = dp.nu
    out = cfg.output_dir
    if dp.below_threshold:
        report["status"] = "below_threshold"
        fileio.write_json(out / "derived.json", report)
        log.error("x = %g <= 1: below threshold", dp.x)
        return BelowThreshold.exit_code
    if not dp.stable:
        report["status"] = "unstable"
        fileio.write_json(out / "derived.json", report)
        log.error("polarization is unstable: rho+theta=%g, x+r+rho-theta=%g",
                  dp.slow_damping, dp.polarization_damping)
        return UnstablePolarization.exit_code
    sys_ = build_linear_system(dp, p)
    triples = numeric_eigensystem(sys_)
    report["status"] = "ok"
    report["n_s"] = dp.n_s
    report["frequency_splitting"] = {
        "perturbative": frequency_splitting(dp, p).to_dict(),
        "exact_rad_per_s": exact_frequency_splitting(sys_, triples),
    }
    fileio.write_json(out / "derived.json", report)
    fileio.write_json(out / "eigensystem.json",
                      dict(_stamp(cfg), eigentriples=eigensystem_to_json(triples, p.gamma)))
    tau = np.linspace(0.0, cfg.figures.get("tau_max_scaled", 3.0), cfg.figures.get("n_tau", 301))
    for name, rec in (("analytic", analytic_correlators(dp, p, tau)),
                      ("linear", linear_correlators(sys_, tau, params_hash=p.digest()))):
        rec.meta.update(_stamp(cfg))
        rec.to_csv(out / f"{name}_correlators.csv")
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    series = simulate(cfg.params, cfg.noise)
    series.provenance.update(_stamp(cfg))
    out = cfg.output_dir
    files = []
    if "csv" in cfg.formats:
        series.to_csv(out / "series.csv")
        files.append("series.csv")
    if "binary" in cfg.formats:
        series.to_binary(out / "series.vpfs")
        files.append("series.vpfs")
    meta = dict(_stamp(cfg))
    meta.update({"files": files, "members": series.members, "samples": series.samples,
                 "spacing_scaled": series.spacing, "gamma_per_s": series.gamma,
                 "n_s": series.n_s, "simulation": cfg.raw.get("simulation", {}),
                 "mode": cfg.noise.mode, "scheme": cfg.noise.scheme,
                 "frozen_noise": cfg.noise.frozen_noise})
    fileio.write_json(out / "series.meta.json", meta)
    return 0


def _default_input(cfg: RunConfig, given, candidates) -> Path:
    if given:
        return Path(given)
    for c in candidates:
        path = cfg.output_dir / c
        if path.exists():
            return path
    return cfg.output_dir / candidates[0]


def cmd_correlate(cfg: RunConfig, inp=None) -> int:
    path = _default_input(cfg, inp, ["series.vpfs", "series.csv"])
    series = read_series(path)
    a = cfg.analysis
    rec = estimate_correlators(series, a.get("max_lag_scaled", 3.0), a.get("lag_step", 1),
                               min_batches=a.get("min_batches", 16))
    rec.meta.update(_stamp(cfg))
    rec.meta["input"] = path.name
    rec.to_csv(cfg.output_dir / "correlators.csv")
    return 0


def cmd_fit(cfg: RunConfig, inp=None) -> int:
    path = _default_input(cfg, inp, ["correlators.csv"])
    rec = CorrelationRecord.from_csv(path)
    a = cfg.analysis
    opts = dict(quadrature=a.get("quadrature", True), tau_max=a.get("tau_max_fit_scaled"))
    plan = {
        "dn": ("dn_dn_rel", "single"),
        "p3p3": ("p3p3", "single"),
        "p3p2": ("p3p2", a.get("p3p2_model", "cosine_plus_exponential")),
        "p2p2": ("p2p2", "cosine_plus_exponential"),
    }
    fits, failed = {}, None
    for key, (channel, model) in plan.items():
        try:
            fits[key] = fit_damped_cosine(rec, channel, model, **opts)
        except FitError as exc:
            log.error("%s", exc)
            failed = exc
            if exc.result is not None:
                fits[key] = exc.result
    out = {k: v.to_dict() for k, v in fits.items()}
    out["_provenance"] = dict(_stamp(cfg), input=path.name)
    fileio.write_json(cfg.output_dir / "fits.json", out)
    return failed.exit_code if failed else 0


def cmd_invert(cfg: RunConfig, inp=None) -> int:
    path = _default_input(cfg, inp, ["fits.json"])
    fits = read_fits(path)
    x = cfg.analysis.get("x_known", derive(cfg.params).x)
    report = dict(_stamp(cfg), input=path.name)
    try:
        rec = invert_parameters(fits, x)
        report.update(rec.to_dict(), status="ok")
    except DegenerateSystem as exc:
        report.update(exc.result.to_dict(), status="degenerate", note=str(exc))
        log.warning("%s", exc)
    fileio.write_json(cfg.output_dir / "recovered.json", report)
    return 0


def cmd_figures(cfg: RunConfig) -> int:
    p = cfg.params
    out = cfg.output_dir
    f = cfg.figures
    head = _csv_header(cfg)
    for name, cols in figures.anisotropy_fields(p, f.get("sphere_points", 13)).items():
        fileio.write_csv(out / f"fig1_field_{name}.csv", cols, dict(head, case=name))
    summary, ellipse = figures.polarization_covariance(p)
    fileio.write_json(out / "fig2_covariance.json", dict(_stamp(cfg), **summary))
    fileio.write_csv(out / "fig2_ellipse.csv", ellipse, head)
    curves = figures.correlator_curves(p, f.get("tau_max_scaled", 3.0), f.get("n_tau", 301))
    fileio.write_csv(out / "fig3_correlators.csv", curves, dict(head, gamma_per_s=repr(p.gamma)))
    return 0


COMMANDS = {
    "derive": cmd_derive,
    "simulate": cmd_simulate,
    "correlate": cmd_correlate,
    "fit": cmd_fit,
    "invert": cmd_invert,
    "figures": cmd_figures,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vcsel-polar",
        description="Polarization and intensity fluctuations of a split-density VCSEL model.",
        epilog=f"Output directory defaults to ${OUTPUT_ENV} when --out and output.directory are unset.",
    )
    ap.add_argument("--version", action="version", version=VERSION)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="override simulation.seed")
        sp.add_argument("--frozen-noise", action="store_true",
                        help="use stationary noise amplitudes in the nonlinear mode")
        if name in ("correlate", "fit", "invert"):
            sp.add_argument("--input", help="input file (defaults to the previous step's output)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, out=args.out, seed=args.seed,
                          frozen_noise=args.frozen_noise)
        fn = COMMANDS[args.command]
        if args.command in ("correlate", "fit", "invert"):
            return fn(cfg, args.input)
        return fn(cfg)
    except VcselPolarError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
