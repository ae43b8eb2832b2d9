"""Command-line front end: ``singlab <subcommand> --config FILE``.

A run classifies the model, builds the regularization plan and executes the
selected sweeps.  It writes ``report.json`` (deterministic numbers and
verdicts), ``timing.json`` (wall clock) and CSV tables for plotting.
"""

import argparse
import configparser
import csv
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .coeff_models import INF, CoefficientModel, Regime, classify
from .errors import ConfigError, SinglabError
from .gevrey_analysis import (CINF, GevreyProfile, fit_decay, make_data,
                              terminal_magnitude, threshold)
from .mode_solver import (energy_certificate, solve_mode, scaled_xi,
                          terminal_bound_check)
from .regularizer import fit_scaling, integral_I1, integral_I2, make_plan

SCHEMA_VERSION = 1
COMMANDS = ("classify", "scaling", "gronwall", "propagate", "all")

# section -> key -> (parser, default, help); default None means optional,
# REQUIRED means the key must be given
REQUIRED = object()


def _float(text):
    text = text.strip().lower()
    if text in ("inf", "+inf", "infinity"):
        return INF
    return float(text)


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _phase(text):
    return "random" if text.strip().lower() == "random" else float(text)


def _choice(*options):
    def parse(text):
        val = text.strip()
        if val not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return val
    return parse


SCHEMA = {
    "model": {
        "family": (_choice("constant", "power_blowup", "oscillatory",
                           "log_growth"), REQUIRED, "coefficient family"),
        "T": (float, 1.0, "final time"),
        "t0": (float, None, "singular time in [0, T] (default T)"),
        "lambda0": (float, 0.0, "hyperbolicity floor"),
        "c": (float, 1.0, "amplitude"),
        "gamma": (float, 0.0, "power_blowup exponent"),
        "m": (float, 0.0, "oscillatory phase exponent"),
        "omega": (float, 1.0, "oscillatory frequency"),
        "phi": (_phase, 0.0, "oscillatory phase, or 'random' (seeded)"),
        "theta": (float, 1.0, "log_growth exponent in (0, 1]"),
        "p": (_float, 0.0, "declared weight of a' (d**p a' in L^q)"),
        "q": (_float, INF, "declared integrability of a' (inf allowed)"),
        "r": (_float, None, "declared weight of a (d**r a in L^s)"),
        "s": (_float, None, "declared integrability of a (inf allowed)"),
    },
    "plan": {
        "regime": (_choice("auto", "Thm1", "Thm2", "Thm3", "Thm4"), "auto",
                   "override of the classified regime"),
        "z_margin": (float, 0.5, "added to the lower bound for z"),
    },
    "grid": {
        "xi_kmin": (int, 4, "smallest frequency 2**xi_kmin"),
        "xi_kmax": (int, 10, "largest frequency 2**xi_kmax"),
        "xi_per_dyad": (int, 1, "frequencies per dyad"),
        "eps_max": (float, 0.1, "largest smoothing scale"),
        "eps_decades": (int, 3, "decades below eps_max"),
        "eps_per_decade": (int, 5, "eps points per decade"),
    },
    "data": {
        "kind": (_choice("gevrey", "polynomial"), "gevrey", "decay law"),
        "sigma": (float, 1.25, "Gevrey index"),
        "delta": (float, 1.0, "Gevrey decay rate"),
        "M": (float, 1.0, "amplitude"),
        "zeta": (float, None, "polynomial order (|v0| = M xi**(-zeta/2))"),
        "scaled_v1": (_bool, False, "use |v1| = |xi| |v0| instead of 0"),
    },
    "numerics": {
        "tol": (float, 1e-10, "ODE tolerance"),
        "quad_tol": (float, 1e-6, "quadrature tolerance for I1, I2"),
        "classify_tol": (float, 1e-8, "quadrature tolerance for norms"),
        "delta_cut": (float, 1e-8, "integration stops at this distance/T"),
        "scaling_integrals": (_choice("both", "i1", "i2"), "both",
                              "integrals measured by the scaling sweep"),
    },
    "checks": {
        "slope_tol": (float, 0.15, "slope tolerance against theory"),
        "loglog_tol": (float, 0.2, "tolerance of the |log eps| exponent"),
        "expect_tight": (_choice("none", "i1", "i2", "both"), "none",
                         "slopes that must match theory, not just respect it"),
        "sigma_margin": (float, 0.05, "allowed drop of 1/sigma_eff"),
        "loss_margin": (float, 1.0, "allowed excess of the polynomial loss"),
    },
    "run": {
        "out": (str, "singlab-out", "output directory"),
        "workers": (int, None, "worker threads (default $SINGLAB_WORKERS or 1)"),
        "seed": (int, 0, "seed for a random phase"),
    },
}


def config_help():
    lines = ["configuration keys (INI sections):"]
    for sec, keys in SCHEMA.items():
        lines.append(f"  [{sec}]")
        for key, (_, default, text) in keys.items():
            dflt = "required" if default is REQUIRED else f"default {default}"
            lines.append(f"    {key:<18} {text} ({dflt})")
    return "\n".join(lines)


def parse_config(text):
    """Validate an INI document against :data:`SCHEMA`.

    Returns a nested dict with every key filled in.  Unknown sections or
    keys and unparsable values raise :class:`ConfigError`.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    out = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
    for sec, keys in SCHEMA.items():
        given = dict(cp[sec]) if cp.has_section(sec) else {}
        unknown = set(given) - set(keys)
        if unknown:
            raise ConfigError(f"unknown key(s) in [{sec}]: "
                              f"{', '.join(sorted(unknown))}")
        vals = {}
        for key, (parse, default, _) in keys.items():
            if key in given:
                try:
                    vals[key] = parse(given[key])
                except ValueError as exc:
                    raise ConfigError(f"[{sec}] {key}: {exc}") from exc
            elif default is REQUIRED:
                raise ConfigError(f"[{sec}] {key} is required")
            else:
                vals[key] = default
        out[sec] = vals
    _check_ranges(out)
    return out


def _check_ranges(cfg):
    g = cfg["grid"]
    if g["xi_kmin"] < 0 or g["xi_kmax"] < g["xi_kmin"]:
        raise ConfigError("need 0 <= xi_kmin <= xi_kmax")
    if g["xi_per_dyad"] < 1 or g["eps_per_decade"] < 1 or g["eps_decades"] < 1:
        raise ConfigError("grid densities must be positive")
    n = cfg["numerics"]
    for key in ("tol", "quad_tol", "classify_tol", "delta_cut"):
        if not n[key] > 0:
            raise ConfigError(f"[numerics] {key} must be positive")
    d = cfg["data"]
    if d["kind"] == "polynomial" and d["zeta"] is None:
        raise ConfigError("[data] zeta is required for polynomial data")
    w = cfg["run"]["workers"]
    if w is not None and w < 1:
        raise ConfigError("[run] workers must be >= 1")


def build_model(cfg):
    mc = dict(cfg["model"])
    if mc["phi"] == "random":
        rng = np.random.default_rng(cfg["run"]["seed"])
        mc["phi"] = float(rng.uniform(0.0, 2.0 * math.pi))
    if mc["t0"] is None:
        mc["t0"] = mc["T"]
    try:
        return CoefficientModel(**mc), mc["phi"]
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from exc


def xi_grid(cfg):
    g = cfg["grid"]
    n = g["xi_per_dyad"]
    k = np.arange(g["xi_kmin"] * n, g["xi_kmax"] * n + 1) / n
    return 2.0 ** k


def eps_grid(cfg):
    g = cfg["grid"]
    n = g["eps_decades"] * g["eps_per_decade"] + 1
    return g["eps_max"] * np.logspace(-g["eps_decades"], 0, n)


def _pmap(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, Regime):
        return x.value
    return x


def _num(x):
    """Inverse of the JSON encoding of non-finite floats."""
    if isinstance(x, str):
        return float(x)
    return x


# --------------------------------------------------------------------------
# verdicts

def derive_verdicts(report):
    """Pass/fail per rule, computed from the report contents alone."""
    checks = report["config"]["checks"]
    out = {}
    if "hypotheses" in report:
        out["classified"] = report["regime"] != Regime.INADMISSIBLE.value
    sc = report.get("scaling")
    if sc is not None:
        tight = checks["expect_tight"]
        loglog = sc["i1_abscissa"] != "log eps"
        for idx, name in ((1, "i1"), (2, "i2")):
            slope = _num(sc[f"slope{idx}"])
            theory = _num(sc[f"theory{idx}"])
            tol = checks["loglog_tol"] if (loglog and idx == 1) else checks["slope_tol"]
            if sc[f"degenerate{idx}"]:
                # an identically zero integral respects any bound
                ok_bound, ok_tight = True, False
            elif math.isnan(slope):
                continue
            elif loglog and idx == 1:
                ok_bound = slope <= theory + tol
                ok_tight = abs(slope - theory) <= tol
            else:
                ok_bound = slope >= theory - tol
                ok_tight = abs(slope - theory) <= tol
            out[f"{name}_slope_bound"] = bool(ok_bound)
            if tight in (name, "both"):
                out[f"{name}_slope_tight"] = bool(ok_tight)
    modes = report.get("modes")
    if modes is not None:
        out["gronwall"] = all(
            _num(m["margin"]) <= 1.0 + _num(m["slack"]) for m in modes)
        terms = [m["terminal_ok"] for m in modes if m.get("terminal_ok") is not None]
        if terms:
            out["terminal_bound"] = all(terms)
    dec = report.get("decay")
    if dec is not None:
        if dec["kind"] == "gevrey":
            sigma = report["config"]["data"]["sigma"]
            star = report["sigma_star"]
            star = math.inf if star == CINF else _num(star)
            if sigma < star:
                inv = 1.0 / _num(dec["sigma_eff"])
                out["decay_retention"] = inv >= 1.0 / sigma - checks["sigma_margin"]
        else:
            loss = _num(dec["loss"])
            ok = math.isfinite(loss)
            c1 = report.get("scaling", {}).get("c1")
            if ok and c1 is not None and not math.isnan(_num(c1)):
                ok = loss <= _num(c1) + checks["loss_margin"]
            out["polynomial_loss"] = bool(ok)
    return out


# --------------------------------------------------------------------------
# pipeline

def _plan_for(cfg, model, hyp):
    override = cfg["plan"]["regime"]
    if override != "auto":
        hyp = replace(hyp, regime=Regime(override))
    return make_plan(hyp, cfg["plan"]["z_margin"], side=model.side,
                     q=model.q), hyp


def _scaling(cfg, model, plan, workers):
    fit = fit_scaling(model, plan, eps_grid(cfg), cfg["numerics"]["quad_tol"],
                      workers, which=cfg["numerics"]["scaling_integrals"])
    return fit


def _gronwall(cfg, model, plan, workers, c_tilde=None):
    num = cfg["numerics"]
    tol, qtol = num["tol"], num["quad_tol"]
    cut = num["delta_cut"] * model.T

    def job(xi):
        eps = plan.eps_for(scaled_xi(plan, xi), model.T)
        i1 = integral_I1(model, plan, eps, qtol, full_output=True)[:2]
        i2 = integral_I2(model, plan, eps, qtol, full_output=True)[:2]
        traj = solve_mode(model, xi, 1.0, 0.0, tol, cut)
        cert = energy_certificate(traj, model, plan, eps, tol, (i1, i2))
        row = {"xi": float(xi), "eps": eps, "E0": cert.e0,
               "Emax": float(np.max(cert.e_eps)), "margin": cert.margin,
               "slack": cert.slack, "t_worst": cert.t_worst, "I1": cert.i1,
               "I2": cert.i2, "steps": traj.n_steps,
               "rejected": traj.n_rejected, "terminal_ok": None}
        if c_tilde is not None and not math.isnan(c_tilde):
            chk = terminal_bound_check(traj, model, plan, c_tilde)
            row["terminal_ok"] = chk.ok
            row["terminal_log_ratio"] = chk.log_ratio
        return row

    return _pmap(job, xi_grid(cfg), workers)


def _propagate(cfg, model, workers):
    d = cfg["data"]
    num = cfg["numerics"]
    prof = GevreyProfile(sigma=d["sigma"], delta=d["delta"], M=d["M"],
                         kind=d["kind"], zeta=d["zeta"],
                         scaled_v1=d["scaled_v1"])
    data = make_data(prof, xi_grid(cfg))
    cut = num["delta_cut"] * model.T

    def job(i):
        xi = data.xi[i]
        traj = solve_mode(model, xi, data.v0[i], data.v1[i], num["tol"], cut)
        mag0 = float(terminal_magnitude(data.v0[i], data.v1[i], xi))
        magT = float(terminal_magnitude(traj.v[-1], traj.dv[-1], xi))
        return {"xi": float(xi), "mag0": mag0, "magT": magT,
                "steps": traj.n_steps}

    rows = _pmap(job, range(data.xi.size), workers)
    xs = np.array([r["xi"] for r in rows])
    mags = np.array([r["magT"] for r in rows])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit = fit_decay(xs, mags, d["kind"])
    out = fit.to_dict()
    out["dropped"] = data.dropped.tolist()
    out["warnings"] = [str(w.message) for w in caught]
    if d["kind"] == "polynomial":
        out["loss"] = 0.5 * d["zeta"] - fit.poly_order
    return rows, out


def run(cfg, command, workers=1):
    """Execute ``command`` and return ``(report, tables, timing)``."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    timing = {}
    t_start = time.perf_counter()
    model, phi = build_model(cfg)
    # where and how widely the run executes does not change its numbers
    echo = {sec: dict(vals) for sec, vals in cfg.items()}
    for key in ("out", "workers"):
        echo["run"].pop(key, None)
    report = {"schema_version": SCHEMA_VERSION, "command": command,
              "config": echo, "phi": phi}
    tables = {}

    t = time.perf_counter()
    hyp = classify(model, cfg["numerics"]["classify_tol"])
    timing["classify"] = time.perf_counter() - t
    report["hypotheses"] = hyp.to_dict()
    report["regime"] = hyp.regime.value
    report["sigma_star"] = None
    if hyp.regime is Regime.INADMISSIBLE and cfg["plan"]["regime"] == "auto":
        report["verdicts"] = derive_verdicts(_jsonable(report))
        return report, tables, timing

    plan, hyp_used = _plan_for(cfg, model, hyp)
    thr = threshold(hyp_used)
    report["regime"] = plan.regime.value
    report["threshold"] = thr.to_dict()
    report["sigma_star"] = thr.to_dict()["sigma_star"]
    report["plan"] = plan.to_dict()

    c_tilde = None
    if command in ("scaling", "all"):
        t = time.perf_counter()
        fit = _scaling(cfg, model, plan, workers)
        timing["scaling"] = time.perf_counter() - t
        sc = fit.to_dict()
        report["scaling"] = sc
        report["i1_slope"] = fit.slope1
        report["i2_slope"] = fit.slope2
        c_tilde = fit.c_tilde
        tables["scaling.csv"] = (["eps", "I1", "I2"],
                                 list(zip(fit.eps, fit.i1, fit.i2)))
    if command in ("gronwall", "all"):
        t = time.perf_counter()
        modes = _gronwall(cfg, model, plan, workers, c_tilde)
        timing["gronwall"] = time.perf_counter() - t
        report["modes"] = modes
        report["margins"] = [m["margin"] for m in modes]
        tables["modes.csv"] = (["xi", "eps", "E0", "Emax", "margin"],
                               [[m[k] for k in ("xi", "eps", "E0", "Emax",
                                                "margin")] for m in modes])
    if command in ("propagate", "all"):
        t = time.perf_counter()
        rows, dec = _propagate(cfg, model, workers)
        timing["propagate"] = time.perf_counter() - t
        report["decay"] = dec
        report["sigma_eff"] = dec["sigma_eff"]
        tables["decay.csv"] = (["xi", "mag0", "magT"],
                               [[r["xi"], r["mag0"], r["magT"]] for r in rows])
    report = _jsonable(report)
    report["verdicts"] = derive_verdicts(report)
    timing["total"] = time.perf_counter() - t_start
    return report, tables, timing


def write_outputs(out_dir, report, tables, timing):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "timing.json", "w") as fh:
        json.dump(timing, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, (header, rows) in tables.items():
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(x)) for x in row])


def _default_workers():
    env = os.environ.get("SINGLAB_WORKERS")
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"SINGLAB_WORKERS must be an integer, got {env!r}")
    if n < 1:
        raise ConfigError("SINGLAB_WORKERS must be >= 1")
    return n


def build_parser():
    ap = argparse.ArgumentParser(
        prog="singlab",
        description="Energy-method experiments for wave equations with "
                    "singular time-dependent coefficients.",
        epilog=config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="INI experiment file")
    ap.add_argument("--out", help="output directory (overrides [run] out)")
    ap.add_argument("--workers", type=int,
                    help="worker threads (overrides [run] workers)")
    ap.add_argument("--tol", type=float,
                    help="ODE tolerance (overrides [numerics] tol)")
    ap.add_argument("--seed", type=int, help="seed (overrides [run] seed)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
        if args.tol is not None:
            if not args.tol > 0:
                raise ConfigError("--tol must be positive")
            cfg["numerics"]["tol"] = args.tol
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        if args.out is not None:
            cfg["run"]["out"] = args.out
        workers = args.workers or cfg["run"]["workers"] or _default_workers()
        if workers < 1:
            raise ConfigError("--workers must be >= 1")
    except OSError as exc:
        print(f"singlab: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"singlab: config error: {exc}", file=sys.stderr)
        return 2

    out_dir = cfg["run"]["out"]
    try:
        report, tables, timing = run(cfg, args.command, workers)
    except ConfigError as exc:
        print(f"singlab: config error: {exc}", file=sys.stderr)
        return 2
    except (SinglabError, ValueError, ArithmeticError) as exc:
        # computational failure: record it in the report
        failure = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("t_worst", "ratio", "t_reached"):
            if getattr(exc, attr, None) is not None:
                failure[attr] = getattr(exc, attr)
        report = {"schema_version": SCHEMA_VERSION, "command": args.command,
                  "config": _jsonable(cfg), "failure": _jsonable(failure),
                  "verdicts": {}}
        write_outputs(out_dir, report, {}, {})
        print(f"singlab: {failure['error']}: {failure['message']}",
              file=sys.stderr)
        return 1
    write_outputs(out_dir, report, tables, timing)
    verdicts = report["verdicts"]
    for key, ok in verdicts.items():
        print(f"{key:<22} {'pass' if ok else 'FAIL'}")
    print(f"report: {Path(out_dir) / 'report.json'}")
    return 0 if all(verdicts.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
