"""Command-line driver: gasket-renorm {fixedpoint,lambda-scan,verify,exponents,graph-export}.

Configuration is a flat key=value file; every key has a default listed in
DEFAULTS and unknown keys are rejected.  Precedence: flags, then the
config file, then GASKET_RENORM_OUT (for ``out`` only), then defaults.

Exit codes: 0 ok, 1 a verification check failed, 2 usage or config error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("gasket_renorm")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
ENV_OUT = "GASKET_RENORM_OUT"

# key: (default, help)
DEFAULTS = {
    "out": ("gasket_out", "output directory"),
    "seed": (0, "master seed for every random choice"),
    "jobs": (1, "worker processes for the lambda scan"),
    "depth": (18, "region-recursion depth for lambda enclosures and harmonic values"),
    # fixedpoint
    "tol": (1e-6, "bisection tolerance on r"),
    "depth_start": (10, "first depth of the refinement schedule"),
    "depth_step": (2, "depth increment of the schedule"),
    "r_lo": (0.638033988749895, "lower end of the r bracket"),
    "r_hi": (0.98, "upper end of the r bracket"),
    # lambda-scan
    "r_grid": ("0.65,0.70,0.75,0.80,0.85,0.90,0.95", "comma-separated r values"),
    # verify
    "r_star": ("auto", "r at which harmonic values and uniqueness are checked; auto solves"),
    "identity_depth": (6, "W1 depth n of the truncation used by the identity checks"),
    "identity_chain": (26, "corner-chain depth N of that truncation"),
    "selfsim_depth": (4, "W1 depth for the level-2 regrouping check"),
    "samples": (20, "harmonic samples for the monotonicity check"),
    "functions": (10, "random vertex functions for the regrouping checks"),
    "theta_shift": (0.0, "added to the truncation exponent; 0.1 gives the negative control"),
    "identity_tol": (1e-9, "relative tolerance of the identity checks"),
    "uniqueness_seeds": (10, "random starting forms; 0 skips the probe"),
    "uniqueness_depth": (12, "recursion depth for the uniqueness iteration"),
    "uniqueness_tol": (1e-6, "max pairwise deviation of the limits"),
    "harmonic_tol": (1e-6, "slack added to the enclosure width for h_s"),
    # exponents
    "theta": ("auto", "exponent for the level forms; auto solves for r*"),
    "census_kmin": (6, "smallest census exponent in the fit"),
    "census_kmax": (20, "largest census exponent in the fit"),
    "resistance_level": (2, "level m of the resistance network"),
    "resistance_depth": (9, "W1 depth n of the resistance network"),
    "pairs": (300, "stratified resistance pairs"),
    "exit_scale": (13, "scale exponent of the uniform cut for exit times"),
    "exit_centers": (16, "random centres averaged in the exit-time fit"),
    "exit_radii": (25, "log-spaced radii over the resolved range"),
    "mc_walkers": (2000, "Monte Carlo walkers per ball"),
    "mc_balls": (5, "smallest radii cross-checked by Monte Carlo"),
    "spectral_scale": (12, "scale exponent of the uniform cut for the spectrum"),
    "eigs": (200, "eigenvalues computed"),
    # graph-export
    "graph_level": (1, "level m of the exported skeleton"),
    "graph_depth": (6, "W1 depth n of the exported skeleton"),
    "graph_chain": (26, "corner-chain depth N of the exported skeleton"),
}


class ConfigError(ValueError):
    pass


def _coerce(key, text):
    default = DEFAULTS[key][0]
    try:
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(default).__name__}") from None
    return text


def parse_config_text(text: str) -> dict:
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def resolve_config(path=None, overrides=None, env=None) -> dict:
    env = os.environ if env is None else env
    cfg = {k: v[0] for k, v in DEFAULTS.items()}
    if env.get(ENV_OUT):
        cfg["out"] = env[ENV_OUT]
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        cfg.update(parse_config_text(text))
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    validate(cfg)
    return cfg


def _grid(cfg) -> list[float]:
    text = str(cfg["r_grid"]).strip()
    if not text:
        return []
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"r_grid: cannot parse {text!r}") from None


def _maybe_float(cfg, key):
    v = cfg[key]
    if isinstance(v, str) and v.strip().lower() == "auto":
        return None
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"{key}: expected a number or 'auto', got {v!r}") from None


def validate(cfg: dict) -> None:
    from .qfield import RHO
    if not RHO < cfg["r_lo"] < cfg["r_hi"] < 1:
        raise ConfigError(f"r bracket ({cfg['r_lo']}, {cfg['r_hi']}) must satisfy "
                          f"rho={RHO:.10f} < r_lo < r_hi < 1")
    if cfg["jobs"] < 1:
        raise ConfigError("jobs must be at least 1")
    if cfg["tol"] <= 0:
        raise ConfigError("tol must be positive")
    if cfg["depth"] < 1 or cfg["depth_start"] < 1 or cfg["depth_step"] < 1:
        raise ConfigError("depths must be positive")
    for r in _grid(cfg):
        if not RHO < r < 1:
            raise ConfigError(f"r_grid value {r} outside (rho, 1)")
    for key in ("r_star", "theta"):
        _maybe_float(cfg, key)
    if cfg["uniqueness_seeds"] < 0:
        raise ConfigError("uniqueness_seeds must be nonnegative")
    if not 1 <= cfg["graph_level"] <= 3:
        raise ConfigError("graph_level must be 1, 2 or 3")


def config_text(cfg: dict) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))


# keys that change where or how fast results are produced, not the results
UNHASHED = ("out", "jobs")


def config_hash(cfg: dict) -> str:
    kept = {k: v for k, v in cfg.items() if k not in UNHASHED}
    return hashlib.sha256(config_text(kept).encode()).hexdigest()


# --------------------------------------------------------------------------
# output

class Writer:
    """Writes headed files inside one directory and remembers them."""

    def __init__(self, cfg: dict):
        self.dir = Path(cfg["out"])
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash = config_hash(cfg)
        self.files = []

    @property
    def header(self) -> str:
        return f"# gasket_renorm {__version__} config_sha256={self.hash}\n"

    def _path(self, name):
        p = self.dir / name
        self.files.append(str(p))
        return p

    def csv(self, name, columns, rows):
        with open(self._path(name), "w", newline="") as fh:
            fh.write(self.header)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])

    def json(self, name, payload):
        body = {"header": {"version": __version__, "config_sha256": self.hash}}
        body.update(payload)
        with open(self._path(name), "w") as fh:
            json.dump(_plain(body), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(float(x))
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# --------------------------------------------------------------------------
# commands

def _solve(cfg):
    from .renorm import depth_schedule, solve_r_star
    sched = depth_schedule(cfg["depth_start"], cfg["depth_step"], cfg["depth"])
    return solve_r_star(cfg["tol"], sched, (cfg["r_lo"], cfg["r_hi"]))


def cmd_fixedpoint(cfg, out: Writer, report: dict) -> int:
    res = _solve(cfg)
    out.json("fixedpoint.json", res.to_dict())
    report["warnings"] += list(res.warnings)
    report["headline"] = {"r_star": res.r_star, "theta": res.theta, "a_star": res.a_star,
                          "lambda_enclosure": list(res.lambda_enclosure)}
    print(f"r* = {res.r_star:.12f}  theta = {res.theta:.12f}  a* = {res.a_star:.12f}")
    print(f"lambda(r*) in [{res.lambda_enclosure[0]:.12f}, {res.lambda_enclosure[1]:.12f}]")
    return EXIT_OK


def cmd_lambda_scan(cfg, out: Writer, report: dict) -> int:
    from .renorm import lambda_scan
    grid = _grid(cfg)
    if not grid:
        raise ConfigError("r_grid is empty")
    rows = lambda_scan(grid, cfg["depth"], cfg["jobs"])
    cols = ["r", "lambda_low", "lambda_high", "bound_low", "bound_high", "a_star", "depth"]
    out.csv("lambda_scan.csv", cols, [[row[c] for c in cols] for row in rows])
    report["headline"] = {"rows": len(rows),
                          "max_width": max(r["lambda_high"] - r["lambda_low"] for r in rows)}
    for row in rows:
        print(f"r={row['r']:.4f}  lambda in [{row['lambda_low']:.10f}, "
              f"{row['lambda_high']:.10f}]")
    return EXIT_OK


def _r_star(cfg, report):
    r = _maybe_float(cfg, "r_star")
    if r is None:
        res = _solve(cfg)
        report["warnings"] += list(res.warnings)
        return res.r_star
    return r


def _check(checks, name, value, tol, passed):
    checks.append({"name": name, "value": value, "tolerance": tol, "passed": bool(passed)})
    print(f"{'PASS' if passed else 'FAIL'}  {name}: {value:.6g} (tolerance {tol:.3g})")


def run_checks(cfg, report) -> list[dict]:
    """All verification checks; returns the check records."""
    from . import forms
    from .network import FormV0
    from .renorm import fixed_point, harmonic_values, uniqueness_probe

    checks = []
    tol = cfg["identity_tol"]
    rng = np.random.default_rng(cfg["seed"])

    # identities on the truncation's own fixed point, optionally detuned
    n, chain = cfg["identity_depth"], cfg["identity_chain"]
    base, theta0 = forms.consistent_parameters(n, chain)
    theta = theta0 + cfg["theta_shift"]
    report["identity_theta"] = theta

    pairs = forms.monotonicity_check(base, theta, 1, n, chain_depth=chain,
                                     samples=cfg["samples"], seed=cfg["seed"])
    gaps = [(hi - lo) / max(lo, 1e-300) for lo, hi in pairs]
    # D(m+1) >= D(m) always holds for a lower-bound truncation; at its fixed
    # point the two agree, so a detuned theta shows up as a gap above zero
    worst = max(map(abs, gaps))
    _check(checks, "monotonicity |D(m+1)(f^)/D(m)(f) - 1|", worst, tol,
           min(gaps) >= -tol and worst <= tol)

    lvl1 = forms.assemble_Dm(1, n, base, theta, chain)
    fs = rng.standard_normal((cfg["functions"], lvl1.skeleton.vertex_count))
    dec = [forms.decimation_residual(f, base, theta, 1, n, chain) for f in fs]
    _check(checks, "decimation residual on K1", max(d[0] for d in dec), tol,
           max(d[0] for d in dec) <= tol)
    _check(checks, "decimation residual on K2", max(d[1] for d in dec), tol,
           max(d[1] for d in dec) <= tol)
    ref = max(forms.self_similar_residual(f, base, theta, 1, n, chain, refine=True) for f in fs)
    _check(checks, "self-similar residual across levels", ref, tol, ref <= tol)

    ns = cfg["selfsim_depth"]
    b2, t2 = forms.consistent_parameters(ns, ns + forms.DEFAULT_CHAIN_EXTRA)
    lvl2 = forms.assemble_Dm(2, ns, b2, t2 + cfg["theta_shift"])
    fs2 = rng.standard_normal((cfg["functions"], lvl2.skeleton.vertex_count))
    ss = max(forms.self_similar_residual(f, b2, t2 + cfg["theta_shift"], 2, ns) for f in fs2)
    _check(checks, "self-similar regrouping at level 2", ss, tol, ss <= tol)

    # harmonic values and uniqueness at r*
    r = _r_star(cfg, report)
    report["r_star"] = r
    li = fixed_point(r, depth=cfg["depth"])
    hv = harmonic_values(r, FormV0.symmetric(li.a_star), cfg["depth"])
    dev = abs(hv.hs_value - li.mid)
    allow = li.width + cfg["harmonic_tol"]
    _check(checks, "h_s(F1 q0) - lambda(r*)", dev, allow, dev <= allow)
    sym = abs(hv.hs[0] - hv.hs[1])
    _check(checks, "h_s(F1 q0) - h_s(F2 q0)", sym, 1e-9, sym <= 1e-9)
    anti = abs(hv.ha[0] + hv.ha[1])
    _check(checks, "h_a(F1 q0) + h_a(F2 q0)", anti, 1e-9, anti <= 1e-9)
    ratio = abs(hv.ha_value) / li.low
    _check(checks, "|h_a(F1 q0)| / lambda(r*)", ratio, 1.0, ratio < 1.0)

    seeds = cfg["uniqueness_seeds"]
    if seeds == 0:
        msg = "uniqueness probe skipped (uniqueness_seeds = 0)"
        log.warning(msg)
        report["warnings"].append(msg)
    else:
        up = uniqueness_probe(r, seeds, depth=cfg["uniqueness_depth"], seed=cfg["seed"])
        bad = [i for i, ok in enumerate(up.converged) if not ok]
        if bad:
            report["warnings"].append(f"uniqueness seeds {bad} did not converge")
        _check(checks, "uniqueness max pairwise deviation", up.max_deviation,
               cfg["uniqueness_tol"], up.max_deviation < cfg["uniqueness_tol"] and not bad)
        _check(checks, "uniqueness asymmetry |a01-a02|/a01", up.max_asymmetry, 1e-8,
               up.max_asymmetry < 1e-8)
    return checks


def cmd_verify(cfg, out: Writer, report: dict) -> int:
    checks = run_checks(cfg, report)
    failed = [c["name"] for c in checks if not c["passed"]]
    out.json("verify.json", {"checks": checks, "failed": failed,
                             "identity_theta": report.get("identity_theta"),
                             "r_star": report.get("r_star")})
    report["headline"] = {"checks": len(checks), "failed": failed}
    if failed:
        print("verification failed: " + "; ".join(failed))
        return EXIT_VERIFY
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


def cmd_exponents(cfg, out: Writer, report: dict) -> int:
    from . import forms, walksim
    from .network import FormV0
    from .qfield import RHO
    from .renorm import fixed_point
    from .wordspace import census_slope

    theta = _maybe_float(cfg, "theta")
    if theta is None:
        res = _solve(cfg)
        theta, a_star = res.theta, res.a_star
        report["warnings"] += list(res.warnings)
    else:
        a_star = fixed_point(RHO ** theta, depth=cfg["depth"]).a_star
    base = FormV0.symmetric(a_star)
    dims = forms.dimension_constants(theta)

    slope, counts = census_slope(cfg["census_kmin"], cfg["census_kmax"])
    out.csv("census.csv", ["s", "count"],
            [[RHO ** k, c] for k, c in enumerate(counts)])

    samples = forms.resistance_samples(cfg["resistance_level"], cfg["resistance_depth"], base,
                                       theta, cfg["pairs"], cfg["seed"])
    out.csv("resistance_samples.csv", ["px", "py", "qx", "qy", "d", "R"],
            [[s.px, s.py, s.qx, s.qy, s.d, s.R] for s in samples])
    rfit = forms.fit_exponent(samples, seed=cfg["seed"])

    lf = forms.assemble_scale_form(cfg["exit_scale"], base, theta)
    mu = walksim.measure_weights(lf, dims.d_H)
    lo, hi = walksim.resolved_range(lf)
    radii = walksim.log_radii(lo, hi, cfg["exit_radii"])
    rng = np.random.default_rng(cfg["seed"])
    centers = rng.choice(lf.real_vertices(), cfg["exit_centers"], replace=False)
    prof = np.array([walksim.exit_time_profile(lf, mu, c, radii) for c in centers])
    pooled = np.exp(np.log(prof).mean(axis=0))
    bfit = walksim.fit_exit_exponent(radii, pooled, seed=cfg["seed"])
    mc_rows, z = [], []
    c0 = int(centers[0])
    for i, s in enumerate(radii):
        mc_mean = mc_se = None
        if i < cfg["mc_balls"]:
            w = walksim.mc_walk(lf, mu, c0, seed=cfg["seed"] + i, walker_count=cfg["mc_walkers"],
                                horizon=1e3 * prof[0, i], region=walksim.ball(lf, c0, s))
            mc_mean, mc_se = w.mean, w.stderr
            z.append((w.mean - prof[0, i]) / w.stderr)
        mc_rows.append([s, prof[0, i], mc_mean, mc_se, pooled[i]])
    out.csv("exit_times.csv", ["s", "Etau_exact", "Etau_mc", "stderr", "Etau_geomean"], mc_rows)

    lfs = forms.assemble_scale_form(cfg["spectral_scale"], base, theta)
    mus = walksim.measure_weights(lfs, dims.d_H)
    eigs = walksim.spectral_counting(lfs, mus, cfg["eigs"])
    out.csv("spectrum.csv", ["index", "eigenvalue"], [[i, v] for i, v in enumerate(eigs)])
    sfit = walksim.counting_fit(eigs, seed=cfg["seed"])

    d_s_fit = 2 * sfit.slope
    fitted = {
        "d_H": {"fit": slope, "analytic": dims.d_H, "tolerance": 0.01},
        "theta": {"fit": rfit.slope, "ci": rfit.slope_ci, "analytic": theta, "tolerance": 0.05},
        "beta": {"fit": bfit.slope, "ci": bfit.slope_ci, "analytic": dims.beta,
                 "tolerance": 0.1},
        "d_S": {"fit": d_s_fit, "ci": [2 * c for c in sfit.slope_ci], "analytic": dims.d_S,
                "tolerance": 0.3},
    }
    cross = abs(2 * slope / bfit.slope - d_s_fit)
    out.json("dims.json", {**dims.to_dict(), "fitted": fitted,
                           "cross_identity": {"value": cross, "tolerance": 0.2},
                           "measure_defect": mu.defect, "mc_z_scores": z})
    report["headline"] = {k: v["fit"] for k, v in fitted.items()}
    print(f"{'quantity':8s} {'fitted':>10s} {'analytic':>10s}")
    for k, v in fitted.items():
        print(f"{k:8s} {v['fit']:10.5f} {v['analytic']:10.5f}")
    print(f"cross identity |2 d_H/beta - d_S| = {cross:.4f}")
    return EXIT_OK


def cmd_graph_export(cfg, out: Writer, report: dict) -> int:
    from .wordspace import build_Vm_skeleton, graph_directed_pieces
    sk = build_Vm_skeleton(cfg["graph_level"], cfg["graph_depth"], cfg["graph_chain"])
    sk.write_csv(out._path("vertices.csv"), out._path("cells.csv"), out.header)
    out.csv("pieces.csv", ["name", "source", "target", "word", "ratio"],
            [[e.name, e.source, e.target, e.word, e.ratio] for e in graph_directed_pieces()])
    report["headline"] = {"vertices": sk.vertex_count, "cells": len(sk.cells),
                          "tails": len(sk.tails)}
    print(f"{sk.vertex_count} vertices, {len(sk.cells)} cells, {len(sk.tails)} tails")
    return EXIT_OK


COMMANDS = {
    "fixedpoint": cmd_fixedpoint,
    "lambda-scan": cmd_lambda_scan,
    "verify": cmd_verify,
    "exponents": cmd_exponents,
    "graph-export": cmd_graph_export,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gasket-renorm", description=__doc__.splitlines()[0],
                                epilog="config keys:\n" + "\n".join(
                                    f"  {k} (default {v[0]}): {v[1]}"
                                    for k, v in DEFAULTS.items()),
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat key=value file")
    p.add_argument("--out", help=f"output directory (default ${ENV_OUT} or gasket_out)")
    p.add_argument("--seed", type=int, help="random seed for sampling and walks")
    p.add_argument("--depth", type=int, help="shared-row depth of the enclosure models")
    p.add_argument("--jobs", type=int, help="worker processes for lambda scans")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        extra = parse_config_text("\n".join(args.set))
        overrides = {**extra, "out": args.out, "seed": args.seed, "depth": args.depth,
                     "jobs": args.jobs}
        cfg = resolve_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    from .network import NetworkError
    from .forms import FitError
    from .renorm import RenormError
    numeric = (RenormError, NetworkError, FitError, ArithmeticError, np.linalg.LinAlgError)
    report = {"command": args.command, "config": cfg, "config_text": config_text(cfg),
              "version": __version__, "warnings": [], "headline": {}}
    t0 = time.perf_counter()
    try:
        out = Writer(cfg)
        code = COMMANDS[args.command](cfg, out, report)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except numeric as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report["wall_time"] = time.perf_counter() - t0
    report["outputs"] = list(out.files)
    report["exit_code"] = code
    out.json("report.json", report)
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    return code
