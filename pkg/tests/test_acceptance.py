"""End-to-end acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line; the lines are repeated in the terminal
summary under "acceptance criteria".
"""
import math
import time

import numpy as np
import pytest

from gasket_renorm import forms, walksim
from gasket_renorm.network import (ConductanceNetwork, FormV0, effective_resistance,
                                   trace_to)
from gasket_renorm.qfield import RHO
from gasket_renorm.renorm import (fixed_point, grid_oracle, harmonic_values, lambda_bounds,
                                  lambda_scan, solve_r_star, uniqueness_probe)
from gasket_renorm.wordspace import census_slope

from conftest import record

SCAN_GRID = [0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95]
SCAN_DEPTH = 18
SEED = 0


@pytest.fixture(scope="session")
def solved():
    return solve_r_star(1e-6)


@pytest.fixture(scope="session")
def scan():
    t0 = time.perf_counter()
    rows = lambda_scan(SCAN_GRID, SCAN_DEPTH)
    return rows, time.perf_counter() - t0


@pytest.fixture(scope="session")
def consistent():
    return forms.consistent_parameters(6, 26)


@pytest.fixture(scope="session")
def exponent_fits(solved):
    theta = solved.theta
    base = FormV0.symmetric(solved.a_star)
    dims = forms.dimension_constants(theta)
    rng = np.random.default_rng(SEED)

    lf = forms.assemble_scale_form(13, base, theta)
    mu = walksim.measure_weights(lf, dims.d_H)
    lo, hi = walksim.resolved_range(lf)
    radii = walksim.log_radii(lo, hi, 25)
    centers = rng.choice(lf.real_vertices(), 16, replace=False)
    prof = np.array([walksim.exit_time_profile(lf, mu, c, radii) for c in centers])
    pooled = np.exp(np.log(prof).mean(axis=0))
    beta = walksim.fit_exit_exponent(radii, pooled, seed=SEED)
    cut = int(round(walksim.EXIT_TRIM * (radii.size - 1)))

    c0 = int(centers[0])
    z = []
    for i in range(5):
        w = walksim.mc_walk(lf, mu, c0, seed=SEED + i, walker_count=2000,
                            horizon=1e3 * prof[0, i], region=walksim.ball(lf, c0, radii[i]))
        z.append(((w.mean - prof[0, i]) / w.stderr, w.censored))

    lfs = forms.assemble_scale_form(12, base, theta)
    eigs = walksim.spectral_counting(lfs, walksim.measure_weights(lfs, dims.d_H), 200)
    weyl = walksim.counting_fit(eigs, seed=SEED)
    span = math.log10(radii[-1 - cut] / radii[cut])
    return {"dims": dims, "beta": beta, "span": span, "z": z, "weyl": weyl}


def test_criterion_01_lambda_bounds(scan):
    rows, elapsed = scan
    bad = []
    for row in rows:
        lo, hi = lambda_bounds(row["r"])
        inside = lo <= row["lambda_low"] <= row["lambda_high"] <= hi
        if not inside or row["lambda_high"] - row["lambda_low"] >= 1e-4:
            bad.append(row["r"])
    width = max(r["lambda_high"] - r["lambda_low"] for r in rows)
    ok = not bad and elapsed < 600
    record(1, ok, f"max width {width:.3g} at depth {SCAN_DEPTH}, scan {elapsed:.1f} s, "
                  f"violations {bad}")
    assert ok


def test_criterion_02_monotone_lambda(scan):
    rows, _ = scan
    gaps = [a["lambda_low"] - b["lambda_high"] for a, b in zip(rows, rows[1:])]
    ok = min(gaps) > 0
    record(2, ok, f"smallest separation between neighbouring enclosures {min(gaps):.4g}")
    assert ok


def test_criterion_03_unique_r_star(solved):
    r = solved.r_star
    li = fixed_point(r, depth=SCAN_DEPTH)
    resid = max(abs(li.low - r * r), abs(li.high - r * r))
    oracle = grid_oracle(depth=SCAN_DEPTH)
    brackets = oracle["brackets"]
    contains = len(brackets) == 1 and brackets[0][0] <= r <= brackets[0][1]
    ok = resid < 1e-5 and RHO < r < 1 and 0 < solved.theta < 1 and contains
    record(3, ok, f"r* = {r:.10f}, theta = {solved.theta:.10f}, |lambda - r*^2| <= "
                  f"{resid:.3g}, oracle brackets {brackets}")
    assert ok


def test_criterion_04_harmonic_identity(solved):
    r = solved.r_star
    li = fixed_point(r, depth=SCAN_DEPTH)
    hv = harmonic_values(r, FormV0.symmetric(li.a_star), SCAN_DEPTH)
    dev = abs(hv.hs_value - li.mid)
    anti = abs(hv.ha[0] + hv.ha[1])
    ok = dev <= li.width + 1e-6 and abs(hv.ha_value) < li.low and anti <= 1e-9
    record(4, ok, f"|h_s - lambda| = {dev:.3g} (allowed {li.width + 1e-6:.3g}), "
                  f"|h_a|/lambda = {abs(hv.ha_value) / li.low:.4f}, h_a sum {anti:.3g}")
    assert ok


def test_criterion_05_uniqueness(solved):
    up = uniqueness_probe(solved.r_star, 10, depth=12, seed=SEED)
    ok = all(up.converged) and up.max_deviation < 1e-6 and up.max_asymmetry < 1e-8
    record(5, ok, f"10 starts, max deviation {up.max_deviation:.3g}, "
                  f"max asymmetry {up.max_asymmetry:.3g}")
    assert ok


def test_criterion_06_regrouping_identities(consistent):
    base, theta = consistent
    rng = np.random.default_rng(SEED)
    lf = forms.assemble_Dm(1, 6, base, theta, 26)
    fs = rng.standard_normal((10, lf.skeleton.vertex_count))

    def worst(th):
        dec = [forms.decimation_residual(f, base, th, 1, 6, 26) for f in fs]
        ref = [forms.self_similar_residual(f, base, th, 1, 6, 26, refine=True) for f in fs]
        return max(max(d) for d in dec), max(ref)

    dec, ref = worst(theta)
    b2, t2 = forms.consistent_parameters(4, 4 + forms.DEFAULT_CHAIN_EXTRA)
    lf2 = forms.assemble_Dm(2, 4, b2, t2)
    fs2 = rng.standard_normal((10, lf2.skeleton.vertex_count))
    regroup = max(forms.self_similar_residual(f, b2, t2, 2, 4) for f in fs2)
    bad_dec, bad_ref = worst(theta + 0.1)
    ok = max(dec, ref, regroup) < 1e-9 and bad_dec > 1e-9 and bad_ref > 1e-9
    record(6, ok, f"decimation {dec:.3g}, self-similar {ref:.3g}, regrouping {regroup:.3g}; "
                  f"theta+0.1 gives {bad_dec:.3g} and {bad_ref:.3g}")
    assert ok


def test_criterion_07_monotone_levels(consistent):
    base, theta = consistent
    pairs = forms.monotonicity_check(base, theta, 1, 6, chain_depth=26, samples=20, seed=SEED)
    slack = min(hi - lo + 1e-9 for lo, hi in pairs)
    ok = len(pairs) == 20 and slack >= 0
    record(7, ok, f"min D(m+1) - D(m) + 1e-9 = {slack:.3g} over {len(pairs)} samples")
    assert ok


def test_criterion_08_dimension():
    slope, _ = census_slope(6, 20)
    dims = forms.dimension_constants(0.5)
    ok = abs(slope - 1.6824) <= 0.01 and abs(dims.d_H - 1.6824) < 5e-4
    record(8, ok, f"census slope {slope:.5f}, log eta / (-2 log rho) = {dims.d_H:.6f}")
    assert ok


def test_criterion_09_resistance(solved):
    base = FormV0.symmetric(solved.a_star)
    samples = forms.resistance_samples(2, 9, base, solved.theta, 300, seed=SEED)
    fit = forms.fit_exponent(samples, seed=SEED)
    ok = len(samples) >= 200 and abs(fit.slope - solved.theta) <= 0.05
    record(9, ok, f"slope {fit.slope:.4f} vs theta {solved.theta:.4f} over {len(samples)} pairs")
    assert ok


def test_criterion_10_walk_dimension(exponent_fits):
    beta = exponent_fits["dims"].beta
    fit = exponent_fits["beta"]
    z = exponent_fits["z"]
    worst_z = max(abs(v) for v, _ in z)
    censored = sum(c for _, c in z)
    ok = (abs(fit.slope - beta) <= 0.1 and exponent_fits["span"] >= 1.5
          and worst_z <= 3 and censored == 0)
    record(10, ok, f"slope {fit.slope:.4f} vs theta + d_H = {beta:.4f} over "
                   f"{exponent_fits['span']:.2f} decades, worst MC z {worst_z:.2f}")
    assert ok


def test_criterion_11_spectral_dimension(exponent_fits):
    dims = exponent_fits["dims"]
    weyl = exponent_fits["weyl"].slope
    census, _ = census_slope(6, 20)
    cross = abs(2 * census / exponent_fits["beta"].slope - 2 * weyl)
    ok = abs(weyl - dims.d_S / 2) <= 0.15 and cross <= 0.2
    record(11, ok, f"Weyl slope {weyl:.4f} vs d_S/2 = {dims.d_S / 2:.4f}, "
                   f"cross identity {cross:.4f}")
    assert ok


def _random_net(rng, n=10):
    edges = [(k, k + 1, rng.uniform(0.1, 3)) for k in range(n - 1)]
    for _ in range(2 * n):
        i, j = rng.choice(n, 2, replace=False)
        edges.append((int(i), int(j), rng.uniform(0.1, 3)))
    i, j, c = zip(*edges)
    return ConductanceNetwork(n, i, j, c)


def test_criterion_12_network_oracles():
    rng = np.random.default_rng(SEED)
    err = 0.0
    for _ in range(50):
        a, b, c = rng.uniform(0.05, 20, 3)
        s = a + b + c
        red = trace_to(ConductanceNetwork(4, [0, 1, 2], [3, 3, 3], [a, b, c]), [0, 1, 2])
        err = max(err, abs(red.conductance(0, 1) - a * b / s) / (a * b / s),
                  abs(red.conductance(1, 2) - b * c / s) / (b * c / s))
        ser = trace_to(ConductanceNetwork(3, [0, 1], [1, 2], [a, b]), [0, 2])
        err = max(err, abs(ser.conductance(0, 1) - a * b / (a + b)) / (a * b / (a + b)))
        par = ConductanceNetwork(2, [0, 0], [1, 1], [a, b])
        err = max(err, abs(effective_resistance(par, 0, 1) * (a + b) - 1))

        g = _random_net(rng)
        direct = trace_to(g, [0, 1, 2]).laplacian
        two = trace_to(trace_to(g, [0, 1, 2, 5, 7]).as_network(), [0, 1, 2]).laplacian
        err = max(err, float(np.abs(direct - two).max() / np.abs(direct).max()))

    rayleigh = 0.0
    for _ in range(50):
        g = _random_net(rng)
        cut = g.without_edge(int(rng.integers(g.edge_count)))
        if cut.components()[1][0] != cut.components()[1][9]:
            continue
        before = effective_resistance(g, 0, 9)
        rayleigh = max(rayleigh, (before - effective_resistance(cut, 0, 9)) / before)
    ok = err <= 1e-12 and rayleigh <= 1e-12
    record(12, ok, f"max relative error {err:.3g}, worst Rayleigh violation {rayleigh:.3g}")
    assert ok
