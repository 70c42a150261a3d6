import numpy as np
import pytest

from gasket_renorm.network import FormV0
from gasket_renorm.qfield import RHO
from gasket_renorm.renorm import (RegionModel, Renormalizer, cut_fixed_point, cut_r_star,
                                  cut_trace, fixed_point, harmonic_values, harmonic_values_cut,
                                  lambda_bounds, lambda_scan, normalize_general, normalize_T,
                                  trace_enclosure)

FORMS = [FormV0(1.0, 1.0, 1.0), FormV0(0.3, 0.8, 1.7)]


@pytest.mark.parametrize("D", FORMS)
@pytest.mark.parametrize("r", [0.7, 0.9])
def test_recursion_matches_explicit_network(D, r):
    # without the chain split and with i rows the recursion is the cut network
    model = RegionModel(depth=12, split=0.0)
    for i in (1, 3, 5):
        lams, _ = model.region_traces(D, r, steps=i)
        top = model.top(lams, D, r)
        ct, _ = cut_trace(D, r, i + 1, i + 1)
        assert -top[0, 1] == pytest.approx(ct.a01, rel=1e-11)
        assert -top[0, 2] == pytest.approx(ct.a02, rel=1e-11)
        assert -top[1, 2] == pytest.approx(ct.a12, rel=1e-11)


def test_cut_trace_is_below_enclosure():
    D = FormV0.symmetric(0.3)
    ct, _ = cut_trace(D, 0.75, 5, 20)
    enc = trace_enclosure(D, 0.75, depth=12)
    u = np.array([0.0, 1.0, 1.0])
    assert ct.energy(u) <= enc.lower.energy(u) + 1e-12
    assert enc.lower.energy(u) <= enc.upper.energy(u) + 1e-12


def test_enclosure_monotone_in_depth():
    D = FormV0.symmetric(0.3)
    u = np.array([0.0, 1.0, -1.0])
    widths = []
    for d in (8, 12, 16):
        enc = trace_enclosure(D, 0.8, depth=d)
        widths.append(enc.upper.energy(u) - enc.lower.energy(u))
    assert widths[0] >= widths[1] >= widths[2] >= 0


def test_trace_symmetric_for_symmetric_input():
    lo, up = Renormalizer(10).bounds(FormV0.symmetric(0.4), 0.8)
    assert lo[1, 1] == pytest.approx(lo[2, 2], rel=1e-12)
    assert up[0, 1] == pytest.approx(up[0, 2], rel=1e-12)


def test_homogeneous_of_degree_one():
    rn = Renormalizer(10)
    D = FormV0(0.3, 0.5, 0.7)
    lo1, up1 = rn.bounds(D, 0.8)
    lo2, up2 = rn.bounds(D.scaled(3.0), 0.8)
    assert np.allclose(3 * lo1, lo2, rtol=1e-10)
    assert np.allclose(3 * up1, up2, rtol=1e-10)


def test_lambda_bounds_closed_form():
    lo, hi = lambda_bounds(0.8)
    assert lo == pytest.approx(1 / (1 / 0.2 - 0.8 / (2 + 1.6 + 1.28)))
    assert hi == pytest.approx(2 / 2.8)
    with pytest.raises(ValueError):
        lambda_bounds(0.6)


def test_fixed_point_interval():
    li = fixed_point(0.8, depth=12)
    lo, hi = lambda_bounds(0.8)
    assert lo <= li.low <= li.high <= hi
    assert li.width < 1e-4
    assert 0 < li.a_star < 1
    assert li.consistent


def test_scan_is_sorted_and_decreasing():
    rows = lambda_scan([0.9, 0.7, 0.8], depth=10)
    assert [r["r"] for r in rows] == [0.7, 0.8, 0.9]
    for a, b in zip(rows, rows[1:]):
        assert a["lambda_low"] > b["lambda_high"]


def test_normalizations():
    a, c = normalize_T(FormV0(2.0, 2.0, 1.0))
    assert a == pytest.approx(2 / 3) and c == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        normalize_T(FormV0(1.0, 2.0, 1.0))
    n = normalize_general([1.0, 3.0, 2.0])
    assert 0.5 * (n[0] + n[1]) + n[2] == pytest.approx(1.0)


def test_harmonic_identity_on_cut_network():
    # at the truncation's own fixed point h_s(F1 q0) = lambda_cut = r^2 exactly
    cp = cut_r_star(6, 26)
    (hs1, hs2), (ha1, ha2) = harmonic_values_cut(cp.r, cp.form, 6, 26)
    assert hs1 == pytest.approx(cp.r ** 2, abs=1e-12)
    assert hs2 == pytest.approx(hs1, abs=1e-12)
    assert ha1 == pytest.approx(-ha2, abs=1e-12)
    assert abs(ha1) < hs1


def test_cut_harmonic_values_approach_region_values():
    r, D = 0.8, FormV0.symmetric(0.6)
    target = harmonic_values(r, D, 14).hs_value
    cut = [harmonic_values_cut(r, D, n, n + 20)[0][0] for n in (4, 6, 8)]
    assert cut[0] < cut[1] < cut[2] < target


def test_cut_fixed_point_self_consistent():
    cp = cut_r_star(4, 20)
    assert RHO < cp.r < 1 and 0 < cp.theta < 1
    a, lam = cut_fixed_point(cp.r, 4, 20)
    assert a == pytest.approx(cp.a, abs=1e-10)
    assert lam == pytest.approx(cp.r ** 2, abs=1e-10)
