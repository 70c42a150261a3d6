import math

import numpy as np
import pytest

from gasket_renorm import forms
from gasket_renorm.forms import (assemble_Dm, consistent_parameters, decimation_residual,
                                 dimension_constants, fit_exponent, mirror_map,
                                 monotonicity_check, resistance_samples, self_similar_residual)
from gasket_renorm.network import FormV0, effective_resistance
from gasket_renorm.qfield import RHO

from conftest import THETA


@pytest.fixture(scope="module")
def consistent6():
    return consistent_parameters(6)


def test_dimension_constants():
    dc = dimension_constants(THETA)
    assert forms.census_cubic(dc.eta) == pytest.approx(0.0, abs=1e-10)
    assert 5.0 < dc.eta < 5.1
    assert dc.d_H == pytest.approx(1.6824, abs=5e-4)
    assert dc.beta == pytest.approx(dc.theta + dc.d_H, abs=1e-12)
    assert 2 * dc.d_H / dc.beta == pytest.approx(dc.d_S, abs=1e-12)
    assert dimension_constants(0.0).d_S == pytest.approx(2.0)


def test_level_one_weights_follow_cell_lengths():
    lf = assemble_Dm(1, 5, FormV0.symmetric(0.4), THETA)
    r = RHO ** THETA
    for (w, _), wt in zip(lf.skeleton.cells, lf.cell_weights):
        # rho_w = rho^(|w|+1) for w in W1, so rho_w^-theta = r^-(|w|+1)
        assert wt == pytest.approx(r ** -(len(w.letters) + 1), rel=1e-12)


def test_constant_has_zero_energy():
    lf = assemble_Dm(2, 4, FormV0.symmetric(0.4), THETA)
    assert lf.energy(np.full(lf.skeleton.vertex_count, 3.0)) == 0.0


def test_energy_is_sum_of_pieces():
    lf = assemble_Dm(2, 4, FormV0(0.3, 0.5, 0.6), THETA)
    f = np.random.default_rng(0).standard_normal(lf.skeleton.vertex_count)
    total = lf.cell_energies(f).sum() + lf.tail_energies(f).sum()
    assert lf.energy(f) == pytest.approx(total, rel=1e-12)


def test_mirror_invariance():
    lf = assemble_Dm(2, 4, FormV0.symmetric(0.35), THETA)
    f = np.random.default_rng(1).standard_normal(lf.skeleton.vertex_count)
    perm = mirror_map(lf)
    g = np.empty_like(f)
    g[perm] = f
    assert lf.energy(g) == pytest.approx(lf.energy(f), rel=1e-9)


def test_consistent_truncation_refines_exactly(consistent6):
    base, theta = consistent6
    for lo, hi in monotonicity_check(base, theta, 1, 6, samples=5):
        assert hi == pytest.approx(lo, rel=1e-10)


def test_lower_theta_breaks_monotonicity(consistent6):
    # below the truncation's exponent the finer level loses energy
    base, theta = consistent6
    for lo, hi in monotonicity_check(base, theta - 0.1, 1, 6, samples=3):
        assert hi < lo * (1 - 1e-3)


def test_constant_function_pairs(consistent6):
    base, theta = consistent6
    lo, hi = monotonicity_check(base, theta, 1, 6, data=[[1.0, 1.0, 1.0]])[0]
    assert abs(lo) < 1e-20 and abs(hi) < 1e-18


def test_plain_regrouping_for_any_theta():
    base = FormV0.symmetric(0.4)
    lf = assemble_Dm(2, 4, base, 0.5)
    f = np.random.default_rng(2).standard_normal(lf.skeleton.vertex_count)
    for theta in (0.5, 0.8):
        assert self_similar_residual(f, base, theta, 2, 4) < 1e-12
    assert self_similar_residual(np.zeros_like(f), base, 0.5, 2, 4) == 0.0


def test_decimation_identities(consistent6):
    base, theta = consistent6
    lf = assemble_Dm(1, 6, base, theta)
    f = np.random.default_rng(3).standard_normal(lf.skeleton.vertex_count)
    r1, r2 = decimation_residual(f, base, theta, 1, 6)
    assert r1 < 1e-10 and r2 < 1e-10
    b1, b2 = decimation_residual(f, base, theta + 0.1, 1, 6)
    assert b1 > 1e-3 and b2 > 1e-3
    c1, c2 = decimation_residual(np.ones_like(f), base, theta, 1, 6)
    assert c1 < 1e-15 and c2 < 1e-15


def test_piece_table_partitions_cells():
    table = forms._piece_table(6, 26)
    assert table["0"] == "e3" and table["20"] == "e6"
    assert table["1220"] == "e5"      # 1220 = 2110 sits in F21 K2
    assert table["220"] == "e2"
    assert table["10"] == "e4"
    assert set(table.values()) <= {"e2", "e3", "e4", "e5", "e6"}


@pytest.mark.parametrize("n", [2, 4, 6])
def test_piece_table_covers_truncation(n):
    from gasket_renorm.wordspace import truncated_W1
    words = {w for w, _ in truncated_W1(n, n + 6)}
    assert set(forms._piece_table(n, n + 6)) == words


def test_fit_recovers_power_law():
    x = np.logspace(-3, 0, 40)
    fit = fit_exponent(list(zip(x, 3 * x ** 0.7)))
    assert fit.slope == pytest.approx(0.7, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3), abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)


def test_fit_rejects_bad_data():
    with pytest.raises(ValueError, match="span"):
        fit_exponent([(0.5, 1.0)] * 30)
    with pytest.raises(ValueError, match="samples"):
        fit_exponent([(10.0 ** -k, 1.0) for k in range(5)])


def test_fit_bootstrap_is_seeded():
    rng = np.random.default_rng(0)
    x = np.logspace(-3, 0, 50)
    y = x ** 0.6 * np.exp(rng.normal(0, 0.1, x.size))
    a = fit_exponent(list(zip(x, y)), seed=4)
    b = fit_exponent(list(zip(x, y)), seed=4)
    assert a.slope_ci == b.slope_ci
    assert a.slope_ci[0] < a.slope < a.slope_ci[1]


def test_resistance_samples_basic(fixed_base):
    s = resistance_samples(2, 4, fixed_base, THETA, 30, seed=1)
    again = resistance_samples(2, 4, fixed_base, THETA, 30, seed=1)
    assert [x.R for x in s] == [x.R for x in again]
    assert all(x.p != x.q and x.R > 0 and x.d > 0 for x in s)
    lf = assemble_Dm(2, 4, fixed_base, THETA)
    synthetic = set(lf.skeleton.synthetic_ids)
    assert not any(x.p in synthetic or x.q in synthetic for x in s)


def test_resistance_mirror_pairs(fixed_base):
    lf = assemble_Dm(2, 4, fixed_base, THETA)
    perm = mirror_map(lf)
    rng = np.random.default_rng(5)
    for p, q in rng.choice(lf.real_vertices(), (5, 2), replace=False):
        a = effective_resistance(lf.network, int(p), int(q))
        b = effective_resistance(lf.network, int(perm[p]), int(perm[q]))
        assert b == pytest.approx(a, rel=1e-9)
