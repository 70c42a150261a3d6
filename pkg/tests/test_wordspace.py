import csv
import math

import numpy as np
import pytest

from gasket_renorm.qfield import RHO, word_map
from gasket_renorm.wordspace import (_apply, _word_tuple, apply_points, brute_force_census,
                                     brute_force_W1, build_scale_skeleton, build_V1_skeleton,
                                     build_Vm_skeleton, census_by_exponent, census_slope,
                                     enumerate_W1, graph_directed_pieces, truncated_W1,
                                     w1_counts, word_cell_map)


def test_w1_counts_match_brute_force():
    assert w1_counts(8) == [len(x) for x in brute_force_W1(8)]
    assert w1_counts(10)[:6] == [1, 2, 4, 7, 12, 20]


def test_w1_growth_is_golden():
    c = w1_counts(25)
    assert c[-1] / c[-2] == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-4)


def test_w1_words_end_in_zero_and_are_distinct_cells():
    words = enumerate_W1(7)
    assert all(str(w.letters).endswith("0") for w, _ in words)
    keys = [m.key() for _, m in words]
    assert len(keys) == len(set(keys))


def test_canonical_word_is_lex_min():
    # 1220 and 2110 are the same cell; the enumeration keeps 1220
    letters = {w.letters for w, _ in enumerate_W1(4)}
    assert "1220" in letters and "2110" not in letters


def test_census_matches_brute_force():
    fast = census_by_exponent(9)
    assert fast[:8] == [brute_force_census(k) for k in range(8)]
    assert fast[:6] == [1, 2, 5, 11, 25, 56]


def test_census_slope_near_dimension():
    slope, _ = census_slope(6, 16)
    assert abs(slope - 1.6824) < 0.02


def test_truncated_w1_has_chains():
    cells = dict(truncated_W1(3, 6))
    assert "11110" in cells and "222220" in cells
    assert "12220" not in cells


def test_word_cell_map_agrees_with_exact_maps():
    for w in ("0", "10", "2110", "1220"):
        assert word_cell_map(w) == word_map(w)


def test_apply_points_matches_scalar():
    pts = np.array([[1, 0, 1, 0], [0, 0, 0, 0], [2, 0, 0, 0], [3, -1, 1, 2]])
    m = _word_tuple("2120")
    out = apply_points(m, pts)
    for p, q in zip(pts, out):
        assert tuple(q) == _apply(m, tuple(p))


def test_v1_smallest():
    sk = build_V1_skeleton(1, 1)
    assert sk.vertex_count == 5
    assert len(sk.cells) == 1 and len(sk.tails) == 2
    assert sk.is_connected()


@pytest.mark.parametrize("level,depth,chain", [(1, 6, 26), (2, 4, 10)])
def test_vm_connected_and_exact(level, depth, chain):
    sk = build_Vm_skeleton(level, depth, chain)
    assert sk.is_connected()
    assert sk.merged == 0
    xy = sk.xy
    assert np.all(xy[:, 1] >= -1e-15)
    # every vertex in the closed triangle
    assert np.all(xy[:, 1] <= math.sqrt(3) * np.minimum(xy[:, 0], 1 - xy[:, 0]) + 1e-12)


def test_vm_cells_refine_previous_level():
    one = build_Vm_skeleton(1, 4, 8)
    two = build_Vm_skeleton(2, 4, 8)
    assert len(two.cells) == len(one.cells) ** 2
    idx = two._index()
    assert all(p in idx for p in one.points)


def test_budget_enforced():
    with pytest.raises(ValueError):
        build_Vm_skeleton(3, 8, 28, budget=1000)


def test_scale_skeleton_uniform():
    sk = build_scale_skeleton(8)
    e = sk.scale_exps()
    assert e.min() >= 8 - 1 and e.max() <= 8 + 2
    assert sk.is_connected()


def test_graph_pieces():
    pieces = {e.name: e for e in graph_directed_pieces()}
    assert pieces["e2"].ratio == pytest.approx(RHO ** 2)
    assert pieces["e4"].ratio == pytest.approx(RHO)
    assert pieces["e6"].ratio == pytest.approx(RHO ** 3)
    assert {e.source for e in pieces.values()} == {1, 2}


def test_csv_export(tmp_path):
    sk = build_V1_skeleton(3, 5)
    v, c = tmp_path / "v.csv", tmp_path / "c.csv"
    sk.write_csv(v, c, "# header\n")
    rows = list(csv.reader(open(v)))
    assert rows[0] == ["# header"]
    assert rows[1][:6] == ["id", "x_a", "x_b", "y_a", "y_b", "den"]
    assert len(rows) == sk.vertex_count + 2
    x = float(rows[2][6])
    assert x == float(f"{sk.xy[0, 0]:.17g}")
    cells = list(csv.reader(open(c)))
    assert len(cells) == len(sk.cells) + 2
