"""Level forms D^(m) on truncated V_m and the identities they satisfy.

The level-m network puts rho_w**-theta times the base form on every cell
w = w1...wm of the truncated W_m, and gives every prefix of length < m a
pair of tail edges standing in for the cut-off ends of its corner chains.
With that layout the level-(m+1) network is the level-m one with every
cell replaced by a scaled copy of the level-1 network, so comparing levels
tests exactly one thing: whether the level-1 network renormalizes the base
form with factor rho**(2 theta).

For a finite truncation that happens at the truncation's own fixed point
(``renorm.cut_r_star``), not at the limiting exponent, so the identity
checks default to it.  Resistance fits use whatever theta they are given.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import bisect

from .network import (ConductanceNetwork, FormV0, assemble_weighted, harmonic_extend,
                      resistance_pairs, trace_to)
from .qfield import RHO
from .wordspace import (_CORNER, DEFAULT_CELL_BUDGET, NetworkSkeleton, _pullback,
                        _word_tuple, apply_points, build_scale_skeleton, build_Vm_skeleton,
                        truncated_W1)

log = logging.getLogger(__name__)

DEFAULT_CHAIN_EXTRA = 20
MAX_LEVEL = 3


# --------------------------------------------------------------------------
# dimension constants

@dataclass(frozen=True)
class DimensionConstants:
    eta: float
    d_H: float
    theta: float
    beta: float
    d_S: float

    def to_dict(self) -> dict:
        return asdict(self)


def census_cubic(x: float) -> float:
    return x ** 3 - 6 * x ** 2 + 5 * x - 1


def dimension_constants(theta: float) -> DimensionConstants:
    if not 0.0 <= theta < 1.0:
        raise ValueError(f"theta={theta} outside [0, 1)")
    eta = bisect(census_cubic, 5.0, 5.1, xtol=1e-13, rtol=4 * np.finfo(float).eps)
    d_h = math.log(eta) / (-2.0 * math.log(RHO))
    return DimensionConstants(eta, d_h, theta, theta + d_h, 2 * d_h / (d_h + theta))


# --------------------------------------------------------------------------
# level forms

@dataclass
class LevelForm:
    level: int                  # 0 for a scale-cut form
    skeleton: NetworkSkeleton
    theta: float
    base: FormV0
    cell_weights: np.ndarray
    tail_conductances: np.ndarray
    network: ConductanceNetwork

    @property
    def r(self) -> float:
        return RHO ** self.theta

    def energy(self, f) -> float:
        return self.network.energy(f)

    def cell_energies(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        tri = self.skeleton.cell_array()
        f0, f1, f2 = f[tri[:, 0]], f[tri[:, 1]], f[tri[:, 2]]
        b = self.base
        return self.cell_weights * (b.a01 * (f0 - f1) ** 2 + b.a02 * (f0 - f2) ** 2
                                    + b.a12 * (f1 - f2) ** 2)

    def tail_energies(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        sk = self.skeleton
        end = np.array([t.end_id for t in sk.tails], dtype=np.int64)
        cor = np.array([t.corner_id for t in sk.tails], dtype=np.int64)
        return self.tail_conductances * (f[end] - f[cor]) ** 2

    def real_vertices(self) -> np.ndarray:
        """Vertices that are not synthetic corner nodes."""
        keep = np.ones(self.skeleton.vertex_count, bool)
        keep[list(self.skeleton.synthetic_ids)] = False
        return np.nonzero(keep)[0]


def _weights(skeleton: NetworkSkeleton, base: FormV0, theta: float):
    r = RHO ** theta
    cw = r ** (-skeleton.scale_exps().astype(float))
    # omitted chain cells c^(k-1)0, k > N, in series: a (1-r) r^-(N+2) per unit prefix weight
    tc = np.array([(base.a01 if t.corner == 1 else base.a02) * (1 - r)
                   * r ** (-(t.chain + 2) - t.prefix_scale) for t in skeleton.tails])
    return cw, tc


def _level_form(level, sk, base, theta) -> LevelForm:
    cw, tc = _weights(sk, base, theta)
    net = assemble_weighted(sk, base, cw, tc)
    return LevelForm(level, sk, theta, base, cw, tc, net)


@lru_cache(maxsize=8)
def _vm(level, depth, chain_depth, budget):
    return build_Vm_skeleton(level, depth, chain_depth, budget)


def assemble_Dm(m: int, n: int, base: FormV0, theta: float, chain_depth: int | None = None,
                budget: int = DEFAULT_CELL_BUDGET) -> LevelForm:
    """D^(m) on the depth-n truncation of V_m."""
    if not 1 <= m <= MAX_LEVEL:
        raise ValueError(f"level {m} outside 1..{MAX_LEVEL}")
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta={theta} outside (0, 1)")
    chain_depth = chain_depth if chain_depth is not None else n + DEFAULT_CHAIN_EXTRA
    return _level_form(m, _vm(m, n, chain_depth, budget), base, theta)


@lru_cache(maxsize=4)
def _scale(n, margin, budget):
    return build_scale_skeleton(n, margin, budget)


def assemble_scale_form(n: int, base: FormV0, theta: float, margin: int = 2,
                        budget: int = DEFAULT_CELL_BUDGET) -> LevelForm:
    """Same weights on the uniform-resolution cut at ratio rho**n."""
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta={theta} outside (0, 1)")
    return _level_form(0, _scale(n, margin, budget), base, theta)


def consistent_parameters(n: int, chain_depth: int | None = None):
    """(base form, theta) at which the depth-n truncation renormalizes exactly."""
    from .renorm import cut_r_star
    cp = cut_r_star(n, chain_depth if chain_depth is not None else n + DEFAULT_CHAIN_EXTRA)
    return cp.form, cp.theta


# --------------------------------------------------------------------------
# helpers on vertex functions

def _ids_of(fine: NetworkSkeleton, pts: np.ndarray) -> np.ndarray:
    idx = fine._index()
    out = np.empty(len(pts), dtype=np.int64)
    for i, p in enumerate(map(tuple, pts.tolist())):
        j = idx.get(p)
        if j is None:
            raise ValueError(f"point {p} is missing from the finer network; "
                             "the two truncations do not match")
        out[i] = j
    return out


def coarse_ids_in(fine: LevelForm, coarse: LevelForm) -> np.ndarray:
    """Vertex ids in ``fine`` of every vertex of ``coarse``."""
    return _ids_of(fine.skeleton, np.array(coarse.skeleton.points, dtype=np.int64))


def extend(fine: LevelForm, coarse: LevelForm, f) -> np.ndarray:
    """Harmonic extension of a function on the coarse vertices to the fine network."""
    ids = coarse_ids_in(fine, coarse)
    return harmonic_extend(fine.network, dict(zip(ids.tolist(), np.asarray(f, float))))


def harmonic_sample(lf: LevelForm, data) -> np.ndarray:
    sk = lf.skeleton
    return harmonic_extend(lf.network, dict(zip(sk.boundary_ids, np.asarray(data, float))))


def _top_words(lf: LevelForm):
    """Distinct first W1 factors of the cells, with their maps."""
    seen = {}
    for w, _ in lf.skeleton.cells:
        if w.parts[0] not in seen:
            seen[w.parts[0]] = _word_tuple(w.parts[0])
    return seen


def _top_tails(lf: LevelForm) -> np.ndarray:
    return np.array([t.prefix == "" for t in lf.skeleton.tails], bool)


def _regroup(fine: LevelForm, coarse: LevelForm, g) -> float:
    """sum_w rho_w^-theta coarse(g o F_w) over top cells, plus the top tails of fine."""
    g = np.asarray(g, float)
    pts = np.array(coarse.skeleton.points, dtype=np.int64)
    r = RHO ** fine.theta
    total = 0.0
    for word, m in _top_words(fine).items():
        ids = _ids_of(fine.skeleton, apply_points(m, pts))
        total += r ** (-m[0]) * coarse.energy(g[ids])
    return total + float(fine.tail_energies(g)[_top_tails(fine)].sum())


def _rel(res: float, scale: float) -> float:
    return abs(res) / scale if scale > 0 else abs(res)


# --------------------------------------------------------------------------
# identities

def monotonicity_check(base: FormV0, theta: float, m: int, n: int, data=None,
                       chain_depth: int | None = None, samples: int = 20, seed: int = 0):
    """Pairs (D^(m)(f), D^(m+1)(f_hat)) for harmonic f from random V0 data.

    f is the level-m harmonic extension of the boundary data and f_hat its
    harmonic extension to level m+1 with all level-m values held fixed.
    """
    coarse = assemble_Dm(m, n, base, theta, chain_depth)
    fine = assemble_Dm(m + 1, n, base, theta, chain_depth)
    if data is None:
        data = np.random.default_rng(seed).standard_normal((samples, 3))
    out = []
    for u in np.atleast_2d(data):
        f = harmonic_sample(coarse, u)
        out.append((coarse.energy(f), fine.energy(extend(fine, coarse, f))))
    return out


def self_similar_residual(f, base: FormV0, theta: float, m: int, n: int,
                          chain_depth: int | None = None, refine: bool = False) -> float:
    """Relative residual of D^(m)(f) = sum_w rho_w^-theta D^(m-1)(f o F_w) + top tails.

    f lives on the level-m vertices.  The plain form is a finite regrouping
    of cell sums and vanishes for every theta.  With ``refine`` the right
    side is taken one level up, sum_w rho_w^-theta D^(m)(f_hat o F_w) with
    f_hat the level-(m+1) harmonic extension; that only vanishes when the
    truncation renormalizes exactly, so it responds to a wrong theta.
    """
    if m < 2 and not refine:
        raise ValueError("the plain regrouping needs m >= 2")
    here = assemble_Dm(m, n, base, theta, chain_depth)
    f = np.asarray(f, float)
    if f.shape != (here.skeleton.vertex_count,):
        raise ValueError(f"f has shape {f.shape}, expected ({here.skeleton.vertex_count},)")
    lhs = here.energy(f)
    if refine:
        up = assemble_Dm(m + 1, n, base, theta, chain_depth)
        rhs = _regroup(up, here, extend(up, here, f))
    else:
        rhs = _regroup(here, assemble_Dm(m - 1, n, base, theta, chain_depth), f)
    return _rel(lhs - rhs, lhs)


class StraddleError(ValueError):
    """A cell of the truncation is not inside a single piece of the partition."""


def _piece_table(n: int, chain_depth: int) -> dict:
    """First-factor word -> graph edge of its piece (e2..e6, or e1 for K2 as a whole)."""
    w1 = truncated_W1(n, chain_depth)
    maps = {m for _, m in w1}
    f22, f1, f21 = _word_tuple("22"), _word_tuple("1"), _word_tuple("21")
    table = {}
    for word, m in w1:
        if word == "0":
            hits = ["e3"]
        elif word == "20":
            hits = ["e6"]
        else:
            hits = []
        for name, outer, target in (("e2", f22, "K1"), ("e4", f1, "K2"), ("e5", f21, "K2")):
            pb = _pullback(m, outer)
            if pb is None or pb not in maps:
                continue
            if target == "K2":
                inner = _pullback(pb, f22)
                if inner is not None and inner in maps:
                    continue
            hits.append(name)
        if "e2" in hits and len(hits) == 1:
            table[word] = "e2"
            continue
        k2 = [h for h in hits if h != "e2"]
        if len(k2) != 1 or "e2" in hits:
            raise StraddleError(f"cell {word} lies in pieces {hits or 'none'}; "
                                "increase the depth")
        table[word] = k2[0]
    return table


def _pieces(lf: LevelForm, table: dict):
    """Piece label of every cell and tail; top tails go with their chains."""
    cells = np.array([table[w.parts[0]] for w, _ in lf.skeleton.cells])
    tails = np.array([table[t.first_part] if t.prefix else ("e4" if t.corner == 1 else "e2")
                      for t in lf.skeleton.tails])
    return cells, tails


def _energy_by_piece(lf: LevelForm, f, table) -> dict:
    cl, tl = _pieces(lf, table)
    ce, te = lf.cell_energies(f), lf.tail_energies(f)
    return {k: float(ce[cl == k].sum() + te[tl == k].sum())
            for k in ("e2", "e3", "e4", "e5", "e6")}


def decimation_residual(f, base: FormV0, theta: float, m: int, n: int,
                        chain_depth: int | None = None) -> tuple[float, float]:
    """Relative residuals of the two graph-directed energy identities.

    E1(f) = E2(f) + rho_e2^-theta E1(f o F22) on K1 and
    E2(f) = sum over e3..e6 of rho_e^-theta E(f o psi_e) on K2.
    The left sides are the level-m energies of f (the whole network, and
    the part whose first factor lies in K2); the right sides are the
    level-(m+1) energies of the harmonic extension, split by piece.
    """
    chain_depth = chain_depth if chain_depth is not None else n + DEFAULT_CHAIN_EXTRA
    table = _piece_table(n, chain_depth)
    coarse = assemble_Dm(m, n, base, theta, chain_depth)
    fine = assemble_Dm(m + 1, n, base, theta, chain_depth)
    f = np.asarray(f, float)
    lo = _energy_by_piece(coarse, f, table)
    hi = _energy_by_piece(fine, extend(fine, coarse, f), table)
    e1_lhs = coarse.energy(f)
    e2_lhs = e1_lhs - lo["e2"]
    k2_rhs = hi["e3"] + hi["e4"] + hi["e5"] + hi["e6"]
    return _rel(e1_lhs - (k2_rhs + hi["e2"]), e1_lhs), _rel(e2_lhs - k2_rhs, e2_lhs)


def mirror_map(lf: LevelForm) -> np.ndarray:
    """Vertex permutation induced by x -> 1 - x."""
    pts = np.array(lf.skeleton.points, dtype=np.int64)
    mir = pts.copy()
    mir[:, 0], mir[:, 1] = 2 - pts[:, 0], -pts[:, 1]
    return _ids_of(lf.skeleton, mir)


# --------------------------------------------------------------------------
# resistance metric

@dataclass(frozen=True)
class ResistanceSample:
    p: int
    q: int
    px: float
    py: float
    qx: float
    qy: float
    d: float
    R: float


def _stratified_pairs(xy, candidates, count, rng, decades):
    from scipy.spatial import cKDTree
    tree = cKDTree(xy[candidates])
    pairs = []
    tries = 0
    while len(pairs) < count:
        k = decades[len(pairs) % len(decades)]
        lo, hi = 10.0 ** k, 10.0 ** (k + 1)
        i = candidates[rng.integers(candidates.size)]
        near = np.asarray(tree.query_ball_point(xy[i], hi), dtype=np.int64)
        near = candidates[near]
        d = np.hypot(*(xy[near] - xy[i]).T)
        near = near[(d >= lo) & (d < hi)]
        tries += 1
        if tries > 200 * count:
            raise RuntimeError("could not fill the distance strata; increase the depth")
        if near.size:
            pairs.append((int(i), int(near[rng.integers(near.size)])))
    return pairs


def resistance_samples(m: int, n: int, base: FormV0, theta: float, pair_count: int = 200,
                       seed: int = 0, chain_depth: int | None = None,
                       decades=(-3, -2, -1)) -> list[ResistanceSample]:
    """Effective resistances between vertex pairs stratified by distance decade.

    Pairs are drawn before any solve, so the result depends only on seed.
    """
    lf = assemble_Dm(m, n, base, theta, chain_depth)
    xy = lf.skeleton.xy
    rng = np.random.default_rng(seed)
    pairs = _stratified_pairs(xy, lf.real_vertices(), pair_count, rng, list(decades))
    res = resistance_pairs(lf.network, pairs)
    out = []
    for (p, q), R in zip(pairs, res):
        d = float(np.hypot(*(xy[p] - xy[q])))
        out.append(ResistanceSample(p, q, *xy[p], *xy[q], d, float(R)))
    return out


class FitError(ValueError):
    """Too few or too narrow samples for a power-law fit."""


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    r2: float
    slope_ci: tuple

    def __iter__(self):
        return iter((self.slope, self.intercept, self.r2, self.slope_ci))


def fit_exponent(samples, min_samples: int = 20, min_decades: float = 2.0,
                 seed: int = 0, resamples: int = 1000, level: float = 0.95) -> ExponentFit:
    """Least squares of log y on log x with a bootstrap interval for the slope.

    ``samples`` is a sequence of (x, y) pairs or ResistanceSample records.
    """
    rows = [(s.d, s.R) if isinstance(s, ResistanceSample) else tuple(s) for s in samples]
    x, y = np.array(rows, dtype=float).reshape(-1, 2).T
    if x.size < min_samples:
        raise FitError(f"{x.size} samples, need at least {min_samples}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    span = (lx.max() - lx.min()) / math.log(10)
    if span < min_decades:
        raise FitError(f"data span {span:.3g} decades, need {min_decades}")
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    rng = np.random.default_rng(seed)
    idx = rng.integers(x.size, size=(resamples, x.size))
    bx, by = lx[idx], ly[idx]
    mx, my = bx.mean(axis=1, keepdims=True), by.mean(axis=1, keepdims=True)
    den = np.sum((bx - mx) ** 2, axis=1)
    good = den > 0
    boot = np.sum((bx - mx) * (by - my), axis=1)[good] / den[good]
    a = (1 - level) / 2
    ci = (float(np.quantile(boot, a)), float(np.quantile(boot, 1 - a)))
    return ExponentFit(float(slope), float(icpt), float(r2), ci)


def trace_energy_ratio(lf: LevelForm) -> float:
    """lambda-like ratio: trace of the level form onto V0 over the base, along h_s."""
    red = trace_to(lf.network, lf.skeleton.boundary_ids).form()
    u = np.array([0.0, 1.0, 1.0])
    return red.energy(u) / lf.base.energy(u)


__all__ = ["DimensionConstants", "dimension_constants", "LevelForm", "assemble_Dm",
           "assemble_scale_form", "consistent_parameters", "monotonicity_check",
           "self_similar_residual", "decimation_residual", "StraddleError",
           "resistance_samples", "ResistanceSample", "fit_exponent", "ExponentFit", "FitError",
           "mirror_map", "extend", "harmonic_sample", "census_cubic"]
