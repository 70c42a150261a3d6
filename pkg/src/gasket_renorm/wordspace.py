"""Word sets, cell maps and network skeletons for the golden-ratio gasket.

Internally a cell map is a tuple (k, xa, xb, ya, yb): scale rho**k plus the
translation ((xa + xb*rho)/2, (ya + yb*rho)/2 * sqrt3).  Points use the same
doubled numerators.  Every map built from F0, F1, F2 has translation in
(Z[rho]/2)^2, so integer tuples are exact dictionary keys.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .qfield import (DEPTH_CAP, INT64_MAX, RHO, CellMap, ExactPoint, GoldenRational,
                     gold_power_coeffs)

DEFAULT_CELL_BUDGET = 2_000_000
HAUSDORFF_DIM_REF = 1.6824

_ID = (0, 0, 0, 0, 0)
_LETTER = {
    "0": (2, 0, 1, 0, 1),    # rho^2 x + rho q0
    "1": (1, 0, 0, 0, 0),    # rho x
    "2": (1, 2, -2, 0, 0),   # rho x + rho^2 q2
}
_CORNER = ((1, 0, 1, 0), (0, 0, 0, 0), (2, 0, 0, 0))


@lru_cache(maxsize=None)
def _pow(k: int) -> tuple[int, int]:
    return gold_power_coeffs(k)


def _mul(a: int, b: int, p: int, q: int) -> tuple[int, int]:
    bq = b * q
    return a * p + bq, a * q + b * p - bq


def _compose(outer: tuple, inner: tuple) -> tuple:
    k, xa, xb, ya, yb = outer
    p, q = _pow(k)
    ixa, ixb = _mul(inner[1], inner[2], p, q)
    iya, iyb = _mul(inner[3], inner[4], p, q)
    return (k + inner[0], xa + ixa, xb + ixb, ya + iya, yb + iyb)


def _apply(m: tuple, pt: tuple) -> tuple:
    p, q = _pow(m[0])
    xa, xb = _mul(pt[0], pt[1], p, q)
    ya, yb = _mul(pt[2], pt[3], p, q)
    return (xa + m[1], xb + m[2], ya + m[3], yb + m[4])


def _pullback(m: tuple, outer: tuple) -> tuple | None:
    """inner with outer o inner == m."""
    k = m[0] - outer[0]
    if k < 0:
        return None
    p, q = _pow(-outer[0])
    xa, xb = _mul(m[1] - outer[1], m[2] - outer[2], p, q)
    ya, yb = _mul(m[3] - outer[3], m[4] - outer[4], p, q)
    return (k, xa, xb, ya, yb)


def apply_points(m: tuple, pts: np.ndarray) -> np.ndarray:
    """Vectorized _apply over rows of doubled-numerator points (int64)."""
    p, q = _pow(m[0])
    pts = np.asarray(pts, dtype=np.int64)
    a, b = pts[:, 0::2], pts[:, 1::2]
    bq = b * q
    out = np.empty_like(pts)
    out[:, 0::2] = a * p + bq + np.array([m[1], m[3]])
    out[:, 1::2] = a * q + b * p - bq + np.array([m[2], m[4]])
    return out


def _word_tuple(word: str) -> tuple:
    if len(word) > DEPTH_CAP:
        raise OverflowError(f"word length {len(word)} exceeds the depth cap {DEPTH_CAP}")
    m = _ID
    for c in word:
        m = _compose(m, _LETTER[c])
    return m


def _point_float(pt) -> tuple[float, float]:
    return ((pt[0] + pt[1] * RHO) / 2.0, (pt[2] + pt[3] * RHO) / 2.0 * math.sqrt(3.0))


def _to_exact_point(pt) -> ExactPoint:
    return ExactPoint(GoldenRational(pt[0], pt[1], 2), GoldenRational(pt[2], pt[3], 2))


def _to_cell_map(m) -> CellMap:
    return CellMap(m[0], _to_exact_point(m[1:]))


def _from_cell_map(cm: CellMap) -> tuple:
    def doubled(g: GoldenRational):
        if 2 % g.den:
            raise ValueError("translation outside (Z[rho]/2)^2")
        f = 2 // g.den
        return g.num_a * f, g.num_b * f
    xa, xb = doubled(cm.translation.x)
    ya, yb = doubled(cm.translation.y_over_sqrt3)
    return (cm.scale_exp, xa, xb, ya, yb)


def _overflow_guard(values) -> None:
    big = max((abs(v) for v in values), default=0)
    if big > INT64_MAX:
        raise OverflowError("translation coefficients leave the 64-bit range")


@dataclass(frozen=True)
class Word:
    letters: str
    canonical_flag: bool = True
    parts: tuple = ()

    def __str__(self):
        return self.letters

    def __len__(self):
        return len(self.letters)

    @property
    def scale_exp(self) -> int:
        return sum(2 if c == "0" else 1 for c in self.letters)


def word_cell_map(word: str) -> CellMap:
    return _to_cell_map(_word_tuple(word))


# --------------------------------------------------------------------------
# W1 enumeration

def _w1_tables(max_len: int):
    """Canonical W1 words grouped by length, with their map tuples."""
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    if max_len > DEPTH_CAP:
        raise OverflowError(f"length {max_len} exceeds the depth cap {DEPTH_CAP}")
    zero = _LETTER["0"]
    prefixes = [("", _ID)]
    out = []
    for length in range(1, max_len + 1):
        out.append([(u + "0", _compose(m, zero)) for u, m in prefixes])
        if length == max_len:
            break
        seen = set()
        nxt = []
        # prefixes are in lex order, so the first hit of a map is its lex-min word
        for u, m in prefixes:
            for c in "12":
                mm = _compose(m, _LETTER[c])
                key = mm[1:]
                if key in seen:
                    continue
                seen.add(key)
                nxt.append((u + c, mm))
        prefixes = nxt
    _overflow_guard(v for row in out[-1] for v in row[1])
    return out


def w1_counts(max_len: int) -> list[int]:
    """Number of distinct cells of W1 of each length 1..max_len."""
    return [len(t) for t in _w1_tables(max_len)]


def enumerate_W1(max_len: int) -> list[tuple[Word, CellMap]]:
    """One canonical word per distinct cell map, all lengths up to max_len."""
    return [(Word(w), _to_cell_map(m)) for table in _w1_tables(max_len) for w, m in table]


def brute_force_W1(max_len: int) -> list[list[str]]:
    """Lex-min representatives found by listing every word u0, u over {1,2}."""
    import itertools
    out = []
    for length in range(1, max_len + 1):
        best = {}
        for u in itertools.product("12", repeat=length - 1):
            w = "".join(u) + "0"
            key = _word_tuple(w)
            if key not in best or w < best[key]:
                best[key] = w
        out.append(sorted(best.values()))
    return out


def truncated_W1(depth: int, chain_depth: int) -> list[tuple[str, tuple]]:
    """All W1 cells of length <= depth plus the two corner chains up to chain_depth."""
    if not 1 <= depth <= chain_depth:
        raise ValueError("need 1 <= depth <= chain_depth")
    if chain_depth > DEPTH_CAP:
        raise OverflowError(f"chain depth {chain_depth} exceeds the depth cap {DEPTH_CAP}")
    cells = [row for table in _w1_tables(depth) for row in table]
    for k in range(depth + 1, chain_depth + 1):
        for c in "12":
            w = c * (k - 1) + "0"
            cells.append((w, _word_tuple(w)))
    return cells


# --------------------------------------------------------------------------
# skeletons

@dataclass
class Tail:
    """Stand-in for the omitted end of a corner chain inside one cell."""
    prefix: str
    prefix_scale: int
    corner: int          # 1 or 2
    end_id: int          # last chain vertex kept
    corner_id: int       # the corner the chain converges to
    first_part: str      # top-level W1 word the prefix starts with ('' at the top)
    chain: int = 0       # chain depth kept below the prefix


@dataclass
class NetworkSkeleton:
    points: list                 # doubled-numerator tuples, index = vertex id
    cells: list                  # (Word, (v0, v1, v2))
    cell_maps: list              # map tuples, aligned with cells
    tails: list                  # Tail records
    boundary_ids: tuple
    synthetic_ids: tuple
    depth: int
    chain_depth: int
    level: int = 1
    merged: int = 0              # composed words identified by exact dedup
    _xy: np.ndarray | None = field(default=None, repr=False)

    @property
    def vertex_count(self) -> int:
        return len(self.points)

    @property
    def vertices(self) -> list[tuple[int, ExactPoint]]:
        return [(i, _to_exact_point(p)) for i, p in enumerate(self.points)]

    @property
    def xy(self) -> np.ndarray:
        if self._xy is None:
            self._xy = np.array([_point_float(p) for p in self.points], dtype=float)
        return self._xy

    def cell_array(self) -> np.ndarray:
        return np.array([c[1] for c in self.cells], dtype=np.int64).reshape(-1, 3)

    def scale_exps(self) -> np.ndarray:
        return np.array([m[0] for m in self.cell_maps], dtype=np.int64)

    def vertex_id(self, point) -> int | None:
        if isinstance(point, ExactPoint):
            point = (point.x.num_a * (2 // point.x.den), point.x.num_b * (2 // point.x.den),
                     point.y_over_sqrt3.num_a * (2 // point.y_over_sqrt3.den),
                     point.y_over_sqrt3.num_b * (2 // point.y_over_sqrt3.den))
        return self._index().get(tuple(point))

    def _index(self) -> dict:
        if not hasattr(self, "_idx_cache"):
            self._idx_cache = {p: i for i, p in enumerate(self.points)}
        return self._idx_cache

    def is_connected(self) -> bool:
        """Connectivity of the graph on the non-synthetic vertices."""
        import scipy.sparse as sp
        from scipy.sparse.csgraph import connected_components
        keep = np.ones(self.vertex_count, bool)
        keep[list(self.synthetic_ids)] = False
        tri = self.cell_array()
        rows = np.concatenate([tri[:, 0], tri[:, 0], tri[:, 1]])
        cols = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 2]])
        for t in self.tails:
            rows = np.append(rows, t.end_id)
            cols = np.append(cols, t.corner_id)
        ok = keep[rows] & keep[cols]
        n = self.vertex_count
        g = sp.coo_matrix((np.ones(ok.sum()), (rows[ok], cols[ok])), shape=(n, n))
        _, lab = connected_components(g, directed=False)
        return len(set(lab[keep])) == 1

    def write_csv(self, vertices_path, cells_path, header: str = "") -> None:
        with open(vertices_path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh)
            w.writerow(["id", "x_a", "x_b", "y_a", "y_b", "den", "x_float", "y_float"])
            for i, p in enumerate(self.points):
                x, y = _point_float(p)
                w.writerow([i, p[0], p[1], p[2], p[3], 2, f"{x:.17g}", f"{y:.17g}"])
        with open(cells_path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh)
            w.writerow(["word", "v0_id", "v1_id", "v2_id", "scale_exp"])
            for (word, ids), m in zip(self.cells, self.cell_maps):
                w.writerow([word.letters, ids[0], ids[1], ids[2], m[0]])


def build_Vm_skeleton(level: int, depth: int, chain_depth: int,
                      budget: int = DEFAULT_CELL_BUDGET) -> NetworkSkeleton:
    """Cells w1...wm with every wi in the truncated W1, plus corner-chain tails.

    Each cell of the truncated W_{m-1} carries its own pair of tails, so the
    level-m network refines the level-(m-1) one cell by cell.
    """
    if level not in (1, 2, 3):
        raise ValueError("level must be 1, 2 or 3")
    base = truncated_W1(depth, chain_depth)
    total = len(base) ** level
    if total > budget:
        raise ValueError(f"{total} cells exceed the cell budget {budget}")

    points: list = []
    index: dict = {}

    def vid(pt):
        i = index.get(pt)
        if i is None:
            i = index[pt] = len(points)
            points.append(pt)
        return i

    for c in _CORNER:
        vid(c)
    bids = (0, 1, 2)
    ends = [None, _apply(_word_tuple("1" * chain_depth), _CORNER[0]),
            _apply(_word_tuple("2" * chain_depth), _CORNER[0])]

    prefixes = [("", (), _ID)]
    tails = []
    merged = 0
    for lev in range(level):
        for word, parts, m in prefixes:
            for corner in (1, 2):
                tails.append(Tail(word, m[0], corner, vid(_apply(m, ends[corner])),
                                  vid(_apply(m, _CORNER[corner])), parts[0] if parts else "",
                                  chain_depth))
        seen = set()
        nxt = []
        for word, parts, m in prefixes:
            for w, wm in base:
                mm = _compose(m, wm)
                key = mm
                if key in seen:
                    merged += 1
                    continue
                seen.add(key)
                nxt.append((word + w, parts + (w,), mm))
        prefixes = nxt

    cells, maps = [], []
    for word, parts, m in prefixes:
        ids = tuple(vid(_apply(m, c)) for c in _CORNER)
        cells.append((Word(word, True, parts), ids))
        maps.append(m)
    _overflow_guard(v for p in points for v in p)
    return NetworkSkeleton(points, cells, maps, tails, bids, (1, 2), depth, chain_depth,
                           level, merged)


def build_V1_skeleton(depth: int, chain_depth: int) -> NetworkSkeleton:
    return build_Vm_skeleton(1, depth, chain_depth)


def build_scale_skeleton(scale_exp: int, margin: int = 2,
                         budget: int = DEFAULT_CELL_BUDGET) -> NetworkSkeleton:
    """Uniform-resolution cut of the W1 tree at ratio about rho**scale_exp.

    A cell with scale exponent <= scale_exp - 2 is replaced by its own
    truncated copy of the W1 network: children up to exponent
    scale_exp + margin, corner chains to the same depth, and two tails.
    Cells of exponent >= scale_exp - 1 are leaves.  Unlike a W_m truncation
    this resolves every part of the gasket, including the top corner, down
    to roughly the same scale.
    """
    n = scale_exp
    if n < 2 or margin < 1:
        raise ValueError("need scale_exp >= 2 and margin >= 1")
    tables = _w1_tables(max(1, n + margin - 1))
    points: list = []
    index: dict = {}

    def vid(pt):
        i = index.get(pt)
        if i is None:
            i = index[pt] = len(points)
            points.append(pt)
        return i

    for c in _CORNER:
        vid(c)
    cells, maps, tails = [], [], []
    stack = [("", (), _ID)]
    while stack:
        word, parts, m = stack.pop()
        depth_here = n + margin - m[0] - 1
        chain_end = [None, _apply(_word_tuple("1" * depth_here), _CORNER[0]),
                     _apply(_word_tuple("2" * depth_here), _CORNER[0])]
        for corner in (1, 2):
            tails.append(Tail(word, m[0], corner, vid(_apply(m, chain_end[corner])),
                              vid(_apply(m, _CORNER[corner])), parts[0] if parts else "",
                              depth_here))
        for table in tables[:depth_here]:
            for w, wm in table:
                mm = _compose(m, wm)
                if mm[0] <= n - 2:
                    stack.append((word + w, parts + (w,), mm))
                else:
                    cells.append((Word(word + w, True, parts + (w,)),
                                  tuple(vid(_apply(mm, c)) for c in _CORNER)))
                    maps.append(mm)
                if len(cells) > budget:
                    raise ValueError(f"more than {budget} cells at scale exponent {n}")
    _overflow_guard(v for p in points for v in p)
    return NetworkSkeleton(points, cells, maps, tails, (0, 1, 2), (1, 2), n, n + margin, 0, 0)


# --------------------------------------------------------------------------
# graph-directed decomposition

@dataclass(frozen=True)
class GraphEdge:
    name: str
    source: int
    target: int
    word: str
    cell_map: CellMap

    @property
    def ratio(self) -> float:
        return self.cell_map.ratio


_PIECES = (("e1", 1, 2, ""), ("e2", 1, 1, "22"), ("e3", 2, 1, "0"),
           ("e4", 2, 2, "1"), ("e5", 2, 2, "21"), ("e6", 2, 1, "20"))


def graph_directed_pieces() -> list[GraphEdge]:
    """The six edges of the two-piece graph-directed decomposition.

    Piece 1 is the whole gasket and piece 2 its closure with F22 G removed.
    Edge (i, j) with map psi says psi(piece j) sits inside piece i.
    """
    return [GraphEdge(n, s, t, w, word_cell_map(w)) for n, s, t, w in _PIECES]


# --------------------------------------------------------------------------
# census

def _census_exponent(s: float) -> int:
    if not 0.0 < s < 1.0:
        raise ValueError("scale must lie in (0, 1)")
    k = int(math.ceil(math.log(s) / math.log(RHO) - 1e-9))
    if k > DEPTH_CAP:
        raise OverflowError(f"scale {s} needs exponent {k} beyond the depth cap")
    return k


_PACK_OFF = np.int64(1 << 31)
_MASK32 = np.int64(0xFFFFFFFF)


def _pack(xa, xb, ya, yb):
    """Two int64 words per map, viewed as one 16-byte key for np.unique."""
    lim = 1 << 31
    for a in (xa, xb, ya, yb):
        if a.size and (a.max() >= lim or a.min() < -lim):
            raise OverflowError("census coefficients exceed the packed range")
    hi = ((xa + _PACK_OFF) << 32) | (xb + _PACK_OFF)
    lo = ((ya + _PACK_OFF) << 32) | (yb + _PACK_OFF)
    return np.ascontiguousarray(np.stack([hi, lo], axis=1))


def _unpack(keys):
    hi, lo = keys[:, 0], keys[:, 1]
    return (((hi >> 32) & _MASK32) - _PACK_OFF, (hi & _MASK32) - _PACK_OFF,
            ((lo >> 32) & _MASK32) - _PACK_OFF, (lo & _MASK32) - _PACK_OFF)


def _unique_rows(keys):
    view = keys.view(np.dtype((np.void, 16))).ravel()
    _, first = np.unique(view, return_index=True)
    return keys[first]


def census_by_exponent(max_exp: int) -> list[int]:
    """#distinct cells F_w with scale exponent exactly k, for k = 0..max_exp.

    Cells of exponent k come from exponent k-1 by appending 1 or 2 and from
    k-2 by appending 0; equal maps stay equal after appending, so deduping
    each layer is enough.
    """
    if max_exp > DEPTH_CAP:
        raise OverflowError(f"exponent {max_exp} beyond the depth cap")
    z = np.zeros(1, np.int64)
    layers = [_pack(z, z, z, z)]
    counts = [1]
    for k in range(1, max_exp + 1):
        pieces = []
        for back, letter in ((1, "1"), (1, "2"), (2, "0")):
            if k - back < 0:
                continue
            p, q = _pow(k - back)
            lt = _LETTER[letter]
            xa, xb, ya, yb = _unpack(layers[k - back])
            dxa, dxb = _mul(lt[1], lt[2], p, q)
            dya, dyb = _mul(lt[3], lt[4], p, q)
            pieces.append(_pack(xa + dxa, xb + dxb, ya + dya, yb + dyb))
        layer = _unique_rows(np.concatenate(pieces))
        layers.append(layer)
        counts.append(int(layer.shape[0]))
        if k >= 2:
            layers[k - 2] = None  # no longer reachable
    return counts


def cell_census(scales) -> list[int]:
    """Distinct cells whose ratio is the first power of rho at or below s."""
    exps = [_census_exponent(float(s)) for s in scales]
    table = census_by_exponent(max(exps))
    return [table[k] for k in exps]


def brute_force_census(k: int) -> int:
    """Distinct maps among all words with scale exponent k, by direct listing."""
    found = set()

    def walk(m):
        if m[0] == k:
            found.add(m)
            return
        for c in "012":
            lt = _LETTER[c]
            if m[0] + lt[0] <= k:
                walk(_compose(m, lt))
    walk(_ID)
    return len(found)


def census_slope(k_min: int = 6, k_max: int = 20) -> tuple[float, list[int]]:
    """Least-squares slope of log count against log(1/s) over s = rho**k."""
    counts = census_by_exponent(k_max)
    ks = np.arange(k_min, k_max + 1)
    y = np.log(np.array(counts)[ks])
    x = -ks * math.log(RHO)
    slope = np.polyfit(x, y, 1)[0]
    return float(slope), counts
