"""Electrical networks: Laplacians, traces, resistances, harmonic functions."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .qfield import RHO

log = logging.getLogger(__name__)

DIRECT_LIMIT = 200_000
CG_RTOL = 1e-12


class NetworkError(RuntimeError):
    """Raised for singular or disconnected network problems."""


@dataclass(frozen=True)
class FormV0:
    """Conductances on the three edges of the triangle q0 q1 q2."""
    a01: float
    a02: float
    a12: float

    def __post_init__(self):
        vals = (self.a01, self.a02, self.a12)
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise ValueError(f"conductances must be finite and nonnegative, got {vals}")
        if sum(v == 0 for v in vals) > 1:
            raise ValueError(f"form {vals} is reducible")
        for name, v in zip(("a01", "a02", "a12"), vals):
            object.__setattr__(self, name, float(v))

    @classmethod
    def symmetric(cls, a: float) -> "FormV0":
        """a (f0-f1)^2 + a (f0-f2)^2 + (1-a) (f1-f2)^2."""
        return cls(a, a, 1.0 - a)

    @classmethod
    def from_laplacian(cls, lap) -> "FormV0":
        lap = np.asarray(lap)
        return cls(max(-lap[0, 1], 0.0), max(-lap[0, 2], 0.0), max(-lap[1, 2], 0.0))

    def as_array(self) -> np.ndarray:
        return np.array([self.a01, self.a02, self.a12])

    def is_symmetric(self, rtol: float = 0.0) -> bool:
        return abs(self.a01 - self.a02) <= rtol * max(self.a01, self.a02)

    def mirrored(self) -> "FormV0":
        return FormV0(self.a02, self.a01, self.a12)

    def scaled(self, c: float) -> "FormV0":
        return FormV0(c * self.a01, c * self.a02, c * self.a12)

    def laplacian(self) -> np.ndarray:
        a, b, c = self.a01, self.a02, self.a12
        return np.array([[a + b, -a, -b], [-a, a + c, -c], [-b, -c, b + c]])

    def energy(self, u) -> float:
        return quad_energy(self.as_array(), u)

    def to_json(self, residual: float = 0.0) -> str:
        return json.dumps({"a01": self.a01, "a02": self.a02, "a12": self.a12,
                           "residual": residual})


def quad_energy(coeffs, u) -> float:
    """Energy of boundary data u=(u0,u1,u2) under conductances (a01,a02,a12)."""
    a01, a02, a12 = coeffs
    return float(a01 * (u[0] - u[1]) ** 2 + a02 * (u[0] - u[2]) ** 2 + a12 * (u[1] - u[2]) ** 2)


def check_r(r: float) -> None:
    if not RHO < r < 1.0:
        raise ValueError(f"r={r} outside ({RHO:.10f}, 1); the restriction rho < r < 1 is "
                         "sharp, below rho the bottom-line resistance collapses")


class ConductanceNetwork:
    """Undirected weighted graph with merged parallel edges."""

    def __init__(self, n_vertices: int, heads, tails, conductances, boundary=(),
                 skeleton=None):
        heads = np.asarray(heads, dtype=np.int64)
        tails = np.asarray(tails, dtype=np.int64)
        cond = np.asarray(conductances, dtype=float)
        if cond.size and (not np.all(np.isfinite(cond)) or cond.min() <= 0):
            raise ValueError("conductances must be positive and finite")
        if np.any(heads == tails):
            raise ValueError("self loops are not allowed")
        lo, hi = np.minimum(heads, tails), np.maximum(heads, tails)
        key = lo * n_vertices + hi
        uniq, inv = np.unique(key, return_inverse=True)
        self.n = int(n_vertices)
        self.edge_i = (uniq // n_vertices).astype(np.int64)
        self.edge_j = (uniq % n_vertices).astype(np.int64)
        self.edge_c = np.bincount(inv, weights=cond, minlength=uniq.size)
        self.raw_edge_count = int(cond.size)
        self.boundary = tuple(int(b) for b in boundary)
        self.skeleton = skeleton
        self._lap = None

    @property
    def edge_count(self) -> int:
        return int(self.edge_c.size)

    def laplacian(self) -> sp.csr_matrix:
        if self._lap is None:
            i, j, c = self.edge_i, self.edge_j, self.edge_c
            a = sp.coo_matrix((np.concatenate([c, c]), (np.concatenate([i, j]),
                               np.concatenate([j, i]))), shape=(self.n, self.n)).tocsr()
            self._lap = (sp.diags(np.asarray(a.sum(axis=1)).ravel()) - a).tocsr()
        return self._lap

    def degree(self) -> np.ndarray:
        return np.bincount(np.concatenate([self.edge_i, self.edge_j]), minlength=self.n)

    def total_conductance(self) -> np.ndarray:
        return np.bincount(np.concatenate([self.edge_i, self.edge_j]),
                           weights=np.concatenate([self.edge_c, self.edge_c]), minlength=self.n)

    def energy(self, f) -> float:
        f = np.asarray(f, dtype=float)
        return float(np.sum(self.edge_c * (f[self.edge_i] - f[self.edge_j]) ** 2))

    def without_edge(self, k: int) -> "ConductanceNetwork":
        keep = np.ones(self.edge_count, bool)
        keep[k] = False
        return ConductanceNetwork(self.n, self.edge_i[keep], self.edge_j[keep],
                                  self.edge_c[keep], self.boundary, self.skeleton)

    def components(self):
        a = sp.coo_matrix((np.ones(self.edge_count), (self.edge_i, self.edge_j)),
                          shape=(self.n, self.n))
        return connected_components(a, directed=False)

    def with_boundary(self, boundary) -> "ConductanceNetwork":
        net = ConductanceNetwork.__new__(ConductanceNetwork)
        net.__dict__.update(self.__dict__)
        net.boundary = tuple(int(b) for b in boundary)
        return net


def assemble(skeleton, base: FormV0, r: float) -> ConductanceNetwork:
    """Each cell w adds the edges of base scaled by r**(1-|w|) for every W1 factor.

    Synthetic corner nodes are left unattached; cut_network adds the tails.
    """
    check_r(r)
    weights = np.array([np.prod([r ** (1 - len(p)) for p in w.parts]) if w.parts
                        else r ** (1 - len(w)) for w, _ in skeleton.cells])
    return assemble_weighted(skeleton, base, weights)


def assemble_weighted(skeleton, base: FormV0, cell_weights, tail_conductances=None
                      ) -> ConductanceNetwork:
    tri = skeleton.cell_array()
    w = np.asarray(cell_weights, dtype=float)
    heads = [tri[:, 0], tri[:, 0], tri[:, 1]]
    tails = [tri[:, 1], tri[:, 2], tri[:, 2]]
    conds = [w * base.a01, w * base.a02, w * base.a12]
    if tail_conductances is not None:
        heads.append(np.array([t.end_id for t in skeleton.tails], dtype=np.int64))
        tails.append(np.array([t.corner_id for t in skeleton.tails], dtype=np.int64))
        conds.append(np.asarray(tail_conductances, dtype=float))
    h, t, c = np.concatenate(heads), np.concatenate(tails), np.concatenate(conds)
    keep = c > 0
    return ConductanceNetwork(skeleton.vertex_count, h[keep], t[keep], c[keep],
                              skeleton.boundary_ids, skeleton)


# --------------------------------------------------------------------------
# linear algebra

def _split(net: ConductanceNetwork, targets):
    targets = np.asarray(list(targets), dtype=np.int64)
    mask = np.ones(net.n, bool)
    mask[targets] = False
    interior = np.nonzero(mask)[0]
    return targets, interior


def _check_attached(net: ConductanceNetwork, targets) -> None:
    ncomp, lab = net.components()
    tset = set(lab[np.asarray(list(targets), dtype=np.int64)])
    bad = sorted(set(range(ncomp)) - tset)
    if bad:
        members = np.nonzero(lab == bad[0])[0]
        raise NetworkError(f"interior component {bad[0]} with vertices "
                           f"{members[:10].tolist()}{'...' if members.size > 10 else ''} "
                           "has no target attachment")


class _InteriorSolver:
    """Solves L_II x = b by sparse LU, or CG for very large interiors."""

    def __init__(self, lii: sp.csr_matrix):
        self.lii = lii.tocsc()
        self.size = lii.shape[0]
        self.residual = 0.0
        if self.size <= DIRECT_LIMIT:
            self._lu = spla.splu(self.lii) if self.size else None
        else:
            self._lu = None
            self._jacobi = sp.diags(1.0 / lii.diagonal())

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.size == 0:
            return np.zeros((0,) + b.shape[1:])
        b2 = b.reshape(self.size, -1)
        if self._lu is not None:
            x = self._lu.solve(np.ascontiguousarray(b2))
        else:
            cols = []
            for k in range(b2.shape[1]):
                xk, info = spla.cg(self.lii, b2[:, k], rtol=CG_RTOL, atol=0.0,
                                   M=self._jacobi, maxiter=20 * self.size)
                if info != 0:
                    raise NetworkError(f"conjugate gradient did not converge (info={info})")
                cols.append(xk)
            x = np.stack(cols, axis=1)
        scale = max(np.abs(b2).max(), 1e-300)
        self.residual = max(self.residual, float(np.abs(self.lii @ x - b2).max() / scale))
        return x.reshape(b.shape)


@dataclass
class ReducedNetwork:
    targets: tuple
    laplacian: np.ndarray
    residual: float

    def form(self) -> FormV0:
        if len(self.targets) != 3:
            raise ValueError("a FormV0 needs exactly three targets")
        return FormV0.from_laplacian(self.laplacian)

    def conductance(self, a: int, b: int) -> float:
        return float(-self.laplacian[a, b])

    def as_network(self) -> ConductanceNetwork:
        k = len(self.targets)
        i, j = np.triu_indices(k, 1)
        c = -self.laplacian[i, j]
        keep = c > 0
        return ConductanceNetwork(k, i[keep], j[keep], c[keep], tuple(range(k)))


def trace_to(net: ConductanceNetwork, targets) -> ReducedNetwork:
    """Schur complement of the Laplacian onto the target vertices."""
    targets = tuple(int(t) for t in targets)
    if not targets:
        raise ValueError("targets must be nonempty")
    _check_attached(net, targets)
    t, interior = _split(net, targets)
    lap = net.laplacian()
    ltt = lap[t][:, t].toarray()
    if interior.size == 0:
        return ReducedNetwork(targets, ltt, 0.0)
    lii = lap[interior][:, interior]
    lit = lap[interior][:, t].toarray()
    solver = _InteriorSolver(lii)
    x = solver.solve(lit)
    red = ltt - lit.T @ x
    red = 0.5 * (red + red.T)
    return ReducedNetwork(targets, red, solver.residual)


def harmonic_extend(net: ConductanceNetwork, boundary_data: dict) -> np.ndarray:
    """Energy minimizer with prescribed values on the given vertices."""
    if not boundary_data:
        raise ValueError("boundary data must be nonempty")
    b = np.array(list(boundary_data.keys()), dtype=np.int64)
    vals = np.array([boundary_data[k] for k in boundary_data], dtype=float)
    _check_attached(net, b)
    t, interior = _split(net, b)
    out = np.empty(net.n)
    out[t] = vals
    if interior.size:
        lap = net.laplacian()
        rhs = -(lap[interior][:, t] @ vals)
        out[interior] = _InteriorSolver(lap[interior][:, interior]).solve(rhs)
    return out


def effective_resistance(net: ConductanceNetwork, p: int, q: int) -> float:
    """Unit current from p to q, ground at q."""
    if p == q:
        raise ValueError("p and q must differ")
    _, lab = net.components()
    if lab[p] != lab[q]:
        raise NetworkError(f"vertices {p} and {q} lie in different components")
    comp = np.nonzero(lab == lab[p])[0]
    keep = comp[comp != q]
    lap = net.laplacian()[keep][:, keep]
    rhs = (keep == p).astype(float)
    v = _InteriorSolver(lap).solve(rhs)
    return float(v[np.searchsorted(keep, p)])


def resistance_solver(net: ConductanceNetwork, ground: int):
    """Factor once, then return R(p, ground) for many p cheaply."""
    _, lab = net.components()
    comp = np.nonzero(lab == lab[ground])[0]
    keep = comp[comp != ground]
    solver = _InteriorSolver(net.laplacian()[keep][:, keep])
    pos = {int(v): i for i, v in enumerate(keep)}

    def resist(p: int) -> float:
        rhs = np.zeros(keep.size)
        rhs[pos[p]] = 1.0
        return float(solver.solve(rhs)[pos[p]])
    return resist


def resistance_pairs(net: ConductanceNetwork, pairs) -> np.ndarray:
    """R(p, q) for many pairs with one factorization."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise ValueError("pairs must have distinct endpoints")
    _, lab = net.components()
    if np.any(lab[pairs[:, 0]] != lab[pairs[:, 1]]):
        raise NetworkError("a pair straddles two components")
    out = np.empty(len(pairs))
    for c in np.unique(lab[pairs[:, 0]]):
        sel = np.nonzero(lab[pairs[:, 0]] == c)[0]
        comp = np.nonzero(lab == c)[0]
        ground, keep = comp[0], comp[1:]
        solver = _InteriorSolver(net.laplacian()[keep][:, keep])
        pos = np.full(net.n, -1)
        pos[keep] = np.arange(keep.size)
        for chunk in np.array_split(sel, max(1, len(sel) // 64)):
            rhs = np.zeros((keep.size, len(chunk)))
            cols = np.arange(len(chunk))
            p, q = pos[pairs[chunk, 0]], pos[pairs[chunk, 1]]
            rhs[p[p >= 0], cols[p >= 0]] += 1.0
            rhs[q[q >= 0], cols[q >= 0]] -= 1.0
            x = np.vstack([solver.solve(rhs), np.zeros((1, len(chunk)))])
            # pos == -1 is the ground, whose potential is the appended zero row
            out[chunk] = x[p, cols] - x[q, cols]
    return out


def expected_exit_time(net: ConductanceNetwork, ball, measure) -> np.ndarray:
    """Solve L u = measure on the ball with u = 0 off the ball."""
    ball = np.unique(np.asarray(list(ball), dtype=np.int64))
    if ball.size == 0:
        raise ValueError("ball is empty")
    if ball.size >= net.n:
        raise NetworkError("ball has empty exterior; the walk never exits")
    inside = np.zeros(net.n, bool)
    inside[ball] = True
    leaks = np.any(inside[net.edge_i] != inside[net.edge_j])
    if not leaks:
        raise NetworkError("ball has no edge to its exterior; the walk never exits")
    lap = net.laplacian()
    m = np.asarray(measure, dtype=float)
    u = np.zeros(net.n)
    sub = lap[ball][:, ball]
    # components of the ball that never touch the exterior would make sub singular
    a = sp.coo_matrix((np.ones(net.edge_count), (net.edge_i, net.edge_j)), shape=(net.n, net.n))
    a = a.tocsr()[ball][:, ball]
    ncomp, lab = connected_components(a, directed=False)
    exits = np.zeros(ncomp, bool)
    cross = inside[net.edge_i] != inside[net.edge_j]
    inner_end = np.where(inside[net.edge_i[cross]], net.edge_i[cross], net.edge_j[cross])
    exits[lab[np.searchsorted(ball, inner_end)]] = True
    if not exits.all():
        raise NetworkError("part of the ball has no path to the exterior")
    u[ball] = _InteriorSolver(sub).solve(m[ball])
    return u
