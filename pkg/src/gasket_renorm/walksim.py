"""Diffusion exponents from level-form networks.

Exit times come from exact linear solves and the spectrum from shift-invert
Lanczos; a vectorized Monte Carlo walker cross-checks the exit times.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import LevelForm, dimension_constants, fit_exponent
from .network import NetworkError, expected_exit_time
from .qfield import RHO

log = logging.getLogger(__name__)

MAX_EIGS = 500
RADIUS_CAP = 0.3
# ends of the radius range feel the cut-off and the outer boundary
EXIT_TRIM = 0.05
EXIT_MIN_DECADES = 1.5
WALK_BATCH = 256


@dataclass
class SpeedMeasure:
    weights: np.ndarray
    total: float
    defect: float            # 1 - total
    d_H: float

    def __getitem__(self, i):
        return self.weights[i]


def measure_weights(lf: LevelForm, d_H: float | None = None) -> SpeedMeasure:
    """Each cell w spreads rho_w**d_H equally over its three corners."""
    d_H = d_H if d_H is not None else dimension_constants(0.5).d_H
    mass = RHO ** (d_H * lf.skeleton.scale_exps().astype(float))
    tri = lf.skeleton.cell_array()
    w = np.bincount(tri.ravel(), weights=np.repeat(mass / 3.0, 3),
                    minlength=lf.skeleton.vertex_count)
    total = float(w.sum())
    return SpeedMeasure(w, total, 1.0 - total, d_H)


def ball(lf: LevelForm, center: int, s: float) -> np.ndarray:
    """Vertices within Euclidean distance s of the center, boundary included."""
    xy = lf.skeleton.xy
    d = np.hypot(xy[:, 0] - xy[center, 0], xy[:, 1] - xy[center, 1])
    return np.nonzero(d <= s)[0]


def resolved_range(lf: LevelForm) -> tuple[float, float]:
    return RHO ** (lf.skeleton.depth - 2), RADIUS_CAP


def ball_mass_profile(lf: LevelForm, measure: SpeedMeasure, center: int, radii):
    return [float(measure.weights[ball(lf, center, s)].sum()) for s in radii]


def exit_time_profile(lf: LevelForm, measure: SpeedMeasure, center: int, radii,
                      check_range: bool = True) -> np.ndarray:
    """E^x tau(x, s) for every radius, by exact solves."""
    lo, hi = resolved_range(lf)
    out = []
    for s in radii:
        if check_range and not lo * (1 - 1e-12) <= s <= hi:
            raise ValueError(f"radius {s:.6g} outside the resolved range "
                             f"[{lo:.6g}, {hi:.6g}] of this truncation")
        u = expected_exit_time(lf.network, ball(lf, center, s), measure.weights)
        out.append(float(u[center]))
    return np.array(out)


def middle_window(lo: float, hi: float, trim: float = 0.2) -> tuple[float, float]:
    """Drop the outer fraction ``trim`` of [lo, hi] at each end in log scale."""
    a, b = math.log(lo), math.log(hi)
    return math.exp(a + trim * (b - a)), math.exp(b - trim * (b - a))


def log_radii(lo: float, hi: float, count: int) -> np.ndarray:
    return np.exp(np.linspace(math.log(lo), math.log(hi), count))


def fit_exit_exponent(radii, times, seed: int = 0, trim: float = EXIT_TRIM,
                      min_decades: float = EXIT_MIN_DECADES):
    """Slope of log E tau on log s after trimming a fraction of points at each end."""
    order = np.argsort(radii)
    radii, times = np.asarray(radii)[order], np.asarray(times)[order]
    # radii are log-spaced, so dropping points is the same as trimming log s
    cut = int(round(trim * (radii.size - 1)))
    sel = slice(cut, radii.size - cut)
    return fit_exponent(list(zip(radii[sel], times[sel])), min_samples=5,
                        min_decades=min_decades, seed=seed)


# --------------------------------------------------------------------------
# spectrum

def _drop_massless(lap: sp.csr_matrix, mass: np.ndarray):
    """Schur out vertices with zero mass; they carry no time, only conductance."""
    zero = np.nonzero(mass <= 0)[0]
    keep = np.nonzero(mass > 0)[0]
    if zero.size == 0:
        return lap, keep
    laa = lap[keep][:, keep]
    laz = lap[keep][:, zero].tocsr()
    lzz = lap[zero][:, zero].toarray()
    nbr = np.unique(laz.nonzero()[0])
    block = laz[nbr].toarray()
    corr = block @ np.linalg.solve(lzz, block.T)
    rows, cols = np.meshgrid(nbr, nbr, indexing="ij")
    corr_sp = sp.csr_matrix((corr.ravel(), (rows.ravel(), cols.ravel())), shape=laa.shape)
    return (laa - corr_sp).tocsr(), keep


def spectral_counting(lf: LevelForm, measure: SpeedMeasure, k: int = 200,
                      tol: float = 1e-10) -> np.ndarray:
    """Smallest k eigenvalues of L f = lambda mu f (free boundary)."""
    if not 1 <= k <= MAX_EIGS:
        raise ValueError(f"k={k} outside 1..{MAX_EIGS}")
    lap, keep = _drop_massless(lf.network.laplacian(), measure.weights)
    n = lap.shape[0]
    if k >= n // 4:
        raise ValueError(f"k={k} is not small against {n} vertices")
    s = sp.diags(1.0 / np.sqrt(measure.weights[keep]))
    a = (s @ lap @ s).tocsc()
    a = 0.5 * (a + a.T)
    sigma = -1e-6 * float(abs(a.diagonal()).min())
    try:
        vals, vecs = spla.eigsh(a, k=k, sigma=sigma, which="LM", tol=tol)
    except spla.ArpackNoConvergence as exc:
        res = [float(np.linalg.norm(a @ v - lam * v)) for lam, v in
               zip(exc.eigenvalues, exc.eigenvectors.T)]
        raise NetworkError(f"eigen-iteration did not converge; residuals {res[:5]}") from exc
    order = np.argsort(vals)
    return vals[order]


def counting_fit(eigs, lo_index: int | None = None, seed: int = 0):
    """Slope of log N(lambda) on log lambda over the middle of the positive spectrum."""
    lam = np.asarray(eigs)[1:]
    counts = np.arange(1, lam.size + 1)
    lo, hi = middle_window(lam[0], lam[-1])
    sel = (lam >= lo) & (lam <= hi)
    if lo_index is not None:
        sel &= counts >= lo_index
    span = math.log10(lam[sel].max() / lam[sel].min())
    return fit_exponent(list(zip(lam[sel], counts[sel])), min_samples=10,
                        min_decades=min(span, 0.5), seed=seed)


# --------------------------------------------------------------------------
# Monte Carlo

@dataclass
class WalkResult:
    mean: float
    stderr: float
    quantiles: dict
    censored: int
    walkers: int
    seed: int
    samples: np.ndarray = field(repr=False)


def _transition_tables(lf: LevelForm):
    lap = lf.network.laplacian()
    adj = (-lap).tocsr()
    adj.setdiag(0.0)
    adj.eliminate_zeros()
    cond = np.asarray(adj.sum(axis=1)).ravel()
    cum = np.empty_like(adj.data)
    for i in range(adj.shape[0]):
        a, b = adj.indptr[i], adj.indptr[i + 1]
        cum[a:b] = np.cumsum(adj.data[a:b])
    return adj.indptr, adj.indices, cum, cond


def mc_walk(lf: LevelForm, measure: SpeedMeasure, start: int, seed: int, walker_count: int,
            horizon: float, region=None, max_steps: int = 10_000_000) -> WalkResult:
    """Exit times of continuous-time walks started at ``start``.

    Each walker waits an exponential time of mean mu(p)/C(p) and jumps to a
    neighbour with probability proportional to conductance.  The walk stops
    on leaving ``region`` (a vertex set) or at ``horizon``, which censors it.
    Walkers run in fixed batches of WALK_BATCH, each batch with its own
    stream spawned from (seed, batch index), so results do not depend on
    how batches are scheduled.
    """
    if walker_count <= 0 or horizon <= 0:
        raise ValueError("walker_count and horizon must be positive")
    indptr, indices, cum, cond = _transition_tables(lf)
    inside = np.zeros(lf.skeleton.vertex_count, bool)
    inside[np.asarray(list(region) if region is not None else [], dtype=np.int64)] = True
    if region is None:
        inside[:] = True
    if not inside[start]:
        return WalkResult(0.0, 0.0, {}, 0, walker_count, seed, np.zeros(walker_count))
    mean_hold = measure.weights / cond
    out = np.empty(walker_count)
    censored = 0
    for b, lo in enumerate(range(0, walker_count, WALK_BATCH)):
        m = min(WALK_BATCH, walker_count - lo)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, b])))
        pos = np.full(m, start, dtype=np.int64)
        t = np.zeros(m)
        live = np.ones(m, bool)
        steps = 0
        while live.any():
            idx = np.nonzero(live)[0]
            p = pos[idx]
            t[idx] += rng.exponential(1.0, idx.size) * mean_hold[p]
            over = t[idx] >= horizon
            u = rng.random(idx.size) * cond[p]
            a, e = indptr[p], indptr[p + 1]
            # binary search inside each row of the cumulative weights
            lo_i, hi_i = a.copy(), e - 1
            while np.any(lo_i < hi_i):
                mid = (lo_i + hi_i) // 2
                go = cum[mid] < u
                lo_i = np.where(go, mid + 1, lo_i)
                hi_i = np.where(go, hi_i, mid)
            pos[idx] = indices[lo_i]
            left = ~inside[pos[idx]]
            done = over | left
            censored += int(over.sum())
            t[idx[over]] = horizon
            live[idx[done]] = False
            steps += 1
            if steps > max_steps:
                raise RuntimeError("walk step limit reached; lower the horizon")
        out[lo:lo + m] = t
    mean = float(out.mean())
    se = float(out.std(ddof=1) / math.sqrt(walker_count)) if walker_count > 1 else math.inf
    qs = {q: float(np.quantile(out, q)) for q in (0.1, 0.5, 0.9)}
    if censored:
        log.warning("%d of %d walkers censored at horizon %g", censored, walker_count, horizon)
    return WalkResult(mean, se, qs, censored, walker_count, seed, out)


@dataclass
class WalkStats:
    radii: list
    exit_times: list
    eigenvalues: list
    fitted_beta: float
    beta_ci: tuple
    fitted_dS: float
    dS_ci: tuple
    seed: int


def nearest_vertex(lf: LevelForm, x: float, y: float) -> int:
    xy = lf.skeleton.xy
    return int(np.argmin(np.hypot(xy[:, 0] - x, xy[:, 1] - y)))
