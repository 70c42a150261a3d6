"""Renormalization of triangle forms through the infinite graph V1.

R_r D is the trace onto {q0, q1, q2} of the infinite network in which every
cell w of W1 carries D scaled by r**(1 - |w|).  Two finite models bracket it:

* a lower model, in which every corner chain deeper than ``depth`` rows below
  its birth is cut lengthwise into two parallel strands, one per adjacent
  region.  Cutting a vertex apart only removes connections, so its trace is
  below the true one by Rayleigh monotonicity.
* an upper model, in which the values on deep chain vertices are forced to
  follow a fixed linear recurrence toward the chain's limit point.  That is
  a restriction of the trial space, so its trace is above the true one.

Below every gap of a row the graph looks like a rescaled copy of one of four
region shapes, so both models are computed by a small self-similar
recursion on region traces instead of by assembling huge networks.

The explicit truncated network (cells up to a given length plus corner
chains and tail edges) is kept as ``cut_network``; it is a third, much
weaker lower bound and serves as an oracle for the recursion.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .network import FormV0, assemble_weighted, check_r, trace_to
from .qfield import RHO
from .wordspace import build_V1_skeleton

log = logging.getLogger(__name__)

DEFAULT_DEPTH = 18
DEFAULT_SPLIT = 0.75
DEFAULT_MODES = (RHO, -RHO)
PROBES = {"hs": (0.0, 1.0, 1.0), "ha": (0.0, 1.0, -1.0), "mixed": (1.0, 0.0, 0.0)}
BRACKET = (RHO + 0.02, 0.98)
MIRROR5 = np.array([0, 2, 1, 4, 3])   # q0 q1 q2 F1q0 F2q0 under x -> 1 - x


class RenormError(RuntimeError):
    """Raised when an enclosure or fixed point cannot be certified."""


# --------------------------------------------------------------------------
# explicit truncated network

@lru_cache(maxsize=16)
def _v1_skeleton(depth: int, chain_depth: int):
    return build_V1_skeleton(depth, chain_depth)


def cut_network(base: FormV0, r: float, depth: int, chain_depth: int):
    """Cells of length <= depth, corner chains to chain_depth, and tail edges.

    The tail to q1 has conductance a01 (1-r) r**-N, the series value of the
    omitted chain edges alone; likewise a02 for q2.  Everything else below
    the truncation is dropped, so the trace is a lower bound.
    """
    check_r(r)
    if chain_depth < depth:
        raise ValueError("chain_depth must be at least depth")
    sk = _v1_skeleton(depth, chain_depth)
    weights = np.array([r ** (1 - len(w)) for w, _ in sk.cells])
    tails = [(base.a01 if t.corner == 1 else base.a02) * (1 - r) * r ** (-chain_depth)
             for t in sk.tails]
    return assemble_weighted(sk, base, weights, tails)


def cut_trace(base: FormV0, r: float, depth: int, chain_depth: int) -> tuple[FormV0, float]:
    net = cut_network(base, r, depth, chain_depth)
    red = trace_to(net, net.boundary)
    return red.form(), red.residual


# --------------------------------------------------------------------------
# region recursion

def _region_boundary(kind: str, depth: int) -> list:
    left = [("l", j) for j in range(depth + 1)]
    if kind == "L":
        return left + [("r", j) for j in range(2, depth + 1)] + ["ll", "lr"]
    if kind == "S":
        return left + [("r", j) for j in range(1, depth + 1)] + ["ll", "lr"]
    if kind == "C":
        return [("l", 0)] + [("r", j) for j in range(2, depth + 1)] + ["ll", "lr"]
    if kind == "E":
        return left + ["ll", "lr"]
    raise ValueError(kind)


# which children sit under each region and how their boundary maps into it
def _child_maps(kind: str, depth: int):
    J = depth
    shift_left = {("l", j): ("l", j + 1) for j in range(J + 1)}
    left_into_mid = {("l", j): ("m", j + 1) for j in range(J + 1)}
    right_into_mid = {("r", j): ("m", j + 1) for j in range(2, J + 1)}
    right_down = {("r", j): ("r", j + 1) for j in range(1, J + 1)}
    if kind == "L":
        return [("L", {**shift_left, **right_into_mid, "ll": "ll", "lr": "mu"}),
                ("S", {**left_into_mid, **right_down, "ll": "mu", "lr": "lr"})]
    if kind == "S":
        return [("L", {**shift_left, **{("r", j): ("r", j + 1) for j in range(2, J + 1)},
                       "ll": "ll", "lr": "lr"})]
    if kind == "C":
        return [("C", {("l", 0): ("l", 1), **right_into_mid, "ll": "ll", "lr": "mu"}),
                ("S", {**left_into_mid, **right_down, "ll": "mu", "lr": "lr"})]
    if kind == "E":
        return [("L", {**shift_left, **right_into_mid, "ll": "ll", "lr": "mu"}),
                ("E", {**left_into_mid, "ll": "mu", "lr": "lr"})]
    raise ValueError(kind)


class _Template:
    """Index bookkeeping for one region shape at fixed depth and model."""

    def __init__(self, kind, depth, upper, modes, names=None, children=None, keep=None):
        self.kind = kind
        keep = keep if keep is not None else _region_boundary(kind, depth)
        children = children if children is not None else _child_maps(kind, depth)
        order = list(keep)
        seen = set(order)

        def add(n):
            if n not in seen:
                seen.add(n)
                order.append(n)
        for _, mp in children:
            for v in mp.values():
                add(v)
        for n in names or ():
            add(n)
        self.order = order
        self.pos = {n: i for i, n in enumerate(order)}
        self.n = len(order)
        self.children = []
        for ck, mp in children:
            src = _region_boundary(ck, depth)
            self.children.append((ck, np.array([self.pos[mp[s]] for s in src])))
        self.keep = np.arange(len(keep))
        self.proj = None
        aliased = []
        if upper:
            aliased = self._aliases(depth, modes)
        self.aliased = set(aliased)

    def _aliases(self, depth, modes):
        J = depth
        c1 = modes[0] + modes[1]
        c0 = -modes[0] * modes[1]
        out = []
        chains = []
        if self.kind in "LSE":
            chains.append(("l", "ll"))
        if self.kind in "LSC":
            chains.append(("r", "lr"))
        P = np.eye(self.n)
        for side, lim in chains:
            a = self.pos.get((side, J + 1))
            if a is None:
                continue
            prev, prev2, lp = self.pos[(side, J)], self.pos.get((side, J - 1)), self.pos[lim]
            P[a, a] = 0.0
            if prev2 is not None and c0 != 0.0:
                P[a, prev], P[a, prev2], P[a, lp] = c1, c0, 1.0 - c1 - c0
            else:
                g = modes[0]
                P[a, prev], P[a, lp] = g, 1.0 - g
            out.append(a)
        self.proj = P
        return out

    def finish(self, lap):
        """Restrict (upper model), eliminate interior nodes, restore Laplacian form."""
        if self.proj is not None:
            lap = self.proj.T @ lap @ self.proj
        k = self.keep
        diag = np.diag(lap)
        interior = np.array([i for i in range(len(k), self.n)
                             if i not in self.aliased and diag[i] > 0], dtype=int)
        kk = lap[np.ix_(k, k)]
        if interior.size:
            kin = lap[np.ix_(interior, k)]
            kk = kk - kin.T @ np.linalg.solve(lap[np.ix_(interior, interior)], kin)
        kk = 0.5 * (kk + kk.T)
        kk -= np.diag(kk.sum(axis=1))
        return kk


def _edge(lap, pos, a, b, c):
    i, j = pos[a], pos[b]
    lap[i, i] += c
    lap[j, j] += c
    lap[i, j] -= c
    lap[j, i] -= c


@dataclass
class RegionModel:
    """Lower or upper model of the infinite network at a given sharing depth."""
    depth: int = DEFAULT_DEPTH
    upper: bool = False
    split: float = DEFAULT_SPLIT
    modes: tuple = DEFAULT_MODES
    _templates: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.depth < 3:
            raise ValueError("depth must be at least 3")
        if not 0.0 <= self.split < 1.0:
            raise ValueError("split must lie in [0, 1)")
        for k in "LSCE":
            self._templates[k] = _Template(k, self.depth, self.upper, self.modes,
                                           names=[("l", self.depth + 1), ("r", self.depth + 1)])

    @property
    def theta_split(self) -> float:
        return 0.0 if self.upper else self.split

    def _base(self, kind, D, r):
        """Initial region traces: bare chains with tail edges to their limits."""
        J, th = self.depth, self.theta_split
        names = _region_boundary(kind, J)
        pos = {n: i for i, n in enumerate(names)}
        lap = np.zeros((len(names), len(names)))
        if kind in "LSE":
            for j in range(J):
                _edge(lap, pos, ("l", j), ("l", j + 1), (1 - th) * D.a01 * r ** (-j))
            _edge(lap, pos, ("l", J), "ll", (1 - th) * D.a01 * (1 - r) * r ** (-J))
        if kind in "LSC" and th > 0:
            j0 = 1 if kind == "S" else 2
            for j in range(j0, J):
                _edge(lap, pos, ("r", j), ("r", j + 1), th * D.a01 * r ** (-j))
            _edge(lap, pos, ("r", J), "lr", th * D.a01 * (1 - r) * r ** (-J))
        if kind == "C":
            _edge(lap, pos, ("l", 0), "ll", D.a01 * (1 - r))
        if kind == "E":
            _edge(lap, pos, ("l", 0), "lr", D.a02 * (1 - r))
        return lap

    def _fixed(self, kind, D, r):
        """Edges of the region's top cell plus the split strands it owns."""
        t = self._templates[kind]
        th = self.theta_split
        lap = np.zeros((t.n, t.n))
        lam = 1.0 if kind == "C" else 1.0 - th
        other = ("r", 1) if kind == "S" else ("m", 1)
        _edge(lap, t.pos, ("l", 0), ("l", 1), lam * D.a01)
        _edge(lap, t.pos, ("l", 0), other, D.a02)
        _edge(lap, t.pos, ("l", 1), other, D.a12)
        if th > 0:
            side = "r" if kind == "S" else "m"
            _edge(lap, t.pos, (side, 1), (side, 2), th * D.a01 / r)
            _edge(lap, t.pos, (side, 2), (side, 3), th * D.a01 / r ** 2)
        return lap

    def region_traces(self, D: FormV0, r: float, init=None, tol=1e-13, max_iter=20000,
                      steps: int | None = None):
        """Iterate the region recursion to its fixed point (or exactly `steps` times)."""
        lams = init if init is not None else {k: self._base(k, D, r) for k in "LSCE"}
        fixed = {k: self._fixed(k, D, r) for k in "LSCE"}
        inv_r = 1.0 / r
        for it in range(1, (steps or max_iter) + 1):
            new = {}
            for k in "LSCE":
                t = self._templates[k]
                lap = fixed[k].copy()
                for ck, idx in t.children:
                    lap[np.ix_(idx, idx)] += lams[ck] * inv_r
                new[k] = t.finish(lap)
            delta = max(np.abs(new[k] - lams[k]).max() / np.abs(new[k]).max() for k in new)
            lams = new
            if steps is not None:
                if it == steps:
                    return lams, it
                continue
            if delta < tol:
                return lams, it
        raise RenormError(f"region recursion did not converge in {max_iter} steps "
                          f"(last relative change {delta:.3g})")

    def top(self, lams, D: FormV0, r: float, five: bool = False) -> np.ndarray:
        """Trace onto q0, q1, q2 (and F1 q0, F2 q0 when five=True)."""
        J = self.depth
        keep = ["q0", "q1", "q2"] + ([("a", 1), ("b", 1)] if five else [])
        children = [("C", {("l", 0): ("a", 1), **{("r", j): ("b", j + 1) for j in range(2, J + 1)},
                           "ll": "q1", "lr": "mu"}),
                    ("E", {**{("l", j): ("b", j + 1) for j in range(J + 1)},
                           "ll": "mu", "lr": "q2"})]
        t = _Template("top", J, False, self.modes, names=[("a", 1), ("b", 1)],
                      children=children, keep=keep)
        lap = np.zeros((t.n, t.n))
        _edge(lap, t.pos, "q0", ("a", 1), D.a01)
        _edge(lap, t.pos, "q0", ("b", 1), D.a02)
        _edge(lap, t.pos, ("a", 1), ("b", 1), D.a12)
        th = self.theta_split
        if th > 0:
            _edge(lap, t.pos, ("b", 1), ("b", 2), th * D.a01 / r)
            _edge(lap, t.pos, ("b", 2), ("b", 3), th * D.a01 / r ** 2)
        for ck, idx in t.children:
            lap[np.ix_(idx, idx)] += lams[ck] / r
        return t.finish(lap)


def _mirror(D: FormV0) -> FormV0:
    return FormV0(D.a02, D.a01, D.a12)


class Renormalizer:
    """Lower and upper traces with warm starts across nearby calls."""

    def __init__(self, depth: int = DEFAULT_DEPTH, split: float = DEFAULT_SPLIT,
                 modes=DEFAULT_MODES, tol: float = 1e-13):
        self.depth = depth
        self.lower_model = RegionModel(depth, False, split, modes)
        self.upper_model = RegionModel(depth, True, split, modes)
        self.tol = tol
        self._warm = {}
        self.iterations = 0

    def _five(self, model, D, r, key):
        warm = self._warm.get((key, r))
        lams, it = model.region_traces(D, r, init=warm, tol=self.tol)
        self._warm[(key, r)] = lams
        self.iterations += it
        return model.top(lams, D, r, five=True)

    def reduced5(self, D: FormV0, r: float, upper: bool) -> np.ndarray:
        """Mirror-averaged 5-node trace; still a bound, and exactly symmetric for symmetric D."""
        check_r(r)
        model = self.upper_model if upper else self.lower_model
        k = self._five(model, D, r, ("u" if upper else "l", "D"))
        if D.a01 == D.a02:
            km = k
        else:
            km = self._five(model, _mirror(D), r, ("u" if upper else "l", "sD"))
        km = km[np.ix_(MIRROR5, MIRROR5)]
        return 0.5 * (k + km)

    def bounds(self, D: FormV0, r: float) -> tuple[np.ndarray, np.ndarray]:
        lo = _schur(self.reduced5(D, r, False), [0, 1, 2])
        up = _schur(self.reduced5(D, r, True), [0, 1, 2])
        return lo, up


def _schur(lap, keep):
    keep = list(keep)
    rest = [i for i in range(lap.shape[0]) if i not in keep]
    out = lap[np.ix_(keep, keep)]
    if rest:
        b = lap[np.ix_(rest, keep)]
        out = out - b.T @ np.linalg.solve(lap[np.ix_(rest, rest)], b)
    return 0.5 * (out + out.T)


def _coeffs(lap3) -> np.ndarray:
    return np.array([-lap3[0, 1], -lap3[0, 2], -lap3[1, 2]])


# --------------------------------------------------------------------------
# enclosures

@dataclass
class TraceEnclosure:
    lower: FormV0
    upper: FormV0
    probe_energies: dict
    depth: int
    correction: float
    residual: float

    def midpoint(self) -> FormV0:
        return FormV0(*(0.5 * (self.lower.as_array() + self.upper.as_array())))


def trace_enclosure(base: FormV0, r: float, depth: int = DEFAULT_DEPTH,
                    renormalizer: Renormalizer | None = None) -> TraceEnclosure:
    """Bracket R_r(base)(u) for the probe data u."""
    rn = renormalizer or Renormalizer(depth)
    lo, up = rn.bounds(base, r)
    slack = 1e-12 * np.abs(up).max()
    lo_c, up_c = _coeffs(lo), _coeffs(up)
    probes = {}
    worst = 0.0
    for name, u in PROBES.items():
        low = _energy(lo_c, u)
        high = _energy(up_c, u)
        if high < low:
            if low - high > 1e-9 * max(abs(low), 1.0):
                raise RenormError(f"upper model below lower model on probe {name}")
            high = low
        probes[name] = (low - slack, high + slack)
        worst = max(worst, high - low)
    return TraceEnclosure(FormV0(*np.maximum(lo_c, 0)), FormV0(*np.maximum(up_c, 0)), probes,
                          rn.depth, worst, slack)


def _energy(c, u) -> float:
    return float(c[0] * (u[0] - u[1]) ** 2 + c[1] * (u[0] - u[2]) ** 2 + c[2] * (u[1] - u[2]) ** 2)


def normalize_T(form: FormV0) -> tuple[float, float]:
    """(a, c) with c*form = a (f0-f1)^2 + a (f0-f2)^2 + (1-a) (f1-f2)^2."""
    if not form.is_symmetric(1e-9):
        raise ValueError(f"form {form} is not symmetric")
    if form.a01 <= 0:
        raise ValueError("a01 = 0 has no normalized representative")
    c = 1.0 / (form.a01 + form.a12)
    return form.a01 * c, c


def normalize_general(coeffs) -> np.ndarray:
    """Projective normalization for any form: (a01 + a02)/2 + a12 = 1."""
    c = np.asarray(coeffs, dtype=float)
    return c / (0.5 * (c[0] + c[1]) + c[2])


def lambda_bounds(r: float) -> tuple[float, float]:
    """Closed-form lower and upper bounds on lambda(r)."""
    check_r(r)
    lower = 1.0 / (1.0 / (1.0 - r) - r / (2 + 2 * r + 2 * r * r))
    return lower, 2.0 / (2.0 + r)


def _gen_eig_range(form_c, base_c) -> tuple[float, float]:
    """Range of form(u)/base(u) over nonconstant u."""
    def red(c):
        lap = FormV0(*np.maximum(c, 0)).laplacian() if np.all(c >= 0) else None
        if lap is None:
            a, b, d = c
            lap = np.array([[a + b, -a, -b], [-a, a + d, -d], [-b, -d, b + d]])
        # coordinates u1 - u0, u2 - u0
        return lap[1:, 1:]
    a, b = red(np.asarray(form_c)), red(np.asarray(base_c))
    lb = np.linalg.cholesky(b)
    inv = np.linalg.inv(lb)
    w = np.linalg.eigvalsh(inv @ a @ inv.T)
    return float(w[0]), float(w[-1])


@dataclass
class LambdaInterval:
    r: float
    a_star: float
    low: float
    high: float
    depth: int
    probe_intervals: dict
    consistent: bool
    evaluations: int

    @property
    def width(self) -> float:
        return self.high - self.low

    @property
    def mid(self) -> float:
        return 0.5 * (self.low + self.high)


def _scalar_root(fn, guess=None, tol=1e-13):
    """Root of fn on (0, 1), searching outward from a guess first."""
    lo_b, hi_b = 1e-4, 1 - 1e-4
    if guess is not None:
        for da in (1e-4, 1e-3, 1e-2, 1e-1):
            lo, hi = max(guess - da, lo_b), min(guess + da, hi_b)
            f_lo, f_hi = fn(lo), fn(hi)
            if f_lo * f_hi < 0:
                return brentq(fn, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
    return brentq(fn, lo_b, hi_b, xtol=tol, rtol=4 * np.finfo(float).eps)


def fixed_point(r: float, tol: float = 1e-12, depth: int = DEFAULT_DEPTH,
                renormalizer: Renormalizer | None = None,
                depth_schedule=None, guess: float | None = None) -> LambdaInterval:
    """Normalized symmetric fixed form of T o R_r and an enclosure of lambda(r).

    For any positive symmetric D, lambda(r) lies between the smallest ratio
    lower(u)/D(u) and the largest ratio upper(u)/D(u) (Collatz-Wielandt for
    the monotone, homogeneous map R_r).  The lower end is sharpest at the
    eigenform of the lower model and the upper end at the eigenform of the
    upper model, so each bound is evaluated at its own trial form.  a_star
    is the fixed point of a -> T(mid R_r D_a), which sits between the two.
    """
    check_r(r)
    schedule = list(depth_schedule) if depth_schedule else [depth]
    last = None
    for d in schedule:
        rn = renormalizer if (renormalizer is not None and renormalizer.depth == d) \
            else Renormalizer(d)
        evals = [0]

        def model_resid(a, which):
            evals[0] += 1
            D = FormV0.symmetric(a)
            if which == "mid":
                lo, up = rn.bounds(D, r)
                c = 0.5 * (_coeffs(lo) + _coeffs(up))
            else:
                c = _coeffs(_schur(rn.reduced5(D, r, which == "up"), [0, 1, 2]))
            m = normalize_general(c)
            return 0.5 * (m[0] + m[1]) - a

        a_lo = _scalar_root(lambda a: model_resid(a, "lo"), guess, tol)
        a_up = _scalar_root(lambda a: model_resid(a, "up"), a_lo, tol)
        a = _scalar_root(lambda a: model_resid(a, "mid"), 0.5 * (a_lo + a_up), tol)

        D_lo, D_up = FormV0.symmetric(a_lo), FormV0.symmetric(a_up)
        low = _gen_eig_range(_coeffs(_schur(rn.reduced5(D_lo, r, False), [0, 1, 2])),
                             D_lo.as_array())[0]
        high = _gen_eig_range(_coeffs(_schur(rn.reduced5(D_up, r, True), [0, 1, 2])),
                              D_up.as_array())[1]
        slack = 1e-12 * max(abs(low), abs(high))
        D = FormV0.symmetric(a)
        lo, up = rn.bounds(D, r)
        base_c = D.as_array()
        probes = {}
        for name in ("hs", "ha"):
            u = PROBES[name]
            dq = _energy(base_c, u)
            probes[name] = (_energy(_coeffs(lo), u) / dq, _energy(_coeffs(up), u) / dq)
        consistent = (max(p[0] for p in probes.values())
                      <= min(p[1] for p in probes.values()) + 1e-12) and low <= high
        last = LambdaInterval(r, a, low - slack, high + slack, d, probes, consistent,
                              evals[0])
        if consistent:
            return last
        log.info("probe intervals disjoint at r=%.6f depth=%d; refining", r, d)
    if depth_schedule:
        raise RenormError(f"probe intervals remain disjoint at r={r} after depth {last.depth}")
    return last


def lambda_scan(rs, depth: int = DEFAULT_DEPTH, jobs: int = 1) -> list[dict]:
    """Enclosures on a grid of r, sorted by r."""
    rs = sorted(float(r) for r in rs)
    if not rs:
        raise ValueError("empty r grid")

    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_scan_worker, [(r, depth) for r in rs]))
    else:
        rows = [_scan_worker((r, depth)) for r in rs]
    return sorted(rows, key=lambda row: row["r"])


def _scan_worker(args):
    r, depth = args
    li = fixed_point(r, depth=depth)
    bl, bh = lambda_bounds(r)
    return {"r": r, "lambda_low": li.low, "lambda_high": li.high, "bound_low": bl,
            "bound_high": bh, "a_star": li.a_star, "depth": depth}


# --------------------------------------------------------------------------
# r*

@dataclass
class FixedPointResult:
    r_star: float
    theta: float
    a_star: float
    lambda_enclosure: tuple
    iterations: int
    depth_used: int
    bracket: tuple = (0.0, 0.0)
    residual: float = 0.0
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"r_star": self.r_star, "theta": self.theta, "a_star": self.a_star,
                "lambda_enclosure": list(self.lambda_enclosure),
                "lambda_width": self.lambda_enclosure[1] - self.lambda_enclosure[0],
                "iterations": self.iterations, "depth_used": self.depth_used,
                "bracket": list(self.bracket), "residual": self.residual,
                "warnings": list(self.warnings)}


def depth_schedule(start: int = 10, step: int = 2, max_depth: int = 20) -> list[int]:
    return list(range(start, max_depth + 1, step))


def _g_sign(r, schedule, cache):
    """Sign of lambda(r) - r^2 from the enclosure, refining depth while ambiguous."""
    li = None
    for d in schedule:
        key = (round(r, 15), d)
        if key not in cache:
            cache[key] = fixed_point(r, depth=d)
        li = cache[key]
        r2 = r * r
        if li.low > r2:
            return 1, li
        if li.high < r2:
            return -1, li
    return 0, li


def solve_r_star(tol: float = 1e-6, schedule=None, bracket=BRACKET) -> FixedPointResult:
    """Bisection on g(r) = lambda(r) - r^2 using certified signs where possible."""
    schedule = schedule or depth_schedule()
    lo, hi = bracket
    if not RHO < lo < hi < 1.0:
        raise ValueError(f"invalid bracket {bracket}")
    cache = {}
    warnings = []
    s_lo, _ = _g_sign(lo, schedule, cache)
    s_hi, _ = _g_sign(hi, schedule, cache)
    if s_lo != 1 or s_hi != -1:
        raise RenormError(f"bracket [{lo}, {hi}] does not certify a sign change "
                          f"(signs {s_lo}, {s_hi})")
    steps = 0
    undecided = False
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        s, li = _g_sign(mid, schedule, cache)
        steps += 1
        if s == 0:
            # r^2 sits inside the enclosure: the root is within its width of mid
            undecided = True
            s = 1 if li.mid > mid * mid else -1
        if s > 0:
            lo = mid
        else:
            hi = mid
    if undecided:
        warnings.append("final bisection steps decided by enclosure midpoint")
    r_star = 0.5 * (lo + hi)
    li = fixed_point(r_star, depth=schedule[-1])
    return FixedPointResult(r_star, math.log(r_star) / math.log(RHO), li.a_star,
                            (li.low, li.high), steps, li.depth, (lo, hi),
                            abs(li.mid - r_star * r_star), warnings)


def grid_oracle(grid=None, depth: int = DEFAULT_DEPTH, jobs: int = 1) -> dict:
    """Sign of g on a grid; the bisection answer must fall in the single bracket."""
    grid = grid if grid is not None else [round(0.62 + 0.02 * i, 2) for i in range(19)]
    rows = lambda_scan(grid, depth, jobs)
    signs = []
    for row in rows:
        r2 = row["r"] ** 2
        signs.append(1 if row["lambda_low"] > r2 else (-1 if row["lambda_high"] < r2 else 0))
    changes = [(rows[i]["r"], rows[i + 1]["r"]) for i in range(len(rows) - 1)
               if signs[i] != signs[i + 1]]
    return {"rows": rows, "signs": signs, "brackets": changes}


# --------------------------------------------------------------------------
# harmonic values and uniqueness

@dataclass
class HarmonicValues:
    hs: tuple            # (F1 q0, F2 q0) for data (0, 1, 1)
    ha: tuple            # (F1 q0, F2 q0) for data (0, 1, -1)
    hs_interval: tuple   # lower-model and upper-model values of hs(F1 q0)

    @property
    def hs_value(self) -> float:
        return self.hs[0]

    @property
    def ha_value(self) -> float:
        return self.ha[0]


def _harmonic5(k5, u):
    ib, ii = [0, 1, 2], [3, 4]
    rhs = -k5[np.ix_(ii, ib)] @ np.asarray(u, float)
    return np.linalg.solve(k5[np.ix_(ii, ii)], rhs)


def harmonic_values(r: float, form: FormV0, depth: int = DEFAULT_DEPTH,
                    renormalizer: Renormalizer | None = None) -> HarmonicValues:
    """Values at F1 q0 and F2 q0 of the harmonic extensions of h_s and h_a data."""
    rn = renormalizer or Renormalizer(depth)
    lo5 = rn.reduced5(form, r, False)
    up5 = rn.reduced5(form, r, True)
    hs_lo = _harmonic5(lo5, PROBES["hs"])
    hs_up = _harmonic5(up5, PROBES["hs"])
    ha = 0.5 * (_harmonic5(lo5, PROBES["ha"]) + _harmonic5(up5, PROBES["ha"]))
    hs = 0.5 * (hs_lo + hs_up)
    return HarmonicValues((float(hs[0]), float(hs[1])), (float(ha[0]), float(ha[1])),
                          (float(min(hs_lo[0], hs_up[0])), float(max(hs_lo[0], hs_up[0]))))


def cut_fixed_point(r: float, depth: int, chain_depth: int, tol: float = 1e-13
                    ) -> tuple[float, float]:
    """(a, lambda) for T o (cut trace) at r: the finite analogue of fixed_point."""
    def resid(a):
        form, _ = cut_trace(FormV0.symmetric(a), r, depth, chain_depth)
        return normalize_general(form.as_array())[:2].mean() - a
    a = _scalar_root(resid, None, tol)
    form, _ = cut_trace(FormV0.symmetric(a), r, depth, chain_depth)
    return a, 0.5 * (form.a01 + form.a02) / a


@dataclass(frozen=True)
class CutFixedPoint:
    """Exponent and form at which the cut network renormalizes exactly."""
    r: float
    theta: float
    a: float
    depth: int
    chain_depth: int

    @property
    def form(self) -> FormV0:
        return FormV0.symmetric(self.a)


@lru_cache(maxsize=8)
def cut_r_star(depth: int, chain_depth: int, tol: float = 1e-13) -> CutFixedPoint:
    """Solve lambda_cut(r) = r**2 for the truncated network of the given size.

    Level networks built from this truncation then refine each other with
    no energy loss at all, which is what the finite-level checks rely on.
    """
    def g(r):
        return cut_fixed_point(r, depth, chain_depth)[1] - r * r
    r = brentq(g, RHO + 0.02, 0.98, xtol=tol, rtol=4 * np.finfo(float).eps)
    a, _ = cut_fixed_point(r, depth, chain_depth)
    return CutFixedPoint(r, math.log(r) / math.log(RHO), a, depth, chain_depth)


def harmonic_values_cut(r: float, form: FormV0, depth: int, chain_depth: int):
    """The same values read off the explicit truncated network."""
    from .network import harmonic_extend
    net = cut_network(form, r, depth, chain_depth)
    sk = net.skeleton
    f1 = sk.vertex_id(_f_point("1"))
    f2 = sk.vertex_id(_f_point("2"))
    out = []
    for u in (PROBES["hs"], PROBES["ha"]):
        h = harmonic_extend(net, dict(zip(sk.boundary_ids, u)))
        out.append((float(h[f1]), float(h[f2])))
    return out


def _f_point(letter):
    from .wordspace import _CORNER, _apply, _word_tuple
    return _apply(_word_tuple(letter), _CORNER[0])


@dataclass
class UniquenessReport:
    limits: list
    max_deviation: float
    max_asymmetry: float
    iterations: list
    converged: list


def uniqueness_probe(r: float, seeds: int, tol: float = 1e-10, depth: int = 12,
                     seed: int = 0, max_iter: int = 400) -> UniquenessReport:
    """Iterate D -> normalize(mid R_r D) from random forms and compare the limits."""
    check_r(r)
    rng = np.random.default_rng(seed)
    starts = np.exp(rng.uniform(math.log(1e-2), math.log(1e2), size=(seeds, 3)))
    limits, iters, conv = [], [], []
    for s in starts:
        rn = Renormalizer(depth)
        c = normalize_general(s)
        ok = False
        for it in range(1, max_iter + 1):
            lo, up = rn.bounds(FormV0(*c), r)
            nxt = normalize_general(0.5 * (_coeffs(lo) + _coeffs(up)))
            step = np.abs(nxt - c).max()
            c = nxt
            if step < tol:
                ok = True
                break
        limits.append(c)
        iters.append(it)
        conv.append(ok)
        if not ok:
            log.warning("uniqueness seed %s did not converge (last step %.3g)", s, step)
    lim = np.array(limits)
    dev = 0.0
    for i in range(len(lim)):
        for j in range(i + 1, len(lim)):
            dev = max(dev, float(np.abs(lim[i] - lim[j]).max()))
    asym = float(max((abs(c[0] - c[1]) / c[0] for c in lim), default=0.0))
    return UniquenessReport([tuple(map(float, c)) for c in lim], dev, asym, iters, conv)
