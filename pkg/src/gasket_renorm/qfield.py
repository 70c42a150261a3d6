"""Exact arithmetic in Q(rho), rho = (sqrt5 - 1)/2, and exact planar points.

Elements are stored as (num_a + num_b*rho)/den with integer numerators.
Geometry only ever needs den in {1, 2}, but inverses can produce other
denominators, so any positive den is accepted and reduced by gcd.

Numerators are kept inside the signed 64-bit range and an OverflowError is
raised instead of silently widening, mirroring a fixed-width implementation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

RHO = (math.sqrt(5.0) - 1.0) / 2.0
INT64_MAX = 2**63 - 1
DEPTH_CAP = 60


def _check(*values: int) -> None:
    for v in values:
        if v > INT64_MAX or v < -INT64_MAX - 1:
            raise OverflowError(f"coefficient {v} leaves the 64-bit range")


def _sign_sqrt5(p: int, q: int) -> int:
    """Exact sign of p + q*sqrt5 for integers p, q."""
    if q == 0:
        return (p > 0) - (p < 0)
    if p == 0:
        return (q > 0) - (q < 0)
    if (p > 0) == (q > 0):
        return 1 if p > 0 else -1
    # opposite signs: whichever magnitude wins decides
    lhs, rhs = p * p, 5 * q * q
    if lhs == rhs:
        return 0  # impossible for integers, sqrt5 is irrational
    return (1 if p > 0 else -1) if lhs > rhs else (1 if q > 0 else -1)


@dataclass(frozen=True, order=False)
class GoldenRational:
    num_a: int
    num_b: int
    den: int = 1

    def __post_init__(self):
        a, b, d = int(self.num_a), int(self.num_b), int(self.den)
        if d == 0:
            raise ZeroDivisionError("zero denominator")
        if d < 0:
            a, b, d = -a, -b, -d
        g = math.gcd(math.gcd(a, b), d)
        if g > 1:
            a, b, d = a // g, b // g, d // g
        _check(a, b, d)
        object.__setattr__(self, "num_a", a)
        object.__setattr__(self, "num_b", b)
        object.__setattr__(self, "den", d)

    @classmethod
    def of(cls, value) -> "GoldenRational":
        if isinstance(value, GoldenRational):
            return value
        if isinstance(value, int):
            return cls(value, 0, 1)
        raise TypeError(f"cannot convert {value!r}")

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        o = GoldenRational.of(other)
        d = self.den * o.den // math.gcd(self.den, o.den)
        fs, fo = d // self.den, d // o.den
        return GoldenRational(self.num_a * fs + o.num_a * fo, self.num_b * fs + o.num_b * fo, d)

    __radd__ = __add__

    def __neg__(self):
        return GoldenRational(-self.num_a, -self.num_b, self.den)

    def __sub__(self, other):
        return self + (-GoldenRational.of(other))

    def __rsub__(self, other):
        return GoldenRational.of(other) - self

    def __mul__(self, other):
        return qr_mul(self, GoldenRational.of(other))

    __rmul__ = __mul__

    def conjugate(self) -> "GoldenRational":
        # rho -> -1 - rho under the nontrivial automorphism
        return GoldenRational(self.num_a - self.num_b, -self.num_b, self.den)

    def norm_numerator(self) -> int:
        a, b = self.num_a, self.num_b
        return a * a - a * b - b * b

    def inverse(self) -> "GoldenRational":
        n = self.norm_numerator()
        if n == 0:
            raise ZeroDivisionError("inverse of zero")
        c = self.conjugate()
        # (a+b rho)/d inverse = d * conj / N
        return GoldenRational(c.num_a * self.den, c.num_b * self.den, n)

    def __truediv__(self, other):
        return self * GoldenRational.of(other).inverse()

    def sign(self) -> int:
        # (a + b rho) = (2a - b + b sqrt5)/2 and den > 0
        return _sign_sqrt5(2 * self.num_a - self.num_b, self.num_b)

    def __float__(self):
        return (self.num_a + self.num_b * RHO) / self.den

    def __lt__(self, other):
        return qr_compare(self, GoldenRational.of(other)) < 0

    def __le__(self, other):
        return qr_compare(self, GoldenRational.of(other)) <= 0

    def __gt__(self, other):
        return qr_compare(self, GoldenRational.of(other)) > 0

    def __ge__(self, other):
        return qr_compare(self, GoldenRational.of(other)) >= 0

    def __repr__(self):
        return f"GoldenRational({self.num_a}, {self.num_b}, {self.den})"


ZERO = GoldenRational(0, 0, 1)
ONE = GoldenRational(1, 0, 1)
HALF = GoldenRational(1, 0, 2)
GOLD = GoldenRational(0, 1, 1)          # rho
GOLD_SQ = GoldenRational(1, -1, 1)      # rho^2 = 1 - rho
GOLD_INV = GoldenRational(1, 1, 1)      # 1/rho = 1 + rho


def qr_mul(u: GoldenRational, v: GoldenRational) -> GoldenRational:
    """Product reduced with rho^2 = 1 - rho."""
    a, b, c, d = u.num_a, u.num_b, v.num_a, v.num_b
    bd = b * d
    return GoldenRational(a * c + bd, a * d + b * c - bd, u.den * v.den)


def qr_compare(u: GoldenRational, v: GoldenRational) -> int:
    """-1, 0 or 1 as u <, =, > v in the real embedding."""
    return (u - v).sign()


def gold_power(k: int) -> GoldenRational:
    """rho**k for any integer k."""
    base = GOLD if k >= 0 else GOLD_INV
    out = ONE
    for _ in range(abs(k)):
        out = out * base
    return out


@dataclass(frozen=True)
class ExactPoint:
    """The point (x, y_over_sqrt3 * sqrt3)."""
    x: GoldenRational
    y_over_sqrt3: GoldenRational

    def __add__(self, other: "ExactPoint") -> "ExactPoint":
        return ExactPoint(self.x + other.x, self.y_over_sqrt3 + other.y_over_sqrt3)

    def __sub__(self, other: "ExactPoint") -> "ExactPoint":
        return ExactPoint(self.x - other.x, self.y_over_sqrt3 - other.y_over_sqrt3)

    def scale(self, c: GoldenRational) -> "ExactPoint":
        return ExactPoint(self.x * c, self.y_over_sqrt3 * c)

    def to_float(self) -> tuple[float, float]:
        return float(self.x), float(self.y_over_sqrt3) * math.sqrt(3.0)

    def key(self) -> tuple:
        return (self.x.num_a, self.x.num_b, self.x.den,
                self.y_over_sqrt3.num_a, self.y_over_sqrt3.num_b, self.y_over_sqrt3.den)


Q0 = ExactPoint(HALF, HALF)
Q1 = ExactPoint(ZERO, ZERO)
Q2 = ExactPoint(ONE, ZERO)
CORNERS = (Q0, Q1, Q2)


@dataclass(frozen=True)
class CellMap:
    """p -> rho**scale_exp * p + translation."""
    scale_exp: int
    translation: ExactPoint

    def __post_init__(self):
        if self.scale_exp < 0:
            raise ValueError("negative scale exponent")
        if self.scale_exp > 2 * DEPTH_CAP:
            raise OverflowError(f"scale exponent {self.scale_exp} exceeds the depth cap")

    def compose(self, inner: "CellMap") -> "CellMap":
        """self o inner."""
        t = inner.translation.scale(gold_power(self.scale_exp)) + self.translation
        return CellMap(self.scale_exp + inner.scale_exp, t)

    def pullback(self, outer: "CellMap") -> "CellMap | None":
        """The map m with outer o m == self, or None if the scales do not allow it."""
        k = self.scale_exp - outer.scale_exp
        if k < 0:
            return None
        t = (self.translation - outer.translation).scale(gold_power(-outer.scale_exp))
        return CellMap(k, t)

    @property
    def ratio(self) -> float:
        return RHO ** self.scale_exp

    def key(self) -> tuple:
        return (self.scale_exp,) + self.translation.key()


IDENTITY = CellMap(0, Q1)
# F0 = rho^2 x + rho q0, F1 = rho x, F2 = rho x + rho^2 q2
BASE_MAPS = (
    CellMap(2, Q0.scale(GOLD)),
    CellMap(1, Q1),
    CellMap(1, Q2.scale(GOLD_SQ)),
)


def point_apply(cell_map: CellMap, p: ExactPoint) -> ExactPoint:
    return p.scale(gold_power(cell_map.scale_exp)) + cell_map.translation


def word_map(word) -> CellMap:
    """F_w = F_{w1} o ... o F_{wn} for a word over {0,1,2}."""
    letters = [int(c) for c in word]
    if len(letters) > DEPTH_CAP:
        raise OverflowError(f"word length {len(letters)} exceeds the depth cap {DEPTH_CAP}")
    m = IDENTITY
    for c in letters:
        m = m.compose(BASE_MAPS[c])
    return m


def gold_power_coeffs(k: int) -> tuple[int, int]:
    """(p, q) with rho**k = p + q*rho."""
    g = gold_power(k)
    assert g.den == 1
    return g.num_a, g.num_b
