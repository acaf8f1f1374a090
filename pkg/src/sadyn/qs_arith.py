"""Arithmetic over Q_S, the product of the completions Q_v for v in a finite set S.

Archimedean components are plain floats. Ultrametric components are
:class:`PadicScalar` values with an explicit valuation and a fixed relative
precision; rational inputs are carried exactly and only fall back to digit
arithmetic when an operand is already inexact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import PrecisionLoss

DEFAULT_PRECISION = 32


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    k = 3
    while k * k <= n:
        if n % k == 0:
            return False
        k += 2
    return True


@dataclass(frozen=True, order=True)
class Place:
    """A place of Q: ``p=None`` is the archimedean place, otherwise the prime p."""

    p: int | None = None

    def __post_init__(self):
        if self.p is not None and not is_prime(self.p):
            raise ValueError(f"ultrametric place needs a prime, got {self.p}")

    @classmethod
    def inf(cls) -> "Place":
        return cls(None)

    @classmethod
    def parse(cls, text: str | int) -> "Place":
        s = str(text).strip().lower()
        if s in ("inf", "oo", "infinity", "r", "real"):
            return cls(None)
        return cls(int(s))

    @property
    def is_archimedean(self) -> bool:
        return self.p is None

    @property
    def kind(self) -> str:
        return "archimedean" if self.p is None else "ultrametric"

    def __str__(self):
        return "inf" if self.p is None else str(self.p)

    def __repr__(self):
        return f"Place({self})"


INF = Place.inf()


def parse_places(spec: str | Iterable) -> tuple[Place, ...]:
    if isinstance(spec, str):
        spec = [s for s in spec.replace("{", "").replace("}", "").split(",") if s.strip()]
    places = tuple(p if isinstance(p, Place) else Place.parse(p) for p in spec)
    if len(set(places)) != len(places):
        raise ValueError("places in S must be distinct")
    return places


def valuation(q, p: int) -> float | int:
    """p-adic valuation of a rational; ``math.inf`` for zero."""
    q = Fraction(q)
    if q == 0:
        return math.inf
    v = 0
    num, den = q.numerator, q.denominator
    while num % p == 0:
        num //= p
        v += 1
    while den % p == 0:
        den //= p
        v -= 1
    return v


def padic_abs(q, p: int) -> Fraction:
    """Exact |q|_p for a rational q, normalised so that |p|_p = 1/p."""
    v = valuation(q, p)
    if v == math.inf:
        return Fraction(0)
    return Fraction(p) ** (-v)


def _unit_part(q: Fraction, p: int) -> tuple[int, Fraction]:
    v = valuation(q, p)
    return v, q / Fraction(p) ** v


def _unit_residue(u: Fraction, p: int, n: int) -> int:
    mod = p**n
    return (u.numerator * pow(u.denominator, -1, mod)) % mod


class PadicScalar:
    """An element of Q_p.

    Stored as ``p**valuation * unit`` with ``unit`` a p-adic unit known modulo
    ``p**precision``. Values built from rationals keep the rational in
    ``exact`` and stay exact under ring operations with other exact values.
    An inexact zero (total cancellation) keeps only its absolute precision;
    asking for its absolute value raises :class:`PrecisionLoss`.
    """

    __slots__ = ("prime", "valuation", "_unit", "precision", "exact", "abs_precision")

    def __init__(self, prime, valuation, unit, precision=DEFAULT_PRECISION, exact=None,
                 abs_precision=None):
        self.prime = prime
        self.valuation = valuation
        self._unit = unit
        self.precision = precision
        self.exact = exact
        self.abs_precision = abs_precision

    @classmethod
    def from_rational(cls, q, p: int, precision: int = DEFAULT_PRECISION) -> "PadicScalar":
        q = Fraction(q)
        if q == 0:
            return cls(p, math.inf, 0, precision, exact=Fraction(0))
        v, u = _unit_part(q, p)
        return cls(p, v, _unit_residue(u, p, precision), precision, exact=q)

    @classmethod
    def from_digits(cls, p: int, valuation: int, digits: Sequence[int]) -> "PadicScalar":
        """Inexact value ``p**valuation * sum(d_i p**i)``; digits least significant first."""
        if not digits or digits[0] % p == 0:
            raise ValueError("leading unit digit must be nonzero")
        unit = sum(int(d) * p**i for i, d in enumerate(digits))
        return cls(p, valuation, unit, len(digits))

    @classmethod
    def zero(cls, p: int, precision: int = DEFAULT_PRECISION) -> "PadicScalar":
        return cls.from_rational(0, p, precision)

    # -- inspection -------------------------------------------------------
    @property
    def is_exact(self) -> bool:
        return self.exact is not None

    @property
    def is_zero(self) -> bool:
        return self.valuation == math.inf

    @property
    def unit(self) -> int:
        return self._unit

    @property
    def unit_digits(self) -> tuple[int, ...]:
        if self.is_zero:
            return ()
        u, out = self._unit, []
        for _ in range(self.precision):
            u, r = divmod(u, self.prime)
            out.append(r)
        return tuple(out)

    def __abs__(self) -> float:
        if self.is_zero:
            if self.exact is None:
                raise PrecisionLoss(
                    f"value is O({self.prime}^{self.abs_precision}); indistinguishable from 0")
            return 0.0
        return float(Fraction(self.prime) ** (-self.valuation))

    def to_fraction(self) -> Fraction:
        if self.exact is not None:
            return self.exact
        if self.is_zero:
            return Fraction(0)
        return Fraction(self._unit) * Fraction(self.prime) ** self.valuation

    # -- arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "PadicScalar":
        if isinstance(other, PadicScalar):
            if other.prime != self.prime:
                raise ValueError("cannot mix different primes")
            return other
        if isinstance(other, (int, Rational)):
            return PadicScalar.from_rational(other, self.prime, self.precision)
        return NotImplemented

    def _abs_prec(self):
        if self.exact is not None:
            return math.inf
        if self.is_zero:
            return self.abs_precision
        return self.valuation + self.precision

    def _residue(self, shift: int, n: int) -> int:
        """``self / p**shift`` modulo ``p**n`` (requires valuation >= shift)."""
        if self.is_zero:
            return 0
        mod = self.prime**n
        if self.exact is not None:
            return _unit_residue(self.exact / Fraction(self.prime) ** shift, self.prime, n)
        return (self._unit * self.prime ** (self.valuation - shift)) % mod

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        p = self.prime
        prec = min(self.precision, other.precision)
        if self.exact is not None and other.exact is not None:
            return PadicScalar.from_rational(self.exact + other.exact, p, prec)
        ap = min(self._abs_prec(), other._abs_prec())
        vmin = min(self.valuation, other.valuation)
        if vmin == math.inf or vmin >= ap:
            return PadicScalar(p, math.inf, 0, prec, abs_precision=ap)
        n = ap - vmin
        s = (self._residue(vmin, n) + other._residue(vmin, n)) % p**n
        if s == 0:
            return PadicScalar(p, math.inf, 0, prec, abs_precision=ap)
        k = 0
        while s % p == 0:
            s //= p
            k += 1
        return PadicScalar(p, vmin + k, s, n - k)

    __radd__ = __add__

    def __neg__(self):
        if self.exact is not None:
            return PadicScalar.from_rational(-self.exact, self.prime, self.precision)
        if self.is_zero:
            return self
        mod = self.prime**self.precision
        return PadicScalar(self.prime, self.valuation, (-self._unit) % mod, self.precision)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        p = self.prime
        prec = min(self.precision, other.precision)
        if self.exact is not None and other.exact is not None:
            return PadicScalar.from_rational(self.exact * other.exact, p, prec)
        for a, b in ((self, other), (other, self)):
            if a.is_zero:
                if a.exact is not None:
                    return PadicScalar.zero(p, prec)
                return PadicScalar(p, math.inf, 0, prec,
                                   abs_precision=a.abs_precision + b.valuation)
        rel = min(x.precision for x in (self, other) if x.exact is None)
        mod = p**rel
        u = (self._residue(self.valuation, rel) * other._residue(other.valuation, rel)) % mod
        return PadicScalar(p, self.valuation + other.valuation, u, rel)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if other.is_zero:
            if other.exact is not None:
                raise ZeroDivisionError("division by zero in Q_p")
            raise PrecisionLoss("divisor is indistinguishable from 0")
        p = self.prime
        if self.exact is not None and other.exact is not None:
            return PadicScalar.from_rational(self.exact / other.exact, p,
                                             min(self.precision, other.precision))
        if self.is_zero:
            if self.exact is not None:
                return PadicScalar.zero(p, self.precision)
            return PadicScalar(p, math.inf, 0, self.precision,
                               abs_precision=self.abs_precision - other.valuation)
        rel = min(x.precision for x in (self, other) if x.exact is None)
        mod = p**rel
        inv = pow(other._residue(other.valuation, rel), -1, mod)
        u = (self._residue(self.valuation, rel) * inv) % mod
        return PadicScalar(p, self.valuation - other.valuation, u, rel)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __eq__(self, other):
        other = self._coerce(other) if not isinstance(other, PadicScalar) else other
        if other is NotImplemented:
            return NotImplemented
        if self.exact is not None and other.exact is not None:
            return self.exact == other.exact
        diff = self - other
        return diff.is_zero

    def __hash__(self):
        return hash((self.prime, self.to_fraction()))

    def __repr__(self):
        if self.exact is not None:
            return f"PadicScalar({self.exact}, p={self.prime})"
        if self.is_zero:
            return f"PadicScalar(O({self.prime}^{self.abs_precision}))"
        return (f"PadicScalar(p={self.prime}, v={self.valuation}, "
                f"digits={self.unit_digits}, prec={self.precision})")


def _component(q, place: Place, precision: int):
    if place.is_archimedean:
        return float(q)
    return PadicScalar.from_rational(q, place.p, precision)


class QSScalar:
    """A number in Q_S: one component per place, in the order of S."""

    __slots__ = ("places", "values")

    def __init__(self, components: Mapping[Place, object]):
        self.places = tuple(components)
        self.values = tuple(components[v] for v in self.places)
        for v, x in zip(self.places, self.values):
            if v.is_archimedean and isinstance(x, PadicScalar):
                raise TypeError("archimedean component must be real")
            if not v.is_archimedean and not isinstance(x, PadicScalar):
                raise TypeError(f"component at {v} must be a PadicScalar")

    @classmethod
    def from_rational(cls, q, places: Sequence[Place], precision: int = DEFAULT_PRECISION):
        return cls({v: _component(q, v, precision) for v in places})

    def __getitem__(self, place: Place):
        return self.values[self.places.index(place)]

    def __repr__(self):
        inner = ", ".join(f"{v}: {x!r}" for v, x in zip(self.places, self.values))
        return f"QSScalar({{{inner}}})"


class QSVector:
    """A vector in Q_S^m stored per place as tuples of length m."""

    __slots__ = ("places", "blocks", "dim")

    def __init__(self, blocks: Mapping[Place, Sequence]):
        self.places = tuple(blocks)
        self.blocks = {v: tuple(blocks[v]) for v in self.places}
        dims = {len(b) for b in self.blocks.values()}
        if len(dims) != 1:
            raise ValueError("all places must carry the same number of coordinates")
        self.dim = dims.pop()
        if self.dim == 0:
            raise ValueError("empty vector")

    @classmethod
    def from_rationals(cls, coords: Sequence, places: Sequence[Place],
                       precision: int = DEFAULT_PRECISION):
        return cls({v: [_component(q, v, precision) for q in coords] for v in places})

    @classmethod
    def from_scalars(cls, entries: Sequence[QSScalar]):
        places = entries[0].places
        if any(e.places != places for e in entries):
            raise ValueError("entries must share the same S")
        return cls({v: [e[v] for e in entries] for v in places})

    def entries(self) -> list[QSScalar]:
        return [QSScalar({v: self.blocks[v][i] for v in self.places}) for i in range(self.dim)]

    def __repr__(self):
        return f"QSVector({self.blocks!r})"


def place_abs(x, v: Place) -> float:
    """|x|_v for a QSScalar (or a bare component living at v)."""
    comp = x[v] if isinstance(x, QSScalar) else x
    if v.is_archimedean:
        return abs(float(comp))
    if isinstance(comp, PadicScalar):
        return abs(comp)
    return float(padic_abs(comp, v.p))


def place_norm(coords: Sequence, v: Place, archimedean: str = "sup") -> float:
    if v.is_archimedean:
        vals = [abs(float(c)) for c in coords]
        if archimedean == "euclidean":
            return math.sqrt(sum(c * c for c in vals))
        if archimedean != "sup":
            raise ValueError(f"unknown archimedean norm {archimedean!r}")
        return max(vals)
    return max(place_abs(c, v) for c in coords)


def vector_norm(x: QSVector, mode: str = "max", archimedean: str = "sup") -> float:
    """Max-over-places norm (``mode='max'``) or product-over-places content norm."""
    norms = [place_norm(x.blocks[v], v, archimedean) for v in x.places]
    if mode == "max":
        return max(norms)
    if mode == "content":
        out = 1.0
        for n in norms:
            out *= n
        return out
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class BallQS:
    """Closed ball for the max-over-places sup metric on prod_v Q_v^{d_v}."""

    center: Mapping[Place, tuple]
    radius: float
    dims: Mapping[Place, int] = field(default=None)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.dims is None:
            object.__setattr__(self, "dims", {v: len(c) for v, c in self.center.items()})

    @property
    def places(self) -> tuple[Place, ...]:
        return tuple(self.dims)

    @property
    def quantized(self) -> bool:
        """True when every factor is ultrametric over one prime (radii live in p^Z)."""
        primes = {v.p for v in self.dims if self.dims[v] > 0}
        return None not in primes and len(primes) == 1

    def effective_radius(self, v: Place) -> float:
        if v.is_archimedean:
            return self.radius
        return float(Fraction(v.p) ** _floor_log(self.radius, v.p))

    def contains(self, point: Mapping[Place, Sequence]) -> bool:
        for v, d in self.dims.items():
            if d == 0:
                continue
            diff = [a - b for a, b in zip(point[v], self.center[v])]
            if place_norm(diff, v) > self.effective_radius(v) * (1 + 1e-12):
                return False
        return True


def _floor_log(r: float, p: int) -> int:
    """Largest k with p**k <= r, robust to float rounding at exact powers."""
    k = math.floor(math.log(r, p))
    while p ** (k + 1) <= r * (1 + 1e-12):
        k += 1
    while p**k > r * (1 + 1e-12):
        k -= 1
    return k


def _ceil_log(r: float, p: int) -> int:
    k = _floor_log(r, p)
    return k if abs(p**k - r) <= 1e-12 * r else k + 1


class Doubling(NamedTuple):
    volume: float
    c_d: float
    certificate: str


def ball_volume_and_doubling(B: BallQS) -> Doubling:
    """Product Haar volume of B and the doubling constant of the ambient space.

    Lebesgue measure at the archimedean place, ``lambda_p(Z_p) = 1`` at p.
    The doubling constant is the closed-form sup over all balls of
    lambda(3B)/lambda(B), multiplied across factors.
    """
    volume = 1.0
    c_d = 1.0
    parts = []
    for v, d in B.dims.items():
        if d == 0:
            continue
        if v.is_archimedean:
            volume *= (2.0 * B.radius) ** d
            c_d *= 3.0**d
            parts.append(f"inf^{d}: 3^{d}")
        else:
            volume *= B.effective_radius(v) ** d
            if B.quantized:
                jump = _floor_log(3.0, v.p)
                tag = "radii in p^Z"
            else:
                jump = _ceil_log(3.0, v.p)
                tag = "radii unconstrained"
            c_d *= float(v.p ** (jump * d))
            parts.append(f"Q_{v.p}^{d} ({tag}): {v.p}^{jump * d}")
    return Doubling(volume, c_d, "; ".join(parts) if parts else "empty space")
