"""Z_S-lattices in Q_S^m: short vectors, covolume, systole, Mahler diagnostics,
and the strong-approximation splitting of SL(2, Q_p).

A lattice is ``Z_S^m . g`` (row convention) with one m x m block of g per
place. Blocks at ultrametric places are exact Fraction arrays; the
archimedean block is a float array, plus an exact copy when g is rational.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from numbers import Rational
from typing import NamedTuple, Sequence

import numpy as np

from . import linalg
from .errors import ExplosionGuard, NoDecomposition, NotRational
from .qs_arith import INF, Place, padic_abs, parse_places, valuation

DEFAULT_BUDGET = 2_000_000


@dataclass
class ZSLattice:
    places: tuple[Place, ...]
    blocks: dict
    rational: np.ndarray | None = None
    archimedean: str = "euclidean"
    m: int = field(init=False)

    def __post_init__(self):
        if INF not in self.places:
            raise ValueError("S must contain the archimedean place for Z_S^m to be discrete")
        shapes = {np.shape(b) for b in self.blocks.values()}
        if len(shapes) != 1:
            raise ValueError("blocks must share a shape")
        m, m2 = shapes.pop()
        if m != m2:
            raise ValueError("basis matrix must be square")
        self.m = m
        for v in self.places:
            d = linalg.det(self.blocks[v])
            if d == 0:
                raise ValueError(f"basis block at {v} is singular")

    @classmethod
    def from_rational(cls, g, places: Sequence = (INF,), archimedean: str = "euclidean"):
        places = parse_places(places) if not isinstance(places, tuple) or not all(
            isinstance(p, Place) for p in places) else places
        G = linalg.exact(_require_rational(g))
        blocks = {v: (G.astype(float) if v.is_archimedean else G.copy()) for v in places}
        return cls(places, blocks, rational=G, archimedean=archimedean)

    @classmethod
    def real(cls, g, archimedean: str = "euclidean"):
        return cls((INF,), {INF: np.asarray(g, dtype=float)}, archimedean=archimedean)

    @property
    def primes(self) -> list[int]:
        return [v.p for v in self.places if not v.is_archimedean]

    def left_translate(self, gamma) -> "ZSLattice":
        """The lattice with basis ``gamma . g`` (gamma an integral unimodular matrix)."""
        G = linalg.exact(gamma)
        blocks = {}
        for v in self.places:
            b = self.blocks[v]
            blocks[v] = G.astype(float) @ b if v.is_archimedean else G.dot(b)
        rational = G.dot(self.rational) if self.rational is not None else None
        return ZSLattice(self.places, blocks, rational, self.archimedean)

    def image(self, coeffs) -> dict:
        c = [Fraction(x) for x in coeffs]
        out = {}
        for v in self.places:
            if v.is_archimedean:
                if self.rational is not None:
                    out[v] = np.array(c, dtype=object).dot(self.rational)
                else:
                    out[v] = np.array([float(x) for x in c]) @ self.blocks[v]
            else:
                out[v] = np.array(c, dtype=object).dot(self.blocks[v])
        return out

    def content(self, image: dict) -> tuple[float, Fraction | None]:
        """Content norm of a lattice vector, with its exact square when available."""
        sq = Fraction(1)
        total = 1.0
        exact_ok = True
        for v in self.places:
            x = image[v]
            if v.is_archimedean:
                if x.dtype == object:
                    if self.archimedean == "euclidean":
                        s = sum((xi * xi for xi in x), Fraction(0))
                    else:
                        s = max(abs(xi) for xi in x) ** 2
                    sq *= s
                    total *= math.sqrt(s)
                else:
                    exact_ok = False
                    xf = np.asarray(x, dtype=float)
                    total *= float(np.linalg.norm(xf) if self.archimedean == "euclidean"
                                   else np.abs(xf).max())
            else:
                n = max(padic_abs(xi, v.p) for xi in x)
                sq *= n * n
                total *= float(n)
        return total, (sq if exact_ok else None)


def _require_rational(g):
    A = np.asarray(g, dtype=object)
    for x in A.flat:
        if isinstance(x, bool) or not isinstance(x, (int, Rational)):
            if isinstance(x, str):
                continue
            raise NotRational(f"entry {x!r} is not an exact rational")
    out = np.empty(A.shape, dtype=object)
    for idx, x in np.ndenumerate(A):
        out[idx] = Fraction(x)
    return out


class ShortVector(NamedTuple):
    coeffs: tuple
    image: dict
    content: float
    content_sq: Fraction | None


@dataclass
class ShortVectorSet:
    """Primitive lattice vectors of content norm <= bound.

    For S != {inf} vectors are listed up to multiplication by p-power units
    (each ultrametric component normalised to norm 1); signs are kept.
    """

    bound: float
    vectors: list[ShortVector]
    complete: bool
    coefficient_bound: float

    def __len__(self):
        return len(self.vectors)


def _coefficient_certificate(L: ZSLattice, bound: float) -> tuple[int, float]:
    """(common denominator D, numerator bound N): every primitive normalised
    coefficient row of content <= bound is n/D with integer |n_i| <= N."""
    D = 1
    for v in L.places:
        if v.is_archimedean:
            continue
        ginv = linalg.inv(L.blocks[v])
        e = max(-valuation(x, v.p) for x in ginv.flat if x != 0)
        D *= v.p ** max(e, 0)
    ginv_inf = np.linalg.inv(np.asarray(L.blocks[INF], dtype=float))
    if L.archimedean == "euclidean":
        op = float(np.linalg.norm(ginv_inf, 2))
    else:
        op = float(np.abs(ginv_inf).sum(axis=0).max())
    return D, D * bound * op


def _normalise(c: list[Fraction], L: ZSLattice):
    """Scale by a unit of Z_S so each ultrametric image component has norm 1."""
    img = L.image(c)
    scale = Fraction(1)
    for v in L.places:
        if v.is_archimedean:
            continue
        vmin = min(valuation(x, v.p) for x in img[v])
        scale *= Fraction(v.p) ** vmin
    if scale != 1:
        c = [x * scale for x in c]
        img = L.image(c)
    return tuple(c), img


def _is_primitive(n: Sequence[int], primes: Sequence[int]) -> bool:
    g = reduce(math.gcd, (abs(int(x)) for x in n))
    for p in primes:
        while g % p == 0 and g:
            g //= p
    return g == 1


def short_vectors(L: ZSLattice, bound: float, height_cap: int = 20,
                  budget: int = DEFAULT_BUDGET) -> ShortVectorSet:
    if not bound > 0:
        raise ValueError("bound must be positive")
    D, N_cert = _coefficient_certificate(L, bound)
    exp_cap = {p: math.ceil(math.log(max(height_cap, 2), p)) for p in L.primes}
    exp_ok = all(valuation(D, p) <= exp_cap[p] for p in L.primes)
    N = min(height_cap, math.floor(N_cert + 1e-9))
    complete = N_cert <= height_cap + 1e-9 and exp_ok
    count = (2 * N + 1) ** L.m
    if count > budget:
        raise ExplosionGuard(f"{count} candidates exceed budget {budget}")
    primes = L.primes
    tol = 1 + 1e-12
    found = {}
    if not primes:
        rng = np.arange(-N, N + 1)
        grid = np.array(list(itertools.product(rng, repeat=L.m)), dtype=float).reshape(-1, L.m)
        X = grid @ np.asarray(L.blocks[INF], dtype=float)
        norms = (np.linalg.norm(X, axis=1) if L.archimedean == "euclidean"
                 else np.abs(X).max(axis=1))
        for idx in np.nonzero((norms <= bound * tol) & (np.abs(grid).sum(axis=1) > 0))[0]:
            n = tuple(int(x) for x in grid[idx])
            if not _is_primitive(n, primes):
                continue
            c = tuple(Fraction(x) for x in n)
            img = L.image(c)
            content, sq = L.content(img)
            if content <= bound * tol:
                found[c] = ShortVector(c, img, content, sq)
    else:
        for n in itertools.product(range(-N, N + 1), repeat=L.m):
            if not any(n) or not _is_primitive(n, primes):
                continue
            c, img = _normalise([Fraction(x, D) for x in n], L)
            if c in found:
                continue
            content, sq = L.content(img)
            if content <= bound * tol:
                found[c] = ShortVector(c, img, content, sq)
    vectors = sorted(found.values(), key=lambda s: (s.content, s.coeffs))
    return ShortVectorSet(bound, vectors, complete, N_cert)


class LatticeInvariants(NamedTuple):
    covolume: float | Fraction
    systole: float | Fraction
    systole_sq: Fraction | None
    exact: bool


def covolume(L: ZSLattice):
    """Content norm of det(g); exact Fraction for rational lattices."""
    if L.rational is not None:
        d = linalg.det(L.rational)
        out = abs(d)
        for p in L.primes:
            out *= padic_abs(d, p)
        return out
    out = abs(linalg.det(L.blocks[INF]))
    for v in L.places:
        if not v.is_archimedean:
            out *= float(padic_abs(linalg.det(L.blocks[v]), v.p))
    return out


def _exact_sqrt(q: Fraction) -> Fraction | None:
    a, b = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if a * a == q.numerator and b * b == q.denominator:
        return Fraction(a, b)
    return None


def lattice_invariants(L: ZSLattice, budget: int = DEFAULT_BUDGET) -> LatticeInvariants:
    covol = covolume(L)
    bound = math.sqrt(L.m) * float(covol) ** (1.0 / L.m)
    while True:
        D, N_cert = _coefficient_certificate(L, bound)
        cap = max(1, math.ceil(N_cert))
        svs = short_vectors(L, bound, height_cap=cap, budget=budget)
        if svs.vectors:
            break
        bound *= 2.0
    best = svs.vectors[0]
    if best.content_sq is not None:
        root = _exact_sqrt(best.content_sq)
        systole = root if root is not None else math.sqrt(best.content_sq)
        return LatticeInvariants(covol, systole, best.content_sq, L.rational is not None)
    return LatticeInvariants(covol, best.content, None, False)


@dataclass
class TightnessProfile:
    thresholds: list[float]
    mass_below: list[float]
    member_below: list[list[bool]]
    systoles: list[float]
    flag: str


def mahler_tightness_diagnostic(lattice_family: Sequence[ZSLattice],
                                thresholds: Sequence[float]) -> TightnessProfile:
    """Sup over a lattice family of the indicator ``systole < eps`` per threshold."""
    if not lattice_family:
        raise ValueError("empty lattice family")
    systoles = [float(lattice_invariants(L).systole) for L in lattice_family]
    thresholds = list(thresholds)
    members = [[s < t for t in thresholds] for s in systoles]
    mass = [float(any(row[j] for row in members)) for j in range(len(thresholds))]
    if not thresholds:
        flag = "undetermined"
    elif all(m > 0 for m in mass):
        flag = "escaping"
    else:
        flag = "bounded"
    return TightnessProfile(thresholds, mass, members, systoles, flag)


def _padic_frac(x: Fraction, p: int) -> Fraction:
    """The representative in [0, 1) ∩ Z[1/p] of x modulo Z_p."""
    v = valuation(x, p)
    if v >= 0:
        return Fraction(0)
    e = -v
    mod = p**e
    num = x.numerator
    s = x.denominator // mod
    r = (num * pow(s, -1, mod)) % mod
    return Fraction(r, mod)


def strong_approx_reduce(g, p: int):
    """Split g in SL(2, Q) ⊂ SL(2, Q_p) as ``gamma @ k``.

    gamma = [[p^a, b], [0, p^-a]] with b in Z[1/p] ∩ [0, p^a); k in SL(2, Z_p).
    Returns exact Fraction object arrays.
    """
    G = _require_rational(g)
    if G.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix")
    if linalg.det(G) != 1:
        raise ValueError("det(g) must be exactly 1")
    c, d = G[1]
    m = min(valuation(c, p), valuation(d, p))
    a = -m
    pa = Fraction(p) ** a
    u = (G[1, 0] * pa, G[1, 1] * pa)
    r = (G[0, 0] / pa, G[0, 1] / pa)
    j = 0 if valuation(u[0], p) == 0 else 1
    beta = _padic_frac(r[j] / u[j], p)
    b = pa * beta
    gamma = linalg.exact([[pa, b], [0, 1 / pa]])
    k = linalg.exact([[r[0] - beta * u[0], r[1] - beta * u[1]], [u[0], u[1]]])
    if (gamma.dot(k) != G).any() or linalg.det(k) != 1 or any(
            valuation(x, p) < 0 for x in k.flat):
        raise NoDecomposition(f"internal failure reducing {g!r}")
    return gamma, k


# -- plain-text serialisation ---------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return repr(float(x))


def _parse_entry(tok: str, exact_only: bool):
    if "/" in tok or tok.lstrip("-+").isdigit():
        return Fraction(tok)
    if exact_only:
        raise NotRational(f"entry {tok!r} must be an exact rational at an ultrametric place")
    return float(tok)


def format_lattice(L: ZSLattice) -> str:
    lines = [f"m = {L.m}", "places = " + ", ".join(str(v) for v in L.places),
             f"archimedean = {L.archimedean}"]
    for v in L.places:
        lines.append(f"[{v}]")
        block = L.rational if (v.is_archimedean and L.rational is not None) else L.blocks[v]
        for row in block:
            lines.append(" ".join(_fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def parse_lattice(text: str) -> ZSLattice:
    header, blocks, current = {}, {}, None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = Place.parse(line[1:-1])
            blocks[current] = []
        elif current is None:
            key, _, val = line.partition("=")
            header[key.strip()] = val.strip()
        else:
            blocks[current].append(
                [_parse_entry(t, not current.is_archimedean) for t in line.split()])
    places = parse_places(header.get("places", ",".join(str(v) for v in blocks)))
    arch = header.get("archimedean", "euclidean")
    if all(isinstance(x, Fraction) for b in blocks.values() for row in b for x in row):
        mats = [linalg.exact(blocks[v]) for v in places]
        if all((M == mats[0]).all() for M in mats):
            return ZSLattice.from_rational(mats[0], places, arch)
    out = {}
    for v in places:
        out[v] = (np.array([[float(x) for x in row] for row in blocks[v]]) if v.is_archimedean
                  else linalg.exact(blocks[v]))
    return ZSLattice(places, out, archimedean=arch)
