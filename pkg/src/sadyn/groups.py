"""Desk-scale matrix groups over Q_S: SL(2), SL(2) x SL(2) (as 4x4 block
diagonals) and SL(3).

Blocks at the archimedean place are float arrays; blocks at an ultrametric
place are exact Fraction arrays (every catalogue object is rational there).
Subgroups come from a fixed catalogue addressed by string identifiers such as
``"sl2R.rotation"``, ``"sl2Q2.compact"`` or ``"sl2xsl2.diag_rotation"``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.linalg

from . import linalg
from .errors import ExpDivergent, LogUndefined, NonStabilizing
from .qs_arith import INF, DEFAULT_PRECISION, Place, valuation

TOL = 1e-9

# --------------------------------------------------------------------------
# ambient groups and their Lie algebras


def _E(n, i, j):
    M = np.zeros((n, n), dtype=int)
    M[i, j] = 1
    return M


def _sl2_basis():
    e = np.array([[0, 1], [0, 0]])
    h = np.array([[1, 0], [0, -1]])
    f = np.array([[0, 0], [1, 0]])
    return [e, h, f], ["e", "h", "f"]


def _blockdiag(A, B):
    out = np.zeros((4, 4), dtype=int)
    out[:2, :2] = A
    out[2:, 2:] = B
    return out


@lru_cache(maxsize=None)
def _ambient(tag: str):
    if tag == "SL2":
        basis, names = _sl2_basis()
        return 2, basis, names
    if tag == "SL2xSL2":
        b, nm = _sl2_basis()
        z = np.zeros((2, 2), dtype=int)
        basis = [_blockdiag(x, z) for x in b] + [_blockdiag(z, x) for x in b]
        return 4, basis, [n + "1" for n in nm] + [n + "2" for n in nm]
    if tag == "SL3":
        basis = [_E(3, 0, 1), _E(3, 0, 2), _E(3, 1, 2),
                 _E(3, 0, 0) - _E(3, 1, 1), _E(3, 1, 1) - _E(3, 2, 2),
                 _E(3, 1, 0), _E(3, 2, 0), _E(3, 2, 1)]
        return 3, basis, ["E12", "E13", "E23", "H1", "H2", "E21", "E31", "E32"]
    raise ValueError(f"unknown group tag {tag!r}")


def matrix_size(tag: str) -> int:
    return _ambient(tag)[0]


def lie_dim(tag: str) -> int:
    return len(_ambient(tag)[1])


def lie_basis(tag: str, exact: bool) -> list[np.ndarray]:
    basis = _ambient(tag)[1]
    return [linalg.exact(b) if exact else b.astype(float) for b in basis]


@lru_cache(maxsize=None)
def _coord_map(tag: str):
    basis = _ambient(tag)[1]
    B = linalg.exact(np.array([b.flatten() for b in basis]).T)
    left = linalg.inv(B.T.dot(B)).dot(B.T)
    return left, left.astype(float)


def coords(X: np.ndarray, tag: str) -> np.ndarray:
    """Coordinates of a Lie algebra element in the ambient basis."""
    ex, fl = _coord_map(tag)
    if linalg.is_exact(X):
        return ex.dot(X.flatten())
    return fl @ np.asarray(X, dtype=float).flatten()


def from_coords(c, tag: str) -> np.ndarray:
    basis = lie_basis(tag, linalg.is_exact(c))
    out = basis[0] * c[0]
    for b, x in zip(basis[1:], c[1:]):
        out = out + b * x
    return out


def bracket(X, Y):
    return _mm(X, Y) - _mm(Y, X)


def _mm(A, B):
    if linalg.is_exact(A) or linalg.is_exact(B):
        return linalg.exact(A).dot(linalg.exact(B))
    return A @ B


def _as_place_block(M, place: Place):
    if place.is_archimedean:
        return np.asarray(M, dtype=float) if not linalg.is_exact(M) else M.astype(float)
    return linalg.exact(M)


def ad_matrix(g, tag: str) -> np.ndarray:
    """Matrix of Ad(g) on the Lie algebra, in ambient coordinates."""
    ex = linalg.is_exact(g)
    ginv = linalg.inv(g)
    cols = [coords(_mm(_mm(g, b), ginv), tag) for b in lie_basis(tag, ex)]
    return np.stack(cols, axis=1)


# --------------------------------------------------------------------------
# group elements


@dataclass
class GroupElement:
    group_tag: str
    blocks: dict

    def __post_init__(self):
        n = matrix_size(self.group_tag)
        for v, b in list(self.blocks.items()):
            b = _as_place_block(b, v)
            if b.shape != (n, n):
                raise ValueError(f"block at {v} has shape {b.shape}, expected {(n, n)}")
            self.blocks[v] = b

    @classmethod
    def identity(cls, tag: str, places=(INF,)):
        n = matrix_size(tag)
        return cls(tag, {v: np.eye(n, dtype=int) for v in places})

    @property
    def places(self):
        return tuple(self.blocks)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.group_tag,
                            {v: _mm(self.blocks[v], other.blocks[v]) for v in self.blocks})

    def inv(self) -> "GroupElement":
        return GroupElement(self.group_tag, {v: linalg.inv(b) for v, b in self.blocks.items()})

    def check_det(self) -> bool:
        for v, b in self.blocks.items():
            d = linalg.det(b)
            if v.is_archimedean and abs(d - 1) > 1e-12 * max(1.0, np.abs(b).max() ** len(b)):
                return False
            if not v.is_archimedean and d != 1:
                return False
        return True


@dataclass
class LieAlgElem:
    blocks: dict

    def __post_init__(self):
        for v, b in list(self.blocks.items()):
            self.blocks[v] = _as_place_block(b, v)


# --------------------------------------------------------------------------
# exponential and logarithm


def _padic_round(x: Fraction, p: int, prec: int) -> Fraction:
    """Representative in Z[1/p] congruent to x modulo p^prec Z_p."""
    v = valuation(x, p)
    if v == math.inf or v >= prec:
        return Fraction(0)
    u = x / Fraction(p) ** v
    n = prec - v
    mod = p**n
    r = (u.numerator * pow(u.denominator, -1, mod)) % mod
    return Fraction(r) * Fraction(p) ** v


def _round_matrix(M, p, prec):
    out = np.empty(M.shape, dtype=object)
    for idx, x in np.ndenumerate(M):
        out[idx] = _padic_round(x, p, prec)
    return out


def is_nilpotent(X, tol: float = TOL) -> bool:
    n = X.shape[0]
    P = X
    for _ in range(n - 1):
        P = _mm(P, X)
    if linalg.is_exact(P):
        return not np.any(P != 0)
    scale = max(1.0, float(np.abs(X).max())) ** n
    return float(np.abs(P).max()) <= tol * scale


def _series(X, coeff, n_terms, constant):
    """constant * I + sum_{k=1}^{n_terms} coeff(k) X^k."""
    out = linalg.identity_like(X) * constant
    P = linalg.identity_like(X)
    for k in range(1, n_terms + 1):
        P = _mm(P, X)
        c = coeff(k)
        if c:
            out = out + P * c
    return out


def _min_val(M, p):
    vals = [valuation(x, p) for x in M.flat if x != 0]
    return min(vals) if vals else math.inf


def exp_block(X, place: Place = INF, precision: int = DEFAULT_PRECISION):
    """Matrix exponential of a block at ``place``.

    Nilpotent input gives the terminating (exact) series. At an ultrametric
    place a non-nilpotent X needs ||X||_p < p^(-1/(p-1)); the series is then
    summed until the remaining terms vanish modulo p^precision.
    """
    n = X.shape[0]
    if is_nilpotent(X):
        ex = linalg.is_exact(X) or not place.is_archimedean
        Xe = linalg.exact(X) if ex else np.asarray(X, dtype=float)
        coeff = (lambda k: Fraction(1, math.factorial(k))) if ex else (lambda k: 1.0 / math.factorial(k))
        return _series(Xe, coeff, n - 1, 1)
    if place.is_archimedean:
        return scipy.linalg.expm(np.asarray(X, dtype=float))
    p = place.p
    Xe = linalg.exact(X)
    v = _min_val(Xe, p)
    if not v > 1 / (p - 1):
        raise ExpDivergent(f"||X||_{p} = {p}^{-v} is outside the convergence radius "
                           f"{p}^(-1/{p - 1})")
    rate = v - 1 / (p - 1)
    terms = int(math.ceil((precision + 2) / rate)) + 2
    out = _series(Xe, lambda k: Fraction(1, math.factorial(k)), terms, 1)
    return _round_matrix(out, p, precision)


def log_block(g, place: Place = INF, precision: int = DEFAULT_PRECISION):
    """Matrix logarithm near the identity (terminating for unipotent g)."""
    n = g.shape[0]
    N = g - linalg.identity_like(g)
    if is_nilpotent(N):
        ex = linalg.is_exact(g) or not place.is_archimedean
        Ne = linalg.exact(N) if ex else np.asarray(N, dtype=float)
        coeff = (lambda k: Fraction((-1) ** (k + 1), k)) if ex else (lambda k: (-1) ** (k + 1) / k)
        return _series(Ne, coeff, n - 1, 0)
    if place.is_archimedean:
        N = np.asarray(N, dtype=float)
        if np.linalg.norm(N, 2) >= 1:
            raise LogUndefined("||g - I|| >= 1: outside the logarithm ball")
        return np.real(scipy.linalg.logm(np.asarray(g, dtype=float)))
    p = place.p
    Ne = linalg.exact(N)
    v = _min_val(Ne, p)
    if not v > 1 / (p - 1):
        raise LogUndefined(f"||g - I||_{p} too large for the logarithm")
    terms = int(math.ceil((precision + 2 + math.log(precision + 2, p)) / (v - 1 / (p - 1)))) + 2
    out = _series(Ne, lambda k: Fraction((-1) ** (k + 1), k), terms, 0)
    return _round_matrix(out, p, precision)


def exp(X: LieAlgElem, tag: str, precision: int = DEFAULT_PRECISION) -> GroupElement:
    return GroupElement(tag, {v: exp_block(b, v, precision) for v, b in X.blocks.items()})


def log(g: GroupElement, precision: int = DEFAULT_PRECISION) -> LieAlgElem:
    return LieAlgElem({v: log_block(b, v, precision) for v, b in g.blocks.items()})


# --------------------------------------------------------------------------
# Jordan decomposition and unipotents


def _poly_trim(a):
    while len(a) > 1 and a[-1] == 0:
        a = a[:-1]
    return a


def _poly_divmod(a, b):
    a = list(a)
    q = [Fraction(0)] * max(1, len(a) - len(b) + 1)
    while len(a) >= len(b) and any(a):
        c = a[-1] / b[-1]
        d = len(a) - len(b)
        q[d] = c
        for i, bi in enumerate(b):
            a[i + d] -= c * bi
        a = _poly_trim(a[:-1]) if len(a) > 1 else a
        if len(a) < len(b):
            break
    return q, _poly_trim(a)


def _poly_gcd(a, b):
    while any(b):
        _, r = _poly_divmod(a, b)
        a, b = b, r
    return [x / a[-1] for x in a]


def _charpoly_exact(M):
    """Characteristic polynomial coefficients, lowest degree first (Faddeev-LeVerrier)."""
    n = M.shape[0]
    coeffs = [Fraction(0)] * (n + 1)
    coeffs[n] = Fraction(1)
    Mk = linalg.exact(np.zeros((n, n), dtype=int))
    I = linalg.exact(np.eye(n, dtype=int))
    for k in range(1, n + 1):
        Mk = M.dot(Mk) + I * coeffs[n - k + 1]
        coeffs[n - k] = -sum((M.dot(Mk)[i, i] for i in range(n)), Fraction(0)) / k
    return coeffs


def _poly_eval_matrix(c, M):
    out = linalg.identity_like(M) * c[-1]
    for a in reversed(c[:-1]):
        out = _mm(out, M) + linalg.identity_like(M) * a
    return out


def _squarefree_poly(M):
    if linalg.is_exact(M):
        chi = _charpoly_exact(M)
        d = [k * chi[k] for k in range(1, len(chi))]
        g = _poly_gcd(chi, d)
        q, _ = _poly_divmod(chi, g)
        return q
    lam = np.linalg.eigvals(np.asarray(M, dtype=float))
    scale = max(1.0, float(np.abs(lam).max()))
    clusters: list[list] = []
    for x in sorted(lam, key=lambda z: (z.real, z.imag)):
        for c in clusters:
            if abs(x - c[0]) <= 1e-6 * scale:
                c.append(x)
                break
        else:
            clusters.append([x])
    # a defective eigenvalue splits by ~sqrt(machine eps); the cluster mean is accurate to eps
    reps = [np.mean(c) for c in clusters]
    return list(np.real(np.poly(reps))[::-1])


def is_semisimple(M) -> bool:
    P = _squarefree_poly(M)
    R = _poly_eval_matrix(P, M)
    if linalg.is_exact(R):
        return not np.any(R != 0)
    return float(np.abs(R).max()) <= 1e-8 * max(1.0, float(np.abs(M).max()) ** len(M))


def _jordan_block(g):
    P = _squarefree_poly(g)
    if len(P) - 1 == g.shape[0]:
        return g, linalg.identity_like(g)  # distinct eigenvalues: g is semisimple
    dP = [k * P[k] for k in range(1, len(P))] or [0]
    s = g
    ex = linalg.is_exact(g)
    for _ in range(60):
        step = _mm(_poly_eval_matrix(P, s), linalg.inv(_poly_eval_matrix(dP, s)))
        s_new = s - step
        if ex:
            if not np.any(s_new != s):
                break
        elif float(np.abs(s_new - s).max()) <= 1e-15 * max(1.0, float(np.abs(s).max())):
            s = s_new
            break
        s = s_new
    u = _mm(linalg.inv(s), g)
    return s, u


def jordan_decompose(g):
    """Multiplicative Jordan decomposition ``g = g_s g_u = g_u g_s``.

    Accepts a block matrix or a GroupElement (decomposed place by place).
    The semisimple part is the Newton limit of the square-free part of the
    characteristic polynomial, so it is a polynomial in g and exact for
    rational input.
    """
    if isinstance(g, GroupElement):
        parts = {v: _jordan_block(b) for v, b in g.blocks.items()}
        return (GroupElement(g.group_tag, {v: s for v, (s, _) in parts.items()}),
                GroupElement(g.group_tag, {v: u for v, (_, u) in parts.items()}))
    return _jordan_block(g)


class UnipotentInfo(NamedTuple):
    is_unipotent: bool
    generator: np.ndarray | None


def unipotent_analysis(g, place: Place = INF) -> UnipotentInfo:
    """Whether g is unipotent, and then its nilpotent logarithm (None at g = I)."""
    N = g - linalg.identity_like(g)
    if not is_nilpotent(N):
        return UnipotentInfo(False, None)
    if (linalg.is_exact(N) and not np.any(N != 0)) or (
            not linalg.is_exact(N) and float(np.abs(N).max()) <= TOL):
        return UnipotentInfo(True, None)
    return UnipotentInfo(True, log_block(g, place))


# --------------------------------------------------------------------------
# Lie spans and subgroup descriptors


@dataclass
class LieSpan:
    """A subspace of the ambient Lie algebra, stored as coordinate columns."""

    group_tag: str
    place: Place
    coord_basis: np.ndarray

    @classmethod
    def from_matrices(cls, tag, place, mats):
        ex = not place.is_archimedean
        if not mats:
            dim = lie_dim(tag)
            empty = np.zeros((dim, 0), dtype=object if ex else float)
            return cls(tag, place, empty)
        C = np.stack([coords(_as_place_block(m, place), tag) for m in mats], axis=1)
        return cls(tag, place, linalg.span_basis(C))

    @property
    def dim(self) -> int:
        return self.coord_basis.shape[1]

    @property
    def exact(self) -> bool:
        return linalg.is_exact(self.coord_basis)

    def matrices(self) -> list[np.ndarray]:
        return [from_coords(self.coord_basis[:, j], self.group_tag) for j in range(self.dim)]

    def contains(self, X, tol: float = TOL) -> bool:
        c = coords(_as_place_block(X, self.place), self.group_tag)
        return linalg.in_span(self.coord_basis, c, tol)

    def is_subalgebra(self, tol: float = 1e-9) -> bool:
        mats = self.matrices()
        return all(self.contains(bracket(a, b), tol) for a in mats for b in mats)


FACTOR_KINDS = ("Rotation", "DiagonalTorus", "UnipotentUpper", "FullSL", "CompactPadic",
                "DiagonalEmbedding", "LieSpan", "Trivial", "Factor")


@dataclass
class SubgroupDescriptor:
    id: str
    group_tag: str
    place: Place
    factor: str
    lie_basis: list
    rational: bool
    nilpotent_generators: list = field(default_factory=list)
    generators: list = field(default_factory=list)
    compact: bool = False
    l_dagger_index: int = 1

    def __post_init__(self):
        if self.factor not in FACTOR_KINDS:
            raise ValueError(f"unknown factor kind {self.factor!r}")
        self.lie_basis = [_as_place_block(b, self.place) for b in self.lie_basis]
        self.nilpotent_generators = [_as_place_block(b, self.place)
                                     for b in self.nilpotent_generators]
        self.generators = [_as_place_block(b, self.place) for b in self.generators]
        if not self.span().is_subalgebra():
            raise ValueError(f"{self.id}: Lie span is not closed under bracket")

    def span(self) -> LieSpan:
        return LieSpan.from_matrices(self.group_tag, self.place, self.lie_basis)

    @property
    def dim(self) -> int:
        return self.span().dim

    def conjugate(self, h) -> "SubgroupDescriptor":
        """The descriptor of h L h^-1."""
        h = _as_place_block(h, self.place)
        hinv = linalg.inv(h)
        conj = lambda M: _mm(_mm(h, M), hinv)
        return SubgroupDescriptor(
            f"{self.id}^h", self.group_tag, self.place, self.factor,
            [conj(b) for b in self.lie_basis], self.rational,
            [conj(b) for b in self.nilpotent_generators], [conj(b) for b in self.generators],
            self.compact, self.l_dagger_index)


def _rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _real_generators(basis):
    gens = []
    for Y in basis:
        Yf = np.asarray(Y, dtype=float)
        gens += [scipy.linalg.expm(Yf), scipy.linalg.expm(0.7 * Yf)]
    return gens


_ID_RE = re.compile(r"^(sl2|sl3)(R|Q(\d+))\.(\w+)$")


@lru_cache(maxsize=None)
def catalogue(ident: str) -> SubgroupDescriptor:
    """Look up a catalogue subgroup by its stable string identifier."""
    if ident.startswith("sl2xsl2."):
        return _sl2xsl2_entry(ident, ident.split(".", 1)[1])
    m = _ID_RE.match(ident)
    if not m:
        raise KeyError(f"unknown catalogue id {ident!r}")
    fam, fld, prime, kind = m.groups()
    place = INF if fld == "R" else Place(int(prime))
    if fam == "sl2":
        return _sl2_entry(ident, place, kind)
    return _sl3_entry(ident, place, kind)


def _gens_for(place, basis, extra_padic=()):
    if place.is_archimedean:
        return _real_generators(basis)
    gens = [exp_block(linalg.exact(b), place) for b in basis if is_nilpotent(linalg.exact(b))]
    return gens + list(extra_padic)


def _sl2_entry(ident, place, kind):
    e, h, f = _sl2_basis()[0]
    k = np.array([[0, 1], [-1, 0]])
    p = place.p
    diag_p = [np.array([[Fraction(p), 0], [0, Fraction(1, p)]], dtype=object)] if p else []
    table = {
        "trivial": ("Trivial", [], True, [], True),
        "torus": ("DiagonalTorus", [h], True, [], False),
        "unipotent": ("UnipotentUpper", [e], True, [e], False),
        "lower_unipotent": ("UnipotentUpper", [f], True, [f], False),
        "borel": ("LieSpan", [e, h], True, [e], False),
        "full": ("FullSL", [e, h, f], True, [e, f], False),
    }
    if place.is_archimedean:
        table["rotation"] = ("Rotation", [k], True, [], True)
    else:
        table["compact"] = ("CompactPadic", [e, h, f], False, [e, f], True)
    if kind not in table:
        raise KeyError(f"unknown catalogue id {ident!r}")
    factor, basis, rational, nil, compact = table[kind]
    if place.is_archimedean:
        gens = _real_generators(basis)
        if kind == "rotation":
            gens = [_rot(1.0), _rot(0.7)]
    elif kind == "compact":
        unit = 3 if p == 2 else 2
        gens = [np.array([[1, 1], [0, 1]]), np.array([[1, 0], [1, 1]]),
                np.array([[Fraction(unit), 0], [0, Fraction(1, unit)]], dtype=object)]
    else:
        extra = diag_p if kind in ("torus", "full", "borel") else []
        gens = _gens_for(place, basis, extra)
    return SubgroupDescriptor(ident, "SL2", place, factor, basis, rational, nil, gens, compact)


def _sl2xsl2_entry(ident, kind):
    e, h, f = _sl2_basis()[0]
    z = np.zeros((2, 2), dtype=int)
    k = np.array([[0, 1], [-1, 0]])
    first = [_blockdiag(x, z) for x in (e, h, f)]
    second = [_blockdiag(z, x) for x in (e, h, f)]
    table = {
        "trivial": ("Trivial", [], [], True),
        "diag_rotation": ("DiagonalEmbedding", [_blockdiag(k, k)], [], True),
        "diag_torus": ("DiagonalEmbedding", [_blockdiag(h, h)], [], False),
        "diag_full": ("DiagonalEmbedding", [_blockdiag(x, x) for x in (e, h, f)],
                      [_blockdiag(e, e), _blockdiag(f, f)], False),
        "first_factor": ("Factor", first, [first[0], first[2]], False),
        "second_factor": ("Factor", second, [second[0], second[2]], False),
        "full": ("FullSL", first + second, [first[0], first[2], second[0], second[2]], False),
    }
    if kind not in table:
        raise KeyError(f"unknown catalogue id {ident!r}")
    factor, basis, nil, compact = table[kind]
    gens = _real_generators(basis)
    if kind == "diag_rotation":
        gens = [scipy.linalg.block_diag(_rot(t), _rot(t)) for t in (1.0, 0.7)]
    return SubgroupDescriptor(ident, "SL2xSL2", INF, factor, basis, True, nil, gens, compact)


def _sl3_entry(ident, place, kind):
    E = lambda i, j: _E(3, i, j)
    so3 = [E(0, 1) - E(1, 0), E(0, 2) - E(2, 0), E(1, 2) - E(2, 1)]
    H1, H2 = E(0, 0) - E(1, 1), E(1, 1) - E(2, 2)
    full = [E(0, 1), E(0, 2), E(1, 2), H1, H2, E(1, 0), E(2, 0), E(2, 1)]
    table = {
        "trivial": ("Trivial", [], [], True),
        "torus": ("DiagonalTorus", [H1, H2], [], False),
        "unipotent": ("UnipotentUpper", [E(0, 1), E(0, 2), E(1, 2)],
                      [E(0, 1), E(0, 2), E(1, 2)], False),
        "sl2_upper": ("LieSpan", [E(0, 1), H1, E(1, 0)], [E(0, 1), E(1, 0)], False),
        "full": ("FullSL", full, [E(0, 1), E(1, 2), E(1, 0), E(2, 1)], False),
    }
    if place.is_archimedean:
        table["so3"] = ("Rotation", so3, [], True)
    if kind not in table:
        raise KeyError(f"unknown catalogue id {ident!r}")
    factor, basis, nil, compact = table[kind]
    gens = _gens_for(place, basis)
    return SubgroupDescriptor(ident, "SL3", place, factor, basis, True, nil, gens, compact)


# --------------------------------------------------------------------------
# centralisers, invariant cores, Ratner class


def _basis_blocks(tag, place):
    return lie_basis(tag, not place.is_archimedean)


def centralizer_algebra(H: SubgroupDescriptor) -> LieSpan:
    """Lie algebra of the centraliser: {X : [X, Y] = 0 for every Y in Lie(H)}."""
    basis = _basis_blocks(H.group_tag, H.place)
    rows = []
    for Y in H.lie_basis:
        rows.append(np.stack([coords(bracket(b, Y), H.group_tag) for b in basis], axis=1))
    if not rows:
        dim = lie_dim(H.group_tag)
        return LieSpan(H.group_tag, H.place,
                       linalg.exact(np.eye(dim, dtype=int)) if not H.place.is_archimedean
                       else np.eye(dim))
    K = linalg.nullspace(np.concatenate(rows, axis=0))
    return LieSpan(H.group_tag, H.place, linalg.span_basis(K) if K.shape[1] else K)


def normalizer_algebra(L: SubgroupDescriptor) -> LieSpan:
    """Lie algebra of the normaliser: {X : [X, Lie(L)] ⊆ Lie(L)}."""
    tag = L.group_tag
    basis = _basis_blocks(tag, L.place)
    Lc = L.span().coord_basis
    dim = lie_dim(tag)
    if Lc.shape[1] == 0:
        ident = np.eye(dim, dtype=int)
        return LieSpan(tag, L.place, linalg.exact(ident) if L.span().exact else np.eye(dim))
    ann = linalg.nullspace(Lc.T)
    if ann.shape[1] == 0:
        return LieSpan(tag, L.place, Lc if False else (
            linalg.exact(np.eye(dim, dtype=int)) if L.span().exact else np.eye(dim)))
    rows = []
    for Y in L.lie_basis:
        M = np.stack([coords(bracket(b, Y), tag) for b in basis], axis=1)
        rows.append(ann.T.dot(M) if linalg.is_exact(ann) else ann.T @ M)
    K = linalg.nullspace(np.concatenate(rows, axis=0))
    return LieSpan(tag, L.place, linalg.span_basis(K))


def h_invariant_core(H: SubgroupDescriptor, L: SubgroupDescriptor) -> LieSpan:
    """Largest subspace of Lie(L) stable under Ad of H's generators."""
    if H.group_tag != L.group_tag or H.place != L.place:
        raise ValueError("H and L must live in the same group at the same place")
    tag = L.group_tag
    V = L.span().coord_basis
    ads = [ad_matrix(h, tag) for h in H.generators]
    dim = lie_dim(tag)
    for _ in range(dim + 2):
        before = V.shape[1]
        for A in ads:
            if V.shape[1] == 0:
                break
            AV = A.dot(V) if linalg.is_exact(A) or linalg.is_exact(V) else A @ V
            V = linalg.intersect(V, AV)
        if V.shape[1] == before:
            return LieSpan(tag, L.place, V)
    raise NonStabilizing("invariant-core iteration did not stabilise")


class RatnerVerdict(NamedTuple):
    in_class: bool
    witness: list
    reason: str


def _lie_closure(tag, place, mats):
    span = LieSpan.from_matrices(tag, place, mats)
    while True:
        current = span.matrices()
        new = current + [bracket(a, b) for a in current for b in current]
        grown = LieSpan.from_matrices(tag, place, new)
        if grown.dim == span.dim:
            return span
        span = grown


def ratner_class_test(L: SubgroupDescriptor) -> RatnerVerdict:
    """Whether L is generated (at the Lie level) by unipotents and is defined over Q."""
    span = L.span()
    nil = L.nilpotent_generators
    for X in nil:
        if not is_nilpotent(X) or not span.contains(X):
            raise ValueError(f"{L.id}: catalogue nilpotent data is inconsistent")
    if span.dim == 0:
        return RatnerVerdict(L.rational, [], "trivial group" if L.rational else "not over Q")
    if not nil:
        return RatnerVerdict(False, [], "empty nilpotent cone")
    closure = _lie_closure(L.group_tag, L.place, nil)
    if closure.dim < span.dim:
        complement = [X for X in span.matrices() if not closure.contains(X)]
        return RatnerVerdict(False, complement[:1], "nonzero character direction")
    if not L.rational:
        return RatnerVerdict(False, list(nil), "not defined over Q")
    return RatnerVerdict(True, list(nil), "generated by nilpotents")
