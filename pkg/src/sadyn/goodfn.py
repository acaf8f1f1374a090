"""(C, α)-good functions: sublevel-set verification on dyadic sub-balls,
empirical constant fitting, Besicovich covers and measure-comparable charts.

A function f is (C, α)-good on B when every sub-ball B' satisfies
``ν({x ∈ B' : |f(x)| < ε ||f||_{B'}}) ≤ C ε^α ν(B')`` for all ε > 0. Sublevel
measures are estimated deterministically: midpoint grids at the real place,
complete coset enumeration at an ultrametric place.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from . import groups
from .errors import DegenerateFit
from .groups import SubgroupDescriptor
from .qs_arith import INF, BallQS, Place, padic_abs

FIT_EPS_RANGE = (1e-4, 1e-1)


class Polynomial:
    """A real polynomial, lowest degree coefficient first; vectorised."""

    def __init__(self, coeffs: Sequence[float]):
        self.coeffs = [float(c) for c in coeffs]

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def __repr__(self):
        return f"Polynomial({self.coeffs})"


class PadicPolynomialAbs:
    """``x ↦ |P(x)|_p`` for a polynomial P with rational coefficients."""

    def __init__(self, coeffs: Sequence, p: int):
        self.coeffs = [Fraction(c) for c in coeffs]
        self.p = p

    def __call__(self, x: Fraction) -> float:
        val = Fraction(0)
        for c in reversed(self.coeffs):
            val = val * x + c
        return float(padic_abs(val, self.p))


@dataclass
class GoodCandidate:
    domain: BallQS
    evaluate: Callable
    name: str = "f"

    @property
    def place(self) -> Place:
        (v,) = [v for v, d in self.domain.dims.items() if d > 0]
        return v

    @property
    def dim(self) -> int:
        return self.domain.dims[self.place]


class GoodConstants(NamedTuple):
    C: float
    alpha: float


class SubBall(NamedTuple):
    level: int
    index: tuple
    values: np.ndarray  # |f| on the grid / coset representatives of the sub-ball


def _real_subballs(f: GoodCandidate, levels: int, n_points: int):
    d = f.dim
    c = np.asarray(f.domain.center[INF], dtype=float)
    r = f.domain.radius
    per_axis = max(2, int(round(n_points ** (1.0 / d))))
    for lev in range(levels + 1):
        k = 2**lev
        width = 2 * r / k
        for idx in itertools.product(range(k), repeat=d):
            lo = c - r + width * np.asarray(idx)
            axes = [lo[i] + width * (np.arange(per_axis) + 0.5) / per_axis for i in range(d)]
            if d == 1:
                pts = axes[0]
            else:
                pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
            vals = np.abs(np.asarray(f.evaluate(pts), dtype=float))
            yield SubBall(lev, idx, vals.reshape(-1))


def _padic_subballs(f: GoodCandidate, levels: int, depth: int):
    v = f.place
    p = v.p
    if f.dim != 1:
        raise NotImplementedError("ultrametric candidates are one-dimensional")
    c = Fraction(f.domain.center[v][0])
    k = math.floor(math.log(f.domain.effective_radius(v), p) + 1e-9)
    scale = Fraction(p) ** (-k)  # ball = c + scale * Z_p
    reps = [c + scale * j for j in range(p**depth)]
    vals = np.array([abs(float(f.evaluate(x))) for x in reps])
    for lev in range(min(levels, depth) + 1):
        step = p**lev
        for r in range(step):
            yield SubBall(lev, (r,), vals[r::step])


def sublevel_table(f: GoodCandidate, eps_grid: Sequence[float], n_points: int = 100_000,
                   levels: int = 3, depth: int = 6) -> tuple[list[SubBall], np.ndarray]:
    """Sublevel fractions ``ν{|f| < ε ||f||_B'} / ν(B')`` per sub-ball and ε."""
    eps = np.asarray(eps_grid, dtype=float)
    if f.place.is_archimedean:
        balls = list(_real_subballs(f, levels, n_points))
    else:
        balls = list(_padic_subballs(f, levels, depth))
    table = np.zeros((len(balls), len(eps)))
    for i, b in enumerate(balls):
        sup = b.values.max()
        if sup == 0:
            continue  # strict inequality: the sublevel set of the zero function is empty
        table[i] = [(b.values < e * sup).mean() for e in eps]
    return balls, table


def _resolution(f: GoodCandidate, n_points: int, depth: int, levels: int) -> float:
    """Measure granularity of the sublevel estimate on the smallest sub-ball."""
    if f.place.is_archimedean:
        per_axis = max(2, int(round(n_points ** (1.0 / f.dim))))
        return 4.0 / per_axis
    return float(f.place.p) ** -(depth - min(levels, depth))


@dataclass
class GoodVerdict:
    passed: bool
    worst_eps: float | None
    worst_ratio: float
    bound: float
    resolution: float
    measured: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed


def verify_good(f: GoodCandidate, consts: GoodConstants, eps_grid: Sequence[float],
                n_points: int = 100_000, levels: int = 3, depth: int = 6) -> GoodVerdict:
    """Check the (C, α)-good inequality on every dyadic sub-ball and every ε.

    A (ball, ε) pair passes when its sublevel fraction is at most
    ``C ε^α`` plus the grid resolution (one coset of the enumeration depth,
    relative to the smallest sub-ball, at ultrametric places).
    """
    if any(not (0 < e <= 1) for e in eps_grid):
        raise ValueError("eps_grid must lie in (0, 1]")
    balls, table = sublevel_table(f, eps_grid, n_points, levels, depth)
    eps = np.asarray(eps_grid, dtype=float)
    bound = consts.C * eps**consts.alpha
    res = _resolution(f, n_points, depth, levels)
    excess = table - bound[None, :]
    i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
    passed = bool(excess[i, j] <= res)
    measured = {float(e): float(table[:, k].max()) for k, e in enumerate(eps)}
    return GoodVerdict(passed, None if passed else float(eps[j]), float(table[i, j]),
                       float(bound[j]), res, measured)


def fit_good(f: GoodCandidate, eps_grid: Sequence[float], n_points: int = 100_000,
             levels: int = 3, depth: int = 6) -> GoodConstants:
    """Fit ``log(sublevel ratio) ≈ log C + α log ε`` over ε in [1e-4, 1e-1].

    α comes from least squares on the worst sub-ball ratio per ε; C is then
    inflated to the largest ratio over all tested (ball, ε), so the returned
    constants pass :func:`verify_good` on the same grid.
    """
    balls, table = sublevel_table(f, eps_grid, n_points, levels, depth)
    eps = np.asarray(eps_grid, dtype=float)
    worst = table.max(axis=0)
    floor = max(FIT_EPS_RANGE[0], _resolution(f, n_points, depth, levels))
    sel = (eps >= floor) & (eps <= FIT_EPS_RANGE[1]) & (worst > 0)
    if sel.sum() < 2:
        warnings.warn(f"{f.name}: sublevel sets are empty, exponent undefined", DegenerateFit)
        alpha = 1.0
        C = float(max((worst / eps).max(), 0.0)) or 1.0
        return GoodConstants(C, alpha)
    alpha = float(np.polyfit(np.log(eps[sel]), np.log(worst[sel]), 1)[0])
    alpha = min(1.0, max(alpha, 1e-6))
    C = float((table / eps[None, :] ** alpha).max())
    return GoodConstants(max(C, 1e-12), alpha)


# --------------------------------------------------------------------------
# Besicovich covers


@dataclass
class BesicovichCover:
    balls: list  # (center, radius)
    multiplicity: int
    covered: bool
    place: Place = INF


def _dist(x, y, place: Place) -> float:
    if place.is_archimedean:
        return float(np.max(np.abs(np.atleast_1d(np.asarray(x, float) - np.asarray(y, float)))))
    return float(padic_abs(Fraction(x) - Fraction(y), place.p))


def _quantize(r: float, p: int) -> float:
    k = math.floor(math.log(r, p) + 1e-12)
    return float(Fraction(p) ** k)


def besicovich_cover(points: Sequence, radius_fn: Callable, place: Place = INF,
                     stab_points: Sequence | None = None) -> BesicovichCover:
    """Greedy Besicovich subcover of the balls ``B(x, radius_fn(x))``.

    Balls are taken largest radius first; a ball is kept when its center is
    not yet covered. Multiplicity is certified by stabbing: the sample points,
    plus midpoints between consecutive sample points at the real place.
    """
    pts = list(points)
    radii = [float(radius_fn(x)) for x in pts]
    if not place.is_archimedean:
        radii = [_quantize(r, place.p) for r in radii]
    keyed = sorted(range(len(pts)), key=lambda i: (-radii[i], _sort_key(pts[i])))
    chosen: list[tuple] = []
    for i in keyed:
        if not any(_dist(pts[i], c, place) <= r for c, r in chosen):
            chosen.append((pts[i], radii[i]))
    if stab_points is None:
        stab_points = list(pts)
        if place.is_archimedean and pts and np.ndim(pts[0]) == 0:
            s = np.sort(np.asarray(pts, float))
            stab_points += list((s[1:] + s[:-1]) / 2)
    if place.is_archimedean and pts and np.ndim(pts[0]) == 0:
        mult, covered = _stab_1d(chosen, np.asarray(stab_points, float), np.asarray(pts, float))
    else:
        counts = [sum(_dist(s, c, place) <= r for c, r in chosen) for s in stab_points]
        mult = max(counts, default=0)
        covered = all(any(_dist(x, c, place) <= r for c, r in chosen) for x in pts)
    return BesicovichCover(chosen, int(mult), bool(covered), place)


def _sort_key(x):
    if isinstance(x, Fraction):
        return (float(x),)
    return tuple(np.atleast_1d(np.asarray(x, float)))


def _stab_1d(chosen, stab, pts):
    c = np.array([x for x, _ in chosen], float)
    r = np.array([y for _, y in chosen], float)
    lo, hi = np.sort(c - r), np.sort(c + r)
    count = lambda s: np.searchsorted(lo, s, side="right") - np.searchsorted(hi, s, side="left")
    mult = int(count(stab).max(initial=0))
    covered = bool((count(pts) >= 1).all())
    return mult, covered


# --------------------------------------------------------------------------
# charts


@dataclass
class Chart:
    theta: Callable
    dim: int
    radius: float
    c_m: float
    place: Place
    kind: str
    certificate: str


SAFETY = 1.1


def _exp_jacobian(X: np.ndarray, tag: str) -> float:
    """Haar density of the exponential chart at X: ``|det((1 - e^{-ad X}) / ad X)|``."""
    basis = groups.lie_basis(tag, False)
    A = np.stack([groups.coords(groups.bracket(X, b), tag) for b in basis], axis=1)
    term = np.eye(A.shape[0])
    total = np.eye(A.shape[0])
    for k in range(1, 40):
        term = term @ (-A) / (k + 1)
        total = total + term
        if np.abs(term).max() < 1e-17:
            break
    return abs(float(np.linalg.det(total)))


def sl2_mod(p: int, n: int) -> np.ndarray:
    """All elements of SL(2, Z/p^n) as integer matrices with entries in [0, p^n)."""
    q = p**n
    r = np.arange(q)
    a, b, c, d = np.meshgrid(r, r, r, r, indexing="ij")
    mask = (a * d - b * c) % q == 1
    return np.stack([a[mask], b[mask], c[mask], d[mask]], axis=1).reshape(-1, 2, 2)


def chart_with_density(H: SubgroupDescriptor, radius: float, n_samples: int = 2000,
                       seed: int = 0, depth: int = 3) -> Chart:
    """Chart Θ from a ball onto a neighbourhood in H, with comparability constant c_m.

    Rotation groups use the angle chart (exact, c_m = 1); compact p-adic
    groups use the digit chart on SL(2, Z/p^depth) (exact, certified by coset
    counting); otherwise the exponential chart with
    ``c_m = 1 + 1.1 (max J^{±1} - 1)`` over sampled Jacobians J.
    """
    if H.factor == "Rotation" and H.group_tag == "SL2":
        return Chart(lambda phi: groups._rot(float(phi)), 1, radius, 1.0, H.place, "angle",
                     "arc length is Haar measure on the circle")
    if H.factor == "CompactPadic":
        p = H.place.p
        elems = sl2_mod(p, depth)
        ok = _uniform_cosets(elems, p, depth)
        if not ok:
            raise AssertionError("digit chart is not Haar-uniform")
        theta = lambda idx: groups.linalg.exact(elems[int(idx) % len(elems)])
        return Chart(theta, 3, float(len(elems)), 1.0, H.place, "digits",
                     f"uniform on SL(2, Z/{p}^{depth}): every coset mod {p}^j has equal count")
    if not H.place.is_archimedean:
        raise NotImplementedError("exponential charts at ultrametric places need a compact factor")
    basis = [np.asarray(b, float) for b in H.lie_basis]
    if not basis:
        return Chart(lambda x: np.eye(groups.matrix_size(H.group_tag)), 0, radius, 1.0,
                     H.place, "point", "trivial group")
    rng = np.random.default_rng(seed)
    dim = len(basis)
    samples = rng.uniform(-radius, radius, size=(n_samples, dim))
    corners = np.array(list(itertools.product([-radius, radius], repeat=dim)))
    worst = 1.0
    full = groups.LieSpan.from_matrices(H.group_tag, H.place, basis).dim == groups.lie_dim(H.group_tag)
    for x in np.concatenate([samples, corners]):
        X = sum(c * b for c, b in zip(x, basis))
        J = _exp_jacobian(X, H.group_tag) if full else _restricted_jacobian(X, basis, H.group_tag)
        worst = max(worst, J, 1.0 / J)
    c_m = 1.0 + SAFETY * (worst - 1.0)
    theta = lambda x: scipy.linalg.expm(sum(c * b for c, b in zip(np.atleast_1d(x), basis)))
    return Chart(theta, dim, radius, c_m, H.place, "exp",
                 f"max sampled Jacobian ratio {worst:.6g} over {len(samples) + len(corners)} points")


def _restricted_jacobian(X, basis, tag):
    """Jacobian of exp restricted to Lie(H), measured against left translates."""
    h = 1e-6
    g = scipy.linalg.expm(X)
    gi = np.linalg.inv(g)
    cols = []
    for b in basis:
        d = (scipy.linalg.expm(X + h * b) - scipy.linalg.expm(X - h * b)) / (2 * h)
        cols.append(groups.coords(gi @ d, tag))
    M = np.stack(cols, axis=1)
    B = np.stack([groups.coords(b, tag) for b in basis], axis=1)
    coeffs = np.linalg.lstsq(B, M, rcond=None)[0]
    return abs(float(np.linalg.det(coeffs)))


def _uniform_cosets(elems: np.ndarray, p: int, depth: int) -> bool:
    for j in range(1, depth + 1):
        keys = (elems % p**j).reshape(len(elems), -1)
        _, counts = np.unique(keys, axis=0, return_counts=True)
        if counts.min() != counts.max():
            return False
    return True
