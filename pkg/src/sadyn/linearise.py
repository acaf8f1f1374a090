"""Linearisation toolkit: the wedge representation ``V = Λ^k g``, the vector
``p_L``, singular sets, orbit counting, stability checks, the Φ/Ψ
neighbourhoods and the focusing classifier.

Norm on V: for ``k = 1`` (V is the Lie algebra itself) the operator norm of
the matrix, so that ``||Ad(γ) e|| = a² + c²`` for ``γ = [[a, b], [c, d]]``;
Euclidean norm on wedge coordinates for ``k ≥ 2``; max of p-adic absolute
values at an ultrametric place.
"""

from __future__ import annotations

import functools
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import groups, linalg
from .errors import DegenerateLambda, ExplosionGuard
from .groups import GroupElement, SubgroupDescriptor
from .qs_arith import padic_abs

DEFAULT_BUDGET = 2_000_000
BOUNDARY_TOL = 1e-9


def _block(g, place):
    """The matrix of g at ``place`` (accepts GroupElement or bare arrays)."""
    if isinstance(g, GroupElement):
        return g.blocks[place]
    return groups._as_place_block(g, place)


def compound(A: np.ndarray, k: int) -> np.ndarray:
    """k-th compound matrix: the action of A on Λ^k in the lexicographic basis."""
    n = A.shape[0]
    combos = list(itertools.combinations(range(n), k))
    if k == 0:
        return linalg.identity_like(np.eye(1, dtype=A.dtype) if not linalg.is_exact(A)
                                    else linalg.exact(np.eye(1, dtype=int)))
    if linalg.is_exact(A):
        out = np.empty((len(combos), len(combos)), dtype=object)
        for i, I in enumerate(combos):
            for j, J in enumerate(combos):
                out[i, j] = linalg.det(A[np.ix_(I, J)])
        return out
    idx_r = np.array(combos)
    sub = A[idx_r[:, None, :, None], idx_r[None, :, None, :]]
    return np.linalg.det(sub)


def wedge(columns: np.ndarray) -> np.ndarray:
    """Coordinates of ``c_1 ∧ ... ∧ c_k`` for the columns of an n×k matrix."""
    n, k = columns.shape
    combos = itertools.combinations(range(n), k)
    if linalg.is_exact(columns):
        return np.array([linalg.det(columns[list(I), :]) for I in combos], dtype=object)
    return np.array([np.linalg.det(columns[list(I), :]) for I in combos])


@dataclass
class LinearisationBundle:
    """Wedge representation data attached to a catalogue subgroup L."""

    L: SubgroupDescriptor
    k: int
    dim_V: int
    p_L: np.ndarray
    normalizer_lie: groups.LieSpan
    _a_l: np.ndarray | None = field(default=None, repr=False)

    @property
    def tag(self) -> str:
        return self.L.group_tag

    @property
    def place(self):
        return self.L.place

    @property
    def exact(self) -> bool:
        return not self.place.is_archimedean

    def rep(self, g) -> np.ndarray:
        """Matrix of g on V (the k-th compound of Ad)."""
        A = groups.ad_matrix(_block(g, self.place), self.tag)
        return compound(A, self.k)

    def eta(self, g) -> np.ndarray:
        """Orbit map ``g ↦ rep(g) p_L``."""
        R = self.rep(g)
        return R.dot(self.p_L) if linalg.is_exact(R) else R @ self.p_L

    def norm(self, v) -> float:
        if self.exact:
            return max((float(padic_abs(x, self.place.p)) for x in v if x != 0), default=0.0)
        v = np.asarray(v, dtype=float)
        if self.k == 1:
            return float(np.linalg.norm(groups.from_coords(v, self.tag), 2))
        return float(np.linalg.norm(v))

    def distortion(self, g) -> float:
        """A constant c with ``||rep(g) v|| ≤ c ||v||`` for every v in V."""
        if self.exact:
            R = self.rep(g)
            return max((float(padic_abs(x, self.place.p)) for x in R.flat if x != 0),
                       default=0.0)
        if self.k == 1:
            B = np.asarray(_block(g, self.place), dtype=float)
            return float(np.linalg.norm(B, 2) * np.linalg.norm(np.linalg.inv(B), 2))
        return float(np.linalg.norm(self.rep(g), 2))

    def a_l(self) -> np.ndarray:
        """Basis (columns) of A_L, the span of η_L over sampled members of X(L, L)."""
        if self._a_l is None:
            self._a_l = self.estimate_a_l(np.random.default_rng(0), 8)
        return self._a_l

    def estimate_a_l(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Span of p_L and η_L(exp(Y)) for random Y in the normaliser algebra."""
        cols = [self.p_L]
        N = self.normalizer_lie.matrices()
        for _ in range(n if N else 0):
            Y = sum(float(c) * M.astype(float) for c, M in zip(rng.normal(size=len(N)) * 0.3, N))
            if self.exact:
                continue
            cols.append(self.eta(groups.exp_block(Y, self.place)))
        if self.exact:
            return linalg.exact(np.stack(cols, axis=1))
        return linalg.span_basis(np.stack([np.asarray(c, float) for c in cols], axis=1), 1e-7)


def build_bundle(L: SubgroupDescriptor, group_tag: str | None = None) -> LinearisationBundle:
    """Linearisation bundle of L: ``V = Λ^{dim L} g``, ``p_L`` = wedge of the Lie basis."""
    if group_tag is not None and group_tag != L.group_tag:
        raise ValueError(f"L lives in {L.group_tag}, not {group_tag}")
    k = len(L.lie_basis)
    n = groups.lie_dim(L.group_tag)
    if k:
        C = np.stack([groups.coords(linalg.exact(b) if not L.place.is_archimedean
                                    else linalg.exact(np.rint(b).astype(int))
                                    if np.allclose(b, np.rint(b)) else b, L.group_tag)
                      for b in L.lie_basis], axis=1)
        p = wedge(C)
    else:
        p = linalg.exact(np.ones(1, dtype=int))
    if not L.place.is_archimedean:
        p = linalg.exact(p)
    else:
        p = np.asarray(p, dtype=float)
    if not np.any(p != 0):
        raise ValueError(f"{L.id}: Lie basis is degenerate")
    return LinearisationBundle(L, k, math.comb(n, k), p, groups.normalizer_algebra(L))


# --------------------------------------------------------------------------
# singular sets


def _in_X(L: SubgroupDescriptor, W_gens, g) -> bool:
    span = L.span()
    gb = _block(g, L.place)
    ginv = linalg.inv(gb)
    for w in W_gens:
        wb = _block(w, L.place) if not isinstance(w, groups.LieAlgElem) else w.blocks[L.place]
        if not span.contains(groups._mm(groups._mm(ginv, wb), gb)):
            return False
    return True


def x_membership(bundle: LinearisationBundle, W_gens: Sequence, g,
                 exclusivity_catalogue: Sequence[SubgroupDescriptor] = ()) -> tuple[bool, bool]:
    """Membership of g in X(L, W) and in X*(L, W).

    ``g ∈ X(L, W)`` iff ``Ad(g⁻¹) w ∈ Lie(L)`` for every generator w of Lie(W).
    X* removes the sets X(K, W) for strictly lower-dimensional K in the catalogue.
    """
    L = bundle.L
    in_x = _in_X(L, W_gens, g)
    if not in_x:
        return False, False
    for K in exclusivity_catalogue:
        if K.group_tag == L.group_tag and K.place == L.place and K.dim < L.dim:
            if _in_X(K, W_gens, g):
                return True, False
    return True, True


# --------------------------------------------------------------------------
# orbit enumeration for Γ = SL(2, Z)


def sl2z_elements(height: int, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """All γ in SL(2, Z) with entries bounded by ``height`` in absolute value.

    Sorted by height, then by decreasing trace, so the first γ reaching an
    orbit point is the simplest one (the identity when it qualifies).
    """
    if (2 * height + 1) ** 3 > budget:
        raise ExplosionGuard(f"enumeration of SL(2,Z) at height {height} exceeds budget {budget}")
    return _sl2z_cached(height)


@functools.lru_cache(maxsize=8)
def _sl2z_cached(height: int) -> np.ndarray:
    out = []
    H = height
    for a in range(-H, H + 1):
        for b in range(-H, H + 1):
            for c in range(-H, H + 1):
                if a != 0:
                    num = 1 + b * c
                    if num % a == 0 and abs(num // a) <= H:
                        out.append((a, b, c, num // a))
                elif b * c == -1:
                    out.extend((0, b, c, d) for d in range(-H, H + 1))
    arr = np.array(out, dtype=np.int64).reshape(-1, 2, 2)
    flat = arr.reshape(-1, 4)
    order = np.lexsort(tuple(flat[:, ::-1].T) + (-(flat[:, 0] + flat[:, 3]), np.abs(flat).sum(1),
                                                 np.abs(flat).max(1)))
    arr = arr[order]
    arr.flags.writeable = False
    return arr


class OrbitPoints(NamedTuple):
    points: np.ndarray
    gammas: np.ndarray
    complete: bool


def _orbit_certificate(bundle: LinearisationBundle, h, radius: float, height: int) -> bool:
    """True when every orbit point ``rep(h γ) p_L`` of norm ≤ radius has ``γ`` of height ≤ height."""
    kind = bundle.L.factor
    if bundle.k == groups.lie_dim(bundle.tag) or bundle.k == 0 or kind == "Trivial":
        return True
    if kind == "UnipotentUpper" and bundle.k == 1:
        # ||Ad(γ) e|| = a² + c²; the stabiliser absorbs b, d
        return height * height >= radius * bundle.distortion(linalg.inv(
            np.asarray(_block(h, bundle.place), float)))
    return False


def orbit_points(bundle: LinearisationBundle, h, radius: float, height: int,
                 budget: int = DEFAULT_BUDGET) -> OrbitPoints:
    """Distinct points of ``h Γ p_L`` with norm ≤ radius (Γ = SL(2, Z), real place)."""
    if bundle.tag != "SL2" or not bundle.place.is_archimedean:
        raise NotImplementedError("orbit enumeration is implemented for SL(2, Z) at the real place")
    gam = sl2z_elements(height, budget)
    hb = np.asarray(_block(h, bundle.place), float)
    if bundle.k == 1:
        M = hb @ gam.astype(float)
        Minv = np.linalg.inv(M)
        X = M @ groups.from_coords(np.asarray(bundle.p_L, float), bundle.tag) @ Minv
        pts = np.stack([groups.coords(x, bundle.tag) for x in X]) if len(X) < 64 else \
            (X.reshape(len(X), -1) @ groups._coord_map(bundle.tag)[1].T)
        norms = np.linalg.norm(X, 2, axis=(1, 2))
    else:
        pts = np.array([bundle.eta(hb @ g) for g in gam.astype(float)])
        norms = np.array([bundle.norm(v) for v in pts])
    keep = norms <= radius * (1 + 1e-12)
    pts, gam = pts[keep], gam[keep]
    keys = np.round(pts / max(1e-300, 1e-9 * max(1.0, radius)))
    _, first = np.unique(keys, axis=0, return_index=True)
    first = np.sort(first)
    return OrbitPoints(pts[first], gam[first], _orbit_certificate(bundle, h, radius, height))


class ChiCount(NamedTuple):
    count: int
    exact: bool


def chi_count(bundle: LinearisationBundle, center, radius: float, g, enum_height: int,
              budget: int = DEFAULT_BUDGET) -> ChiCount:
    """``#(g Γ p_L ∩ E)`` for the closed ball E of V around ``center``.

    Exact when the enumeration certificate holds, otherwise a lower bound.
    """
    center = np.asarray(center, dtype=float)
    reach = bundle.norm(center) + radius
    orb = orbit_points(bundle, g, reach, enum_height, budget)
    d = np.array([bundle.norm(v - center) for v in orb.points]) if len(orb.points) else np.zeros(0)
    return ChiCount(int((d <= radius + 1e-12).sum()), orb.complete)


# --------------------------------------------------------------------------
# stability


@dataclass
class StabilityReport:
    mode: str
    c_or_C: float
    baseline: float
    factor: float
    worst_case: tuple
    verdict: str
    witness: dict | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def standard_rep(g) -> np.ndarray:
    return np.asarray(g.blocks[groups.INF] if isinstance(g, GroupElement) else g, dtype=float)


def unit_circle_probes(n: int = 64) -> list[np.ndarray]:
    """Unit vectors at angles kπ/n, k < n (a half-circle grid; includes e₁ and e₂)."""
    return [np.array([math.cos(math.pi * k / n), math.sin(math.pi * k / n)]) for k in range(n)]


def lattice_probes(height: int = 3) -> list[np.ndarray]:
    """Primitive vectors of Z² with entries bounded by ``height``, one per ± pair."""
    out = []
    for a in range(0, height + 1):
        for b in range(-height, height + 1):
            if (a, b) <= (0, 0) or math.gcd(a, b) != 1:
                continue
            out.append(np.array([a, b], dtype=float))
    return out


def _sup_ratios(rep, Y, Omega, probes):
    """``S[y, v] = max_ω ||rep(y ω) v||`` plus the argmax ω index."""
    RO = [rep(w) for w in Omega]
    S = np.empty((len(Y), len(probes)))
    arg = np.empty((len(Y), len(probes)), dtype=int)
    for i, y in enumerate(Y):
        Ry = rep(y)
        for j, v in enumerate(probes):
            norms = [float(np.linalg.norm(Ry @ (R @ v))) for R in RO]
            arg[i, j] = int(np.argmax(norms))
            S[i, j] = norms[arg[i, j]]
    return S, arg


def stability_check(Y: Sequence, Omega_sample: Sequence, mode: str = "analytic",
                    probe_vectors: Sequence | None = None,
                    rep: Callable | LinearisationBundle = standard_rep,
                    factor: float = 10.0) -> StabilityReport:
    """Empirical analytic (``mode='analytic'``) or arithmetic stability check.

    Analytic mode computes the smallest c with ``max_ω ||y ω v|| ≥ ||v|| / c``
    over the sampled (y, v); arithmetic mode computes the largest C with
    ``max_ω ||y ω v|| ≥ C`` over lattice probe vectors. A finite family cannot
    certify a uniform bound, so the constant is compared with its value for the
    identity family ``Y = {e}``: the check fails when it degrades by more than
    ``factor``. A failure carries the worst (y, v) and the trajectory of
    ``max_ω ||y ω v||`` along Y for that v.
    """
    if not Omega_sample:
        raise ValueError("Omega_sample must be nonempty")
    if isinstance(rep, LinearisationBundle):
        bundle = rep
        rep = lambda g: np.asarray(bundle.rep(g), dtype=float)
    if probe_vectors is None:
        probe_vectors = unit_circle_probes() if mode == "analytic" else lattice_probes()
    probes = [np.asarray(v, dtype=float) for v in probe_vectors]
    pnorm = np.array([np.linalg.norm(v) for v in probes])
    n = rep(Omega_sample[0]).shape[0]
    S, arg = _sup_ratios(rep, Y, Omega_sample, probes)
    S0, _ = _sup_ratios(rep, [np.eye(n)], Omega_sample, probes)
    if mode == "analytic":
        ratio, ratio0 = S / pnorm, S0 / pnorm
        i, j = np.unravel_index(int(np.argmin(ratio)), ratio.shape)
        const = 1.0 / float(ratio[i, j])
        base = 1.0 / float(ratio0.min())
        ok = const <= factor * base
    elif mode == "arithmetic":
        i, j = np.unravel_index(int(np.argmin(S)), S.shape)
        const = float(S[i, j])
        base = float(S0.min())
        ok = const >= base / factor
    else:
        raise ValueError(f"unknown mode {mode!r}")
    worst = (int(i), int(arg[i, j]), probes[j].tolist())
    witness = None
    if not ok:
        witness = {"y_index": int(i), "vector": probes[j].tolist(),
                   "trajectory": [float(x) for x in S[:, j]]}
    return StabilityReport(mode, const, base, factor, worst, "pass" if ok else "fail", witness)


# --------------------------------------------------------------------------
# neighbourhoods and the dichotomy


def m_good(eps: float, C: float, alpha: float, c_d: float, c_m: float, N_X: float,
           lambda_B: float) -> float:
    """``max(1, (ε⁻¹ c_d c_m N_X C λ(B))^{1/α}) + 1``; the +1 makes the defining inequality strict."""
    if not (0 < alpha <= 1):
        raise ValueError("alpha must lie in (0, 1]")
    if min(eps, C, c_d, c_m, N_X, lambda_B) <= 0:
        raise ValueError("constants must be positive")
    prod = Fraction(1)
    for x in (c_d, c_m, N_X, C, lambda_B):
        prod *= Fraction(x).limit_denominator(10**12)
    prod /= Fraction(eps).limit_denominator(10**12)
    base = float(prod) ** (1.0 / alpha)
    if float(alpha).is_integer() or abs(1 / alpha - round(1 / alpha)) < 1e-12:
        base = float(prod ** round(1 / alpha))
    return max(1.0, base) + 1.0


@dataclass
class NeighborhoodTriple:
    """``Φ = {||v|| < M R, ||Λ v|| < b}``, ``Ψ = {||v|| < R, ||Λ v|| < b/M}`` and D ⊂ A_L."""

    M_good: float
    R: float
    b: float
    lambda_map: np.ndarray
    a_l: np.ndarray
    D_radius: float
    norm: Callable = field(default=lambda v: float(np.linalg.norm(v)), repr=False)
    lambda_norm: Callable = field(default=lambda v: float(np.linalg.norm(v)), repr=False)

    def lam(self, v) -> float:
        return self.lambda_norm(self.lambda_map @ np.asarray(v, dtype=float))

    def in_phi(self, v) -> bool:
        return self.norm(v) < self.M_good * self.R and self.lam(v) < self.b

    def in_psi(self, v) -> bool:
        return self.norm(v) < self.R and self.lam(v) < self.b / self.M_good

    def in_D(self, v) -> bool:
        v = np.asarray(v, dtype=float)
        return linalg.in_span(self.a_l, v, 1e-9) and self.norm(v) <= self.D_radius

    def boundary_gap(self, v) -> float:
        """Relative distance of v's defining quantities from the boundaries of Φ and Ψ."""
        nv, lv = self.norm(v), self.lam(v)
        gaps = [abs(nv - self.M_good * self.R) / (self.M_good * self.R),
                abs(nv - self.R) / self.R]
        if self.b > 0:
            gaps += [abs(lv - self.b) / self.b, abs(lv - self.b / self.M_good) * self.M_good / self.b]
        return min(gaps)


def complement_projection(a_l: np.ndarray) -> np.ndarray:
    """Orthogonal projection with kernel exactly span(a_l)."""
    Q = linalg.span_basis(np.asarray(a_l, dtype=float))
    return np.eye(Q.shape[0]) - Q @ Q.T


def build_neighborhoods(D0_radius: float, eps: float, good: tuple[float, float], c_d: float,
                        c_m: float, N_X: float, lambda_B: float, lambda_map: np.ndarray,
                        a_l: np.ndarray | None = None, norm: Callable | None = None
                        ) -> NeighborhoodTriple:
    """Constants and sets for the linearisation dichotomy.

    ``R = 2 D0_radius``; ``b = σ R / 2`` with σ the smallest nonzero singular
    value of Λ (the open-mapping margin of Λ on the complement of A_L);
    ``D`` is the closed ball of radius ``M_good · D0_radius`` in A_L.
    """
    if not (0 < eps < 1) and eps != 1:
        raise ValueError("eps must lie in (0, 1]")
    if D0_radius <= 0:
        raise ValueError("D0_radius must be positive")
    C, alpha = good
    M = m_good(eps, C, alpha, c_d, c_m, N_X, lambda_B)
    lam = np.asarray(lambda_map, dtype=float)
    kernel = linalg.nullspace(lam, 1e-10)
    if a_l is not None:
        a = linalg.span_basis(np.asarray(a_l, dtype=float))
        if kernel.shape[1] != a.shape[1] or linalg.rank(np.concatenate([kernel, a], 1)) != a.shape[1]:
            raise DegenerateLambda("kernel of Λ differs from A_L")
    else:
        a = kernel
    if kernel.shape[1] == lam.shape[1]:
        raise DegenerateLambda("Λ vanishes identically")
    s = np.linalg.svd(lam, compute_uv=False)
    sigma = float(s[s > 1e-10 * s.max()].min())
    R = 2.0 * D0_radius
    b = 0.5 * sigma * R
    kw = {}
    if norm is not None:
        kw["norm"] = norm
    return NeighborhoodTriple(M, R, b, lam, a, M * D0_radius, **kw)


class DichotomyResult(NamedTuple):
    outcome: str  # "Alternative1" | "Alternative2" | "Inconclusive"
    gamma: np.ndarray | None
    psi_fraction: float
    reason: str


def dichotomy_check(bundle: LinearisationBundle, g, omegas: Sequence, weights: Sequence[float],
                    triple: NeighborhoodTriple, enum_height: int, eps: float,
                    budget: int = DEFAULT_BUDGET) -> DichotomyResult:
    """Decide which alternative of the linearisation dichotomy holds on a sample.

    Alternative 1: one γ puts ``g ω γ p_L`` in Φ for every sampled ω.
    Alternative 2: the weighted fraction of ω whose orbit ``g ω Γ p_L`` meets Ψ is < eps.
    Orbit points within a relative ``1e-9`` of ∂Φ or ∂Ψ, or an enumeration
    without a completeness certificate, make the answer Inconclusive.
    """
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    gb = np.asarray(_block(g, bundle.place), float)
    radius = triple.M_good * triple.R
    per_omega = []
    for om in omegas:
        h = gb @ np.asarray(_block(om, bundle.place), float)
        orb = orbit_points(bundle, h, radius * (1 + 1e-6), enum_height, budget)
        if not orb.complete:
            return DichotomyResult("Inconclusive", None, float("nan"),
                                   "orbit enumeration lacks a completeness certificate")
        for v in orb.points:
            if triple.boundary_gap(v) < BOUNDARY_TOL:
                return DichotomyResult("Inconclusive", None, float("nan"),
                                       "orbit point on the boundary of Φ or Ψ")
        per_omega.append(orb)
    # Alternative 1: a common γ (up to the stabiliser, compare orbit points by γ p_L)
    candidates = None
    for om, orb in zip(omegas, per_omega):
        keys = {tuple(np.round(bundle.eta(gam.astype(float)), 6)): gam
                for gam, v in zip(orb.gammas, orb.points) if triple.in_phi(v)}
        candidates = keys if candidates is None else {
            k: gv for k, gv in candidates.items() if k in keys}
        if not candidates:
            break
    psi_hits = np.array([any(triple.in_psi(v) for v in orb.points) for orb in per_omega])
    frac = float(w[psi_hits].sum()) if len(psi_hits) else 0.0
    if candidates:
        key = sorted(candidates)[0]
        return DichotomyResult("Alternative1", candidates[key], frac, "common γ with gΩγp_L ⊂ Φ")
    if frac < eps:
        return DichotomyResult("Alternative2", None, frac, "orbit rarely meets Ψ")
    return DichotomyResult("Inconclusive", None, frac, "neither alternative observed")


# --------------------------------------------------------------------------
# focusing


class FocusingResult(NamedTuple):
    cls: str  # "O1Z" | "NotO1Z"
    curve: list
    growth_exponent: float | None
    ratio: float


def focusing_class_test(H: SubgroupDescriptor, g_seq: Sequence, params: Sequence[float] | None = None,
                        factor: float = 10.0) -> FocusingResult:
    """Boundedness test for ``(Ad_{g_i} X)_i`` over a basis X of Lie(H).

    The sequence is classified bounded (``O1Z``) when the curve
    ``max_X ||Ad_{g_i} X||`` stays within ``factor`` of its first value; the
    slope of log(curve) against ``params`` is reported alongside.
    """
    curve = []
    for g in g_seq:
        gb = np.asarray(_block(g, H.place), float)
        gi = np.linalg.inv(gb)
        vals = [np.linalg.norm(gb @ np.asarray(X, float) @ gi, 2) for X in H.lie_basis]
        curve.append(float(max(vals, default=0.0)))
    if not curve or curve[0] == 0:
        return FocusingResult("O1Z", curve, None, 1.0)
    ratio = max(curve) / curve[0]
    t = np.asarray(params if params is not None else range(len(curve)), dtype=float)
    slope = None
    if len(curve) >= 2 and np.ptp(t) > 0:
        slope = float(np.polyfit(t, np.log(curve), 1)[0])
    return FocusingResult("O1Z" if ratio <= factor else "NotO1Z", curve, slope, ratio)


# --------------------------------------------------------------------------
# reports


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return [_jsonable(y) for y in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_jsonable(y) for y in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def inputs_digest(inputs) -> str:
    blob = json.dumps(_jsonable(inputs), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def report_record(op: str, inputs, verdict: str, witness=None, curve=None) -> dict:
    """JSON-ready record ``{op, inputs_digest, verdict, witness, curve}``."""
    return {"op": op, "inputs_digest": inputs_digest(inputs), "verdict": verdict,
            "witness": _jsonable(witness), "curve": _jsonable(curve)}
