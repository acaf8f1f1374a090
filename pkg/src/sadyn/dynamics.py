"""Monte-Carlo engine on SL(2, R)/SL(2, Z) and its products and Hecke covers.

Points of ``G/Γ`` are represented through the transpose: the coset ``gΓ``
corresponds to ``Γ gᵀ`` in ``SL(2, Z) \\ SL(2, R)``, which is written in
fundamental-domain coordinates ``(x, y, φ)``: ``z = gᵀ·i = x + iy`` reduced
to ``|x| ≤ 1/2, |z| ≥ 1``, and ``φ = 2θ mod 2π`` for the residual rotation
angle θ (doubling removes the ±I ambiguity). The Haar probability is
``(3/π) dx dy / y² × dφ / 2π``.

Random streams are Philox generators keyed by (master seed, scenario, index,
chunk), so results do not depend on how chunks are spread over workers.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from . import groups, kernels
from .errors import NonTermination, UnsupportedL
from .goodfn import Chart, _exp_jacobian, _restricted_jacobian, chart_with_density
from .groups import GroupElement, SubgroupDescriptor
from .qs_arith import INF

CHUNK = 65_536
Y_CAP = 20.0
HAAR_TOTAL_AREA = math.pi / 3

# --------------------------------------------------------------------------
# random streams


def stream(seed: int, scenario: str, index: int, chunk: int) -> np.random.Generator:
    """Counter-based generator for one (scenario, index, chunk) cell."""
    ss = np.random.SeedSequence([seed & (2**64 - 1), zlib.crc32(scenario.encode()), index, chunk])
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _chunked(n: int, seed: int, scenario: str, index: int, fn: Callable, workers: int = 1):
    """Evaluate ``fn(rng, size)`` on fixed-size chunks and concatenate in chunk order."""
    sizes = [min(CHUNK, n - s) for s in range(0, n, CHUNK)]
    jobs = [(stream(seed, scenario, index, j), m) for j, m in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda job: fn(*job), jobs))
    else:
        parts = [fn(*job) for job in jobs]
    return parts


# --------------------------------------------------------------------------
# fundamental domain


class Reduced(NamedTuple):
    x: float
    y: float
    theta: float
    gamma: np.ndarray


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty(np.shape(theta) + (2, 2))
    out[..., 0, 0], out[..., 0, 1], out[..., 1, 0], out[..., 1, 1] = c, -s, s, c
    return out


def reduce_fundamental(g) -> Reduced:
    """Reduce ``g·i`` to the standard domain: ``γ g = n(x) a(y) r(θ)`` with γ in SL(2, Z)."""
    M = np.asarray(g.blocks[INF] if isinstance(g, GroupElement) else g, dtype=float)
    try:
        red, gam, _ = kernels.reduce_batch(M[None])
    except RuntimeError as exc:
        raise NonTermination(str(exc)) from exc
    a, b, c, d = red[0].ravel()
    den = c * c + d * d
    return Reduced(float((a * c + b * d) / den), float(1.0 / den), float(math.atan2(c, d)), gam[0])


def fundamental_coords(mats: np.ndarray) -> np.ndarray:
    """(x, y, φ) of the points ``Γ kᵀ`` for a batch of SL(2, R) matrices k."""
    k = np.swapaxes(np.asarray(mats, dtype=float).reshape(-1, 2, 2), 1, 2)
    red, _, _ = kernels.reduce_batch(k)
    a, b, c, d = red[:, 0, 0], red[:, 0, 1], red[:, 1, 0], red[:, 1, 1]
    den = c * c + d * d
    x = (a * c + b * d) / den
    y = 1.0 / den
    phi = np.mod(2.0 * np.arctan2(c, d), 2 * math.pi)
    return np.stack([x, y, phi], axis=1)


def element_from_coords(coords: np.ndarray) -> np.ndarray:
    """SL(2, R) matrices h with ``fundamental_coords(h) = coords`` (inverse map)."""
    x, y, phi = coords[:, 0], coords[:, 1], coords[:, 2]
    s = np.sqrt(y)
    na = np.zeros((len(x), 2, 2))
    na[:, 0, 0], na[:, 0, 1], na[:, 1, 1] = s, x / s, 1 / s
    k = na @ _rot(phi / 2)
    return np.swapaxes(k, 1, 2)


def project(mats: np.ndarray, factors: int) -> np.ndarray:
    """Fundamental coordinates of block-diagonal SL(2)^factors elements, factor by factor."""
    mats = np.asarray(mats, dtype=float)
    cols = [fundamental_coords(mats[:, 2 * j:2 * j + 2, 2 * j:2 * j + 2]) for j in range(factors)]
    return np.concatenate(cols, axis=1)


# --------------------------------------------------------------------------
# windows and sampling


@dataclass
class OmegaWindow:
    """A window Ω in H given in chart coordinates; μ(Ω) is normalised to 1."""

    H: SubgroupDescriptor
    window: tuple | None = None  # (lo, hi) per chart coordinate
    chart: Chart | None = None
    depth: int = 12  # digit depth for compact p-adic windows

    def __post_init__(self):
        one_param_compact = self.H.compact and len(self.H.lie_basis) == 1 and self.H.place is INF
        if self.window is None and one_param_compact:
            self.window = (0.0, 2 * math.pi)
        if self.chart is None:
            radius = 1.0 if self.window is None else max(abs(float(v)) for v in np.ravel(self.window))
            self.chart = chart_with_density(self.H, radius)
        if self.chart.kind != "digits":
            if self.window is None:
                raise ValueError("a window is required for this chart")
            lo, hi = np.atleast_1d(self.window[0]), np.atleast_1d(self.window[1])
            if np.any(hi <= lo):
                raise ValueError("window must have positive chart measure")


@dataclass
class WindowSample:
    """Weighted elements of H: real matrices or p-adic residues modulo p^depth."""

    elements: np.ndarray
    weights: np.ndarray
    place: object = INF
    depth: int = 0
    chart_coords: np.ndarray | None = None


def _chart_points(omega: OmegaWindow, rng: np.random.Generator, n: int):
    H, chart = omega.H, omega.chart
    lo, hi = (np.atleast_1d(np.asarray(w, float)) for w in omega.window)
    u = rng.uniform(size=(n, len(lo))) * (hi - lo) + lo
    if chart.kind == "angle":
        R = _rot(u[:, 0])
        if H.group_tag == "SL2xSL2":
            out = np.zeros((n, 4, 4))
            out[:, :2, :2] = out[:, 2:, 2:] = R
            return out, np.ones(n), u
        return R, np.ones(n), u
    basis = [np.asarray(b, float) for b in H.lie_basis]
    mats = np.empty((n, basis[0].shape[0], basis[0].shape[0]))
    w = np.empty(n)
    full = len(basis) == groups.lie_dim(H.group_tag)
    abelian = all(np.allclose(groups.bracket(a, b), 0) for a in basis for b in basis)
    Xs = np.einsum("nk,kij->nij", u, np.stack(basis))
    mats[:] = expm_batch(Xs)
    for j in range(n):
        X = Xs[j]
        if abelian:
            w[j] = 1.0
        elif full:
            w[j] = _exp_jacobian(X, H.group_tag)
        else:
            w[j] = _restricted_jacobian(X, basis, H.group_tag)
    return mats, w, u


def _expm_sl2(X: np.ndarray) -> np.ndarray:
    """Batch exponential of traceless 2x2 matrices via ``X² = δ I``."""
    delta = -(X[:, 0, 0] * X[:, 1, 1] - X[:, 0, 1] * X[:, 1, 0])
    r = np.sqrt(np.abs(delta))
    small = r < 1e-8
    rs = np.where(small, 1.0, r)
    c = np.where(delta >= 0, np.cosh(r), np.cos(r))
    s = np.where(small, 1.0 + delta / 6.0, np.where(delta >= 0, np.sinh(r), np.sin(r)) / rs)
    return c[:, None, None] * np.eye(2) + s[:, None, None] * X


def expm_batch(X: np.ndarray) -> np.ndarray:
    """Matrix exponential of a batch, closed form on block-diagonal sl(2) pieces."""
    X = np.asarray(X, dtype=float)
    size = X.shape[1]
    if size in (2, 4):
        blocks = [(j, j + 2) for j in range(0, size, 2)]
        off = np.ones((size, size), bool)
        for lo, hi in blocks:
            off[lo:hi, lo:hi] = False
        if not np.any(X[:, off]):
            out = np.zeros_like(X)
            for lo, hi in blocks:
                out[:, lo:hi, lo:hi] = _expm_sl2(X[:, lo:hi, lo:hi])
            return out
    return np.stack([scipy.linalg.expm(x) for x in X])


def _sl2_zp_haar(rng: np.random.Generator, n: int, p: int, depth: int) -> np.ndarray:
    """Haar-uniform residues of SL(2, Z_p) modulo p^depth.

    The first column is uniform on primitive vectors (rejection), the second
    column is then uniform on the solutions of ``det = 1``.
    """
    q = p**depth
    cols = np.empty((0, 2), dtype=np.int64)
    while len(cols) < n:
        m = max(16, int(1.5 * (n - len(cols))))
        cand = rng.integers(0, q, size=(m, 2), dtype=np.int64)
        ok = (cand[:, 0] % p != 0) | (cand[:, 1] % p != 0)
        cols = np.concatenate([cols, cand[ok]])[:n]
    a, c = cols[:, 0], cols[:, 1]
    t = rng.integers(0, q, n, dtype=np.int64)
    a_unit = a % p != 0
    inv = np.vectorize(lambda u: pow(int(u), -1, q), otypes=[np.int64])
    ia = inv(np.where(a_unit, a, 1))
    ic = inv(np.where(a_unit, 1, c))
    # a unit: b = t free, d = (1 + b c) / a; otherwise d = t free, b = (a d - 1) / c
    b = np.where(a_unit, t, ((a * t - 1) % q) * ic % q)
    d = np.where(a_unit, ((1 + t * c) % q) * ia % q, t)
    out = np.empty((n, 2, 2), dtype=np.int64)
    out[:, 0, 0], out[:, 0, 1], out[:, 1, 0], out[:, 1, 1] = a, b, c, d
    return out


def sample_window(omega: OmegaWindow, n: int, seed: int, scenario: str = "window",
                  index: int = 0, workers: int = 1) -> WindowSample:
    """``n`` chart-uniform draws from Ω, importance-weighted by the Haar density, total weight 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if omega.chart.kind == "digits":
        p = omega.H.place.p
        parts = _chunked(n, seed, scenario, index,
                         lambda rng, m: _sl2_zp_haar(rng, m, p, omega.depth), workers)
        el = np.concatenate(parts)
        return WindowSample(el, np.full(n, 1.0 / n), omega.H.place, omega.depth)
    parts = _chunked(n, seed, scenario, index, lambda rng, m: _chart_points(omega, rng, m), workers)
    el = np.concatenate([p[0] for p in parts])
    w = np.concatenate([p[1] for p in parts])
    u = np.concatenate([p[2] for p in parts])
    return WindowSample(el, w / w.sum(), INF, 0, u)


# --------------------------------------------------------------------------
# empirical measures and test functions


@dataclass
class EmpiricalMeasure:
    """Weighted points in fundamental coordinates, three columns per real factor."""

    points: np.ndarray
    weights: np.ndarray
    factors: int = 1
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        total = self.weights.sum()
        if abs(total - 1.0) > 1e-12:
            self.weights = self.weights / total

    @property
    def n(self) -> int:
        return len(self.weights)

    def factor(self, j: int) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.points[:, 3 * j:3 * j + 3], self.weights, 1, self.labels,
                                dict(self.meta, factor=j))

    def integrate(self, f: Callable) -> tuple[float, float]:
        """Weighted mean of f and its 3σ Monte-Carlo half-width."""
        v = np.asarray(f(self.points), dtype=float)
        mean = float(np.dot(self.weights, v))
        var = float(np.dot(self.weights**2, (v - mean) ** 2))
        return mean, 3.0 * math.sqrt(var)

    def is_reduced(self, tol: float = 1e-9) -> bool:
        ok = True
        for j in range(self.factors):
            x, y = self.points[:, 3 * j], self.points[:, 3 * j + 1]
            ok &= bool(np.all(np.abs(x) <= 0.5 + tol) and np.all(x * x + y * y >= 1 - tol))
        return ok


@dataclass(frozen=True)
class TestFunction:
    name: str
    fn: Callable
    sup: float = 1.0

    def __call__(self, pts):
        return self.fn(pts)


def _ramp_up(y, c, w=0.1):
    """Smoothed indicator of {y > c}: 0 below c - w, 1 above c."""
    return np.clip((y - (c - w)) / w, 0.0, 1.0)


def _cutoff(y):
    return np.clip(3.0 - y, 0.0, 1.0)


def _arc(x, y, w=0.1):
    """0 on the arc |z| = 1, 1 beyond |z|² = 1 + w.

    S maps the arc to itself with x -> -x, so functions odd in x need this
    factor to be continuous on G/Γ.
    """
    return np.clip((x * x + y * y - 1.0) / w, 0.0, 1.0)


# primitive coefficient pairs (a, b), one per ±pair, that can reach length < LAT_R
_LAT_COEFFS = np.array([(0, 1)] + [(1, b) for b in range(-3, 4)], dtype=float)
LAT_R = 1.25


def lattice_harmonic(pts: np.ndarray, k: int, col: int = 0) -> np.ndarray:
    """``Σ_v ψ(|h v|) cos(k · arg(h v)) / 2`` over primitive v ∈ Z².

    h is the matrix with fundamental coordinates ``pts``; the sum is invariant
    under h -> h γ, hence a continuous function on G/Γ, and rotating h by
    ``r(-φ/2)`` turns ``arg(hv)`` by ``-φ/2``. ψ is 1 below 1 and 0 above
    LAT_R. At most six primitive vectors of a unimodular lattice are shorter
    than LAT_R, so the value lies in [-3, 3]. Only even k are Γ-invariant.
    """
    x, y, phi = pts[:, col], pts[:, col + 1], pts[:, col + 2]
    s = np.sqrt(y)
    a, b = _LAT_COEFFS[:, 0][None, :], _LAT_COEFFS[:, 1][None, :]
    # h v = r(-φ/2) (a √y, (a x + b) / √y)
    u1 = a * s[:, None]
    u2 = (a * x[:, None] + b) / s[:, None]
    r = np.hypot(u1, u2)
    ang = np.arctan2(u2, u1) - phi[:, None] / 2
    psi = np.clip((LAT_R - r) / (LAT_R - 1.0), 0.0, 1.0)
    return (psi * np.cos(k * ang)).sum(axis=1)


def _factor_functions(j: int, prefix: str) -> list[TestFunction]:
    X, Y, P = 3 * j, 3 * j + 1, 3 * j + 2
    return [
        TestFunction(f"{prefix}y>1.5", lambda p: _ramp_up(p[:, Y], 1.5)),
        TestFunction(f"{prefix}y>2", lambda p: _ramp_up(p[:, Y], 2.0)),
        TestFunction(f"{prefix}y>3", lambda p: _ramp_up(p[:, Y], 3.0)),
        TestFunction(f"{prefix}cos2pix", lambda p: np.cos(2 * math.pi * p[:, X]) * _cutoff(p[:, Y])),
        TestFunction(f"{prefix}sin2pix",
                     lambda p: np.sin(2 * math.pi * p[:, X]) * _cutoff(p[:, Y]) * _arc(p[:, X], p[:, Y])),
        TestFunction(f"{prefix}lat_cos2", lambda p: lattice_harmonic(p, 2, X), 3.0),
        TestFunction(f"{prefix}lat_cos4", lambda p: lattice_harmonic(p, 4, X), 3.0),
        TestFunction(f"{prefix}1/y", lambda p: np.minimum(1.0, 1.0 / p[:, Y])),
    ]


class TestFunctionDict(list):
    """An ordered list of bounded test functions with declared sup norms."""

    __test__ = False

    @classmethod
    def default(cls, factors: int = 1) -> "TestFunctionDict":
        if factors == 1:
            return cls(_factor_functions(0, ""))
        out = cls()
        for j in range(factors):
            out.extend(_factor_functions(j, f"{j + 1}:"))
        if factors == 2:
            out.extend([
                TestFunction("1x2:lat_cos2", lambda p: lattice_harmonic(p, 2, 0)
                             * lattice_harmonic(p, 2, 3), 9.0),
                TestFunction("1x2:y>1.5", lambda p: _ramp_up(p[:, 1], 1.5) * _ramp_up(p[:, 4], 1.5)),
                TestFunction("1x2:cos2pix", lambda p: np.cos(2 * math.pi * p[:, 0]) * _cutoff(p[:, 1])
                             * lattice_harmonic(p, 2, 3), 3.0),
            ])
        return out

    @property
    def names(self) -> list[str]:
        return [f.name for f in self]


class Integrals(NamedTuple):
    values: np.ndarray
    errors: np.ndarray  # 3σ half-widths


def integrals(mu: EmpiricalMeasure, dictionary: Sequence[TestFunction]) -> Integrals:
    res = [mu.integrate(f) for f in dictionary]
    return Integrals(np.array([r[0] for r in res]), np.array([r[1] for r in res]))


class Distance(NamedTuple):
    value: float
    error: float  # 3σ half-width of the maximising term
    argmax: str


def distance_between(a: Integrals, b: Integrals, dictionary: Sequence[TestFunction]) -> Distance:
    sup = np.array([f.sup for f in dictionary])
    d = np.abs(a.values - b.values) / sup
    k = int(np.argmax(d))
    return Distance(float(d[k]), float((a.errors[k] + b.errors[k]) / sup[k]), dictionary[k].name)


def weak_distance(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure,
                  dictionary: Sequence[TestFunction] | None = None) -> float:
    """``max_f |∫f dμ₁ − ∫f dμ₂| / sup|f|`` over the dictionary."""
    if dictionary is None:
        dictionary = TestFunctionDict.default(mu1.factors)
    if mu1.factors != mu2.factors:
        raise ValueError("measures live on different spaces")
    return distance_between(integrals(mu1, dictionary), integrals(mu2, dictionary), dictionary).value


# --------------------------------------------------------------------------
# translation and projection


def _real_block(g, size):
    if g is None:
        return np.eye(size)
    if isinstance(g, GroupElement):
        return np.asarray(g.blocks[INF], dtype=float)
    return np.asarray(g, dtype=float)


def translate_and_project(samples: WindowSample, g, factors: int = 1,
                          hecke: tuple[int, int] | None = None) -> EmpiricalMeasure:
    """Push the window sample by left multiplication with g and project to G/Γ.

    Real samples: every point ``g ω`` is reduced factor by factor. Compact
    p-adic samples with ``hecke = (p, i)``: the translate ``diag(p^-i, p^i) k``
    splits as ``k' γ'`` with ``k' ∈ SL(2, Z_p)`` (absorbed) and
    ``γ' ∈ SL(2, Z[1/p])``, leaving the real point ``g_∞ γ'^{-1}`` and the
    Hecke-leaf label ``(A, num)``.
    """
    if samples.place is INF or getattr(samples.place, "is_archimedean", False):
        G = _real_block(g, samples.elements.shape[1])
        pts = project(np.einsum("ij,njk->nik", G, samples.elements), factors)
        return EmpiricalMeasure(pts, samples.weights, factors)
    if hecke is None:
        raise ValueError("p-adic samples need the Hecke translator (p, i)")
    p, i = hecke
    if samples.depth < 2 * i + 1:
        raise ValueError(f"digit depth {samples.depth} too small for i = {i}")
    A, num = kernels.hecke_batch(samples.elements, p, i)
    real = np.zeros((len(A), 2, 2))
    pa = np.power(float(p), A.astype(float))
    real[:, 0, 0] = pa
    real[:, 0, 1] = num / float(p) ** i
    real[:, 1, 1] = 1.0 / pa
    G = _real_block(g, 2)
    pts = project(np.einsum("ij,njk->nik", G, real), 1)
    return EmpiricalMeasure(pts, samples.weights, 1, np.stack([A, num], axis=1))


# --------------------------------------------------------------------------
# Haar measure and reference limits


def haar_coords(rng: np.random.Generator, n: int, y_cap: float = Y_CAP) -> np.ndarray:
    """Exact Haar samples in fundamental coordinates.

    Below ``y_cap``: rejection from ``dx dy / y²`` on the box
    ``[-1/2, 1/2] × [√3/2, y_cap]``; above it the cusp, whose mass
    ``(1 / y_cap) / (π / 3)`` is known in closed form, is sampled by inversion.
    """
    cusp_mass = (1.0 / y_cap) / HAAR_TOTAL_AREA
    in_cusp = rng.uniform(size=n) < cusp_mass
    out = np.empty((n, 3))
    m = int(in_cusp.sum())
    u = rng.uniform(size=(m, 2))
    out[in_cusp, 0] = u[:, 0] - 0.5
    out[in_cusp, 1] = y_cap / (1.0 - u[:, 1])
    body = np.flatnonzero(~in_cusp)
    lo_inv, hi_inv = 1.0 / (math.sqrt(3) / 2), 1.0 / y_cap
    filled = 0
    while filled < len(body):
        k = int(1.3 * (len(body) - filled)) + 16
        x = rng.uniform(size=k) - 0.5
        y = 1.0 / (lo_inv + (hi_inv - lo_inv) * rng.uniform(size=k))
        ok = x * x + y * y >= 1.0
        take = min(int(ok.sum()), len(body) - filled)
        idx = body[filled:filled + take]
        out[idx, 0], out[idx, 1] = x[ok][:take], y[ok][:take]
        filled += take
    out[:, 2] = rng.uniform(size=n) * 2 * math.pi
    return out


def haar_measure(n: int, seed: int, scenario: str = "haar", index: int = 0,
                 factors: int = 1, workers: int = 1) -> EmpiricalMeasure:
    parts = _chunked(n, seed, scenario, index,
                     lambda rng, m: np.concatenate([haar_coords(rng, m) for _ in range(factors)], 1),
                     workers)
    return EmpiricalMeasure(np.concatenate(parts), np.full(n, 1.0 / n), factors)


def haar_quadrature(f: TestFunction, nx: int = 64, nu: int = 96, nphi: int = 32) -> float:
    """Deterministic Haar integral of a one-factor test function.

    With ``u = 1/y`` the Haar density is ``(3/π) dx du`` on
    ``{|x| ≤ 1/2, 0 < u ≤ (1 - x²)^{-1/2}}``; Gauss-Legendre in x and u,
    uniform trapezoid (exact for trigonometric polynomials) in φ.
    """
    gx, wx = np.polynomial.legendre.leggauss(nx)
    gu, wu = np.polynomial.legendre.leggauss(nu)
    total = 0.0
    phis = np.arange(nphi) * 2 * math.pi / nphi
    for xi, wxi in zip(0.5 * gx, 0.5 * wx):
        umax = 1.0 / math.sqrt(1.0 - xi * xi)
        # split at u = 1 / 3.1 so the smoothed cusp indicators are resolved
        edges = [0.0] + [1.0 / c for c in (3.1, 3.0, 2.1, 2.0, 1.6, 1.5) if 1.0 / c < umax] + [umax]
        for lo, hi in zip(edges[:-1], edges[1:]):
            u = lo + (hi - lo) * (gu + 1) / 2
            wu_ = wu * (hi - lo) / 2
            U, PH = np.meshgrid(u, phis, indexing="ij")
            pts = np.stack([np.full(U.size, xi), 1.0 / U.ravel(), PH.ravel()], axis=1)
            vals = np.asarray(f(pts), float).reshape(U.shape).mean(axis=1)
            total += wxi * float(np.dot(wu_, vals))
    return total * 3.0 / math.pi


@dataclass
class LimitFormulaSpec:
    """Expected limit ``g∞ · ∫_Ω ω n∞ μ_{L‡} dμ(ω)`` of the translated measures."""

    g_inf: np.ndarray
    n_inf: np.ndarray
    L: SubgroupDescriptor
    omega: OmegaWindow | None

    def __post_init__(self):
        verdict = groups.ratner_class_test(self.L)
        if not verdict.in_class:
            raise UnsupportedL(f"{self.L.id} is not in the Ratner class ({verdict.reason})")
        n = np.asarray(self.n_inf, float)
        span = self.L.span()
        ninv = np.linalg.inv(n)
        for X in self.L.lie_basis:
            if not span.contains(n @ np.asarray(X, float) @ ninv):
                raise ValueError("n_inf does not normalise L")


def _l_dagger_elements(L: SubgroupDescriptor, rng: np.random.Generator, n: int) -> np.ndarray:
    tag, ident = L.group_tag, L.id
    if L.factor == "Trivial":
        return np.broadcast_to(np.eye(groups.matrix_size(tag)), (n,) + (groups.matrix_size(tag),) * 2)
    if ident == "sl2R.full":
        return element_from_coords(haar_coords(rng, n))
    if ident == "sl2R.unipotent":
        s = rng.uniform(size=n)
        out = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
        out[:, 0, 1] = s
        return out
    if ident in ("sl2xsl2.first_factor", "sl2xsl2.second_factor", "sl2xsl2.full"):
        out = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
        if ident != "sl2xsl2.second_factor":
            out[:, :2, :2] = element_from_coords(haar_coords(rng, n))
        if ident != "sl2xsl2.first_factor":
            out[:, 2:, 2:] = element_from_coords(haar_coords(rng, n))
        return out
    raise UnsupportedL(f"no sampler for μ_L‡ with L = {ident}")


def reference_measure(spec: LimitFormulaSpec, n: int, seed: int, scenario: str = "reference",
                      factors: int = 1, workers: int = 1) -> EmpiricalMeasure:
    """Double Monte-Carlo sample of ``g∞ ω n∞ ŷ`` with ω ~ μ_Ω and ŷ ~ μ_L‡."""
    size = groups.matrix_size(spec.L.group_tag)
    if spec.omega is None or spec.omega.chart.kind == "digits":
        om = WindowSample(np.broadcast_to(np.eye(size), (n, size, size)), np.full(n, 1.0 / n))
    else:
        om = sample_window(spec.omega, n, seed, scenario + "/omega", 0, workers)
    parts = _chunked(n, seed, scenario + "/fiber", 0,
                     lambda rng, m: np.array(_l_dagger_elements(spec.L, rng, m)), workers)
    yhat = np.concatenate(parts)
    left = np.einsum("ij,njk->nik", np.asarray(spec.g_inf, float), om.elements)
    mats = np.einsum("nij,jk,nkl->nil", left, np.asarray(spec.n_inf, float), yhat)
    return EmpiricalMeasure(project(mats, factors), om.weights, factors)


def reference_limit_measure(spec: LimitFormulaSpec, dictionary: Sequence[TestFunction], n: int,
                            seed: int, factors: int = 1, workers: int = 1) -> Integrals:
    """Dictionary integrals of the expected limit measure, with 3σ errors."""
    return integrals(reference_measure(spec, n, seed, factors=factors, workers=workers), dictionary)


# --------------------------------------------------------------------------
# experiments


def systole_from_y(y: np.ndarray) -> np.ndarray:
    """Systole of the unimodular lattice attached to a reduced point: ``y^{-1/2}``."""
    return 1.0 / np.sqrt(y)


def tightness_profile(mu: EmpiricalMeasure, thresholds: Sequence[float]) -> list[float]:
    """Mass of points whose (smallest factor) systole is below each threshold."""
    ys = np.max(mu.points[:, 1::3], axis=1)
    sys = systole_from_y(ys)
    return [float(mu.weights[sys < t].sum()) for t in thresholds]


def strong_convergence_check(omega: OmegaWindow, shifts: Sequence[float], n: int, seed: int,
                             bins: int = 50) -> list[float]:
    """Total-variation estimates between ``h_s μ_Ω`` and ``μ_Ω`` for ``h_s = Θ(s) → e``.

    For a one-parameter chart ``h_s μ_Ω`` is the window shifted by s in chart
    coordinates; TV is estimated from histograms of the chart coordinate.
    """
    sample = sample_window(omega, n, seed, "strong")
    if sample.chart_coords is None or sample.chart_coords.shape[1] != 1:
        raise ValueError("strong-convergence check needs a one-parameter window")
    u = sample.chart_coords[:, 0]
    lo, hi = float(omega.window[0]), float(omega.window[1])
    out = []
    for s in shifts:
        edges = np.linspace(lo, hi + abs(s), bins + 1) if s >= 0 else np.linspace(lo + s, hi, bins + 1)
        p, _ = np.histogram(u, edges, weights=sample.weights)
        q, _ = np.histogram(u + s, edges, weights=sample.weights)
        out.append(0.5 * float(np.abs(p - q).sum()))
    return out


@dataclass
class Scenario:
    """Everything a convergence experiment needs."""

    name: str
    space: str  # "sl2" | "sl2xsl2" | "hecke"
    H: str
    window: tuple | None
    family: str  # "diag" | "hecke"
    params: list
    expected: str  # "limit" | "escape"
    L: str | None = None
    samples: int = 100_000
    ref_samples: int = 100_000
    seed: int = 0
    tolerance: float = 0.05
    thresholds: tuple = (0.5, 0.3, 0.2, 0.1)
    compact_y: float = 10.0
    escape_from: float = 2.0
    escape_mass: float = 0.01
    prime: int = 2
    depth: int = 0
    marginal_tolerance: float | None = None
    joint_tolerance: float | None = None
    strong_shifts: tuple = (0.1, 0.03, 0.01)

    @property
    def factors(self) -> int:
        return 2 if self.space == "sl2xsl2" else 1


class ExperimentRow(NamedTuple):
    scenario: str
    i: int
    translator_param: float
    test_fn: str
    empirical: float
    reference: float
    mc_err: float
    distance: float


@dataclass
class ExperimentReport:
    scenario: str
    rows: list
    distances: list
    distance_errors: list
    tightness: list
    compact_mass: list
    strong_tv: list
    checks: dict
    verdict: str
    summary: str
    extra: dict = field(default_factory=dict)


def translator(scn: Scenario, t: float) -> np.ndarray:
    a = np.diag([math.exp(t), math.exp(-t)])
    if scn.space == "sl2xsl2":
        return scipy.linalg.block_diag(a, np.eye(2))
    return a


def _is_monotone(d, err) -> bool:
    return all(d[j + 1] <= d[j] + err[j] + err[j + 1] for j in range(len(d) - 1))


def convergence_experiment(scn: Scenario, workers: int = 1) -> ExperimentReport:
    """Run a scenario: translates, reference limit, distances, tightness and verdicts."""
    H = groups.catalogue(scn.H)
    factors = scn.factors
    dictionary = TestFunctionDict.default(factors)
    omega = OmegaWindow(H, scn.window, depth=max(scn.depth, 2 * int(max(scn.params)) + 2)
                        if scn.family == "hecke" else 12)
    ref = None
    ref_mu = None
    if scn.expected == "limit":
        L = groups.catalogue(scn.L)
        size = groups.matrix_size(L.group_tag)
        spec = LimitFormulaSpec(np.eye(size), np.eye(size), L,
                                omega if scn.family != "hecke" else None)
        ref_mu = reference_measure(spec, scn.ref_samples, scn.seed, scn.name + "/ref", factors, workers)
        ref = integrals(ref_mu, dictionary)
    rows, dists, derrs, tight, compact = [], [], [], [], []
    marginals = []
    for i, t in enumerate(scn.params):
        sample = sample_window(omega, scn.samples, scn.seed, scn.name, i, workers)
        if scn.family == "hecke":
            mu = translate_and_project(sample, None, 1, hecke=(scn.prime, int(t)))
        else:
            mu = translate_and_project(sample, translator(scn, t), factors)
        emp = integrals(mu, dictionary)
        tight.append(tightness_profile(mu, scn.thresholds))
        ys = np.max(mu.points[:, 1::3], axis=1)
        compact.append(float(mu.weights[ys <= scn.compact_y].sum()))
        if ref is not None:
            dist = distance_between(emp, ref, dictionary)
            dists.append(dist.value)
            derrs.append(dist.error)
            if factors == 2:
                marginals.append(_marginal_distances(mu, ref_mu))
        for k, f in enumerate(dictionary):
            rows.append(ExperimentRow(scn.name, i, float(t), f.name, float(emp.values[k]),
                                      float(ref.values[k]) if ref is not None else float("nan"),
                                      float(emp.errors[k] + (ref.errors[k] if ref is not None else 0.0)),
                                      dists[-1] if ref is not None else float("nan")))
    strong = []
    if H.factor in ("Rotation", "DiagonalTorus", "UnipotentUpper", "DiagonalEmbedding") and \
            omega.chart.kind != "digits" and scn.strong_shifts:
        strong = strong_convergence_check(omega, scn.strong_shifts, min(scn.samples, 100_000), scn.seed)
    checks = {}
    if scn.expected == "limit":
        checks["final_distance"] = dists[-1] < scn.tolerance
        checks["monotone"] = _is_monotone(dists, derrs)
        if factors == 2 and marginals:
            f1 = [m[0] for m in marginals]
            f2 = [m[1] for m in marginals]
            if scn.marginal_tolerance is not None:
                checks["factor1_final"] = f1[-1] < scn.tolerance
                checks["factor2_all"] = max(f2) < scn.marginal_tolerance
            if scn.joint_tolerance is not None:
                checks["joint_final"] = dists[-1] < scn.joint_tolerance
                checks["final_distance"] = True
    else:
        late = [m for t, m in zip(scn.params, compact) if t >= scn.escape_from]
        checks["escape"] = bool(late) and max(late) < scn.escape_mass
    if strong:
        checks["strong_convergence"] = strong[-1] < strong[0]
    ok = all(checks.values())
    if scn.expected == "limit":
        summary = (f"{scn.name}: {'PASS' if ok else 'FAIL'} (final distance {dists[-1]:.3f} "
                   f"{'<' if dists[-1] < scn.tolerance else '>='} {scn.tolerance:g})")
    else:
        summary = (f"{scn.name}: {'PASS' if ok else 'FAIL'} (escape "
                   f"{'confirmed' if checks['escape'] else 'not observed'}, compact mass {max(late, default=float('nan')):.3f})")
    extra = {"marginals": marginals} if marginals else {}
    return ExperimentReport(scn.name, rows, dists, derrs, tight, compact, strong, checks,
                            "pass" if ok else "fail", summary, extra)


def _marginal_distances(mu: EmpiricalMeasure, ref_mu: EmpiricalMeasure) -> tuple[float, float]:
    d1 = TestFunctionDict.default(1)
    return (weak_distance(mu.factor(0), ref_mu.factor(0), d1),
            weak_distance(mu.factor(1), ref_mu.factor(1), d1))
