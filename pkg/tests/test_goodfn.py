import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sadyn import goodfn, groups
from sadyn.errors import DegenerateFit
from sadyn.qs_arith import INF, BallQS, Place

EPS = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 0.3, 1.0]


def real_candidate(coeffs, center=0.0, radius=1.0):
    return goodfn.GoodCandidate(BallQS({INF: (center,)}, radius), goodfn.Polynomial(coeffs))


def monomial(d):
    return real_candidate([0.0] * d + [1.0])


def test_linear_on_unit_interval():
    f = real_candidate([0.0, 1.0], center=0.5, radius=0.5)
    v = goodfn.verify_good(f, goodfn.GoodConstants(1.0, 1.0), EPS)
    assert v.passed
    for e, m in v.measured.items():
        assert m == pytest.approx(e, abs=v.resolution)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_monomials_closed_form(d):
    v = goodfn.verify_good(monomial(d), goodfn.GoodConstants(1.0, 1.0 / d), EPS)
    assert v.passed
    # |x|^d < ε on [-1, 1] has measure 2 ε^{1/d}, i.e. ratio ε^{1/d}
    for e, m in v.measured.items():
        assert m == pytest.approx(e ** (1.0 / d), abs=v.resolution)


def test_monomial_fails_too_strong_exponent():
    v = goodfn.verify_good(monomial(2), goodfn.GoodConstants(1.0, 1.0), EPS)
    assert not v.passed and v.worst_ratio > v.bound


@pytest.mark.parametrize("consts", [(1e-6, 1.0), (1.0, 1.0), (5.0, 0.2)])
def test_zero_function_passes(consts):
    assert goodfn.verify_good(real_candidate([0.0]), goodfn.GoodConstants(*consts), EPS).passed


def test_eps_grid_domain():
    with pytest.raises(ValueError):
        goodfn.verify_good(monomial(1), goodfn.GoodConstants(1, 1), [0.0, 0.5])


@pytest.mark.parametrize("d, center, radius, alpha", [
    (2, 0.0, 1.0, 0.5), (1, 0.5, 0.5, 1.0), (3, 0.0, 1.0, 1 / 3)])
def test_fit_recovers_exponent(d, center, radius, alpha):
    f = real_candidate([0.0] * d + [1.0], center, radius)
    consts = goodfn.fit_good(f, EPS)
    assert abs(consts.alpha - alpha) < 0.05
    assert goodfn.verify_good(f, consts, EPS).passed


def test_fit_constant_function_is_degenerate():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        consts = goodfn.fit_good(real_candidate([2.0]), EPS)
    assert consts.alpha == 1.0
    assert any(issubclass(x.category, DegenerateFit) for x in w)


def test_two_adic_abs_value():
    p = 2
    f = goodfn.GoodCandidate(BallQS({Place(p): (0,)}, 1.0), goodfn.PadicPolynomialAbs([0, 1], p))
    eps = [2.0**-k + 1e-9 for k in range(1, 6)]
    v = goodfn.verify_good(f, goodfn.GoodConstants(1.0, 1.0), eps)
    assert v.passed
    # |x|_2 < 2^-k + δ  ⟺  x ∈ 2^k Z_2, fraction 2^-k
    for e, m in v.measured.items():
        k = round(-math.log2(e))
        assert m == pytest.approx(2.0**-k, abs=v.resolution)


poly = st.lists(st.floats(-3, 3, allow_nan=False).filter(lambda c: abs(c) > 1e-3),
                min_size=2, max_size=4)


@pytest.mark.filterwarnings("ignore::sadyn.errors.DegenerateFit")
@settings(max_examples=15)
@given(poly)
def test_monotonicity_in_constants(coeffs):
    f = real_candidate(coeffs)
    c = goodfn.fit_good(f, EPS, n_points=20_000)
    assert goodfn.verify_good(f, c, EPS, n_points=20_000).passed
    assert goodfn.verify_good(f, goodfn.GoodConstants(2 * c.C, c.alpha), EPS, n_points=20_000).passed
    assert goodfn.verify_good(f, goodfn.GoodConstants(c.C, c.alpha / 2), EPS, n_points=20_000).passed


@pytest.mark.filterwarnings("ignore::sadyn.errors.DegenerateFit")
@settings(max_examples=15)
@given(poly, poly)
def test_sup_closure(c1, c2):
    f, g = goodfn.Polynomial(c1), goodfn.Polynomial(c2)
    ball = BallQS({INF: (0.0,)}, 1.0)
    cf = goodfn.fit_good(goodfn.GoodCandidate(ball, f), EPS, n_points=20_000)
    cg = goodfn.fit_good(goodfn.GoodCandidate(ball, g), EPS, n_points=20_000)
    both = goodfn.GoodConstants(max(cf.C, cg.C), min(cf.alpha, cg.alpha))
    h = goodfn.GoodCandidate(ball, lambda x: np.maximum(np.abs(f(x)), np.abs(g(x))))
    assert goodfn.verify_good(h, both, EPS, n_points=20_000).passed


# ---------------------------------------------------------------------------
# Besicovich covers


def stab_oracle(balls, grid):
    """Brute-force multiplicity on a grid plus every ball endpoint."""
    pts = np.concatenate([grid] + [[c - r, c + r] for c, r in balls])
    c = np.array([b[0] for b in balls])[None, :]
    r = np.array([b[1] for b in balls])[None, :]
    return int((np.abs(pts[:, None] - c) <= r).sum(axis=1).max())


def test_unit_radii_on_interval():
    pts = np.arange(1001) * 1e-3
    cov = goodfn.besicovich_cover(pts, lambda x: 1.0)
    assert cov.covered and cov.multiplicity <= 2
    assert cov.multiplicity == stab_oracle(cov.balls, pts)


def test_single_point():
    cov = goodfn.besicovich_cover([0.3], lambda x: 0.1)
    assert len(cov.balls) == 1 and cov.multiplicity == 1 and cov.covered


def test_random_real_covers():
    rng = np.random.default_rng(7)
    grid = np.linspace(-1, 2, 3001)
    for _ in range(1000):
        pts = np.sort(rng.uniform(0, 1, rng.integers(1, 40)))
        radii = dict(zip(pts, rng.uniform(0.005, 0.5, len(pts))))
        cov = goodfn.besicovich_cover(pts, radii.__getitem__)
        assert cov.covered and cov.multiplicity <= 2
        assert stab_oracle(cov.balls, grid) <= 2
        for x in pts:
            assert any(abs(x - c) <= r for c, r in cov.balls)


def test_random_ultrametric_covers():
    rng = np.random.default_rng(8)
    p = 2
    for _ in range(1000):
        pts = [Fraction(int(a), 2 ** int(m)) for a, m in
               zip(rng.integers(-64, 64, rng.integers(1, 12)), rng.integers(0, 3, 12))]
        radii = {x: float(rng.uniform(0.01, 8)) for x in pts}
        cov = goodfn.besicovich_cover(pts, radii.__getitem__, Place(p))
        assert cov.covered and cov.multiplicity == 1


# ---------------------------------------------------------------------------
# charts


def test_chart_examples():
    assert goodfn.chart_with_density(groups.catalogue("sl2R.rotation"), math.pi).c_m == 1.0
    assert goodfn.chart_with_density(groups.catalogue("sl2R.full"), 0.1).c_m <= 1.1
    compact = goodfn.chart_with_density(groups.catalogue("sl2Q2.compact"), 1.0)
    assert compact.c_m == 1.0 and compact.kind == "digits"


def test_digit_chart_coset_counts():
    elems = goodfn.sl2_mod(2, 3)
    assert len(elems) == 8**3 * (1 - 1 / 4)  # |SL(2, Z/p^n)| = p^{3n}(1 - p^-2)
    for j in (1, 2, 3):
        _, counts = np.unique((elems % 2**j).reshape(len(elems), -1), axis=0, return_counts=True)
        assert counts.min() == counts.max()


def test_exp_chart_density_sandwich():
    """Θ-pushforward of uniform vs Haar: the Jacobian stays within c_m on the ball."""
    H = groups.catalogue("sl2R.full")
    chart = goodfn.chart_with_density(H, 0.1)
    rng = np.random.default_rng(1)
    basis = [np.asarray(b, float) for b in H.lie_basis]
    for x in rng.uniform(-0.1, 0.1, size=(200, 3)):
        J = goodfn._exp_jacobian(sum(c * b for c, b in zip(x, basis)), "SL2")
        assert 1 / chart.c_m <= J <= chart.c_m
