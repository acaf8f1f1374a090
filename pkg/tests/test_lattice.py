import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sadyn import linalg
from sadyn.errors import ExplosionGuard, NotRational
from sadyn.lattice import (ZSLattice, covolume, format_lattice, lattice_invariants,
                           mahler_tightness_diagnostic, parse_lattice, short_vectors,
                           strong_approx_reduce)
from sadyn.qs_arith import INF, Place, valuation


def gauss_min_sq(b1, b2):
    """Squared length of a shortest vector of the planar lattice Z b1 + Z b2 (Lagrange)."""
    dot = lambda u, v: u[0] * v[0] + u[1] * v[1]
    u, v = list(b1), list(b2)
    if dot(u, u) > dot(v, v):
        u, v = v, u
    while True:
        m = dot(u, v) / dot(u, u)
        r = math.floor(m + Fraction(1, 2)) if isinstance(m, Fraction) else round(m)
        v = [v[0] - r * u[0], v[1] - r * u[1]]
        if dot(v, v) >= dot(u, u):
            return dot(u, u)
        u, v = v, u


def random_sl2z(rng, steps=4):
    g = np.eye(2, dtype=int)
    for _ in range(steps):
        k = int(rng.integers(-2, 3))
        g = (np.array([[1, k], [0, 1]]) if rng.random() < 0.5 else np.array([[1, 0], [k, 1]])) @ g
    return g


def test_standard_lattice_short_vectors():
    svs = short_vectors(ZSLattice.from_rational(np.eye(2, dtype=int)), 1.0)
    assert sorted(v.coeffs for v in svs.vectors) == sorted(
        [(1, 0), (-1, 0), (0, 1), (0, -1)])
    assert svs.complete


def test_diag_lattice_short_vectors():
    g = linalg.exact([[10, 0], [0, Fraction(1, 10)]])
    svs = short_vectors(ZSLattice.from_rational(g), 0.5, height_cap=20)
    assert sorted(v.coeffs for v in svs.vectors) == [(0, -1), (0, 1)]
    assert all(v.content_sq == Fraction(1, 100) for v in svs.vectors)


def test_z_half_lattice_has_no_short_vectors():
    L = ZSLattice.from_rational(np.eye(2, dtype=int), (INF, Place(2)))
    assert len(short_vectors(L, 0.9, height_cap=16)) == 0
    assert lattice_invariants(L).systole == 1


def test_invariants_examples():
    inv = lattice_invariants(ZSLattice.from_rational(np.eye(2, dtype=int)))
    assert (inv.covolume, inv.systole) == (1, 1)
    t = math.log(10)
    inv = lattice_invariants(ZSLattice.real(np.diag([math.exp(t), math.exp(-t)])))
    assert inv.covolume == pytest.approx(1.0, abs=1e-12)
    assert inv.systole == pytest.approx(0.1, abs=1e-12)
    assert covolume(ZSLattice.from_rational(np.diag([2, 1]))) == 2


def test_mahler_examples():
    prof = mahler_tightness_diagnostic([ZSLattice.from_rational(np.eye(2, dtype=int))], [0.5])
    assert prof.mass_below == [0.0] and prof.flag == "bounded"
    fam = [ZSLattice.real(np.diag([math.exp(t), math.exp(-t)])) for t in range(1, 6)]
    prof = mahler_tightness_diagnostic(fam, [0.1])
    assert [row[0] for row in prof.member_below] == [False, False, True, True, True]
    assert prof.flag == "escaping"
    assert mahler_tightness_diagnostic(fam, []).flag == "undetermined"


def test_strong_approx_examples():
    g = linalg.exact([[1, Fraction(1, 2)], [0, 1]])
    gamma, k = strong_approx_reduce(g, 2)
    assert (gamma == g).all() and (k == linalg.exact(np.eye(2, dtype=int))).all()
    gamma, k = strong_approx_reduce(linalg.exact([[Fraction(1, 2), 0], [1, 2]]), 2)
    assert (gamma == linalg.exact([[1, Fraction(1, 2)], [0, 1]])).all()
    assert (k == linalg.exact([[0, -1], [1, 2]])).all()
    gamma, k = strong_approx_reduce(np.eye(2, dtype=int), 3)
    assert (gamma == np.eye(2)).all() and (k == np.eye(2)).all()


def test_not_rational_rejected():
    with pytest.raises(NotRational):
        strong_approx_reduce(np.array([[1.5, 0.0], [0.0, 1 / 1.5]]), 2)


def test_explosion_guard():
    with pytest.raises(ExplosionGuard):
        short_vectors(ZSLattice.from_rational(np.diag([1, 1, 1, Fraction(1, 50)])), 1.0,
                      height_cap=50, budget=1000)


def test_lattice_text_round_trip():
    L = ZSLattice.from_rational(linalg.exact([[2, Fraction(1, 3)], [0, Fraction(1, 2)]]),
                                (INF, Place(2)))
    L2 = parse_lattice(format_lattice(L))
    assert format_lattice(L2) == format_lattice(L)
    assert covolume(L2) == covolume(L)


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 10**6))
def test_left_invariance_and_gauss_oracle(a, b, seed):
    rng = np.random.default_rng(seed)
    g = linalg.exact([[a, 0], [0, Fraction(1, b)]])
    gam = random_sl2z(rng)
    L = ZSLattice.from_rational(g)
    Lt = L.left_translate(gam)
    i0, i1 = lattice_invariants(L), lattice_invariants(Lt)
    assert i0.covolume == i1.covolume == Fraction(a, b)
    rows = linalg.exact(gam).dot(g)
    assert i1.systole_sq == gauss_min_sq(rows[0], rows[1]) == min(a * a, Fraction(1, b * b))


@given(st.floats(0.2, 3.0), st.floats(0.0, 2.0))
def test_short_vectors_monotone_in_bound(b, extra):
    L = ZSLattice.from_rational(linalg.exact([[3, 1], [1, 1]]))
    small = {v.coeffs for v in short_vectors(L, b, height_cap=8).vectors}
    big = {v.coeffs for v in short_vectors(L, b + extra, height_cap=8).vectors}
    assert small <= big


def test_covolume_matches_gram_determinant(rng):
    for _ in range(20):
        g = rng.normal(size=(3, 3))
        gram = g @ g.T
        assert covolume(ZSLattice.real(g)) == pytest.approx(math.sqrt(np.linalg.det(gram)))


@given(st.integers(-20, 20), st.integers(-20, 20), st.integers(-4, 4), st.integers(0, 10**6))
def test_strong_approx_round_trip(n, m, a, seed):
    rng = np.random.default_rng(seed)
    p = int(rng.choice([2, 3, 5]))
    gamma0 = linalg.exact([[Fraction(p) ** a, Fraction(n, p ** abs(m % 4))], [0, Fraction(p) ** -a]])
    k0 = linalg.exact(random_sl2z(rng))
    # a Z_p-unit conjugation keeps k0 in SL(2, Z_p) but off SL(2, Z)
    u = Fraction(1 + p * int(rng.integers(1, 5)), 1 + p * int(rng.integers(1, 5)))
    d = linalg.exact([[u, 0], [0, 1 / u]])
    g = gamma0.dot(d).dot(k0)
    gamma, k = strong_approx_reduce(g, p)
    assert (gamma.dot(k) == g).all()
    assert linalg.det(k) == 1 and all(valuation(x, p) >= 0 for x in k.flat)
    assert gamma[1, 0] == 0 and gamma[0, 0] * gamma[1, 1] == 1
