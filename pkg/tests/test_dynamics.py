import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sadyn import dynamics as dyn
from sadyn import groups
from sadyn.errors import UnsupportedL

HAAR_Y2 = 3 / (2 * math.pi)


def rotation_omega(lo=0.0, hi=2 * math.pi):
    return dyn.OmegaWindow(groups.catalogue("sl2R.rotation"), (lo, hi))


def mobius_y(M):
    """y-coordinate of Γ Mᵀ: reduce z = Mᵀ·i by complex T/S steps."""
    (a, b), (c, d) = np.asarray(M).T
    z = (a * 1j + b) / (c * 1j + d)
    for _ in range(10_000):
        z -= round(z.real)
        if abs(z) < 1 - 1e-13:
            z = -1 / z
        else:
            return z.imag
    raise AssertionError("no termination")


def random_sl2r(rng, n, scale=1.5):
    X = rng.normal(size=(n, 2, 2)) * scale
    det = np.linalg.det(X)
    X[det < 0, :, 0] *= -1
    return X / np.sqrt(np.abs(np.linalg.det(X)))[:, None, None]


def random_sl2z(rng, steps=6):
    g = np.eye(2, dtype=np.int64)
    for _ in range(steps):
        k = int(rng.integers(-3, 4))
        g = g @ (np.array([[1, k], [0, 1]]) if rng.uniform() < 0.5 else np.array([[1, 0], [k, 1]]))
    return g


# ---------------------------------------------------------------------------
# reduction


def test_reduce_examples():
    r = dyn.reduce_fundamental(np.array([[1.0, 5.0], [0.0, 1.0]]))
    assert (r.x, r.y) == pytest.approx((0.0, 1.0))
    assert (r.gamma == [[1, -5], [0, 1]]).all()
    r = dyn.reduce_fundamental(np.diag([0.5, 2.0]))
    assert (r.x, r.y) == pytest.approx((0.0, 4.0), abs=1e-12)
    assert (r.gamma == [[0, -1], [1, 0]]).all()
    r = dyn.reduce_fundamental(np.eye(2))
    assert (r.x, r.y, r.theta) == (0.0, 1.0, 0.0) and (r.gamma == np.eye(2)).all()


def test_reduction_idempotent_and_in_domain():
    rng = np.random.default_rng(3)
    g = random_sl2r(rng, 10_000)
    c = dyn.fundamental_coords(g)
    mu = dyn.EmpiricalMeasure(c, np.full(len(c), 1e-4))
    assert mu.is_reduced()
    again = dyn.fundamental_coords(dyn.element_from_coords(c))
    assert np.allclose(again[:, :2], c[:, :2], atol=1e-9)
    dphi = np.angle(np.exp(1j * (again[:, 2] - c[:, 2])))
    # boundary points of the domain may be identified with their mirror image
    interior = (np.abs(np.abs(c[:, 0]) - 0.5) > 1e-9) & (np.abs(c[:, 0] ** 2 + c[:, 1] ** 2 - 1) > 1e-9)
    assert np.abs(dphi[interior]).max() < 1e-9


def test_right_gamma_invariance():
    rng = np.random.default_rng(5)
    sample = dyn.sample_window(rotation_omega(), 2000, 1)
    g = np.diag([math.e, 1 / math.e])
    base = dyn.translate_and_project(sample, g)
    for _ in range(10):
        gam = random_sl2z(rng).astype(float)
        moved = dyn.WindowSample(sample.elements @ gam, sample.weights)
        other = dyn.translate_and_project(moved, g)
        assert np.allclose(other.points[:, :2], base.points[:, :2], atol=1e-8)
        assert np.allclose(np.cos(other.points[:, 2] - base.points[:, 2]), 1.0, atol=1e-8)


def test_mobius_oracle_expanding_circle():
    sample = dyn.sample_window(rotation_omega(), 5000, 2)
    g = np.diag([math.exp(2), math.exp(-2)])
    mu = dyn.translate_and_project(sample, g)
    oracle = np.array([mobius_y(g @ w) for w in sample.elements])
    assert np.allclose(mu.points[:, 1], oracle, rtol=1e-9)


def test_mass_preserved():
    omega = dyn.OmegaWindow(groups.catalogue("sl2R.torus"), (-0.25, 0.25))
    s = dyn.sample_window(omega, 10_000, 4)
    assert abs(s.weights.sum() - 1) < 1e-12
    mu = dyn.translate_and_project(s, np.diag([5.0, 0.2]))
    assert abs(mu.weights.sum() - 1) < 1e-12
    assert abs(mu.factor(0).weights.sum() - 1) < 1e-12


# ---------------------------------------------------------------------------
# window sampling


def test_rotation_window_cos_mean():
    s = dyn.sample_window(rotation_omega(0.0, math.pi / 2), 100_000, 11)
    theta = s.chart_coords[:, 0]
    v = np.cos(theta)
    mean = float(np.dot(s.weights, v))
    err = 3 * float(np.sqrt(np.dot(s.weights**2, (v - mean) ** 2)))
    assert abs(mean - 2 / math.pi) <= err


def test_full_circle_normalisation():
    s = dyn.sample_window(rotation_omega(), 1000, 0)
    assert float(np.dot(s.weights, np.ones(1000))) == pytest.approx(1.0, abs=1e-12)


def test_compact_padic_indicator():
    omega = dyn.OmegaWindow(groups.catalogue("sl2Q2.compact"), depth=4)
    s = dyn.sample_window(omega, 60_000, 12)
    ind = ((s.elements % 2) == np.eye(2, dtype=np.int64)).all(axis=(1, 2))
    p = 1 / 6  # |SL(2, Z/2)| = 6
    assert abs(ind.mean() - p) <= 3 * math.sqrt(p * (1 - p) / len(ind))
    assert ((s.elements[:, 0, 0] * s.elements[:, 1, 1] - s.elements[:, 0, 1] * s.elements[:, 1, 0])
            % 16 == 1).all()


def test_sample_window_deterministic_across_workers():
    omega = dyn.OmegaWindow(groups.catalogue("sl2R.torus"), (-0.25, 0.25))
    a = dyn.sample_window(omega, 150_000, 9, workers=1)
    b = dyn.sample_window(omega, 150_000, 9, workers=3)
    assert np.array_equal(a.elements, b.elements) and np.array_equal(a.weights, b.weights)


# ---------------------------------------------------------------------------
# weak distance


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6))
def test_weak_distance_metric_axioms(seed):
    mus = [dyn.translate_and_project(dyn.sample_window(rotation_omega(), 2000, seed + k),
                                     np.diag([math.exp(t), math.exp(-t)]))
           for k, t in enumerate((0.3, 1.0, 2.0))]
    d = lambda a, b: dyn.weak_distance(mus[a], mus[b])
    assert d(0, 0) == 0.0
    assert d(0, 1) == d(1, 0)
    assert d(0, 2) <= d(0, 1) + d(1, 2) + 1e-15


def test_haar_vs_point_mass():
    haar = dyn.haar_measure(100_000, 0)
    point = dyn.EmpiricalMeasure(np.array([[0.0, 2.0, 0.0]]), np.ones(1))
    # the smoothed indicator of {y > 2} lies below 1_{y > 1.9}: Haar integral ≤ 3/(1.9π)
    assert dyn.weak_distance(haar, point) >= 1 - 3 / (1.9 * math.pi)
    assert dyn.weak_distance(haar, point) >= 1 - HAAR_Y2 - 0.03


def test_independent_haar_samples_close():
    a = dyn.haar_measure(100_000, 1)
    b = dyn.haar_measure(100_000, 2)
    assert dyn.weak_distance(a, b) <= 0.02


def test_haar_sampler_matches_quadrature():
    mu = dyn.haar_measure(200_000, 3)
    for f in dyn.TestFunctionDict.default(1):
        mean, err = mu.integrate(f)
        assert abs(mean - dyn.haar_quadrature(f)) <= err + 1e-3, f.name


def test_haar_cusp_mass_closed_form():
    mu = dyn.haar_measure(400_000, 4)
    for c in (1.5, 2.0, 5.0, 30.0):
        p = (1 / c) / (math.pi / 3)
        frac = float((mu.points[:, 1] > c).mean())
        assert abs(frac - p) <= 3 * math.sqrt(p * (1 - p) / mu.n)


# ---------------------------------------------------------------------------
# Hecke leaves


def lattice_key(k):
    """Index-4 lattice 2·k⁻¹·diag(2, 1/2)·Z_2² ⊂ Z_2², as its image in (Z/4)².

    The leaf of k is fixed by the coset (diag(1/2, 2) k)⁻¹ SL(2, Z_2), i.e. by
    this lattice; there are p(p + 1) = 6 cyclic sublattices of index p².
    """
    kinv = np.array([[k[1, 1], -k[0, 1]], [-k[1, 0], k[0, 0]]])
    N = (kinv @ np.diag([4, 1])) % 4
    return frozenset(tuple(int(v) for v in (N @ [s, t]) % 4) for s in range(4) for t in range(4))


def test_hecke_leaves_p2_i1():
    omega = dyn.OmegaWindow(groups.catalogue("sl2Q2.compact"), depth=6)
    s = dyn.sample_window(omega, 30_000, 5)
    mu = dyn.translate_and_project(s, None, hecke=(2, 1))
    labels = [tuple(l) for l in mu.labels]
    keys = [lattice_key(k) for k in s.elements]
    assert len(set(labels)) == 6 == len(set(keys))
    pairing = {}
    for lab, key in zip(labels, keys):
        assert pairing.setdefault(lab, key) == key
    counts = np.array([labels.count(lab) for lab in set(labels)]) / len(labels)
    assert np.abs(counts - 1 / 6).max() <= 3 * math.sqrt((1 / 6) * (5 / 6) / len(labels))
    assert mu.is_reduced()


# ---------------------------------------------------------------------------
# reference limits


def test_reference_trivial_is_projected_window():
    omega = rotation_omega()
    spec = dyn.LimitFormulaSpec(np.eye(2), np.eye(2), groups.catalogue("sl2R.trivial"), omega)
    ref = dyn.reference_measure(spec, 3000, 7)
    direct = dyn.translate_and_project(dyn.sample_window(omega, 3000, 7, "reference/omega"), np.eye(2))
    assert np.allclose(ref.points, direct.points)


def test_reference_full_cusp_integral():
    f = dyn.TestFunctionDict.default(1)[1]
    assert f.name == "y>2"
    spec = dyn.LimitFormulaSpec(np.eye(2), np.eye(2), groups.catalogue("sl2R.full"), rotation_omega())
    ints = dyn.reference_limit_measure(spec, [f], 100_000, 3)
    exact = dyn.haar_quadrature(f)
    assert HAAR_Y2 <= exact <= 3 / (1.9 * math.pi)
    assert abs(ints.values[0] - exact) <= ints.errors[0]


def test_reference_full_invariant_under_group():
    d = dyn.TestFunctionDict.default(1)
    L = groups.catalogue("sl2R.full")
    u = np.array([[2.0, 1.0], [1.0, 1.0]]) @ np.diag([1.3, 1 / 1.3])
    a = dyn.reference_limit_measure(dyn.LimitFormulaSpec(np.eye(2), np.eye(2), L, rotation_omega()),
                                    d, 100_000, 1)
    b = dyn.reference_limit_measure(dyn.LimitFormulaSpec(u, np.eye(2), L, rotation_omega()),
                                    d, 100_000, 2)
    assert np.all(np.abs(a.values - b.values) <= a.errors + b.errors)


def test_reference_rejects_unsupported_L():
    with pytest.raises(UnsupportedL):
        dyn.LimitFormulaSpec(np.eye(2), np.eye(2), groups.catalogue("sl2R.torus"), rotation_omega())
    spec = dyn.LimitFormulaSpec(np.eye(2), np.eye(2), groups.catalogue("sl2R.borel"), rotation_omega()) \
        if groups.ratner_class_test(groups.catalogue("sl2R.borel")).in_class else None
    if spec is not None:
        with pytest.raises(UnsupportedL):
            dyn.reference_measure(spec, 10, 0)


def test_normaliser_check():
    with pytest.raises(ValueError):
        dyn.LimitFormulaSpec(np.eye(2), np.array([[0.0, -1.0], [1.0, 0.0]]),
                             groups.catalogue("sl2R.unipotent"), rotation_omega())


def test_product_marginal_factorisation():
    omega = dyn.OmegaWindow(groups.catalogue("sl2xsl2.diag_rotation"))
    spec = dyn.LimitFormulaSpec(np.eye(4), np.eye(4), groups.catalogue("sl2xsl2.first_factor"), omega)
    ref = dyn.reference_measure(spec, 100_000, 0, factors=2)
    circle = dyn.translate_and_project(dyn.sample_window(rotation_omega(), 100_000, 1), np.eye(2))
    d1 = dyn.TestFunctionDict.default(1)
    a, b = dyn.integrals(ref.factor(1), d1), dyn.integrals(circle, d1)
    assert np.all(np.abs(a.values - b.values) <= a.errors + b.errors + 1e-12)


# ---------------------------------------------------------------------------
# experiments and diagnostics


def test_trivial_dynamics_centraliser_translates():
    """Rotations centralise the rotation group: z_i μ_Ω → z∞ μ_Ω with no escape."""
    omega = rotation_omega(0.0, 1.0)
    sample = dyn.sample_window(omega, 50_000, 3)
    g = np.diag([math.exp(1.0), math.exp(-1.0)])
    t_inf = 0.8
    limit = dyn.translate_and_project(sample, g @ dyn._rot(t_inf))
    d = dyn.TestFunctionDict.default(1)
    ref = dyn.integrals(limit, d)
    dists = []
    for t in (0.8 + 0.4, 0.8 + 0.1, 0.8 + 1e-3):
        mu = dyn.translate_and_project(dyn.sample_window(omega, 50_000, 4), g @ dyn._rot(t))
        dist = dyn.distance_between(dyn.integrals(mu, d), ref, d)
        dists.append(dist)
        assert dyn.tightness_profile(mu, [0.1])[0] == 0.0
    assert dists[-1].value <= dists[-1].error
    assert dists[0].value > dists[0].error


def test_strong_convergence_decays():
    tv = dyn.strong_convergence_check(rotation_omega(0.0, 1.0), [0.3, 0.1, 0.03, 0.01], 100_000, 0)
    assert all(a > b for a, b in zip(tv, tv[1:]))
    assert tv[0] == pytest.approx(0.3, abs=0.03)


def test_systole_profile():
    mu = dyn.EmpiricalMeasure(np.array([[0, 1.0, 0], [0, 100.0, 0]]), np.array([0.25, 0.75]))
    assert dyn.systole_from_y(np.array([4.0]))[0] == 0.5
    assert dyn.tightness_profile(mu, [0.5, 0.05]) == [0.75, 0.0]


def test_experiment_with_translators_to_identity():
    scn = dyn.Scenario("to_id", "sl2", "sl2R.rotation", None, "diag", [0.5, 0.01, 1e-4],
                       "limit", "sl2R.trivial", samples=20_000, ref_samples=20_000,
                       tolerance=0.05)
    rep = dyn.convergence_experiment(scn)
    assert rep.verdict == "pass", rep.summary
    assert rep.distances[-1] < rep.distances[0]
    assert len(rep.rows) == 3 * 8


def brute_lattice_harmonic(G, k):
    total = 0.0
    for a in range(-30, 31):
        for b in range(-30, 31):
            if math.gcd(a, b) != 1:
                continue
            w = G @ [a, b]
            psi = min(1.0, max(0.0, (dyn.LAT_R - math.hypot(*w)) / (dyn.LAT_R - 1.0)))
            total += psi * math.cos(k * math.atan2(w[1], w[0]))
    return total / 2


@pytest.mark.parametrize("k", [2, 4])
def test_lattice_harmonic_is_gamma_invariant(k):
    """Evaluated on reduced coordinates, it equals the primitive-vector sum of the raw matrix."""
    g = random_sl2r(np.random.default_rng(k), 400)
    # |v| ≤ ||g⁻¹|| · LAT_R = ||g|| · LAT_R ≤ 10 keeps every contributing v inside the window
    g = g[np.linalg.norm(g, 2, axis=(1, 2)) <= 8][:150]
    vals = dyn.lattice_harmonic(dyn.fundamental_coords(g), k)
    assert np.allclose(vals, [brute_lattice_harmonic(G, k) for G in g], atol=1e-12)
    assert np.abs(vals).max() <= 3


def test_lattice_harmonic_sees_the_fibre_over_i():
    phi = np.linspace(0, 2 * math.pi, 9)
    pts = np.stack([np.zeros_like(phi), np.ones_like(phi), phi], axis=1)
    assert np.allclose(dyn.lattice_harmonic(pts, 4), 2 * np.cos(2 * phi))
