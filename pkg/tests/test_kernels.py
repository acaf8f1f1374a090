import os
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest

from sadyn import _pykernels, kernels
from sadyn.dynamics import _sl2_zp_haar
from sadyn.qs_arith import valuation

try:
    from sadyn import _ckernels
except ImportError:
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def random_sl2(rng, n):
    t, th, x = rng.uniform(-4, 4, n), rng.uniform(0, 2 * np.pi, n), rng.uniform(-5, 5, n)
    c, s = np.cos(th), np.sin(th)
    k = np.stack([c, -s, s, c], 1).reshape(n, 2, 2)
    a = np.zeros((n, 2, 2))
    a[:, 0, 0], a[:, 1, 1] = np.exp(t), np.exp(-t)
    u = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    u[:, 0, 1] = x
    return u @ a @ k


@needs_ext
def test_reduce_backends_agree():
    g = random_sl2(np.random.default_rng(0), 20_000)
    a, b = _pykernels.reduce_batch(g), _ckernels.reduce_batch(g)
    assert np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])
    assert np.allclose(a[0], b[0], atol=1e-12)


@needs_ext
@pytest.mark.parametrize("p, i", [(2, 1), (2, 3), (3, 2), (5, 1)])
def test_hecke_backends_agree(p, i):
    k = _sl2_zp_haar(np.random.default_rng(p * 10 + i), 20_000, p, 2 * i + 2)
    for x, y in zip(_pykernels.hecke_batch(k, p, i), _ckernels.hecke_batch(k, p, i)):
        assert np.array_equal(x, y)


def test_reduce_output_invariants():
    g = random_sl2(np.random.default_rng(1), 5000)
    red, gam, steps = kernels.reduce_batch(g)
    assert np.allclose(red, gam @ g)
    assert (np.rint(np.linalg.det(gam.astype(float))) == 1).all()
    a, b, c, d = red[:, 0, 0], red[:, 0, 1], red[:, 1, 0], red[:, 1, 1]
    den = c * c + d * d
    assert (np.abs(a * c + b * d) / den <= 0.5 + 1e-9).all()
    assert ((a * a + b * b) / den >= 1 - 1e-9).all()
    assert (steps >= 1).all()


@pytest.mark.parametrize("p, i", [(2, 1), (2, 2), (3, 1)])
def test_hecke_leaf_decomposition(p, i):
    """γ⁻¹ (diag(p^-i, p^i) k)⁻¹ must be p-integral, γ = [[p^A, num/p^i], [0, p^-A]]."""
    depth = 2 * i + 4
    k = _sl2_zp_haar(np.random.default_rng(7), 300, p, depth)
    A, num = kernels.hecke_batch(k, p, i)
    P = Fraction(p)
    for kk, a_, n_ in zip(k, A, num):
        a, b, c, d = (int(v) for v in kk.ravel())
        # (D k)^{-1} = adj(k) D^{-1} modulo p^depth, D = diag(p^-i, p^i)
        inv = [[d * P**i, -b * P**-i], [-c * P**i, a * P**-i]]
        g_inv = [[P**-int(a_), -Fraction(int(n_)) / P**i], [0, P**int(a_)]]
        m = [[sum(g_inv[r][s] * inv[s][t] for s in range(2)) for t in range(2)] for r in range(2)]
        for row in m:
            for v in row:
                assert v == 0 or valuation(v, p) >= 0


def test_pure_python_fallback():
    env = dict(os.environ, SADYN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from sadyn import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_backend_reported():
    assert kernels.BACKEND in ("python", "cython")
    if _ckernels is not None and os.environ.get("SADYN_PURE_PYTHON") is None:
        assert kernels.BACKEND == "cython"
