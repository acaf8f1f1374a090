"""Pure numpy implementations of the hot loops (fallback for the compiled module)."""

from __future__ import annotations

import numpy as np

MAX_STEPS = 10_000


def reduce_batch(mats: np.ndarray):
    """Reduce each 2x2 real matrix k so that k·i lies in the standard domain.

    Returns ``(reduced, gamma, steps)``: ``reduced = gamma @ k`` with
    ``gamma ∈ SL(2, Z)``, ``|Re(reduced·i)| ≤ 1/2`` and ``|reduced·i| ≥ 1``.
    """
    k = np.array(mats, dtype=np.float64, copy=True).reshape(-1, 2, 2)
    n = len(k)
    gam = np.zeros((n, 2, 2), dtype=np.int64)
    gam[:, 0, 0] = gam[:, 1, 1] = 1
    steps = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    for _ in range(MAX_STEPS):
        if active.size == 0:
            break
        a, b, c, d = (k[active, 0, 0], k[active, 0, 1], k[active, 1, 0], k[active, 1, 1])
        den = c * c + d * d
        x = (a * c + b * d) / den
        m = np.where(np.abs(x) <= 0.5, 0.0, np.floor(x + 0.5))
        # T^{-m}: subtract m times the bottom row from the top row
        k[active, 0, 0] -= m * c
        k[active, 0, 1] -= m * d
        mi = m.astype(np.int64)
        gam[active, 0, 0] -= mi * gam[active, 1, 0]
        gam[active, 0, 1] -= mi * gam[active, 1, 1]
        a, b = k[active, 0, 0], k[active, 0, 1]
        num = a * a + b * b  # |z|^2 = (a^2 + b^2) / (c^2 + d^2)
        inv = num < den * (1 - 1e-14)
        steps[active] += 1
        idx = active[inv]
        # S = [[0, -1], [1, 0]]: (top, bottom) -> (-bottom, top)
        top = k[idx, 0].copy()
        k[idx, 0] = -k[idx, 1]
        k[idx, 1] = top
        gtop = gam[idx, 0].copy()
        gam[idx, 0] = -gam[idx, 1]
        gam[idx, 1] = gtop
        active = idx
    else:
        raise RuntimeError("fundamental-domain reduction did not terminate")
    return k, gam, steps


def _inverse_table(p: int, e: int) -> np.ndarray:
    q = p**e
    table = np.zeros(q, dtype=np.int64)
    for u in range(q):
        if u % p:
            table[u] = pow(u, -1, q)
    return table


def _valuation(x: np.ndarray, p: int, cap: int) -> np.ndarray:
    v = np.zeros(x.shape, dtype=np.int64)
    y = x.copy()
    zero = y == 0
    for _ in range(cap):
        div = (y % p == 0) & ~zero
        if not div.any():
            break
        v[div] += 1
        y[div] //= p
    v[zero] = cap
    return v


def hecke_batch(k: np.ndarray, p: int, i: int):
    """Hecke leaf of ``diag(p^-i, p^i) k`` for integer matrices k ∈ SL(2, Z_p) mod p^D.

    The leaf is the real point ``[[p^A, num / p^i], [0, p^-A]]`` of the
    decomposition ``(diag(p^-i, p^i) k)^{-1} = gamma k'`` with gamma in
    canonical triangular form; returns ``(A, num)`` as int64 arrays.
    Requires residues modulo at least ``p^(2i+1)``.
    """
    k = np.asarray(k, dtype=np.int64).reshape(-1, 2, 2)
    a, b, c = k[:, 0, 0], k[:, 0, 1], k[:, 1, 0]
    cap = 2 * i + 1
    va = _valuation(a, p, cap)
    vc = np.minimum(_valuation(c, p, cap) + 2 * i, cap + 2 * i)
    w = np.minimum(va, vc)
    A = i - w
    num = np.zeros(len(k), dtype=np.int64)
    sel = (va == w) & (2 * i - w > 0)
    if sel.any():
        e_max = 2 * i
        q = p**e_max
        table = _inverse_table(p, e_max)
        unit = (a[sel] // p ** w[sel]) % q
        e = 2 * i - w[sel]
        num[sel] = ((-b[sel] % q) * table[unit]) % (p**e)
    return A, num
