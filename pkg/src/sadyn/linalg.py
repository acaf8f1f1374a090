"""Small dense linear algebra that works on float arrays and on exact Fraction arrays.

Exact arrays are numpy ``object`` arrays of :class:`fractions.Fraction`; they
back the ultrametric places, where every desk-scale input is rational.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import scipy.linalg

TOL = 1e-9


def is_exact(M) -> bool:
    return isinstance(M, np.ndarray) and M.dtype == object


def exact(M) -> np.ndarray:
    """Copy of M as an object array of Fractions."""
    A = np.asarray(M, dtype=object)
    out = np.empty(A.shape, dtype=object)
    for idx, x in np.ndenumerate(A):
        out[idx] = Fraction(x)
    return out


def identity_like(M) -> np.ndarray:
    n = M.shape[0]
    if is_exact(M):
        return exact(np.eye(n, dtype=int))
    return np.eye(n)


def _rref(M: np.ndarray):
    A = exact(M)
    rows, cols = A.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = next((i for i in range(r, rows) if A[i, c] != 0), None)
        if piv is None:
            continue
        if piv != r:
            A[[r, piv]] = A[[piv, r]]
        A[r] = A[r] / A[r, c]
        for i in range(rows):
            if i != r and A[i, c] != 0:
                A[i] = A[i] - A[i, c] * A[r]
        pivots.append(c)
        r += 1
    return A, pivots


def rank(M, tol: float = TOL) -> int:
    M = np.asarray(M) if not is_exact(M) else M
    if M.size == 0:
        return 0
    if is_exact(M):
        return len(_rref(M)[1])
    return int(np.linalg.matrix_rank(M.astype(float), tol=tol * max(1.0, np.abs(M).max())))


def nullspace(M, tol: float = TOL) -> np.ndarray:
    """Columns spanning {x : M x = 0}."""
    if is_exact(M):
        A, pivots = _rref(M)
        cols = A.shape[1]
        free = [c for c in range(cols) if c not in pivots]
        basis = np.empty((cols, len(free)), dtype=object)
        for j, f in enumerate(free):
            v = [Fraction(0)] * cols
            v[f] = Fraction(1)
            for i, pc in enumerate(pivots):
                v[pc] = -A[i, f]
            basis[:, j] = v
        return basis
    M = np.asarray(M, dtype=float)
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    return scipy.linalg.null_space(M, rcond=tol)


def det(M):
    if is_exact(M):
        A = exact(M)
        n = A.shape[0]
        d = Fraction(1)
        for c in range(n):
            piv = next((i for i in range(c, n) if A[i, c] != 0), None)
            if piv is None:
                return Fraction(0)
            if piv != c:
                A[[c, piv]] = A[[piv, c]]
                d = -d
            d *= A[c, c]
            for i in range(c + 1, n):
                if A[i, c] != 0:
                    A[i] = A[i] - (A[i, c] / A[c, c]) * A[c]
        return d
    return float(np.linalg.det(np.asarray(M, dtype=float)))


def inv(M):
    if is_exact(M):
        n = M.shape[0]
        aug = np.concatenate([exact(M), exact(np.eye(n, dtype=int))], axis=1)
        R, pivots = _rref(aug)
        if pivots[:n] != list(range(n)):
            raise np.linalg.LinAlgError("singular matrix")
        return R[:, n:]
    return np.linalg.inv(np.asarray(M, dtype=float))


def solve(A, b):
    if is_exact(A):
        return inv(A).dot(exact(b))
    return np.linalg.lstsq(np.asarray(A, dtype=float), np.asarray(b, dtype=float), rcond=None)[0]


def span_basis(vectors, tol: float = TOL) -> np.ndarray:
    """Columns forming a basis of the span of the given columns."""
    V = vectors
    if V.shape[1] == 0:
        return V
    if is_exact(V):
        R, pivots = _rref(V.T)
        return R[: len(pivots)].T.copy()
    U, s, _ = np.linalg.svd(np.asarray(V, dtype=float), full_matrices=False)
    r = int((s > tol * max(1.0, s.max() if s.size else 0.0)).sum())
    return U[:, :r]


def intersect(A, B, tol: float = TOL) -> np.ndarray:
    """Basis (columns) of span(A) ∩ span(B)."""
    if A.shape[1] == 0 or B.shape[1] == 0:
        return A[:, :0]
    if is_exact(A) or is_exact(B):
        A, B = exact(A), exact(B)
        K = nullspace(np.concatenate([A, -B], axis=1))
        return span_basis(A.dot(K[: A.shape[1]]))
    K = nullspace(np.concatenate([A, -B], axis=1), tol)
    return span_basis(np.asarray(A, dtype=float) @ K[: A.shape[1]], tol)


def in_span(basis, v, tol: float = TOL) -> bool:
    if basis.shape[1] == 0:
        return not np.any(v != 0) if is_exact(v) else float(np.abs(v).max(initial=0)) <= tol
    if is_exact(basis) or is_exact(v):
        return rank(np.concatenate([exact(basis), exact(v).reshape(-1, 1)], axis=1)) == rank(
            exact(basis))
    Q = span_basis(basis, tol)
    v = np.asarray(v, dtype=float)
    resid = v - Q @ (Q.T @ v)
    return float(np.abs(resid).max(initial=0)) <= tol * max(1.0, float(np.abs(v).max()))
