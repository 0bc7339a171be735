"""Real banded matrices in the LAPACK ``ab`` layout.

For bandwidth p the storage is an array of shape (2p+1, n) with
``ab[p + i - j, j] = A[i, j]`` for ``|i - j| <= p``: row p is the main
diagonal, rows above it hold superdiagonals (left-padded with zeros), rows
below hold subdiagonals (right-padded).  scipy.linalg.solve_banded uses the
same convention, so operator bands can be handed to it directly.

Everything here is dense-free on purpose: sector operators at n ~ 4096 would
be wasteful as full matrices, and the time stepper multiplies and solves with
these bands in its inner loop.
"""

from __future__ import annotations

import numpy as np


def bandwidth(ab: np.ndarray) -> int:
    rows = ab.shape[0]
    if rows % 2 != 1:
        raise ValueError(f"banded storage needs an odd row count, got {rows}")
    return (rows - 1) // 2


def from_tridiagonal(diag, upper, lower) -> np.ndarray:
    """Pack a tridiagonal matrix (p=1). upper/lower have length n-1."""
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    return ab


def to_dense(ab: np.ndarray) -> np.ndarray:
    p = bandwidth(ab)
    n = ab.shape[1]
    a = np.zeros((n, n), dtype=ab.dtype)
    for d in range(-p, p + 1):
        lo, hi = max(0, -d), n - max(0, d)
        if hi <= lo:
            continue
        j = np.arange(lo, hi)
        a[j + d, j] = ab[p + d, lo:hi]
    return a


def matvec(ab: np.ndarray, v: np.ndarray) -> np.ndarray:
    """A @ v; v may be complex or carry trailing axes (n, ...)."""
    p = bandwidth(ab)
    n = ab.shape[1]
    shape_tail = (1,) * (v.ndim - 1)
    out = ab[p].reshape(n, *shape_tail) * v
    for d in range(1, p + 1):
        out[:-d] += ab[p - d, d:].reshape(n - d, *shape_tail) * v[d:]
        out[d:] += ab[p + d, :-d].reshape(n - d, *shape_tail) * v[:-d]
    return out


def multiply(a_ab: np.ndarray, b_ab: np.ndarray) -> np.ndarray:
    """Banded product C = A @ B with bandwidth p_A + p_B."""
    pa, pb = bandwidth(a_ab), bandwidth(b_ab)
    n = a_ab.shape[1]
    if b_ab.shape[1] != n:
        raise ValueError("size mismatch in banded multiply")
    pc = pa + pb
    c = np.zeros((2 * pc + 1, n), dtype=np.result_type(a_ab, b_ab))
    # C[i, i+dc] = sum over da of A[i, i+da] * B[i+da, i+dc]
    for da in range(-pa, pa + 1):
        for db in range(-pb, pb + 1):
            dc = da + db
            lo = max(0, -da, -dc)
            hi = n - max(0, da, dc)
            if hi <= lo:
                continue
            c[pc - dc, lo + dc:hi + dc] += (
                a_ab[pa - da, lo + da:hi + da] * b_ab[pb - db, lo + dc:hi + dc]
            )
    return c


def transpose(ab: np.ndarray) -> np.ndarray:
    p = bandwidth(ab)
    n = ab.shape[1]
    out = np.zeros_like(ab)
    for d in range(-p, p + 1):
        lo, hi = max(0, -d), n - max(0, d)
        if hi <= lo:
            continue
        out[p + d, lo:hi] = ab[p - d, lo + d:hi + d]
    return out


def row_scale(ab: np.ndarray, s: np.ndarray) -> np.ndarray:
    """diag(s) @ A for banded A."""
    p = bandwidth(ab)
    n = ab.shape[1]
    out = np.zeros_like(ab)
    for d in range(-p, p + 1):
        lo, hi = max(0, -d), n - max(0, d)
        if hi <= lo:
            continue
        out[p + d, lo:hi] = ab[p + d, lo:hi] * s[lo + d:hi + d]
    return out


def similarity_symmetrize(ab: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """T = W^{1/2} A W^{-1/2} with W = diag(weight).

    When A is Hermitian under the weighted inner product, T is symmetric; the
    transform is entrywise, T[i,j] = A[i,j] * sqrt(w_i / w_j), so it cannot
    degrade the bands.
    """
    p = bandwidth(ab)
    n = ab.shape[1]
    root = np.sqrt(weight)
    out = np.zeros_like(ab)
    for d in range(-p, p + 1):
        lo, hi = max(0, -d), n - max(0, d)
        if hi <= lo:
            continue
        j = np.arange(lo, hi)
        out[p + d, lo:hi] = ab[p + d, lo:hi] * root[j + d] / root[j]
    return out


def weighted_asymmetry(ab: np.ndarray, weight: np.ndarray) -> float:
    """Frobenius norm of (WA - (WA)^T) over Frobenius norm of A."""
    wa = row_scale(ab, weight)
    diff = wa - transpose(wa)
    scale = float(np.sqrt((ab * ab).sum()))
    if scale == 0.0:
        return 0.0
    return float(np.sqrt((diff * diff).sum())) / scale
