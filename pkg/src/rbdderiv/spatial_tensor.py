"""Spatial-matrix operators and order-3 tensor helpers.

A tensor is a numpy array of shape (d1, d2, d3); page ``k`` is ``T[:, :, k]``.
"""
from __future__ import annotations

import numpy as np

from .spatial_algebra import crf_bar, crm

# (row, col, source component, sign) entries of crm(v), angular-first.
_CRM_PATTERN = (
    (0, 1, 2, -1), (0, 2, 1, 1), (1, 0, 2, 1), (1, 2, 0, -1), (2, 0, 1, -1), (2, 1, 0, 1),
    (3, 4, 2, -1), (3, 5, 1, 1), (4, 3, 2, 1), (4, 5, 0, -1), (5, 3, 1, -1), (5, 4, 0, 1),
    (3, 1, 5, -1), (3, 2, 4, 1), (4, 0, 5, 1), (4, 2, 3, -1), (5, 0, 4, -1), (5, 1, 3, 1),
)


def _as_cols(U: np.ndarray) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if U.shape[0] != 6:
        raise ValueError(f"expected 6 rows, got {U.shape[0]}")
    return U


def crossM_op(U: np.ndarray) -> np.ndarray:
    """Tensor whose page k is crm(U[:, k])."""
    U = _as_cols(U)
    T = np.zeros((6, 6, U.shape[1]))
    for r, c, s, sign in _CRM_PATTERN:
        T[r, c, :] = sign * U[s]
    return T


def crossF_op(U: np.ndarray) -> np.ndarray:
    """Tensor whose page k is crf(U[:, k])."""
    return -rot12(crossM_op(U))


def crossFbar_op(F: np.ndarray) -> np.ndarray:
    """Tensor whose page k is crf_bar(F[:, k])."""
    F = _as_cols(F)
    return np.stack([crf_bar(F[:, k]) for k in range(F.shape[1])], axis=2) if F.shape[1] else np.zeros((6, 6, 0))


def rot12(T: np.ndarray) -> np.ndarray:
    """Transpose each page: out[j, i, k] = T[i, j, k]."""
    return np.ascontiguousarray(np.transpose(T, (1, 0, 2)))


def rot23(T: np.ndarray) -> np.ndarray:
    """Swap columns and pages: out[i, k, j] = T[i, j, k]."""
    return np.ascontiguousarray(np.transpose(T, (0, 2, 1)))


def rot231(T: np.ndarray) -> np.ndarray:
    """rot23 followed by rot12: out[k, i, j] = T[i, j, k]."""
    return np.ascontiguousarray(np.transpose(T, (2, 0, 1)))


def tmprod(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Z[i, j, k] = sum_l A[i, l, k] B[l, j]."""
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"tmprod: tensor axis 2 has {A.shape[1]} entries but matrix has {B.shape[0]} rows")
    return np.einsum("ilk,lj->ijk", A, B)


def mtprod(B: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Y[i, j, k] = sum_l B[i, l] A[l, j, k]."""
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[None, :]
    if B.shape[1] != A.shape[0]:
        raise ValueError(f"mtprod: matrix has {B.shape[1]} columns but tensor axis 1 has {A.shape[0]} entries")
    return np.einsum("il,ljk->ijk", B, A)


def squeeze(T: np.ndarray, axis: int = 2) -> np.ndarray:
    """Drop a singleton tensor axis (1-based) to get a matrix."""
    if axis not in (1, 2, 3):
        raise ValueError("axis must be 1, 2 or 3")
    if T.shape[axis - 1] != 1:
        raise ValueError(f"axis {axis} has length {T.shape[axis - 1]}, expected 1")
    return np.take(T, 0, axis=axis - 1)


def coriolis_matrix(inertia: np.ndarray, m: np.ndarray) -> np.ndarray:
    """B[I, m] = (crf(m) I - I crm(m) + crf_bar(I m)) / 2."""
    C = crm(m)
    return 0.5 * (-C.T @ inertia - inertia @ C + crf_bar(inertia @ m))


def coriolis_tensor(inertia: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Tensor whose page k is coriolis_matrix(I, V[:, k])."""
    V = _as_cols(V)
    Cm = crossM_op(V)
    Fb = crossFbar_op(inertia @ V)
    return 0.5 * (np.einsum("jik,jl->ilk", -Cm, inertia) - np.einsum("il,ljk->ijk", inertia, Cm) + Fb)
