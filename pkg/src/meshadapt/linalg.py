"""Closed-form determinants and inverses for stacks of 2x2/3x3 matrices.

LAPACK-backed np.linalg calls dominate the solver's inner loop on stacks of
tiny matrices; the explicit formulas are an order of magnitude faster and
exact to the same round-off level for well-conditioned element matrices.
"""
from __future__ import annotations

import numpy as np


def det_batch(A: np.ndarray) -> np.ndarray:
    """Determinants of a (..., d, d) stack, d in {2, 3}."""
    d = A.shape[-1]
    if d == 2:
        return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    if d == 3:
        return (
            A[..., 0, 0] * (A[..., 1, 1] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 1])
            - A[..., 0, 1] * (A[..., 1, 0] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 0])
            + A[..., 0, 2] * (A[..., 1, 0] * A[..., 2, 1] - A[..., 1, 1] * A[..., 2, 0])
        )
    return np.linalg.det(A)


def inv_batch(A: np.ndarray, det: np.ndarray | None = None) -> np.ndarray:
    """Inverses of a (..., d, d) stack, d in {2, 3}; ``det`` may be precomputed."""
    d = A.shape[-1]
    if d not in (2, 3):
        return np.linalg.inv(A)
    if det is None:
        det = det_batch(A)
    out = np.empty_like(A)
    if d == 2:
        out[..., 0, 0] = A[..., 1, 1]
        out[..., 0, 1] = -A[..., 0, 1]
        out[..., 1, 0] = -A[..., 1, 0]
        out[..., 1, 1] = A[..., 0, 0]
    else:
        out[..., 0, 0] = A[..., 1, 1] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 1]
        out[..., 0, 1] = A[..., 0, 2] * A[..., 2, 1] - A[..., 0, 1] * A[..., 2, 2]
        out[..., 0, 2] = A[..., 0, 1] * A[..., 1, 2] - A[..., 0, 2] * A[..., 1, 1]
        out[..., 1, 0] = A[..., 1, 2] * A[..., 2, 0] - A[..., 1, 0] * A[..., 2, 2]
        out[..., 1, 1] = A[..., 0, 0] * A[..., 2, 2] - A[..., 0, 2] * A[..., 2, 0]
        out[..., 1, 2] = A[..., 0, 2] * A[..., 1, 0] - A[..., 0, 0] * A[..., 1, 2]
        out[..., 2, 0] = A[..., 1, 0] * A[..., 2, 1] - A[..., 1, 1] * A[..., 2, 0]
        out[..., 2, 1] = A[..., 0, 1] * A[..., 2, 0] - A[..., 0, 0] * A[..., 2, 1]
        out[..., 2, 2] = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    return out / det[..., None, None]


def trace_JAJt(J: np.ndarray, A: np.ndarray) -> np.ndarray:
    """tr(J @ A @ J^T) per stack entry."""
    return ((J @ A) * J).sum(axis=(-2, -1))


def trace_KtAK(K: np.ndarray, A: np.ndarray) -> np.ndarray:
    """tr(K^T @ A @ K) per stack entry."""
    return ((A @ K) * K).sum(axis=(-2, -1))
