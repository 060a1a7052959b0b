"""Adaptation metric tensors from recovered Hessians.

The metric combines the absolute Hessian with a regularization floor alpha
chosen so that the metric volume of the domain doubles the unregularized
one; this keeps a fixed fraction of the vertices in the regions where the
Hessian is large.  Exponent variants target the L2 and H1 interpolation
error norms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import SimplicialMesh

# bisection controls for the alpha constraint
_ALPHA_LO = 1e-8
_ALPHA_RTOL = 1e-8
_ALPHA_MAX_ITERS = 200
# Hessians below this eigenvalue scale are recovery round-off from flat data;
# they must hit the identity-metric fallback instead of steering the mesh.
_FLAT_EIG = 1e-8


@dataclass
class MetricField:
    """Per-vertex SPD tensors plus the discrete metric volume sigma."""

    tensors: np.ndarray = field(repr=False)  # (N_v, d, d)
    alpha: float
    sigma: float

    @property
    def dim(self) -> int:
        return self.tensors.shape[-1]


def abs_eig(H: np.ndarray) -> np.ndarray:
    """Same eigenvectors, absolute eigenvalues; accepts (d,d) or (n,d,d)."""
    w, V = np.linalg.eigh(H)
    return np.einsum("...ik,...k,...jk->...ij", V, np.abs(w), V)


def element_metric(metric: MetricField, mesh: SimplicialMesh, K: int) -> np.ndarray:
    """Metric tensor on element K: arithmetic mean of its vertex tensors."""
    return metric.tensors[mesh.elements[K]].mean(axis=0)


def element_metric_batch(tensors: np.ndarray, mesh: SimplicialMesh) -> np.ndarray:
    return tensors[mesh.elements].mean(axis=1)


def metric_sigma(mesh: SimplicialMesh, tensors: np.ndarray) -> float:
    """Discrete metric volume: sum_K |K| sqrt(det(M_K))."""
    M_K = element_metric_batch(tensors, mesh)
    return float(np.sum(mesh.element_volumes() * np.sqrt(np.linalg.det(M_K))))


def _solve_alpha(volumes, eig_K, q):
    """Bisection for alpha in sum |K| prod(alpha + eig_K)^q = 2 * rhs."""
    rhs = 2.0 * float(np.sum(volumes * np.prod(eig_K, axis=1) ** q))
    if rhs == 0.0:
        return None  # flat function; caller falls back to the identity metric

    def residual(a):
        return float(np.sum(volumes * np.prod(a + eig_K, axis=1) ** q)) - rhs

    lo = _ALPHA_LO
    if residual(lo) >= 0.0:
        return lo
    hi = 1.0
    while residual(hi) < 0.0:
        hi *= 2.0
    for _ in range(_ALPHA_MAX_ITERS):
        mid = 0.5 * (lo + hi)
        r = residual(mid)
        if abs(r) <= _ALPHA_RTOL * rhs:
            return mid
        if r < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _build_metric(mesh: SimplicialMesh, H: np.ndarray, det_exp: float, q: float):
    d = mesh.dim
    absH = abs_eig(np.asarray(H, dtype=float))
    absH_K = element_metric_batch(absH, mesh)
    eig_K = np.linalg.eigvalsh(absH_K)
    alpha = None
    if eig_K.max() >= _FLAT_EIG:
        alpha = _solve_alpha(mesh.element_volumes(), eig_K, q)
    if alpha is None:
        tensors = np.tile(np.eye(d), (mesh.n_vertices, 1, 1))
        return MetricField(tensors, alpha=1.0, sigma=metric_sigma(mesh, tensors))
    A = absH + alpha * np.eye(d)
    scale = np.linalg.det(A) ** det_exp
    tensors = scale[:, None, None] * A
    return MetricField(tensors, alpha=alpha, sigma=metric_sigma(mesh, tensors))


def build_metric_l2(mesh: SimplicialMesh, H: np.ndarray) -> MetricField:
    """Metric minimizing the L2 norm of the linear interpolation error."""
    d = mesh.dim
    return _build_metric(mesh, H, det_exp=-1.0 / (d + 4), q=2.0 / (d + 4))


def build_metric_h1(mesh: SimplicialMesh, H: np.ndarray) -> MetricField:
    """Metric variant targeting the H1 seminorm of the interpolation error."""
    d = mesh.dim
    return _build_metric(mesh, H, det_exp=-1.0 / (d + 2), q=1.0 / (d + 2))


_METRIC_BUILDERS = {"l2": build_metric_l2, "h1": build_metric_h1}


def build_metric(mesh: SimplicialMesh, H: np.ndarray, kind: str = "l2") -> MetricField:
    try:
        builder = _METRIC_BUILDERS[kind]
    except KeyError:
        raise ValueError(f"unknown metric kind {kind!r}; expected 'l2' or 'h1'") from None
    return builder(mesh, H)


def scale_metric(mesh: SimplicialMesh, metric: MetricField, c: float) -> MetricField:
    """Metric scaled by c > 0, with sigma recomputed from the scaled tensors."""
    if c <= 0:
        raise ValueError("scale must be positive")
    tensors = c * metric.tensors
    return MetricField(tensors, alpha=metric.alpha, sigma=metric_sigma(mesh, tensors))


def dump_metric_csv(path, metric: MetricField) -> None:
    """Debug dump: one row per vertex with the upper-triangle tensor entries."""
    d = metric.dim
    cols = [(i, j) for i in range(d) for j in range(i, d)]
    header = "vertex," + ",".join(f"M{i + 1}{j + 1}" for i, j in cols) + ",alpha,sigma"
    with open(path, "w") as f:
        f.write(header + "\n")
        for v, M in enumerate(metric.tensors):
            entries = ",".join(repr(float(M[i, j])) for i, j in cols)
            f.write(f"{v},{entries},{repr(metric.alpha)},{repr(metric.sigma)}\n")
