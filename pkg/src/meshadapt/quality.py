"""Equidistribution/alignment mesh quality measures and interpolation error.

The element measures compare the element map J_K = E_Kc @ inv(E_K) against
the metric: Q_eq checks the metric volume of the element against the mean,
Q_ali the deviation of J_K M_K^{-1} J_K^T from a multiple of the identity.
Both equal 1 exactly on a mesh that is uniform in the metric.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import SimplicialMesh

# Degree-4 symmetric quadrature on the reference triangle (Strang-Fix, 6 pts).
_TRI_PTS = np.array(
    [
        [0.816847572980459, 0.091576213509771],
        [0.091576213509771, 0.816847572980459],
        [0.091576213509771, 0.091576213509771],
        [0.108103018168070, 0.445948490915965],
        [0.445948490915965, 0.108103018168070],
        [0.445948490915965, 0.445948490915965],
    ]
)
_TRI_WTS = np.array([0.109951743655322] * 3 + [0.223381589678011] * 3) / 2.0

# Degree-4 symmetric quadrature on the reference tetrahedron (Keast, 14 pts,
# all weights positive so squared integrands stay nonnegative).
_TET_PTS = np.array(
    [
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
        [0.5, 0.5, 0.0],
        [0.5, 0.0, 0.0],
        [0.0, 0.5, 0.0],
        [0.0, 0.0, 0.5],
        [0.6984197043243866, 0.1005267652252045, 0.1005267652252045],
        [0.1005267652252045, 0.1005267652252045, 0.1005267652252045],
        [0.1005267652252045, 0.1005267652252045, 0.6984197043243866],
        [0.1005267652252045, 0.6984197043243866, 0.1005267652252045],
        [0.0568813795204234, 0.3143728734931922, 0.3143728734931922],
        [0.3143728734931922, 0.3143728734931922, 0.3143728734931922],
        [0.3143728734931922, 0.3143728734931922, 0.0568813795204234],
        [0.3143728734931922, 0.0568813795204234, 0.3143728734931922],
    ]
)
_TET_WTS = (
    np.array(
        [0.0190476190476190] * 6
        + [0.0885898247429807] * 4
        + [0.1328387466855907] * 4
    )
    / 6.0
)


def simplex_quadrature(dim: int):
    """Points (barycentric, (q, d+1)) and weights (normalized to sum 1)."""
    pts, wts = (_TRI_PTS, _TRI_WTS) if dim == 2 else (_TET_PTS, _TET_WTS)
    lam = np.column_stack([1.0 - pts.sum(axis=1), pts])
    return lam, wts / wts.sum()


@dataclass
class QualityReport:
    """Quality and error summary of one adapted mesh."""

    n_elements: int
    n_vertices: int
    q_eq: float
    q_ali: float
    per_element_eq: np.ndarray = field(repr=False)
    per_element_ali: np.ndarray = field(repr=False)
    l2_error: float = float("nan")
    wall_time: float = float("nan")


def quality_element_batch(E, E_c, M_K, sigma, omega_c_volume=1.0):
    """Per-element (Q_eq, Q_ali) for stacked edge matrices and metrics."""
    d = E.shape[-1]
    J = E_c @ np.linalg.inv(E)
    detJ = np.linalg.det(E_c) / np.linalg.det(E)
    A = J @ np.linalg.inv(M_K) @ np.swapaxes(J, -1, -2)
    trA = np.trace(A, axis1=-2, axis2=-1)
    detA = np.linalg.det(A)
    q_ali = trA / (d * detA ** (1.0 / d))
    q_eq = np.sqrt(np.linalg.det(M_K)) / (detJ * sigma / omega_c_volume)
    return q_eq, q_ali


def quality_element(pair, M_K, sigma, omega_c_volume=1.0):
    """(Q_eq, Q_ali) of a single element from its edge-matrix pair."""
    q_eq, q_ali = quality_element_batch(
        pair.E_K[None], pair.E_Kc[None], np.asarray(M_K)[None], sigma, omega_c_volume
    )
    return float(q_eq[0]), float(q_ali[0])


def quality_global(per_element_eq, per_element_ali):
    """Root-mean-square of the element measures (unweighted)."""
    q_eq = float(np.sqrt(np.mean(np.square(per_element_eq))))
    q_ali = float(np.sqrt(np.mean(np.square(per_element_ali))))
    return q_eq, q_ali


def mesh_quality(physical: SimplicialMesh, computational: SimplicialMesh, metric):
    """QualityReport for a physical/computational mesh pair under a metric."""
    M_K = metric.tensors[physical.elements].mean(axis=1)
    per_eq, per_ali = quality_element_batch(
        physical.element_edge_matrices(),
        computational.element_edge_matrices(),
        M_K,
        metric.sigma,
    )
    q_eq, q_ali = quality_global(per_eq, per_ali)
    return QualityReport(
        n_elements=physical.n_elements,
        n_vertices=physical.n_vertices,
        q_eq=q_eq,
        q_ali=q_ali,
        per_element_eq=per_eq,
        per_element_ali=per_ali,
    )


def l2_interp_error(mesh: SimplicialMesh, u) -> float:
    """L2 norm of u minus its vertex-value linear interpolant.

    The element integrals use a fixed symmetric rule exact to degree 4, so
    the quadrature error sits well below the interpolation error for smooth u.
    """
    lam, wts = simplex_quadrature(mesh.dim)
    corners = mesh.vertices[mesh.elements]  # (N, d+1, d)
    pts = np.einsum("qk,nkd->nqd", lam, corners)  # (N, q, d)
    u_exact = np.asarray(u(pts.reshape(-1, mesh.dim))).reshape(pts.shape[:2])
    u_nodal = np.asarray(u(mesh.vertices))
    u_interp = np.einsum("qk,nk->nq", lam, u_nodal[mesh.elements])
    sq = np.square(u_exact - u_interp) @ wts
    return float(np.sqrt(np.sum(mesh.element_volumes() * sq)))
