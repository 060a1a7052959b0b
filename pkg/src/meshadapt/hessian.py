"""Nodal Hessian recovery by local least-squares quadratic fits.

For each vertex a full quadratic polynomial is fitted to the nodal values on
a ring neighborhood and differentiated twice.  Recovered Hessians from linear
data are not guaranteed to converge, but they are accurate enough to steer
the metric construction.
"""
from __future__ import annotations

import logging

import numpy as np

from .mesh import SimplicialMesh

log = logging.getLogger(__name__)

# quadratic coefficient counts: 1 + d + d(d+1)/2
_N_COEF = {2: 6, 3: 10}


def _quadratic_design(dx: np.ndarray) -> np.ndarray:
    """Design matrix columns [1, x_i, x_i * x_j (i<=j)] for centered offsets."""
    cols = [np.ones(dx.shape[0])]
    d = dx.shape[1]
    cols.extend(dx[:, i] for i in range(d))
    for i in range(d):
        for j in range(i, d):
            cols.append(dx[:, i] * dx[:, j])
    return np.column_stack(cols)


def _hessian_from_coefs(coefs: np.ndarray, d: int) -> np.ndarray:
    H = np.empty((d, d))
    idx = 1 + d
    for i in range(d):
        for j in range(i, d):
            c = coefs[idx]
            idx += 1
            if i == j:
                H[i, i] = 2.0 * c
            else:
                H[i, j] = H[j, i] = c
    return H


def _expand_ring(ring: set, neighbors) -> set:
    out = set(ring)
    for v in ring:
        out.update(neighbors[v])
    return out


def _fit_rings(mesh: SimplicialMesh):
    """Fit stencils per vertex: the 1-ring, widened to the 2-ring while the
    neighbor count is below the quadratic coefficient count.  The tight
    stencil matters: ring smearing washes out the recovered Hessian on
    coarse meshes and with it the coarse-mesh adaptation quality.  Sorted
    arrays keep the summation order (and hence round-off) reproducible."""
    n_coef = _N_COEF[mesh.dim]
    neighbors = mesh.topology.vertex_neighbors
    rings = []
    for i in range(mesh.n_vertices):
        ring = set(neighbors[i])
        if len(ring) < n_coef:
            ring = _expand_ring(ring, neighbors) - {i}
        rings.append(np.fromiter(sorted(ring), dtype=np.int64))
    return rings


def _solve_fit(dx: np.ndarray, values: np.ndarray, n_coef: int):
    """Least-squares quadratic fit; returns (coefs, scale) or None if deficient."""
    scale = np.abs(dx).max()
    A = _quadratic_design(dx / scale)
    coefs, _, rank, _ = np.linalg.lstsq(A, values, rcond=None)
    if rank < n_coef:
        return None
    return coefs, scale


def recover_hessian(mesh: SimplicialMesh, u_nodal) -> np.ndarray:
    """Per-vertex symmetric Hessian estimates, shape (N_v, d, d).

    The fit neighborhood starts at the 1-ring and is widened to the 2-ring
    whenever the neighbor count falls below the quadratic coefficient count;
    rank-deficient fits widen further and fall back to a zero Hessian if the
    mesh runs out of vertices to add.

    Stencils are grouped by size and solved through batched normal equations
    (the centered, scaled design keeps them well conditioned); vertices whose
    normal matrix looks near-singular are re-fit one by one.
    """
    u_nodal = np.asarray(u_nodal, dtype=float)
    if u_nodal.shape != (mesh.n_vertices,):
        raise ValueError("u_nodal must hold one value per vertex")
    if not np.isfinite(u_nodal).all():
        raise ValueError("u_nodal must be finite")

    d = mesh.dim
    n_coef = _N_COEF[d]
    rings = getattr(mesh.topology, "_fit_rings", None)
    if rings is None:
        rings = _fit_rings(mesh)
        mesh.topology._fit_rings = rings

    by_size: dict[int, list[int]] = {}
    for i, ring in enumerate(rings):
        by_size.setdefault(len(ring) + 1, []).append(i)

    H = np.zeros((mesh.n_vertices, d, d))
    suspect = []
    for size, verts in by_size.items():
        verts = np.asarray(verts, dtype=np.int64)
        ids = np.empty((verts.size, size), dtype=np.int64)
        for row, i in enumerate(verts):
            ids[row, 0] = i
            ids[row, 1:] = rings[i]
        dx = mesh.vertices[ids] - mesh.vertices[verts][:, None, :]
        scale = np.abs(dx).max(axis=(1, 2))
        dx = dx / scale[:, None, None]
        A = np.stack([_quadratic_design(block) for block in dx])
        AtA = np.swapaxes(A, 1, 2) @ A
        Atb = np.einsum("nmk,nm->nk", A, u_nodal[ids])
        # flag near-singular normal matrices and re-fit those via lstsq
        finite = np.linalg.cond(AtA) < 1e10
        good = np.flatnonzero(finite)
        if good.size:
            coefs = np.linalg.solve(AtA[good], Atb[good][..., None])[..., 0]
            for row, c in zip(good, coefs):
                H[verts[row]] = _hessian_from_coefs(c, d) / scale[row] ** 2
        suspect.extend(verts[np.flatnonzero(~finite)])

    neighbors = mesh.topology.vertex_neighbors
    for i in suspect:
        ring = set(rings[i])
        while True:
            ids_i = np.fromiter(ring | {i}, dtype=np.int64)
            fit = _solve_fit(mesh.vertices[ids_i] - mesh.vertices[i], u_nodal[ids_i], n_coef)
            if fit is not None:
                coefs, scale = fit
                H[i] = _hessian_from_coefs(coefs, d) / scale**2
                break
            wider = _expand_ring(ring, neighbors) - {i}
            if len(wider) == len(ring):
                log.warning("rank-deficient Hessian fit at vertex %d; using 0", i)
                H[i] = 0.0
                break
            ring = wider
    return H
