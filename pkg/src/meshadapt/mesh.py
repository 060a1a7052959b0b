"""Simplicial mesh container and the geometric primitives of the discretization.

A mesh is a set of vertices plus positively oriented simplices (triangles in
2D, tetrahedra in 3D) on the unit box.  Physical, computational, and reference
meshes share connectivity; only vertex positions differ, so the connectivity
derived structures (patches, element adjacency, edge list) live in a topology
object shared between meshes created with :meth:`SimplicialMesh.with_vertices`.
"""
from __future__ import annotations

import math
from enum import IntEnum

import numpy as np

from .errors import PointLocationError, TangledMeshError
from .linalg import det_batch, inv_batch

# Absolute snap tolerance for classifying/keeping vertices on unit-box facets.
BOUNDARY_TOL = 1e-10
# Barycentric slack accepted by point location.
BARY_TOL = 1e-10


class BoundaryKind(IntEnum):
    INTERIOR = 0
    FACET = 1
    EDGE = 2  # 3D only: vertex on the intersection line of two facets
    CORNER = 3


class _Topology:
    """Connectivity-derived data shared by all meshes with the same elements."""

    def __init__(self, elements: np.ndarray, n_vertices: int):
        self.elements = np.ascontiguousarray(elements, dtype=np.int64)
        self.n_vertices = int(n_vertices)
        self.n_elements = self.elements.shape[0]
        self.dim = self.elements.shape[1] - 1
        self._patches = None
        self._vertex_neighbors = None
        self._element_neighbors = None
        self._edges = None
        self._anchors = None

    @property
    def patches(self):
        """Per-vertex array of incident element ids."""
        if self._patches is None:
            order = np.argsort(self.elements.ravel(), kind="stable")
            elem_of_slot = np.repeat(np.arange(self.n_elements), self.dim + 1)
            counts = np.bincount(self.elements.ravel(), minlength=self.n_vertices)
            splits = np.cumsum(counts)[:-1]
            self._patches = np.split(elem_of_slot[order], splits)
        return self._patches

    @property
    def vertex_neighbors(self):
        """Per-vertex array of adjacent vertex ids (vertices sharing an element)."""
        if self._vertex_neighbors is None:
            nbrs = [set() for _ in range(self.n_vertices)]
            for elem in self.elements:
                for a in elem:
                    nbrs[a].update(elem)
            self._vertex_neighbors = [
                np.fromiter(sorted(s - {i}), dtype=np.int64)
                for i, s in enumerate(nbrs)
            ]
        return self._vertex_neighbors

    @property
    def element_neighbors(self):
        """(N, d+1) ids of the element across the facet opposite local vertex k, -1 on boundary."""
        if self._element_neighbors is None:
            d1 = self.dim + 1
            nbr = np.full((self.n_elements, d1), -1, dtype=np.int64)
            facet_owner = {}
            for k_el, elem in enumerate(self.elements):
                for loc in range(d1):
                    facet = tuple(sorted(np.delete(elem, loc)))
                    other = facet_owner.pop(facet, None)
                    if other is None:
                        facet_owner[facet] = (k_el, loc)
                    else:
                        o_el, o_loc = other
                        nbr[k_el, loc] = o_el
                        nbr[o_el, o_loc] = k_el
            self._element_neighbors = nbr
        return self._element_neighbors

    @property
    def edges(self):
        """Unique undirected vertex pairs (E, 2)."""
        if self._edges is None:
            d1 = self.dim + 1
            pairs = []
            for a in range(d1):
                for b in range(a + 1, d1):
                    pairs.append(self.elements[:, [a, b]])
            all_pairs = np.sort(np.concatenate(pairs, axis=0), axis=1)
            self._edges = np.unique(all_pairs, axis=0)
        return self._edges

    @property
    def anchors(self):
        """One incident element per vertex; walk seeds for point location."""
        if self._anchors is None:
            anchors = np.zeros(self.n_vertices, dtype=np.int64)
            seen = np.zeros(self.n_vertices, dtype=bool)
            for k_el, elem in enumerate(self.elements):
                for a in elem:
                    if not seen[a]:
                        anchors[a] = k_el
                        seen[a] = True
            self._anchors = anchors
        return self._anchors


class SimplicialMesh:
    """Vertices plus positively oriented simplices on the unit box.

    Vertex boundary data (kind and which box facets pin each coordinate) is
    classified geometrically at construction and carried along unchanged by
    :meth:`with_vertices`, which is how moving-mesh updates preserve the
    boundary correspondence.
    """

    def __init__(self, vertices, elements, *, _topology=None, _boundary=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] not in (2, 3):
            raise ValueError("vertices must be (N_v, 2) or (N_v, 3)")
        self.dim = self.vertices.shape[1]
        if _topology is not None:
            self.topology = _topology
        else:
            elements = np.asarray(elements, dtype=np.int64)
            if elements.ndim != 2 or elements.shape[1] != self.dim + 1:
                raise ValueError("elements must be (N, dim+1)")
            self.topology = _Topology(elements, self.vertices.shape[0])
        if _boundary is not None:
            self.boundary_kind, self.fixed_axes = _boundary
        else:
            self.boundary_kind, self.fixed_axes = _classify_box_boundary(self.vertices)
        self._last_hit = 0  # walk cache for locate_point

    # -- basic accessors -------------------------------------------------

    @property
    def elements(self) -> np.ndarray:
        return self.topology.elements

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.topology.n_elements

    @property
    def patches(self):
        return self.topology.patches

    def with_vertices(self, vertices) -> "SimplicialMesh":
        """New mesh with the same connectivity and boundary data, new coordinates."""
        vertices = np.ascontiguousarray(vertices, dtype=float)
        if vertices.shape != self.vertices.shape:
            raise ValueError("vertex array shape must match")
        return SimplicialMesh(
            vertices,
            None,
            _topology=self.topology,
            _boundary=(self.boundary_kind, self.fixed_axes),
        )

    def copy(self) -> "SimplicialMesh":
        return self.with_vertices(self.vertices.copy())

    def same_topology(self, other: "SimplicialMesh") -> bool:
        return self.topology is other.topology or np.array_equal(
            self.elements, other.elements
        )

    # -- geometry ---------------------------------------------------------

    def element_edge_matrices(self) -> np.ndarray:
        """Edge matrices of all elements, (N, d, d); column j holds x_j - x_0."""
        pts = self.vertices[self.elements]
        return np.swapaxes(pts[:, 1:, :] - pts[:, :1, :], 1, 2)

    def element_dets(self) -> np.ndarray:
        return det_batch(self.element_edge_matrices())

    def element_volumes(self) -> np.ndarray:
        return self.element_dets() / math.factorial(self.dim)

    def min_edge_per_vertex(self) -> np.ndarray:
        """Shortest incident edge length for every vertex."""
        edges = self.topology.edges
        lengths = np.linalg.norm(
            self.vertices[edges[:, 0]] - self.vertices[edges[:, 1]], axis=1
        )
        out = np.full(self.n_vertices, np.inf)
        np.minimum.at(out, edges[:, 0], lengths)
        np.minimum.at(out, edges[:, 1], lengths)
        return out

    def facet_id(self, i: int) -> int:
        """Facet id (2*axis + side) for a vertex classified as FACET."""
        if self.boundary_kind[i] != BoundaryKind.FACET:
            raise ValueError(f"vertex {i} is not a facet vertex")
        axis = int(np.flatnonzero(self.fixed_axes[i])[0])
        side = int(self.vertices[i, axis] > 0.5)
        return 2 * axis + side


def _classify_box_boundary(vertices: np.ndarray):
    """Classify vertices against the unit-box facets within BOUNDARY_TOL."""
    dim = vertices.shape[1]
    on_low = np.abs(vertices) <= BOUNDARY_TOL
    on_high = np.abs(vertices - 1.0) <= BOUNDARY_TOL
    fixed = on_low | on_high
    n_fixed = fixed.sum(axis=1)
    kind = np.zeros(vertices.shape[0], dtype=np.int8)
    if dim == 2:
        kind[n_fixed == 1] = BoundaryKind.FACET
        kind[n_fixed >= 2] = BoundaryKind.CORNER
    else:
        kind[n_fixed == 1] = BoundaryKind.FACET
        kind[n_fixed == 2] = BoundaryKind.EDGE
        kind[n_fixed >= 3] = BoundaryKind.CORNER
    return kind, fixed


# -- structured generators -------------------------------------------------

# Kuhn split of the unit cube: one tetrahedron per vertex permutation, walking
# the axes in permutation order from the low corner to the high corner.
_KUHN_PERMS = ((0, 1, 2), (1, 2, 0), (2, 0, 1), (0, 2, 1), (2, 1, 0), (1, 0, 2))
_KUHN_ODD = (False, False, False, True, True, True)


def build_structured_mesh(dim: int, n: int) -> SimplicialMesh:
    """Structured quasi-uniform mesh of the unit box with n cells per side.

    2D cells split along the SW-NE diagonal (2 triangles per cell); 3D cells
    split into 6 tetrahedra by the Kuhn triangulation.  All elements come out
    positively oriented and the pattern is conforming across cells.
    """
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    if n < 2:
        raise ValueError("n must be at least 2")
    axis = np.linspace(0.0, 1.0, n + 1)
    if dim == 2:
        xx, yy = np.meshgrid(axis, axis, indexing="xy")
        vertices = np.column_stack([xx.ravel(), yy.ravel()])

        def vid(i, j):
            return j * (n + 1) + i

        elems = []
        for j in range(n):
            for i in range(n):
                a = vid(i, j)
                b = vid(i + 1, j)
                c = vid(i + 1, j + 1)
                d = vid(i, j + 1)
                elems.append((a, b, c))
                elems.append((a, c, d))
        return SimplicialMesh(vertices, np.array(elems, dtype=np.int64))

    zz, yy, xx = np.meshgrid(axis, axis, axis, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    def vid3(i, j, k):
        return (k * (n + 1) + j) * (n + 1) + i

    elems = []
    steps = np.eye(3, dtype=np.int64)
    for k in range(n):
        for j in range(n):
            for i in range(n):
                base = np.array([i, j, k], dtype=np.int64)
                for perm, odd in zip(_KUHN_PERMS, _KUHN_ODD):
                    p0 = base
                    p1 = p0 + steps[perm[0]]
                    p2 = p1 + steps[perm[1]]
                    p3 = p2 + steps[perm[2]]
                    quad = [p0, p1, p2, p3]
                    if odd:
                        quad[1], quad[2] = quad[2], quad[1]
                    elems.append([vid3(*p) for p in quad])
    return SimplicialMesh(vertices, np.array(elems, dtype=np.int64))


# -- edge matrices -----------------------------------------------------------


class EdgeMatrixPair:
    """Edge matrices of one element in the physical/computational mesh pair."""

    def __init__(self, E_K: np.ndarray, E_Kc: np.ndarray):
        self.E_K = E_K
        self.E_Kc = E_Kc

    @property
    def det_E_K(self) -> float:
        return float(np.linalg.det(self.E_K))

    @property
    def det_E_Kc(self) -> float:
        return float(np.linalg.det(self.E_Kc))

    def jacobian(self) -> np.ndarray:
        """J = E_Kc @ inv(E_K), the element approximation of the inverse map's Jacobian."""
        return self.E_Kc @ np.linalg.inv(self.E_K)

    def det_jacobian(self) -> float:
        return self.det_E_Kc / self.det_E_K


def edge_matrices(
    physical: SimplicialMesh, computational: SimplicialMesh, K: int
) -> EdgeMatrixPair:
    """Edge-matrix pair of element K; meshes must share connectivity."""
    if not physical.same_topology(computational):
        raise ValueError("physical and computational meshes must share connectivity")
    elem = physical.elements[K]
    xp = physical.vertices[elem]
    xc = computational.vertices[elem]
    return EdgeMatrixPair((xp[1:] - xp[0]).T.copy(), (xc[1:] - xc[0]).T.copy())


def element_volume(mesh: SimplicialMesh, K: int) -> float:
    """Volume |K| = det(E_K) / d!."""
    elem = mesh.elements[K]
    pts = mesh.vertices[elem]
    return float(np.linalg.det((pts[1:] - pts[0]).T)) / math.factorial(mesh.dim)


# -- point location ----------------------------------------------------------


def _snap_into_box(p: np.ndarray) -> np.ndarray:
    q = np.clip(p, 0.0, 1.0)
    if np.any(np.abs(q - p) > BOUNDARY_TOL):
        raise PointLocationError(f"point {p} lies outside the unit box")
    return q


def barycentric(mesh: SimplicialMesh, K: int, p: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of p in element K (length d+1, sums to 1)."""
    elem = mesh.elements[K]
    pts = mesh.vertices[elem]
    lam_rest = np.linalg.solve((pts[1:] - pts[0]).T, p - pts[0])
    return np.concatenate([[1.0 - lam_rest.sum()], lam_rest])


def locate_point(mesh: SimplicialMesh, p) -> tuple[int, np.ndarray]:
    """Find the element containing p and its barycentric coordinates.

    Walks from the last-hit element toward p; falls back to a brute-force
    scan over all elements if the walk cycles or runs off the mesh.
    """
    p = _snap_into_box(np.asarray(p, dtype=float))
    nbr = mesh.topology.element_neighbors
    k = mesh._last_hit
    max_steps = 4 * int(mesh.n_elements ** (1.0 / mesh.dim)) + 32
    for _ in range(max_steps):
        lam = barycentric(mesh, k, p)
        worst = int(np.argmin(lam))
        if lam[worst] >= -BARY_TOL:
            mesh._last_hit = k
            return k, lam
        k_next = nbr[k, worst]
        if k_next < 0:
            break
        k = k_next
    return _locate_brute(mesh, p)


def _locate_brute(mesh: SimplicialMesh, p: np.ndarray) -> tuple[int, np.ndarray]:
    pts = mesh.vertices[mesh.elements]
    E = np.swapaxes(pts[:, 1:, :] - pts[:, :1, :], 1, 2)
    rhs = p[None, :] - pts[:, 0, :]
    lam_rest = np.linalg.solve(E, rhs[..., None])[..., 0]
    lam = np.concatenate([1.0 - lam_rest.sum(axis=1, keepdims=True), lam_rest], axis=1)
    worst = lam.min(axis=1)
    best = int(np.argmax(worst))
    if worst[best] < -BARY_TOL:
        raise PointLocationError(f"point {p} not found in any element")
    mesh._last_hit = best
    return best, lam[best]


def _locate_many(mesh: SimplicialMesh, points: np.ndarray, start: np.ndarray):
    """Vectorized simultaneous walk for many query points.

    ``start`` holds one seed element per point.  Returns (element_ids,
    barycentric coordinates).  Stragglers that cycle or exit the walk are
    resolved by the brute-force scan.
    """
    n_pts = points.shape[0]
    pts = mesh.vertices[mesh.elements]
    E = np.swapaxes(pts[:, 1:, :] - pts[:, :1, :], 1, 2)
    invE = inv_batch(E)
    origins = pts[:, 0, :]
    nbr = mesh.topology.element_neighbors

    cand = start.astype(np.int64).copy()
    elem_ids = np.full(n_pts, -1, dtype=np.int64)
    lams = np.zeros((n_pts, mesh.dim + 1))
    active = np.arange(n_pts)
    max_rounds = 4 * int(mesh.n_elements ** (1.0 / mesh.dim)) + 32
    for _ in range(max_rounds):
        if active.size == 0:
            break
        k = cand[active]
        rhs = points[active] - origins[k]
        lam_rest = np.einsum("nij,nj->ni", invE[k], rhs)
        lam = np.concatenate(
            [1.0 - lam_rest.sum(axis=1, keepdims=True), lam_rest], axis=1
        )
        worst = np.argmin(lam, axis=1)
        ok = lam[np.arange(active.size), worst] >= -BARY_TOL
        done = active[ok]
        elem_ids[done] = k[ok]
        lams[done] = lam[ok]
        moved = ~ok
        nxt = nbr[k[moved], worst[moved]]
        stuck = nxt < 0
        cand[active[moved]] = np.where(stuck, cand[active[moved]], nxt)
        # points whose walk hit the boundary go to the brute-force fallback
        still = active[moved][~stuck]
        fellout = active[moved][stuck]
        for i in fellout:
            elem_ids[i], lams[i] = _locate_brute(mesh, points[i])
        active = still
    for i in active:  # walk budget exhausted (cycling on a deformed mesh)
        elem_ids[i], lams[i] = _locate_brute(mesh, points[i])
    return elem_ids, lams


# -- mesh update -------------------------------------------------------------


def interpolate_new_mesh(
    physical: SimplicialMesh,
    computational: SimplicialMesh,
    reference: SimplicialMesh,
) -> SimplicialMesh:
    """Pull the physical mesh back to the reference positions.

    Each reference vertex is located in the computational mesh and mapped
    through the piecewise-linear correspondence (computational -> physical);
    the result is the updated physical mesh on the reference connectivity.
    """
    if not physical.same_topology(computational) or not physical.same_topology(
        reference
    ):
        raise ValueError("all three meshes must share connectivity")
    dets = computational.element_dets()
    bad = np.flatnonzero(dets <= 0.0)
    if bad.size:
        raise TangledMeshError(
            f"computational mesh is tangled (element {bad[0]})", elements=bad
        )

    queries = np.clip(reference.vertices, 0.0, 1.0)
    elem_ids, lams = _locate_many(
        computational, queries, computational.topology.anchors
    )
    corners = physical.vertices[computational.elements[elem_ids]]
    new_verts = np.einsum("nk,nkd->nd", lams, corners)

    # Boundary vertices stay on the box: snap coordinates that landed within
    # tolerance of a facet plane (exactness matters for sliding vertices).
    boundary = reference.boundary_kind != BoundaryKind.INTERIOR
    bv = new_verts[boundary]
    bv[np.abs(bv) <= BOUNDARY_TOL] = 0.0
    bv[np.abs(bv - 1.0) <= BOUNDARY_TOL] = 1.0
    new_verts[boundary] = bv
    return reference.with_vertices(new_verts)
