"""Shared fixtures-in-spirit: mesh perturbation and analytic oracles."""
import numpy as np

from meshadapt import build_structured_mesh
from meshadapt.mesh import BoundaryKind


def perturbed_mesh(dim, n, seed, amplitude=0.25):
    """Structured mesh with vertices jiggled by up to amplitude/n.

    Interior vertices move freely, facet/edge vertices slide within their
    boundary entity, corners stay put; the result is always untangled.
    """
    mesh = build_structured_mesh(dim, n)
    rng = np.random.default_rng(seed)
    shift = rng.uniform(-amplitude / n, amplitude / n, size=mesh.vertices.shape)
    shift[mesh.fixed_axes] = 0.0
    out = mesh.with_vertices(mesh.vertices + shift)
    assert (out.element_dets() > 0).all(), "perturbation amplitude too large"
    return out


def random_spd(rng, d, scale=1.0):
    """Random symmetric positive definite d x d matrix."""
    A = rng.normal(size=(d, d))
    return scale * (A @ A.T + d * np.eye(d))


def random_jacobian(rng, d, det_range=(0.1, 10.0)):
    """Random d x d matrix with log-uniform determinant in det_range.

    Built from orthogonal factors and bounded singular values so the entries
    stay O(1): wildly scaled J makes the energy's additive terms differ by
    orders of magnitude and drowns finite-difference oracles in cancellation.
    """
    Q1, _ = np.linalg.qr(rng.normal(size=(d, d)))
    Q2, _ = np.linalg.qr(rng.normal(size=(d, d)))
    s = rng.uniform(0.6, 1.8, size=d)
    J = Q1 @ np.diag(s) @ Q2
    det = np.linalg.det(J)
    if det < 0:
        J[:, 0] = -J[:, 0]
        det = -det
    target = np.exp(rng.uniform(np.log(det_range[0]), np.log(det_range[1])))
    return J * (target / det) ** (1.0 / d)


def fd_grad_wrt_J(G_of, J, h=1e-6):
    """Central finite differences of a scalar function of J, entry by entry.

    Returns the matrix D with D[k, l] = dG/dJ[k, l].
    """
    d = J.shape[0]
    D = np.zeros_like(J)
    for k in range(d):
        for l in range(d):
            Jp = J.copy()
            Jm = J.copy()
            Jp[k, l] += h
            Jm[k, l] -= h
            D[k, l] = (G_of(Jp) - G_of(Jm)) / (2 * h)
    return D


def fd_scalar(G_of, x, h=1e-6):
    return (G_of(x + h) - G_of(x - h)) / (2 * h)
