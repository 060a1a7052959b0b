"""The three meshing energy densities and their derivative blocks.

Each density G(J, det J, M) is evaluated per element at J = E_Kc E_K^{-1};
the derivative blocks feed the nodal velocity formula.  The ``*_batch``
entry point evaluates stacks of elements at once and is what the solver
uses; the scalar wrappers expose the per-element contract.

Derivative layout: ``dG_dJ`` is the matrix whose product with dJ under the
trace pairing gives dG, i.e. ``dG_dJ[a, b] = dG/dJ[b, a]`` entrywise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BarrierError
from .linalg import det_batch, inv_batch, trace_JAJt, trace_KtAK
from .mesh import SimplicialMesh

KINDS = ("winslow", "huang", "hr")


@dataclass(frozen=True)
class FunctionalSpec:
    """Which energy to minimize, with its dimensionless parameters."""

    kind: str
    p: float = 2.0
    theta: float = 1.0 / 3.0  # huang: weight between alignment and volume terms
    nu: float = 1.0  # hr: barrier strength
    thetas: tuple = (1.0 / 3.0, 1.0 / 3.0, 1.0, 0.1)  # hr term weights

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown functional kind {self.kind!r}")

    @property
    def needs_sigma(self) -> bool:
        return self.kind == "hr"

    def validate(self, dim: int) -> None:
        """Warn when parameters leave the coercivity/polyconvexity range."""
        if self.kind == "huang":
            if not (0.0 < self.theta <= 0.5 and dim * self.p >= 2.0 and self.p >= 1.0):
                warnings.warn(
                    f"huang parameters (p={self.p}, theta={self.theta}) are outside "
                    "the range 0 < theta <= 1/2, d*p >= 2, p >= 1; no coercivity "
                    "guarantees apply",
                    stacklevel=2,
                )
        elif self.kind == "hr":
            t1, t2, t3, t4 = self.thetas
            ok = (
                t3 - t1 - t2 > 0.0
                and self.p > 1.0
                and self.nu > 0.0
                and min(t1, t2, t3, t4) > 0.0
            )
            if not ok:
                warnings.warn(
                    f"hr parameters (p={self.p}, nu={self.nu}, thetas={self.thetas}) "
                    "are outside the range theta3-theta1-theta2 > 0, p > 1, nu > 0, "
                    "theta_i > 0; no coercivity guarantees apply",
                    stacklevel=2,
                )


@dataclass
class GDerivatives:
    """Energy density and its derivative block for one element."""

    G: float
    dG_dJ: np.ndarray
    dG_ddetJ: float


def eval_batch(spec, J, detJ, M, invM, detM, sigma=None, invJ=None, want_grad=True):
    """(G, dG_dJ, dG_ddetJ) for stacked elements; gradient parts None if not wanted."""
    d = J.shape[-1]
    if spec.kind == "winslow":
        G = 0.5 * trace_JAJt(J, invM)
        if not want_grad:
            return G, None, None
        dGdJ = invM @ np.swapaxes(J, -1, -2)
        return G, dGdJ, np.zeros_like(G)

    if spec.kind == "huang":
        p, theta = spec.p, spec.theta
        if p != round(p) and np.any(detJ <= 0.0):
            raise ValueError("det(J) <= 0 with non-integer p is outside the domain")
        dp = d * p
        sM = np.sqrt(detM)
        t1 = trace_JAJt(J, invM)
        G = theta * sM * t1 ** (dp / 2) + (1 - 2 * theta) * d ** (dp / 2) * sM ** (
            1 - p
        ) * detJ**p
        if not want_grad:
            return G, None, None
        dGdJ = (dp * theta * sM * t1 ** (dp / 2 - 1))[:, None, None] * (
            invM @ np.swapaxes(J, -1, -2)
        )
        dGddet = p * (1 - 2 * theta) * d ** (dp / 2) * sM ** (1 - p) * detJ ** (p - 1)
        return G, dGdJ, dGddet

    # hr: the det(J)^{-nu} barrier requires positive orientation and sigma
    if sigma is None or sigma <= 0.0:
        raise ValueError("the hr functional requires sigma > 0")
    bad = np.flatnonzero(detJ <= 0.0)
    if bad.size:
        raise BarrierError(
            f"det(J) <= 0 at element {bad[0]}: barrier term undefined", elements=bad
        )
    th1, th2, th3, th4 = spec.thetas
    p, nu = spec.p, spec.nu
    dp = d * p
    r = dp / (d - 1)
    s = dp / (2 * (d - 1))
    c2 = d ** (dp * (d - 2) / (2 * (d - 1)))
    sM = np.sqrt(detM)
    if invJ is None:
        # J's own determinant, not the detJ argument: the two are independent
        # variables of G and may legitimately differ (finite differencing)
        invJ = inv_batch(J)
    t1 = trace_JAJt(J, invM)
    t2 = trace_KtAK(invJ, M)  # tr(J^-T M J^-1)
    dm2 = detM ** (0.5 * (1 - r))
    G = (
        th1 * sM * t1 ** (dp / 2)
        + th2 * c2 * dm2 * detJ**r * t2**s
        + (th3 - th1 - th2) * d ** (dp / 2) * sM ** (1 - p) * detJ**p
        + (th4 / sigma ** (p + nu)) * sM ** (1 + nu) * detJ ** (-nu)
    )
    if not want_grad:
        return G, None, None
    Jt = np.swapaxes(J, -1, -2)
    invJt = np.swapaxes(invJ, -1, -2)
    dGdJ = (th1 * dp * sM * t1 ** (dp / 2 - 1))[:, None, None] * (invM @ Jt) - (
        th2 * dp / (d - 1) * c2 * dm2 * detJ**r * t2 ** (s - 1)
    )[:, None, None] * (invJ @ invJt @ M @ invJ)
    dGddet = (
        th2 * dp / (d - 1) * c2 * dm2 * detJ ** (r - 1) * t2**s
        + (th3 - th1 - th2) * p * d ** (dp / 2) * sM ** (1 - p) * detJ ** (p - 1)
        - (th4 * nu / sigma ** (p + nu)) * sM ** (1 + nu) * detJ ** (-nu - 1)
    )
    return G, dGdJ, dGddet


def _eval_scalar(spec, J, detJ, M, sigma=None) -> GDerivatives:
    J = np.asarray(J, dtype=float)
    M = np.asarray(M, dtype=float)
    G, dGdJ, dGddet = eval_batch(
        spec,
        J[None],
        np.atleast_1d(float(detJ)),
        M[None],
        np.linalg.inv(M)[None],
        np.atleast_1d(np.linalg.det(M)),
        sigma=sigma,
    )
    return GDerivatives(float(G[0]), dGdJ[0], float(dGddet[0]))


def eval_winslow(J, detJ, M) -> GDerivatives:
    """G = tr(J M^-1 J^T)/2 with dG_ddetJ identically zero."""
    return _eval_scalar(FunctionalSpec("winslow"), J, detJ, M)


def eval_huang(J, detJ, M, spec: FunctionalSpec) -> GDerivatives:
    return _eval_scalar(spec, J, detJ, M)


def eval_hr(J, detJ, M, spec: FunctionalSpec, sigma: float) -> GDerivatives:
    return _eval_scalar(spec, J, detJ, M, sigma=sigma)


def balancing_P(spec: FunctionalSpec, M_vertex) -> float:
    """Vertex multiplier making the mesh equation invariant under M -> c M."""
    det = float(np.linalg.det(np.asarray(M_vertex, dtype=float)))
    if spec.kind == "winslow":
        return det ** (1.0 / np.asarray(M_vertex).shape[-1])
    return det ** ((spec.p - 1.0) / 2.0)


def balancing_P_batch(spec: FunctionalSpec, tensors: np.ndarray) -> np.ndarray:
    det = np.linalg.det(tensors)
    if spec.kind == "winslow":
        return det ** (1.0 / tensors.shape[-1])
    return det ** ((spec.p - 1.0) / 2.0)


def discrete_energy(
    physical: SimplicialMesh,
    computational: SimplicialMesh,
    metric,
    spec: FunctionalSpec,
) -> float:
    """I_h = sum_K |K| G_K on the current mesh pair."""
    E = physical.element_edge_matrices()
    E_c = computational.element_edge_matrices()
    detE = det_batch(E)
    J = E_c @ inv_batch(E, detE)
    detJ = det_batch(E_c) / detE
    M_K = metric.tensors[physical.elements].mean(axis=1)
    G, _, _ = eval_batch(
        spec,
        J,
        detJ,
        M_K,
        inv_batch(M_K),
        det_batch(M_K),
        sigma=metric.sigma if spec.needs_sigma else None,
        want_grad=False,
    )
    return float(np.sum(detE / math.factorial(physical.dim) * G))
