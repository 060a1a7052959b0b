"""Gradient-flow mesh equation: velocity assembly, time integration, outer loop.

The discretized meshing energy is differentiated with respect to the
computational vertex positions; each element contributes local velocities to
its vertices, patches are summed, and the field is scaled per vertex by the
balancing function over the time-scale parameter tau.  Forward-Euler steps
with displacement capping, inversion rejection, and an energy-descent check
integrate the flow over a pseudo-time interval; the outer loop alternates
integration with the linear-interpolation mesh update until the physical
mesh stops moving.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StallError
from .functionals import FunctionalSpec, balancing_P_batch, eval_batch
from .hessian import recover_hessian
from .linalg import det_batch, inv_batch
from .mesh import BoundaryKind, SimplicialMesh, interpolate_new_mesh, _locate_many
from .metric import MetricField, build_metric, scale_metric
from .quality import mesh_quality

log = logging.getLogger(__name__)

_DT_MIN = 1e-12
# relative slack for the energy-descent acceptance test (round-off at stationarity)
_ENERGY_SLACK = 1e-12


@dataclass
class AdaptationConfig:
    """Knobs of the pseudo-time integration and the outer adaptation loop."""

    tau: float = 0.1
    t_interval: float = 1.0
    max_inner_steps: int = 100
    max_outer_iters: int = 20
    displacement_tol: float | None = None  # default: 1e-4 * domain diameter
    step_safety: float = 0.5

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.t_interval <= 0 or self.max_inner_steps < 1 or self.max_outer_iters < 1:
            raise ValueError("interval and iteration limits must be positive")
        if not 0.0 < self.step_safety <= 1.0:
            raise ValueError("step_safety must lie in (0, 1]")
        if self.displacement_tol is not None and self.displacement_tol <= 0:
            raise ValueError("displacement_tol must be positive")

    def tol_for(self, dim: int) -> float:
        if self.displacement_tol is not None:
            return self.displacement_tol
        return 1e-4 * math.sqrt(dim)


class BoundaryConstraint:
    """Per-vertex velocity projectors for the box boundary.

    Corners are pinned, facet vertices slide in their facet plane, 3D edge
    vertices slide along their edge line; all are realized by zeroing the
    box-fixed coordinate axes, so the projectors are diagonal, idempotent,
    and symmetric.
    """

    def __init__(self, fixed_axes: np.ndarray):
        self.fixed_axes = fixed_axes

    @classmethod
    def from_mesh(cls, mesh: SimplicialMesh) -> "BoundaryConstraint":
        return cls(mesh.fixed_axes)

    def apply(self, velocities: np.ndarray) -> np.ndarray:
        out = velocities.copy()
        out[self.fixed_axes] = 0.0
        return out

    def projector(self, i: int) -> np.ndarray:
        return np.diag((~self.fixed_axes[i]).astype(float))


def project_boundary(velocities: np.ndarray, constraint: BoundaryConstraint):
    return constraint.apply(velocities)


class _IntervalContext:
    """Physical-side quantities frozen while the computational mesh moves."""

    def __init__(self, physical: SimplicialMesh, metric: MetricField, spec: FunctionalSpec):
        self.spec = spec
        self.dim = physical.dim
        self.elements = physical.elements
        E = physical.element_edge_matrices()
        self.E = E
        self.detE = det_batch(E)
        self.invE = inv_batch(E, self.detE)
        self.volumes = self.detE / math.factorial(physical.dim)
        M_K = metric.tensors[physical.elements].mean(axis=1)
        self.M_K = M_K
        self.detM_K = det_batch(M_K)
        self.invM_K = inv_batch(M_K, self.detM_K)
        self.sigma = metric.sigma if spec.needs_sigma else None
        self.P = balancing_P_batch(spec, metric.tensors)
        self.n_vertices = physical.n_vertices
        self._flat_idx = self.elements.ravel()

    def comp_state(self, vertices: np.ndarray):
        """Edge matrices and determinants of the computational configuration."""
        pts = vertices[self.elements]
        E_c = np.swapaxes(pts[:, 1:, :] - pts[:, :1, :], 1, 2)
        return E_c, det_batch(E_c)

    def energy_from(self, E_c, detE_c) -> float:
        J = E_c @ self.invE
        detJ = detE_c / self.detE
        invJ = self.E @ inv_batch(E_c, detE_c) if self.spec.kind == "hr" else None
        G, _, _ = eval_batch(
            self.spec, J, detJ, self.M_K, self.invM_K, self.detM_K,
            sigma=self.sigma, invJ=invJ, want_grad=False,
        )
        return float(np.sum(self.volumes * G))

    def local_velocities_from(self, E_c, detE_c) -> np.ndarray:
        """Per-element local velocities, shape (N, d+1, d); row 0 is v_0."""
        J = E_c @ self.invE
        detJ = detE_c / self.detE
        needs_det_term = self.spec.kind != "winslow"
        invE_c = inv_batch(E_c, detE_c) if needs_det_term else None
        invJ = self.E @ invE_c if self.spec.kind == "hr" else None
        _, dGdJ, dGddet = eval_batch(
            self.spec, J, detJ, self.M_K, self.invM_K, self.detM_K,
            sigma=self.sigma, invJ=invJ,
        )
        V = -(self.invE @ dGdJ)
        if needs_det_term:
            V -= (dGddet * detJ)[:, None, None] * invE_c
        v0 = -V.sum(axis=1, keepdims=True)
        return np.concatenate([v0, V], axis=1)

    def patch_sums_from(self, E_c, detE_c) -> np.ndarray:
        """sum_{K in patch(i)} |K| v_i^K for every vertex, shape (N_v, d)."""
        vloc = self.local_velocities_from(E_c, detE_c)
        contrib = (self.volumes[:, None, None] * vloc).reshape(-1, self.dim)
        # bincount keeps the element-order summation deterministic
        return np.column_stack(
            [
                np.bincount(self._flat_idx, weights=contrib[:, a], minlength=self.n_vertices)
                for a in range(self.dim)
            ]
        )

    def velocities_from(self, E_c, detE_c, tau: float) -> np.ndarray:
        return self.patch_sums_from(E_c, detE_c) * (self.P / tau)[:, None]

    # mesh-level entry points; ``state`` short-circuits the edge-matrix build

    def energy(self, comp: SimplicialMesh, state=None) -> float:
        E_c, detE_c = state if state is not None else self.comp_state(comp.vertices)
        return self.energy_from(E_c, detE_c)

    def local_velocities(self, comp: SimplicialMesh) -> np.ndarray:
        return self.local_velocities_from(*self.comp_state(comp.vertices))

    def patch_sums(self, comp: SimplicialMesh) -> np.ndarray:
        return self.patch_sums_from(*self.comp_state(comp.vertices))

    def velocities(self, comp: SimplicialMesh, tau: float, state=None) -> np.ndarray:
        E_c, detE_c = state if state is not None else self.comp_state(comp.vertices)
        return self.velocities_from(E_c, detE_c, tau)


def local_velocities(pair, M_K, spec: FunctionalSpec, sigma=None) -> np.ndarray:
    """Local velocities of one element from its edge-matrix pair, (d+1, d)."""
    E = pair.E_K[None]
    E_c = pair.E_Kc[None]
    detE = np.linalg.det(E)
    detE_c = np.linalg.det(E_c)
    if not (detE > 0).all() or not (detE_c > 0).all():
        raise ValueError("edge matrices must be positively oriented")
    invE = np.linalg.inv(E)
    invE_c = np.linalg.inv(E_c)
    J = E_c @ invE
    detJ = detE_c / detE
    assert abs(np.linalg.det(J[0]) - detJ[0]) <= 1e-10 * abs(detJ[0])
    M_K = np.asarray(M_K, dtype=float)[None]
    _, dGdJ, dGddet = eval_batch(
        spec, J, detJ, M_K, np.linalg.inv(M_K), np.linalg.det(M_K), sigma=sigma
    )
    V = -(invE @ dGdJ) - (dGddet * detJ)[:, None, None] * invE_c
    v0 = -V.sum(axis=1, keepdims=True)
    return np.concatenate([v0, V], axis=1)[0]


def assemble_velocities(
    physical: SimplicialMesh,
    computational: SimplicialMesh,
    metric: MetricField,
    spec: FunctionalSpec,
    config: AdaptationConfig,
) -> np.ndarray:
    """Nodal velocity field dxi/dt, (N_v, d); boundary projection not applied."""
    ctx = _IntervalContext(physical, metric, spec)
    return ctx.velocities(computational, config.tau)


@dataclass
class IntegrationResult:
    mesh: SimplicialMesh
    energies: list = field(repr=False)
    t_reached: float = 0.0
    n_steps: int = 0
    n_rejected: int = 0


def integrate_interval(
    physical: SimplicialMesh,
    computational_start: SimplicialMesh,
    metric: MetricField,
    spec: FunctionalSpec,
    config: AdaptationConfig,
) -> IntegrationResult:
    """Integrate the mesh equation from the reference positions.

    Steps are capped so no vertex moves more than step_safety times its
    shortest incident edge; steps that invert an element or raise the energy
    are halved and retried.  Ends at t_interval or max_inner_steps.
    """
    ctx = _IntervalContext(physical, metric, spec)
    constraint = BoundaryConstraint.from_mesh(computational_start)
    comp = computational_start.copy()
    state = ctx.comp_state(comp.vertices)
    energy = ctx.energy(comp, state=state)
    energies = [energy]
    t = 0.0
    dt_prev = np.inf
    n_steps = n_rejected = 0
    while t < config.t_interval and n_steps < config.max_inner_steps:
        v = constraint.apply(ctx.velocities(comp, config.tau, state=state))
        speed = np.linalg.norm(v, axis=1)
        moving = speed > 0.0
        if moving.any():
            ell = comp.min_edge_per_vertex()
            dt = config.step_safety * float(np.min(ell[moving] / speed[moving]))
        else:
            dt = np.inf
        # warm start: grow from the last accepted step instead of re-probing
        # the displacement cap (and its rejections) from scratch
        dt = min(dt, 2.0 * dt_prev, config.t_interval - t)
        while True:
            trial = comp.with_vertices(comp.vertices + dt * v)
            trial_state = ctx.comp_state(trial.vertices)
            bad = np.flatnonzero(~(trial_state[1] > 0.0))  # non-finite counts as bad
            if bad.size == 0:
                trial_energy = ctx.energy(trial, state=trial_state)
                if trial_energy <= energy + _ENERGY_SLACK * abs(energy):
                    break
            n_rejected += 1
            dt *= 0.5
            if dt < _DT_MIN:
                k = int(bad[0]) if bad.size else None
                raise StallError(
                    "step size underflow during mesh-equation integration"
                    + (f" (blocking element {k})" if k is not None else ""),
                    element=k,
                )
        comp = trial
        state = trial_state
        energy = trial_energy
        energies.append(energy)
        t += dt
        dt_prev = dt
        n_steps += 1
    return IntegrationResult(comp, energies, t_reached=t, n_steps=n_steps, n_rejected=n_rejected)


@dataclass
class OuterIteration:
    """Diagnostics of one outer adaptation iteration."""

    iteration: int
    max_displacement: float
    energy: float
    q_eq: float
    q_ali: float
    # orientation audit trail: smallest determinants seen in the accepted
    # computational end state and the updated physical mesh
    min_det_comp: float = float("nan")
    min_det_phys: float = float("nan")


def _as_function(u_provider, base_mesh: SimplicialMesh):
    if callable(u_provider):
        return u_provider
    values = np.asarray(u_provider, dtype=float)
    if values.shape != (base_mesh.n_vertices,):
        raise ValueError("nodal u values must match the initial mesh vertices")
    frozen = base_mesh.copy()

    def u(points):
        pts = np.clip(np.atleast_2d(np.asarray(points, dtype=float)), 0.0, 1.0)
        ids, lams = _locate_many(
            frozen, pts, np.zeros(pts.shape[0], dtype=np.int64)
        )
        return np.einsum("nk,nk->n", lams, values[frozen.elements[ids]])

    return u


def adapt(
    initial_physical: SimplicialMesh,
    u_provider,
    spec: FunctionalSpec,
    metric_kind: str = "l2",
    config: AdaptationConfig | None = None,
    metric_scale: float = 1.0,
):
    """Run the outer adaptation loop to a steady mesh.

    Each iteration samples u on the current physical mesh, rebuilds the
    metric through Hessian recovery, integrates the mesh equation from the
    reference mesh, and updates the physical mesh by linear interpolation;
    it stops when the maximum vertex displacement falls below the tolerance.
    Returns the final mesh and the per-iteration diagnostics.
    """
    config = config or AdaptationConfig()
    spec.validate(initial_physical.dim)
    reference = initial_physical
    physical = initial_physical
    u_fn = _as_function(u_provider, initial_physical)
    tol = config.tol_for(initial_physical.dim)
    diagnostics: list[OuterIteration] = []
    for it in range(1, config.max_outer_iters + 1):
        u = np.asarray(u_fn(physical.vertices), dtype=float)
        metric = build_metric(physical, recover_hessian(physical, u), metric_kind)
        if metric_scale != 1.0:
            metric = scale_metric(physical, metric, metric_scale)
        result = integrate_interval(physical, reference, metric, spec, config)
        new_physical = interpolate_new_mesh(physical, result.mesh, reference)
        displacement = float(
            np.linalg.norm(new_physical.vertices - physical.vertices, axis=1).max()
        )
        quality = mesh_quality(physical, reference, metric)
        diagnostics.append(
            OuterIteration(
                it,
                displacement,
                result.energies[-1],
                quality.q_eq,
                quality.q_ali,
                min_det_comp=float(result.mesh.element_dets().min()),
                min_det_phys=float(new_physical.element_dets().min()),
            )
        )
        log.debug(
            "outer %d: displacement %.3e energy %.6e q_eq %.3f q_ali %.3f",
            it, displacement, result.energies[-1], quality.q_eq, quality.q_ali,
        )
        physical = new_physical
        if displacement < tol:
            break
    return physical, diagnostics
