"""Metric-based variational mesh adaptation on simplicial meshes."""

from .errors import (
    BarrierError,
    MeshAdaptError,
    PointLocationError,
    StallError,
    TangledMeshError,
)
from .functionals import (
    FunctionalSpec,
    GDerivatives,
    balancing_P,
    discrete_energy,
    eval_hr,
    eval_huang,
    eval_winslow,
)
from .hessian import recover_hessian
from .mesh import (
    BoundaryKind,
    EdgeMatrixPair,
    SimplicialMesh,
    build_structured_mesh,
    edge_matrices,
    element_volume,
    interpolate_new_mesh,
    locate_point,
)
from .metric import (
    MetricField,
    abs_eig,
    build_metric,
    build_metric_h1,
    build_metric_l2,
    element_metric,
    scale_metric,
)
from .quality import (
    QualityReport,
    l2_interp_error,
    mesh_quality,
    quality_element,
    quality_global,
)
from .solver import (
    AdaptationConfig,
    BoundaryConstraint,
    adapt,
    assemble_velocities,
    integrate_interval,
    local_velocities,
    project_boundary,
)
from .testcases import TestCase, eval_test_function, get_test_case
from .vtk_io import read_vtk, write_vtk

__all__ = [
    "AdaptationConfig",
    "BarrierError",
    "BoundaryConstraint",
    "BoundaryKind",
    "EdgeMatrixPair",
    "FunctionalSpec",
    "GDerivatives",
    "MeshAdaptError",
    "MetricField",
    "PointLocationError",
    "QualityReport",
    "SimplicialMesh",
    "StallError",
    "TangledMeshError",
    "TestCase",
    "abs_eig",
    "adapt",
    "assemble_velocities",
    "balancing_P",
    "build_metric",
    "build_metric_h1",
    "build_metric_l2",
    "build_structured_mesh",
    "discrete_energy",
    "edge_matrices",
    "element_metric",
    "element_volume",
    "eval_hr",
    "eval_huang",
    "eval_test_function",
    "eval_winslow",
    "get_test_case",
    "integrate_interval",
    "interpolate_new_mesh",
    "l2_interp_error",
    "local_velocities",
    "locate_point",
    "mesh_quality",
    "project_boundary",
    "quality_element",
    "quality_global",
    "read_vtk",
    "recover_hessian",
    "scale_metric",
    "write_vtk",
]
