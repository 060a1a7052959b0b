"""Legacy ASCII VTK output for unstructured simplicial meshes.

Coordinates and field values are printed with shortest round-trip precision
so an independent parser recovers them bit-exactly.
"""
from __future__ import annotations

import numpy as np

from .mesh import SimplicialMesh

_CELL_TYPES = {2: 5, 3: 10}  # VTK_TRIANGLE, VTK_TETRA


def _fmt(x: float) -> str:
    return repr(float(x))


def write_vtk(path, mesh: SimplicialMesh, cell_data=None, point_data=None, title="mesh"):
    """Write the mesh with optional per-cell and per-vertex scalar fields."""
    cell_data = cell_data or {}
    point_data = point_data or {}
    n_v, n_e = mesh.n_vertices, mesh.n_elements
    d1 = mesh.dim + 1
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {n_v} double\n")
        for p in mesh.vertices:
            z = _fmt(p[2]) if mesh.dim == 3 else "0.0"
            f.write(f"{_fmt(p[0])} {_fmt(p[1])} {z}\n")
        f.write(f"CELLS {n_e} {n_e * (d1 + 1)}\n")
        for elem in mesh.elements:
            f.write(f"{d1} " + " ".join(str(int(v)) for v in elem) + "\n")
        f.write(f"CELL_TYPES {n_e}\n")
        cell_type = _CELL_TYPES[mesh.dim]
        for _ in range(n_e):
            f.write(f"{cell_type}\n")
        if cell_data:
            f.write(f"CELL_DATA {n_e}\n")
            for name, values in cell_data.items():
                f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in np.asarray(values):
                    f.write(_fmt(v) + "\n")
        if point_data:
            f.write(f"POINT_DATA {n_v}\n")
            for name, values in point_data.items():
                f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in np.asarray(values):
                    f.write(_fmt(v) + "\n")


def read_vtk(path):
    """Minimal reader for the files this module writes (round-trip checks).

    Returns (points (N_v, 3), cells (N, d+1), cell_types, cell_data, point_data).
    """
    with open(path) as f:
        tokens = f.read().split("\n")
    i = 0

    def next_line():
        nonlocal i
        while tokens[i].strip() == "":
            i += 1
        line = tokens[i]
        i += 1
        return line

    for _ in range(4):
        next_line()  # header, title, ASCII, DATASET
    n_pts = int(next_line().split()[1])
    points = np.array([[float(x) for x in next_line().split()] for _ in range(n_pts)])
    n_cells = int(next_line().split()[1])
    cells = np.array(
        [[int(x) for x in next_line().split()][1:] for _ in range(n_cells)]
    )
    next_line()  # CELL_TYPES header
    cell_types = np.array([int(next_line()) for _ in range(n_cells)])
    cell_data, point_data = {}, {}
    section, count = None, 0
    while i < len(tokens):
        stripped = tokens[i].strip()
        i += 1
        if not stripped:
            continue
        key = stripped.split()[0]
        if key == "CELL_DATA":
            section, count = cell_data, n_cells
        elif key == "POINT_DATA":
            section, count = point_data, n_pts
        elif key == "SCALARS":
            name = stripped.split()[1]
            next_line()  # LOOKUP_TABLE
            section[name] = np.array([float(next_line()) for _ in range(count)])
    return points, cells, cell_types, cell_data, point_data
