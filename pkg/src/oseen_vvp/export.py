"""File output: legacy VTK grids, plain-text meshes and COO matrix dumps."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .mesh import MeshError, Triangulation
from .spaces import eval_reference_basis

VTK_TRIANGLE = 5


def write_vtk(path, mesh: Triangulation, point_data=None, title="oseen_vvp"):
    """ASCII legacy VTK unstructured grid with optional point data.

    ``point_data`` maps names to arrays of shape ``(n_vertices,)`` (scalars)
    or ``(n_vertices, 2)`` (vectors, padded with a zero z component).
    """
    path = Path(path)
    v, c = mesh.vertices, mesh.cells
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(v)} double",
    ]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in v]
    lines.append(f"CELLS {len(c)} {4 * len(c)}")
    lines += [f"3 {a} {b} {d}" for a, b, d in c]
    lines.append(f"CELL_TYPES {len(c)}")
    lines += [str(VTK_TRIANGLE)] * len(c)
    if point_data:
        lines.append(f"POINT_DATA {len(v)}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape == (len(v),):
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{a:.17g}" for a in values]
            elif values.shape == (len(v), 2):
                lines.append(f"VECTORS {name} double")
                lines += [f"{a:.17g} {b:.17g} 0" for a, b in values]
            else:
                raise ValueError(f"point data {name!r} has shape {values.shape}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_point_data(path) -> dict:
    """Point arrays of a file written by :func:`write_vtk` (test helper)."""
    tokens = Path(path).read_text().split("\n")
    out = {}
    i = 0
    n = 0
    while i < len(tokens):
        line = tokens[i].split()
        if line and line[0] == "POINT_DATA":
            n = int(line[1])
        elif line and line[0] == "SCALARS":
            out[line[1]] = np.array([float(t) for t in tokens[i + 2:i + 2 + n]])
            i += 1 + n
        elif line and line[0] == "VECTORS":
            rows = [t.split()[:2] for t in tokens[i + 1:i + 1 + n]]
            out[line[1]] = np.array(rows, dtype=float)
            i += n
        i += 1
    return out


def write_mesh_text(path, mesh: Triangulation):
    """Vertex count, coordinates, cell count, index triples; one item per line."""
    lines = [str(mesh.n_vertices)]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(str(mesh.n_cells))
    lines += [f"{a} {b} {c}" for a, b, c in mesh.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh_text(path, domain="custom") -> Triangulation:
    rows = [r for r in Path(path).read_text().splitlines() if r.strip()]
    try:
        nv = int(rows[0])
        vertices = np.array([r.split() for r in rows[1:1 + nv]], dtype=float)
        nc = int(rows[1 + nv])
        cells = np.array([r.split() for r in rows[2 + nv:2 + nv + nc]], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if vertices.shape != (nv, 2) or cells.shape != (nc, 3):
        raise MeshError(f"malformed mesh file {path}")
    return Triangulation(vertices, cells, domain=domain)


def write_coo(path, matrix):
    """``row col value`` per stored entry, rows sorted."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w") as fh:
        fh.write(f"# {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")


def vertex_values(dofmap, coeffs, mesh: Triangulation) -> np.ndarray:
    """Discrete field at the mesh vertices, averaged over incident cells.

    Continuous fields are reproduced exactly; discontinuous ones are
    smoothed by the averaging.
    """
    vals, _ = eval_reference_basis(dofmap.element, np.eye(3))
    local = np.asarray(coeffs)[dofmap.cell_dofs] @ vals.T  # (cells, 3)
    total = np.zeros(mesh.n_vertices)
    count = np.zeros(mesh.n_vertices)
    np.add.at(total, mesh.cells.ravel(), local.ravel())
    np.add.at(count, mesh.cells.ravel(), 1.0)
    return total / np.maximum(count, 1.0)


def solution_point_data(spaces, solution) -> dict:
    mesh = spaces.mesh
    nv = spaces.velocity.n_dofs
    vel = solution.velocity
    u = np.column_stack(
        [
            vertex_values(spaces.velocity, vel[:nv], mesh),
            vertex_values(spaces.velocity, vel[nv:], mesh),
        ]
    )
    return {
        "u": u,
        "omega": vertex_values(spaces.vorticity, solution.vorticity, mesh),
        "p": vertex_values(spaces.pressure, solution.pressure, mesh),
    }


def export_solution(out_dir, spaces, solution, stem="") -> list:
    """Write ``u``, ``omega`` and ``p`` as separate VTK files; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = solution_point_data(spaces, solution)
    prefix = f"{stem}_" if stem else ""
    return [
        write_vtk(out_dir / f"{prefix}{name}.vtk", spaces.mesh, {name: values})
        for name, values in data.items()
    ]
