"""Conforming triangulations of the unit square and the L-shaped domain.

Cells are stored counterclockwise with the *newest vertex* in position 0, so
the refinement edge of cell ``(a, b, c)`` is ``(b, c)``.  Uniform refinement
is red (4 similar children); adaptive refinement is newest-vertex bisection
with a conformity closure.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Immutable 2D simplicial mesh.

    Parameters
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array, counterclockwise, newest vertex first
    generation : refinement level counter
    """

    vertices: np.ndarray
    cells: np.ndarray
    generation: int = 0
    domain: str = "custom"

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        c = np.ascontiguousarray(self.cells, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError("vertices must have shape (n, 2)")
        if c.ndim != 2 or c.shape[1] != 3:
            raise MeshError("cells must have shape (n, 3)")
        if c.size and (c.min() < 0 or c.max() >= len(v)):
            raise MeshError("cell references a missing vertex")
        v.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cells", c)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def _edge_data(self):
        # local edge j is opposite local vertex j
        c = self.cells
        local = np.stack([c[:, [1, 2]], c[:, [2, 0]], c[:, [0, 1]]], axis=1)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(
            flat, axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.reshape(-1)
        if counts.max(initial=0) > 2:
            raise MeshError("non-manifold mesh: an edge has more than two cells")
        cell_edges = inverse.reshape(-1, 3)
        edge_cells = np.full((len(edges), 2), -1, dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        owners = order // 3
        first = np.ones(len(order), dtype=bool)
        sorted_inv = inverse[order]
        first[1:] = sorted_inv[1:] != sorted_inv[:-1]
        edge_cells[sorted_inv[first], 0] = owners[first]
        edge_cells[sorted_inv[~first], 1] = owners[~first]
        for a in (edges, cell_edges, edge_cells):
            a.setflags(write=False)
        return edges, cell_edges, edge_cells

    @property
    def edges(self) -> np.ndarray:
        """(ne, 2) vertex pairs, each sorted ascending."""
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """(nc, 3) edge index of the edge opposite each local vertex."""
        return self._edge_data[1]

    @property
    def edge_cells(self) -> np.ndarray:
        """(ne, 2) incident cells; ``-1`` in the second slot on the boundary."""
        return self._edge_data[2]

    @cached_property
    def boundary_edge_mask(self) -> np.ndarray:
        return self.edge_cells[:, 1] < 0

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_edge_mask)

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edge_mask].ravel()] = True
        return mask

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def diameters(self) -> np.ndarray:
        """Cell diameter ``h_T`` (longest edge)."""
        return self.edge_lengths[self.cell_edges].max(axis=1)

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    def min_angle(self) -> float:
        """Smallest interior angle over all cells, in radians."""
        p = self.vertices[self.cells]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cos = np.einsum("ij,ij->i", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return float(np.min(angles))

    def check(self) -> None:
        """Raise :class:`MeshError` if an invariant is violated."""
        if np.any(self.signed_areas <= 0):
            raise MeshError("cell with nonpositive signed area")
        if len(np.unique(np.sort(self.cells, axis=1), axis=0)) != self.n_cells:
            raise MeshError("duplicated cell")
        _check_no_hanging_nodes(self)


def _check_no_hanging_nodes(mesh: Triangulation, tol: float = 1e-12) -> None:
    # a hanging node splits an edge into one-sided pieces, so it and the
    # edge it hangs on both show up among the boundary-marked entities
    bnd = mesh.edges[mesh.boundary_edge_mask]
    if len(bnd) == 0:
        return
    candidates = np.flatnonzero(mesh.boundary_vertex_mask)
    p0 = mesh.vertices[bnd[:, 0]]
    d = mesh.vertices[bnd[:, 1]] - p0
    length2 = np.einsum("ij,ij->i", d, d)
    for v in candidates:
        x = mesh.vertices[v]
        t = np.einsum("ij,ij->i", x - p0, d) / length2
        inside = (t > tol) & (t < 1 - tol)
        if not inside.any():
            continue
        r = x - (p0[inside] + t[inside, None] * d[inside])
        if np.any(np.hypot(r[:, 0], r[:, 1]) < tol * np.sqrt(length2[inside])):
            raise MeshError(f"hanging node at vertex {v}")


def is_conforming(mesh: Triangulation) -> bool:
    """Every interior edge has two cells and no vertex hangs on an edge."""
    try:
        mesh.check()
    except MeshError:
        return False
    return True


def _square_block(n: int, index):
    """Cells of one unit square split along the bottom-left/top-right diagonal."""
    cells = []
    for j in range(n):
        for i in range(n):
            v00 = index(i, j)
            v10 = index(i + 1, j)
            v01 = index(i, j + 1)
            v11 = index(i + 1, j + 1)
            # newest vertex opposite the diagonal so it is the refinement edge
            cells.append((v10, v11, v00))
            cells.append((v01, v00, v11))
    return cells


def build_unit_square_mesh(n: int) -> Triangulation:
    """Structured ``n x n`` mesh of (0, 1)^2 with ``h = sqrt(2)/n``."""
    if int(n) != n or n < 1:
        raise MeshError("n must be a positive integer")
    n = int(n)
    t = np.arange(n + 1) / n
    xx, yy = np.meshgrid(t, t)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    cells = _square_block(n, lambda i, j: j * (n + 1) + i)
    return Triangulation(vertices, np.array(cells), domain="unit_square")


def build_lshape_mesh(n: int) -> Triangulation:
    """Mesh of (-1, 1)^2 minus [0, 1)^2 from three ``n x n`` unit squares."""
    if int(n) != n or n < 1:
        raise MeshError("n must be a positive integer")
    n = int(n)
    m = 2 * n + 1
    t = np.linspace(-1.0, 1.0, m)
    keep = {}
    vertices = []
    for j in range(m):
        for i in range(m):
            if i > n and j > n:
                continue
            keep[(i, j)] = len(vertices)
            vertices.append((t[i], t[j]))
    cells = []
    for bi, bj in ((0, 0), (1, 0), (0, 1)):
        cells += _square_block(
            n, lambda i, j, bi=bi, bj=bj: keep[(bi * n + i, bj * n + j)]
        )
    return Triangulation(np.array(vertices), np.array(cells), domain="lshape")


def mesh_size(mesh: Triangulation) -> float:
    """``h = max_T h_T``."""
    return float(mesh.diameters.max())


def refine_uniform(mesh: Triangulation) -> Triangulation:
    """Red refinement: split each cell into four similar children."""
    edges = mesh.edges
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    nv = mesh.n_vertices
    vertices = np.vstack([mesh.vertices, mids])
    a, b, c = mesh.cells.T
    ce = mesh.cell_edges + nv
    m_bc, m_ca, m_ab = ce[:, 0], ce[:, 1], ce[:, 2]
    # children keep their refinement edge parallel to the parent's one
    children = np.stack(
        [
            np.column_stack([a, m_ab, m_ca]),
            np.column_stack([m_ab, b, m_bc]),
            np.column_stack([m_ca, m_bc, c]),
            np.column_stack([m_bc, m_ca, m_ab]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return Triangulation(
        vertices, children, generation=mesh.generation + 1, domain=mesh.domain
    )


def refine_adaptive(mesh: Triangulation, marked) -> Triangulation:
    """Newest-vertex bisection of the marked cells plus conformity closure.

    All three edges of each marked cell are bisected, so a marked cell ends up
    with four children. Neighbours get the minimal number of bisections that
    restore conformity.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64).ravel())
    if marked.size == 0:
        raise MeshError("marked set is empty")
    if marked.min() < 0 or marked.max() >= mesh.n_cells:
        raise MeshError("marked set contains invalid cell indices")

    cell_edges = mesh.cell_edges
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[cell_edges[marked].ravel()] = True
    # closure: a cell with any marked edge must bisect its refinement edge
    ref_edge = cell_edges[:, 0]
    while True:
        need = edge_marked[cell_edges].any(axis=1) & ~edge_marked[ref_edge]
        if not need.any():
            break
        edge_marked[ref_edge[need]] = True

    nv = mesh.n_vertices
    edges = mesh.edges
    midpoint_index = np.full(mesh.n_edges, -1, dtype=np.int64)
    new_ids = np.flatnonzero(edge_marked)
    midpoint_index[new_ids] = nv + np.arange(len(new_ids))
    mids = 0.5 * (mesh.vertices[edges[new_ids, 0]] + mesh.vertices[edges[new_ids, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    lookup = {}
    for e in new_ids:
        lookup[(int(edges[e, 0]), int(edges[e, 1]))] = int(midpoint_index[e])

    def mid(p, q):
        return lookup.get((p, q) if p < q else (q, p), -1)

    out = []

    def bisect(a, b, c):
        m = mid(b, c)
        if m < 0:
            out.append((a, b, c))
            return
        bisect(m, a, b)
        bisect(m, c, a)

    for a, b, c in mesh.cells.tolist():
        bisect(a, b, c)
    return Triangulation(
        vertices, np.array(out, dtype=np.int64),
        generation=mesh.generation + 1, domain=mesh.domain,
    )


def domain_area(domain: str) -> float:
    return {"unit_square": 1.0, "lshape": 3.0}[domain]
