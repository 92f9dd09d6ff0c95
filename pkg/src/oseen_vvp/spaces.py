"""Discrete spaces: reference elements, quadrature and global DOF maps.

Reference triangle has vertices (0, 0), (1, 0), (0, 1); barycentric
coordinates are ordered ``(1 - x - y, x, y)`` so local vertex ``i`` of a cell
maps to barycentric coordinate ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import roots_jacobi, roots_legendre

from .mesh import Triangulation

MAX_QUADRATURE_DEGREE = 20


class SpaceError(ValueError):
    pass


# ---------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle; ``points`` are barycentric."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, 1:]

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def quadrature_rule(degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi rule exact for total degree ``degree``."""
    if int(degree) != degree or not 1 <= degree <= MAX_QUADRATURE_DEGREE:
        raise SpaceError(
            f"quadrature degree must be an integer in [1, {MAX_QUADRATURE_DEGREE}]"
        )
    n = int(degree) // 2 + 1
    # weight (1 - s) of the Duffy map is absorbed by Gauss-Jacobi(1, 0)
    xi, wj = roots_jacobi(n, 1.0, 0.0)
    eta, wl = roots_legendre(n)
    s = 0.5 * (1.0 + xi)
    t = 0.5 * (1.0 + eta)
    ss, tt = np.meshgrid(s, t, indexing="ij")
    x = ss.ravel()
    y = (tt * (1.0 - ss)).ravel()
    w = np.outer(wj / 4.0, wl / 2.0).ravel()
    points = np.column_stack([1.0 - x - y, x, y])
    points.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(points, w, int(degree))


# ---------------------------------------------------------- reference bases


def _monomials(p: int):
    return [(a, d - a) for d in range(p + 1) for a in range(d, -1, -1)]


def _coeff_array(exps, coeffs, size):
    c = np.zeros((size, size))
    for (a, b), v in zip(exps, coeffs):
        c[a, b] += v
    return c


def lattice(p: int) -> np.ndarray:
    """Barycentric multi-indices of the degree-``p`` Lagrange nodes.

    Order: the three vertices, then edge nodes of the edge opposite local
    vertex 0, 1, 2 (walking ``v1->v2``, ``v2->v0``, ``v0->v1``), then interior.
    """
    if p == 0:
        return np.array([[0, 0, 0]])
    nodes = [(p, 0, 0), (0, p, 0), (0, 0, p)]
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        for s in range(1, p):
            m = [0, 0, 0]
            m[j] = p - s
            m[k] = s
            nodes.append(tuple(m))
    for i in range(1, p):
        for j in range(1, p - i):
            nodes.append((p - i - j, i, j))
    return np.array(nodes)


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """Scalar local basis stored as 2D monomial coefficient arrays.

    ``node_multi_index`` has one row per nodal function (barycentric lattice
    index over ``degree``); functions beyond those are cell bubbles.
    """

    name: str
    degree: int
    coeffs: tuple
    node_multi_index: np.ndarray
    continuous: bool = True

    @property
    def n_local(self) -> int:
        return len(self.coeffs)

    @property
    def n_nodal(self) -> int:
        return len(self.node_multi_index)

    @property
    def poly_degree(self) -> int:
        return max(c.shape[0] for c in self.coeffs) - 1

    @cached_property
    def _derivs(self):
        dx = tuple(P.polyder(c, axis=0) for c in self.coeffs)
        dy = tuple(P.polyder(c, axis=1) for c in self.coeffs)
        return dx, dy

    def evaluate(self, xy: np.ndarray):
        """Values ``(q, n)`` and reference gradients ``(q, n, 2)``."""
        x, y = xy[:, 0], xy[:, 1]
        dx, dy = self._derivs
        vals = np.stack([P.polyval2d(x, y, c) for c in self.coeffs], axis=-1)
        gx = np.stack([P.polyval2d(x, y, c) for c in dx], axis=-1)
        gy = np.stack([P.polyval2d(x, y, c) for c in dy], axis=-1)
        return vals, np.stack([gx, gy], axis=-1)


@lru_cache(maxsize=None)
def lagrange_element(p: int, continuous: bool = True) -> ReferenceElement:
    """Nodal ``P_p`` basis on the reference triangle (``p >= 0``)."""
    if p < 0:
        raise SpaceError("polynomial degree must be nonnegative")
    if p == 0:
        c = np.ones((1, 1))
        return ReferenceElement("P0", 0, (c,), lattice(0), continuous=False)
    nodes = lattice(p)
    xy = nodes[:, 1:] / p
    exps = _monomials(p)
    vander = np.array([[x**a * y**b for a, b in exps] for x, y in xy])
    inv = np.linalg.inv(vander)
    coeffs = tuple(_coeff_array(exps, inv[:, j], p + 1) for j in range(len(exps)))
    return ReferenceElement(f"P{p}", p, coeffs, nodes, continuous=continuous)


def _bubble_coeffs():
    # b = (1 - x - y) x y
    c = np.zeros((3, 3))
    c[1, 1] = 1.0
    c[2, 1] = -1.0
    c[1, 2] = -1.0
    return c


@lru_cache(maxsize=None)
def bubble_enriched_element(k: int) -> ReferenceElement:
    """``P_k`` plus ``b * m`` for monomials ``m`` of degree ``k-2`` and ``k-1``.

    For ``k = 1`` this is the classical MINI velocity element (one cubic
    bubble). The enrichment contains ``b * grad P_k`` and meets ``P_k`` only
    in zero.
    """
    if k < 1:
        raise SpaceError("MINI element needs k >= 1")
    base = lagrange_element(k)
    b = _bubble_coeffs()
    size = k + 3
    extra = []
    for d in (k - 2, k - 1):
        if d < 0:
            continue
        for a in range(d, -1, -1):
            c = np.zeros((size, size))
            for (i, j), v in np.ndenumerate(b):
                if v:
                    c[i + a, j + d - a] += v
            extra.append(c)
    padded = []
    for c in base.coeffs:
        z = np.zeros((size, size))
        z[: c.shape[0], : c.shape[1]] = c
        padded.append(z)
    return ReferenceElement(
        f"P{k}+B", k, tuple(padded + extra), base.node_multi_index
    )


def eval_reference_basis(element: ReferenceElement, bary: np.ndarray):
    """Evaluate ``element`` at barycentric points.

    Returns values ``(q, n)`` and gradients ``(q, n, 2)`` with respect to the
    reference coordinates ``(x, y) = (bary[1], bary[2])``.
    """
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    return element.evaluate(bary[:, 1:])


# ------------------------------------------------------------------ families


class Variant(str, Enum):
    TAYLOR_HOOD = "taylor_hood"
    MINI = "mini"


class Continuity(str, Enum):
    CONTINUOUS = "continuous"
    DISCONTINUOUS = "discontinuous"


@dataclass(frozen=True)
class ElementFamily:
    variant: Variant
    k: int = 1
    vorticity: Continuity = Continuity.DISCONTINUOUS

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "vorticity", Continuity(self.vorticity))
        if int(self.k) != self.k or self.k < 1:
            raise SpaceError("element families require an integer k >= 1")

    @classmethod
    def taylor_hood(cls, k=1, vorticity="discontinuous"):
        return cls(Variant.TAYLOR_HOOD, k, vorticity)

    @classmethod
    def mini(cls, k=1, vorticity="discontinuous"):
        return cls(Variant.MINI, k, vorticity)

    def velocity_element(self) -> ReferenceElement:
        if self.variant is Variant.TAYLOR_HOOD:
            return lagrange_element(self.k + 1)
        return bubble_enriched_element(self.k)

    def vorticity_element(self) -> ReferenceElement:
        return lagrange_element(
            self.k, continuous=self.vorticity is Continuity.CONTINUOUS
        )

    def pressure_element(self) -> ReferenceElement:
        return lagrange_element(self.k)

    @property
    def default_quadrature_degree(self) -> int:
        return 2 * (self.k + 1) + 4


# ------------------------------------------------------------------ dof maps


@dataclass(frozen=True, eq=False)
class DofMap:
    """Scalar local-to-global map for one reference element on a mesh."""

    element: ReferenceElement
    cell_dofs: np.ndarray
    n_dofs: int
    node_coords: np.ndarray
    node_dofs: np.ndarray
    boundary_dofs: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.cell_dofs.shape


def _node_keys(mesh: Triangulation, multi: np.ndarray) -> np.ndarray:
    # key = (v_a, w_a, v_b, w_b, v_c, w_c) over nonzero barycentric weights,
    # sorted by vertex index and padded with -1
    nc, nn = mesh.n_cells, len(multi)
    verts = np.broadcast_to(mesh.cells[:, None, :], (nc, nn, 3))
    weights = np.broadcast_to(multi[None, :, :], (nc, nn, 3))
    v = np.where(weights > 0, verts, np.iinfo(np.int64).max)
    order = np.argsort(v, axis=-1, kind="stable")
    v = np.take_along_axis(v, order, axis=-1)
    w = np.take_along_axis(np.asarray(weights), order, axis=-1)
    v = np.where(w > 0, v, -1)
    keys = np.empty((nc, nn, 6), dtype=np.int64)
    keys[..., 0::2] = v
    keys[..., 1::2] = np.where(w > 0, w, -1)
    return keys.reshape(-1, 6)


def build_dof_map(mesh: Triangulation, element: ReferenceElement) -> DofMap:
    nc = mesh.n_cells
    multi = element.node_multi_index
    n_nodal = element.n_nodal
    n_extra = element.n_local - n_nodal
    p = max(element.degree, 1)

    if not element.continuous:
        cell_dofs = np.arange(nc * element.n_local, dtype=np.int64).reshape(
            nc, element.n_local
        )
        nodal = cell_dofs[:, :n_nodal]
        bary = multi / p if element.degree > 0 else np.full((1, 3), 1 / 3)
        coords = np.einsum("nk,ckd->cnd", bary, mesh.vertices[mesh.cells])
        return DofMap(
            element, cell_dofs, nc * element.n_local,
            coords.reshape(-1, 2), nodal.reshape(-1),
            np.empty(0, dtype=np.int64),
        )

    keys = _node_keys(mesh, multi)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    # vertex nodes take the vertex number, other nodes follow in key order
    uniq_is_vertex = uniq[:, 2] < 0
    nv = mesh.n_vertices
    new_index = np.empty(len(uniq), dtype=np.int64)
    new_index[uniq_is_vertex] = uniq[uniq_is_vertex, 0]
    if uniq_is_vertex.sum() != nv:
        raise SpaceError("mesh has vertices not referenced by any cell")
    new_index[~uniq_is_vertex] = nv + np.arange((~uniq_is_vertex).sum())
    nodal_dofs = new_index[inverse].reshape(nc, n_nodal)
    n_nodes = len(uniq)

    bary = multi / p
    local_xy = np.einsum("nk,ckd->cnd", bary, mesh.vertices[mesh.cells])
    coords = np.empty((n_nodes, 2))
    coords[nodal_dofs.ravel()] = local_xy.reshape(-1, 2)

    # boundary nodes: vertices on the boundary or nodes inside boundary edges
    on_bnd = np.zeros(n_nodes, dtype=bool)
    on_bnd[:nv] = mesh.boundary_vertex_mask
    if p > 1:
        bedges = {tuple(e) for e in mesh.edges[mesh.boundary_edge_mask].tolist()}
        ukeys = np.empty_like(uniq)
        ukeys[new_index] = uniq
        edge_nodes = np.flatnonzero((ukeys[:, 2] >= 0) & (ukeys[:, 4] < 0))
        for i in edge_nodes:
            if (int(ukeys[i, 0]), int(ukeys[i, 2])) in bedges:
                on_bnd[i] = True

    extra = n_nodes + np.arange(nc * n_extra, dtype=np.int64).reshape(nc, n_extra)
    cell_dofs = np.hstack([nodal_dofs, extra])
    return DofMap(
        element, cell_dofs, n_nodes + nc * n_extra, coords,
        np.arange(n_nodes, dtype=np.int64), np.flatnonzero(on_bnd),
    )


@dataclass(frozen=True, eq=False)
class SpaceSet:
    """Velocity (2 components), vorticity and pressure spaces on one mesh.

    Global velocity index of component ``c`` and scalar dof ``s`` is
    ``c * velocity.n_dofs + s``.
    """

    mesh: Triangulation
    family: ElementFamily
    velocity: DofMap
    vorticity: DofMap
    pressure: DofMap
    quadrature: QuadratureRule

    @property
    def n_velocity(self) -> int:
        return 2 * self.velocity.n_dofs

    @property
    def n_vorticity(self) -> int:
        return self.vorticity.n_dofs

    @property
    def n_pressure(self) -> int:
        return self.pressure.n_dofs

    @property
    def n_dofs(self) -> int:
        """``N``: velocity + vorticity + pressure unknowns."""
        return self.n_velocity + self.n_vorticity + self.n_pressure

    @property
    def offsets(self):
        nu, nw, npr = self.n_velocity, self.n_vorticity, self.n_pressure
        return {
            "velocity": slice(0, nu),
            "vorticity": slice(nu, nu + nw),
            "pressure": slice(nu + nw, nu + nw + npr),
            "multiplier": slice(nu + nw + npr, nu + nw + npr + 1),
        }

    @cached_property
    def velocity_boundary_dofs(self) -> np.ndarray:
        b = self.velocity.boundary_dofs
        return np.concatenate([b, b + self.velocity.n_dofs])

    @cached_property
    def geometry(self) -> "CellGeometry":
        return CellGeometry.from_mesh(self.mesh)

    @cached_property
    def pressure_mean_functional(self) -> np.ndarray:
        """``(int_Omega chi_l)_l`` for the pressure basis."""
        q = self.quadrature
        vals, _ = eval_reference_basis(self.pressure.element, q.points)
        local = np.abs(self.geometry.det)[:, None] * (q.weights @ vals)[None, :]
        out = np.zeros(self.n_pressure)
        np.add.at(out, self.pressure.cell_dofs, local)
        return out


@dataclass(frozen=True, eq=False)
class CellGeometry:
    """Affine maps ``x = x0 + J xi`` for all cells."""

    x0: np.ndarray
    jac: np.ndarray
    det: np.ndarray
    inv_t: np.ndarray

    @classmethod
    def from_mesh(cls, mesh: Triangulation) -> "CellGeometry":
        p = mesh.vertices[mesh.cells]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(np.abs(det) <= 0):
            raise SpaceError("degenerate cell (zero area)")
        inv = np.linalg.inv(jac)
        return cls(p[:, 0], jac, det, np.swapaxes(inv, -1, -2))

    def map_points(self, xy: np.ndarray, cells=slice(None)) -> np.ndarray:
        """Physical coordinates ``(nc, q, 2)`` of reference points."""
        return self.x0[cells, None, :] + np.einsum("cij,qj->cqi", self.jac[cells], xy)

    def map_gradients(self, grads: np.ndarray, cells=slice(None)) -> np.ndarray:
        """Physical gradients ``(nc, q, n, 2)`` from reference ``(q, n, 2)``."""
        return np.einsum("cij,qnj->cqni", self.inv_t[cells], grads)


def build_space_set(
    mesh: Triangulation, family: ElementFamily, quadrature_degree: int | None = None
) -> SpaceSet:
    if not isinstance(family, ElementFamily):
        raise SpaceError("family must be an ElementFamily")
    degree = quadrature_degree or family.default_quadrature_degree
    return SpaceSet(
        mesh,
        family,
        build_dof_map(mesh, family.velocity_element()),
        build_dof_map(mesh, family.vorticity_element()),
        build_dof_map(mesh, family.pressure_element()),
        quadrature_rule(degree),
    )
