import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oseen_vvp.mesh import (
    MeshError,
    Triangulation,
    build_lshape_mesh,
    build_unit_square_mesh,
    is_conforming,
    mesh_size,
    refine_adaptive,
    refine_uniform,
)

from conftest import edge_incidence, has_hanging_vertex, reference_cell_mesh


def euler_holds(mesh):
    return mesh.n_vertices - mesh.n_edges + (mesh.n_cells + 1) == 2


def assert_valid(mesh, area):
    assert np.all(mesh.signed_areas > 0)
    counts = edge_incidence(mesh)
    assert len(counts) == mesh.n_edges
    assert set(counts.values()) <= {1, 2}
    n_boundary = sum(1 for c in counts.values() if c == 1)
    assert n_boundary == mesh.boundary_edge_mask.sum()
    assert not has_hanging_vertex(mesh)
    assert euler_holds(mesh)
    assert abs(mesh.areas.sum() - area) < 1e-12


def test_unit_square_n1_counts():
    m = build_unit_square_mesh(1)
    assert (m.n_vertices, m.n_cells, m.n_edges) == (4, 2, 5)
    assert 4 - 5 + 3 == 2 and euler_holds(m)


def test_unit_square_n2_matches_first_table_row():
    m = build_unit_square_mesh(2)
    assert (m.n_vertices, m.n_edges, m.n_cells) == (9, 16, 8)
    assert mesh_size(m) == pytest.approx(math.sqrt(2) / 2, abs=1e-9)
    assert round(mesh_size(m), 8) == 0.70710678
    assert round(mesh_size(m), 4) == 0.7071


def test_unit_square_n4_euler_count():
    m = build_unit_square_mesh(4)
    v, c = 25, 32
    assert (m.n_vertices, m.n_cells, m.n_edges) == (v, c, v + c - 1)
    assert m.n_edges == 56


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_unit_square_invariants(n):
    m = build_unit_square_mesh(n)
    assert m.n_vertices == (n + 1) ** 2
    assert m.n_cells == 2 * n * n
    assert mesh_size(m) == pytest.approx(math.sqrt(2) / n, rel=1e-14)
    assert_valid(m, 1.0)


def test_unit_square_single_diagonal_direction():
    m = build_unit_square_mesh(3)
    # every interior-of-square diagonal goes from bottom-left to top-right
    p = m.vertices[m.edges]
    d = p[:, 1] - p[:, 0]
    diagonal = (np.abs(d[:, 0]) > 1e-12) & (np.abs(d[:, 1]) > 1e-12)
    assert np.all(d[diagonal, 0] * d[diagonal, 1] > 0)


def test_lshape_small_counts():
    m1 = build_lshape_mesh(1)
    assert (m1.n_cells, m1.n_vertices) == (6, 8)
    assert euler_holds(m1)
    assert build_lshape_mesh(2).n_cells == 24


@pytest.mark.parametrize("n", [1, 2, 4, 7])
def test_lshape_invariants(n):
    m = build_lshape_mesh(n)
    assert m.n_cells == 3 * 2 * n * n
    assert_valid(m, 3.0)
    corner = np.all(np.abs(m.vertices) < 1e-14, axis=1)
    assert corner.sum() == 1
    centroids = m.centroids
    assert not np.any((centroids[:, 0] > 0) & (centroids[:, 1] > 0))


def test_mesh_rejects_bad_input():
    with pytest.raises(MeshError):
        build_unit_square_mesh(0)
    with pytest.raises(MeshError):
        build_lshape_mesh(-1)
    with pytest.raises(MeshError):
        Triangulation(np.zeros((3, 2)), np.array([[0, 1, 5]]))


def test_mesh_is_immutable():
    m = build_unit_square_mesh(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 3.0


def test_refine_uniform_n2():
    m = build_unit_square_mesh(2)
    r = refine_uniform(m)
    assert r.n_cells == 32
    assert round(mesh_size(r), 4) == 0.3536
    assert mesh_size(r) == mesh_size(m) / 2
    assert r.generation == 1
    assert_valid(r, 1.0)


def test_refine_uniform_single_cell():
    m = reference_cell_mesh()
    r = refine_uniform(m)
    assert r.n_cells == 4
    assert abs(r.areas.sum() - m.areas.sum()) < 1e-14
    assert mesh_size(m) == pytest.approx(math.sqrt(2), rel=1e-15)


def test_refine_uniform_keeps_angles():
    m = build_unit_square_mesh(1)
    r = refine_uniform(refine_uniform(m))
    assert r.min_angle() == pytest.approx(m.min_angle(), abs=1e-14)


@pytest.mark.parametrize("builder,area", [(build_unit_square_mesh, 1.0), (build_lshape_mesh, 3.0)])
def test_refine_uniform_halves_h_every_generation(builder, area):
    m = builder(1)
    for _ in range(4):
        r = refine_uniform(m)
        assert mesh_size(r) == mesh_size(m) / 2
        assert_valid(r, area)
        m = r


def test_refine_adaptive_mark_all():
    m = build_unit_square_mesh(2)
    r = refine_adaptive(m, np.arange(m.n_cells))
    assert r.n_cells >= 4 * m.n_cells
    assert_valid(r, 1.0)


def test_refine_adaptive_one_interior_cell():
    m = build_unit_square_mesh(2)
    interior = [c for c in range(m.n_cells)
                if not m.boundary_edge_mask[m.cell_edges[c]].any()]
    cell = interior[0] if interior else 3
    r = refine_adaptive(m, [cell])
    assert is_conforming(r)
    assert set(edge_incidence(r).values()) <= {1, 2}
    assert_valid(r, 1.0)
    assert r.n_cells > m.n_cells


def test_refine_adaptive_marked_cell_is_split_in_four():
    m = build_unit_square_mesh(2)
    r = refine_adaptive(m, [0])
    inside = r.centroids
    tri = m.vertices[m.cells[0]]
    # barycentric test of child centroids against the parent
    t = np.linalg.solve(
        np.array([[tri[1, 0] - tri[0, 0], tri[2, 0] - tri[0, 0]],
                  [tri[1, 1] - tri[0, 1], tri[2, 1] - tri[0, 1]]]),
        (inside - tri[0]).T,
    ).T
    in_parent = (t[:, 0] > 0) & (t[:, 1] > 0) & (t.sum(axis=1) < 1)
    assert in_parent.sum() == 4


def test_refine_adaptive_shape_regular_towards_corner():
    m = build_lshape_mesh(2)
    angle0 = m.min_angle()
    for _ in range(10):
        d = np.linalg.norm(m.centroids, axis=1)
        marked = np.flatnonzero(d <= d.min() * 1.5)
        m = refine_adaptive(m, marked)
        assert_valid(m, 3.0)
    assert m.min_angle() >= 0.5 * angle0
    assert mesh_size(m) > 0


def test_refine_adaptive_errors():
    m = build_unit_square_mesh(2)
    with pytest.raises(MeshError):
        refine_adaptive(m, [])
    with pytest.raises(MeshError):
        refine_adaptive(m, [m.n_cells])
    with pytest.raises(MeshError):
        refine_adaptive(m, [-1])


def test_conformity_checker_detects_hanging_node():
    # two triangles sharing the diagonal; only one of them gets bisected
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    m = Triangulation(v, np.array([[0, 1, 2], [4, 2, 3], [4, 3, 0]]))
    assert has_hanging_vertex(m)
    assert not is_conforming(m)
    assert is_conforming(Triangulation(v, np.array([[4, 0, 1], [4, 1, 2], [4, 2, 3], [4, 3, 0]])))


@settings(max_examples=25, deadline=None)
@given(
    domain=st.sampled_from(["square", "lshape"]),
    seed=st.integers(0, 2**32 - 1),
    rounds=st.integers(1, 4),
)
def test_random_adaptive_refinement_stays_conforming(domain, seed, rounds):
    rng = np.random.default_rng(seed)
    m = build_unit_square_mesh(2) if domain == "square" else build_lshape_mesh(1)
    area = 1.0 if domain == "square" else 3.0
    angle0 = m.min_angle()
    for _ in range(rounds):
        k = rng.integers(1, m.n_cells + 1)
        marked = rng.choice(m.n_cells, size=k, replace=False)
        m = refine_adaptive(m, marked)
        assert_valid(m, area)
    assert m.min_angle() >= 0.5 * angle0 - 1e-12
