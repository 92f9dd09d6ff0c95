import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from conftest import reference_cell_mesh
from oseen_vvp import assembly
from oseen_vvp.assembly import (
    AssemblyError,
    apply_quadrature_element,
    assemble,
    assemble_raw,
    assemble_residual,
    barycentric_gradients,
    gram_matrices,
)
from oseen_vvp.fields import ScalarField, VectorField, constant_scalar, constant_vector
from oseen_vvp.mesh import build_lshape_mesh, build_unit_square_mesh, refine_adaptive
from oseen_vvp.problem_data import ProblemData, check_wellposedness, manufactured_case
from oseen_vvp.solver import solve
from oseen_vvp.spaces import ElementFamily, build_space_set

TH1 = ElementFamily("taylor_hood", 1, "discontinuous")


def poly_nu():
    return ScalarField(
        lambda x, y: 0.5 + x**2 + x * y,
        lambda x, y: np.stack([2 * x + y, x], -1),
        bounds=(0.5, 2.5),
    )


def poly_data(sigma=3.0, kappa1=0.2, kappa2=0.3, nu=None):
    beta = VectorField(lambda x, y: np.stack([1 + y, x**2], -1))
    return ProblemData(sigma, nu or poly_nu(), beta, constant_vector((0, 0)), kappa1, kappa2)


# (value, jacobian) pairs for quadratic velocity fields and linear scalars
def vel_u(x, y):
    return np.stack([x * y, x**2 - y], -1), np.stack(
        [np.stack([y, x], -1), np.stack([2 * x, -np.ones_like(x)], -1)], -2
    )


def vel_v(x, y):
    return np.stack([y**2, x + x * y], -1), np.stack(
        [np.stack([0 * x, 2 * y], -1), np.stack([1 + y, x], -1)], -2
    )


def w_trial(x, y):
    return 1 + 2 * x - y


def w_test(x, y):
    return x + y


def p_trial(x, y):
    return x - y


def q_test(x, y):
    return 2 * x + 1


def interpolate(spaces, vel, w, p):
    x = np.zeros(spaces.n_dofs + 1)
    nv = spaces.velocity.n_dofs
    xy = spaces.velocity.node_coords
    val, _ = vel(xy[:, 0], xy[:, 1])
    x[:nv] = val[:, 0]
    x[nv:2 * nv] = val[:, 1]
    off = spaces.offsets
    wxy = spaces.vorticity.node_coords[spaces.vorticity.cell_dofs]  # per cell, handles discontinuity
    wc = np.zeros(spaces.n_vorticity)
    wc[spaces.vorticity.cell_dofs] = w(wxy[..., 0], wxy[..., 1])
    x[off["vorticity"]] = wc
    pxy = spaces.pressure.node_coords
    x[off["pressure"]] = p(pxy[:, 0], pxy[:, 1])
    return x


def weak_form_oracle(mesh, data, trial, test):
    """A((u, w), (v, t)) + B((v, t), p) + B((u, w), q) by cell quadrature."""
    (u, w, p), (v, t, q) = trial, test

    def integrand(x, y):
        uu, ju = u(x, y)
        vv, jv = v(x, y)
        nu = data.nu(x, y)
        gn = data.nu.grad(x, y)
        rot_u = ju[:, 1, 0] - ju[:, 0, 1]
        rot_v = jv[:, 1, 0] - jv[:, 0, 1]
        div_u = ju[:, 0, 0] + ju[:, 1, 1]
        div_v = jv[:, 0, 0] + jv[:, 1, 1]
        eps = 0.5 * (ju + np.swapaxes(ju, -1, -2))
        conv = np.einsum("qij,qj->qi", ju, data.beta(x, y))
        ww, tt = w(x, y), t(x, y)
        return (
            data.sigma * np.sum(uu * vv, -1)
            + np.sum(conv * vv, -1)
            + nu * ww * tt
            + nu * ww * rot_v
            - nu * tt * rot_u
            + data.kappa1 * rot_u * rot_v
            + data.kappa2 * div_u * div_v
            - data.kappa1 * ww * rot_v
            - 2 * np.sum(np.einsum("qij,qj->qi", eps, gn) * vv, -1)
            + ww * (gn[:, 0] * vv[:, 1] - gn[:, 1] * vv[:, 0])
            - p(x, y) * div_v
            - q(x, y) * div_u
        )

    return sum(apply_quadrature_element(mesh.vertices[c], integrand, 10) for c in mesh.cells)


def graded_lshape():
    m = build_lshape_mesh(2)
    for _ in range(2):
        m = refine_adaptive(m, np.flatnonzero(np.linalg.norm(m.vertices[m.cells].mean(1), axis=1) < 0.6))
    return m


@pytest.mark.parametrize("mesh_fn", [lambda: build_unit_square_mesh(3), graded_lshape])
def test_matrix_reproduces_weak_form(mesh_fn):
    mesh = mesh_fn()
    spaces = build_space_set(mesh, TH1)
    data = poly_data()
    mat, _ = assemble_raw(spaces, data)
    x = interpolate(spaces, vel_u, w_trial, p_trial)
    y = interpolate(spaces, vel_v, w_test, q_test)
    oracle = weak_form_oracle(mesh, data, (vel_u, w_trial, p_trial), (vel_v, w_test, q_test))
    assert y @ mat @ x == pytest.approx(oracle, rel=1e-11)


_CACHE = {}


def _square_system():
    if not _CACHE:
        mesh = build_unit_square_mesh(2)
        spaces = build_space_set(mesh, TH1)
        data = poly_data()
        _CACHE.update(mesh=mesh, spaces=spaces, data=data, mat=assemble_raw(spaces, data)[0])
    return _CACHE


coef = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=15, deadline=None)
@given(a=st.lists(coef, min_size=6, max_size=6), b=st.lists(coef, min_size=5, max_size=5))
def test_weak_form_random_polynomials(a, b):
    c = _square_system()

    def vel(x, y):
        val = np.stack([a[0] * x * y + a[1] * y, a[2] * x**2 + a[3] * y**2 + a[4] * x + a[5]], -1)
        jac = np.stack(
            [np.stack([a[0] * y, a[0] * x + a[1]], -1), np.stack([2 * a[2] * x + a[4], 2 * a[3] * y], -1)], -2
        )
        return val, jac

    def w(x, y):
        return b[0] + b[1] * x + b[2] * y

    def p(x, y):
        return b[3] * x + b[4] * y

    x = interpolate(c["spaces"], vel, w, p)
    y = interpolate(c["spaces"], vel_v, w_test, q_test)
    oracle = weak_form_oracle(c["mesh"], c["data"], (vel, w, p), (vel_v, w_test, q_test))
    got = y @ c["mat"] @ x
    assert abs(got - oracle) <= 1e-10 * max(1.0, abs(oracle))


def _blocks(spaces, mat):
    off = spaces.offsets
    v = off["velocity"]
    return {
        "vv": mat[v, v].toarray(),
        "vw": mat[v, off["vorticity"]].toarray(),
        "wv": mat[off["vorticity"], v].toarray(),
        "ww": mat[off["vorticity"], off["vorticity"]].toarray(),
        "vp": mat[v, off["pressure"]].toarray(),
        "pv": mat[off["pressure"], v].toarray(),
    }


def test_vorticity_mass_on_reference_cell():
    spaces = build_space_set(reference_cell_mesh(), TH1)
    data = poly_data(nu=constant_scalar(1.0))
    mat, _ = assemble_raw(spaces, data, terms={"vort_mass"})
    ww = _blocks(spaces, mat)["ww"]
    area = 0.5
    expected = area / 12 * (np.ones((3, 3)) + np.eye(3))
    np.testing.assert_allclose(ww, expected, atol=1e-15)


def test_zero_forcing_gives_zero_load():
    spaces = build_space_set(build_unit_square_mesh(3), TH1)
    _, rhs = assemble_raw(spaces, poly_data())
    np.testing.assert_array_equal(rhs, 0.0)


def test_skew_vorticity_coupling_for_constant_viscosity():
    spaces = build_space_set(build_unit_square_mesh(3), TH1)
    data = poly_data(kappa1=0.0, nu=constant_scalar(0.7))
    b = _blocks(spaces, assemble_raw(spaces, data)[0])
    np.testing.assert_allclose(b["vw"], -b["wv"].T, atol=1e-14)


def test_pressure_coupling_is_symmetric():
    spaces = build_space_set(build_unit_square_mesh(3), TH1)
    b = _blocks(spaces, assemble_raw(spaces, poly_data())[0])
    np.testing.assert_allclose(b["vp"], b["pv"].T, atol=1e-15)


def test_viscosity_gradient_terms_vanish_for_constant_viscosity():
    spaces = build_space_set(build_unit_square_mesh(3), TH1)
    mat, _ = assemble_raw(spaces, poly_data(nu=constant_scalar(2.0)), terms={"strain_nu", "vort_cross"})
    mat.eliminate_zeros()
    assert mat.nnz == 0


def test_unknown_term_rejected():
    spaces = build_space_set(build_unit_square_mesh(2), TH1)
    with pytest.raises(ValueError):
        assemble_raw(spaces, poly_data(), terms={"bogus"})


def test_non_finite_viscosity_raises():
    spaces = build_space_set(build_unit_square_mesh(2), TH1)
    bad = ScalarField(lambda x, y: np.full_like(x, np.nan), bounds=(1.0, 1.0))
    with pytest.raises(AssemblyError):
        assemble_raw(spaces, poly_data(nu=bad))


@pytest.mark.parametrize("family", [TH1, ElementFamily("mini", 1, "discontinuous")])
def test_discrete_inf_sup_rank(family):
    spaces = build_space_set(build_unit_square_mesh(2), family)
    b = _blocks(spaces, assemble_raw(spaces, poly_data())[0])["pv"]
    interior = np.setdiff1d(np.arange(b.shape[1]), spaces.velocity_boundary_dofs)
    # only constants lie in the kernel of B^T on interior velocities
    assert np.linalg.matrix_rank(b[:, interior], tol=1e-10) == spaces.n_pressure - 1


def test_dirichlet_rows_and_constrained_system():
    spaces = build_space_set(build_unit_square_mesh(3), TH1)
    case = manufactured_case("Example1-nu_a")
    system = assemble(spaces, case.data)
    a = system.matrix.tocsr()
    for d in system.dirichlet[:10]:
        row = a.getrow(d)
        assert row.nnz == 1 and row[0, d] == 1.0
        assert a[:, d].nnz == 1
    assert np.all(system.rhs[system.dirichlet] == 0.0)
    assert system.shape == (spaces.n_dofs + 1,) * 2


def test_residual_is_affine_in_coefficients(rng):
    spaces = build_space_set(build_unit_square_mesh(2), TH1)
    data = manufactured_case("Example1-nu_a").data
    system = assemble(spaces, data)
    x = rng.standard_normal(spaces.n_dofs + 1)
    r0 = assemble_residual(spaces, data, x, system)
    j = spaces.offsets["vorticity"].start + 2
    e = np.zeros_like(x)
    e[j] = 1.0
    r1 = assemble_residual(spaces, data, x + e, system)
    col = -system.raw_matrix[:, j].toarray().ravel()
    col[spaces.velocity_boundary_dofs] = 0.0
    np.testing.assert_allclose(r1 - r0, col, atol=1e-12)
    with pytest.raises(ValueError):
        assemble_residual(spaces, data, x[:-1], system)


def test_residual_vanishes_at_discrete_solution():
    spaces = build_space_set(build_unit_square_mesh(4), TH1)
    data = manufactured_case("Example1-nu_a").data
    system = assemble(spaces, data)
    sol = solve(system)
    r = assemble_residual(spaces, data, sol, system)
    assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(system.rhs)
    np.testing.assert_allclose(r, assemble_residual(spaces, data, sol), atol=1e-9 * np.abs(r).max() + 1e-9)


def test_threaded_assembly_is_identical(monkeypatch):
    monkeypatch.setattr(assembly, "CHUNK", 7)
    spaces = build_space_set(build_unit_square_mesh(4), TH1)
    data = manufactured_case("Example1-nu_a").data
    a1, b1 = assemble_raw(spaces, data, threads=1)
    a3, b3 = assemble_raw(spaces, data, threads=3)
    assert (a1 != a3).nnz == 0
    np.testing.assert_array_equal(b1, b3)


def test_gram_matrices_give_norm_identity():
    mesh = build_unit_square_mesh(3)
    spaces = build_space_set(mesh, TH1)
    g = gram_matrices(spaces)
    x = interpolate(spaces, vel_u, w_trial, p_trial)
    u = x[spaces.offsets["velocity"]]
    w = x[spaces.offsets["vorticity"]]

    def norm_integrand(px, py):
        val, jac = vel_u(px, py)
        rot = jac[:, 1, 0] - jac[:, 0, 1]
        div = jac[:, 0, 0] + jac[:, 1, 1]
        return np.sum(val**2, -1) + rot**2 + div**2

    oracle = sum(apply_quadrature_element(mesh.vertices[c], norm_integrand, 6) for c in mesh.cells)
    got = u @ (g["mass"] + g["rot"] + g["div"]) @ u
    assert got == pytest.approx(oracle, rel=1e-12)
    w_oracle = sum(apply_quadrature_element(mesh.vertices[c], lambda a, b: w_trial(a, b) ** 2, 4) for c in mesh.cells)
    assert w @ g["vort_mass"] @ w == pytest.approx(w_oracle, rel=1e-12)


def test_ellipticity_on_interior_dofs():
    # constant viscosity, sigma, kappa rule: A is coercive in the (u, w) norm
    nu0 = 0.01
    data = ProblemData(
        10.0, constant_scalar(nu0), constant_vector((0.0, 0.0)), constant_vector((0, 0)),
        2 / 3 * nu0, nu0 / 2,
    )
    alpha = check_wellposedness(data).alpha
    spaces = build_space_set(build_unit_square_mesh(3), TH1)
    nv2 = spaces.n_velocity
    mat, _ = assemble_raw(spaces, data)
    n = nv2 + spaces.n_vorticity
    a = mat[:n, :n].toarray()
    g = gram_matrices(spaces)
    norm = np.zeros((n, n))
    norm[:nv2, :nv2] = (g["mass"] + g["rot"] + g["div"]).toarray()
    norm[nv2:, nv2:] = g["vort_mass"].toarray()
    keep = np.setdiff1d(np.arange(n), spaces.velocity_boundary_dofs)
    sym = 0.5 * (a + a.T)[np.ix_(keep, keep)]
    lam = sla.eigh(sym, norm[np.ix_(keep, keep)], eigvals_only=True)
    assert lam.min() >= alpha * (1 - 1e-8)


def test_quadrature_element_helpers():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert apply_quadrature_element(tri, lambda x, y: np.ones_like(x)) == pytest.approx(0.5, abs=1e-15)
    assert apply_quadrature_element(tri, lambda x, y: x) == pytest.approx(1 / 6, abs=1e-15)
    vec = apply_quadrature_element(tri, lambda x, y: np.stack([x, y], -1))
    np.testing.assert_allclose(vec, [1 / 6, 1 / 6], atol=1e-15)
    tri2 = np.array([[1.0, 1.0], [3.0, 1.5], [0.5, 2.0]])
    g = barycentric_gradients(tri2)
    np.testing.assert_allclose(g.sum(axis=0), 0.0, atol=1e-14)
    # grad lambda_i . (v_j - v_0) = delta_ij - delta_i0
    d = (tri2[1:] - tri2[0]) @ g.T
    np.testing.assert_allclose(d, np.array([[-1, 1, 0], [-1, 0, 1]], dtype=float), atol=1e-14)
    with pytest.raises(AssemblyError):
        apply_quadrature_element(np.array([[0, 0], [1, 1], [2, 2]]), lambda x, y: x)


def test_exact_fields_weak_residual_decreases():
    from conftest import interpolate_fields

    case = manufactured_case("Example1-nu_a")
    norms = []
    for n in (4, 8, 16):
        spaces = build_space_set(build_unit_square_mesh(n), TH1)
        x = interpolate_fields(spaces, case.velocity, case.vorticity, case.pressure)
        r = assemble_residual(spaces, case.data, x)
        norms.append(np.abs(r[: spaces.offsets["pressure"].stop]).max())
    assert norms[0] > norms[1] > norms[2]
