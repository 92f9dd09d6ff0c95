"""Assembly of the augmented velocity-vorticity-pressure system.

Unknown ordering is fixed: velocity (component 0 then component 1),
vorticity, pressure, then one multiplier enforcing zero pressure mean.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .problem_data import ProblemData
from .spaces import CellGeometry, SpaceSet, eval_reference_basis, quadrature_rule

ALL_TERMS = frozenset(
    {
        "mass",          # sigma (u, v)
        "convection",    # ((beta . grad) u, v)
        "strain_nu",     # -2 (eps(u) grad nu, v)
        "rot_rot",       # kappa1 (rot u, rot v)
        "div_div",       # kappa2 (div u, div v)
        "vort_rot",      # (nu w, rot v) - kappa1 (w, rot v)
        "vort_cross",    # (w, grad nu x v)
        "vort_mass",     # (nu w, theta)
        "rot_vort",      # -(nu theta, rot u)
        "pressure",      # -(q, div v) and -(q, div u)
    }
)
CHUNK = 2048


class AssemblyError(RuntimeError):
    pass


@dataclass(eq=False)
class SparseSystem:
    """Constrained system ``matrix @ x = rhs`` plus its unconstrained origin."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    raw_matrix: sp.csr_matrix
    raw_rhs: np.ndarray
    blocks: dict
    dirichlet: np.ndarray
    spaces: SpaceSet
    symmetric: bool = False

    @property
    def shape(self):
        return self.matrix.shape


class _Chunk:
    """Basis data for a block of cells at the quadrature points."""

    def __init__(self, spaces: SpaceSet, cells, rule):
        geo: CellGeometry = spaces.geometry
        self.cells = cells
        self.xy = geo.map_points(rule.xy, cells)
        self.wdet = rule.weights[None, :] * np.abs(geo.det[cells])[:, None]
        vals, grads = eval_reference_basis(spaces.velocity.element, rule.points)
        self.phi = vals
        self.dphi = geo.map_gradients(grads, cells)
        wv, wg = eval_reference_basis(spaces.vorticity.element, rule.points)
        self.psi = wv
        self.dpsi = geo.map_gradients(wg, cells)
        pv, pg = eval_reference_basis(spaces.pressure.element, rule.points)
        self.chi = pv
        self.dchi = geo.map_gradients(pg, cells)

    @property
    def x(self):
        return self.xy[..., 0]

    @property
    def y(self):
        return self.xy[..., 1]

    def rot_basis(self, comp):
        # rot(phi e_0) = -d2 phi, rot(phi e_1) = d1 phi
        return -self.dphi[..., 1] if comp == 0 else self.dphi[..., 0]


def _vector_block(blocks):
    """Stack a 2x2 list of (c, nb, na) into (c, 2 nb, 2 na)."""
    top = np.concatenate(blocks[0], axis=2)
    bottom = np.concatenate(blocks[1], axis=2)
    return np.concatenate([top, bottom], axis=1)


def _local_terms(ch: _Chunk, data: ProblemData, terms):
    """Yield ``(test, trial, local)`` with spaces in {"v", "w", "p"}."""
    w = ch.wdet
    need_nu = terms & {"strain_nu", "vort_rot", "vort_cross", "vort_mass", "rot_vort"}
    if need_nu:
        nu = data.nu(ch.x, ch.y)
        gnu = data.nu.grad(ch.x, ch.y)
        if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(gnu))):
            raise AssemblyError("viscosity evaluation produced non-finite values")
    phi, dphi, psi, chi = ch.phi, ch.dphi, ch.psi, ch.chi
    nc, _, n = dphi.shape[:3]
    zero = np.zeros((nc, n, n))

    vv = [[zero.copy(), zero.copy()], [zero.copy(), zero.copy()]]
    touched = False
    if "mass" in terms:
        m = data.sigma * np.einsum("cq,qb,qa->cba", w, phi, phi)
        vv[0][0] += m
        vv[1][1] += m
        touched = True
    if "convection" in terms:
        beta = data.beta(ch.x, ch.y)
        if not np.all(np.isfinite(beta)):
            raise AssemblyError("convecting field produced non-finite values")
        bg = np.einsum("cqk,cqak->cqa", beta, dphi)
        c = np.einsum("cq,qb,cqa->cba", w, phi, bg)
        vv[0][0] += c
        vv[1][1] += c
        touched = True
    if "strain_nu" in terms:
        # -2 (eps(u) grad nu)_d v_d = -(d_c grad phi_a . grad nu + d_d phi_a d_c nu) phi_b
        gn = np.einsum("cqak,cqk->cqa", dphi, gnu)
        e1 = np.einsum("cq,qb,cqa->cba", w, phi, gn)
        for d in range(2):
            vv[d][d] -= e1
            for c in range(2):
                vv[d][c] -= np.einsum(
                    "cq,qb,cqa->cba", w * gnu[..., c], phi, dphi[..., d]
                )
        touched = True
    if "rot_rot" in terms or "div_div" in terms:
        k1 = data.kappa1 if "rot_rot" in terms else 0.0
        k2 = data.kappa2 if "div_div" in terms else 0.0
        for d in range(2):
            rd = ch.rot_basis(d)
            for c in range(2):
                rc = ch.rot_basis(c)
                vv[d][c] += np.einsum(
                    "cq,cqb,cqa->cba", w, k1 * rd, rc
                ) + np.einsum("cq,cqb,cqa->cba", w, k2 * dphi[..., d], dphi[..., c])
        touched = True
    if touched:
        yield "v", "v", _vector_block(vv)

    if terms & {"vort_rot", "vort_cross"}:
        parts = []
        for d in range(2):
            blk = np.zeros((nc, n, psi.shape[1]))
            if "vort_rot" in terms:
                blk += np.einsum(
                    "cq,cqb,qm->cbm", w * (nu - data.kappa1), ch.rot_basis(d), psi
                )
            if "vort_cross" in terms:
                # grad nu x v = d1 nu v2 - d2 nu v1
                cross = -gnu[..., 1] if d == 0 else gnu[..., 0]
                blk += np.einsum("cq,qb,qm->cbm", w * cross, phi, psi)
            parts.append(blk)
        yield "v", "w", np.concatenate(parts, axis=1)
    if "vort_mass" in terms:
        yield "w", "w", np.einsum("cq,qn,qm->cnm", w * nu, psi, psi)
    if "rot_vort" in terms:
        parts = [
            -np.einsum("cq,qn,cqa->cna", w * nu, psi, ch.rot_basis(c)) for c in range(2)
        ]
        yield "w", "v", np.concatenate(parts, axis=2)
    if "pressure" in terms:
        b = np.concatenate(
            [-np.einsum("cq,cqa,ql->cla", w, dphi[..., c], chi) for c in range(2)],
            axis=2,
        )
        yield "p", "v", b
        yield "v", "p", np.swapaxes(b, 1, 2)


def _local_rhs(ch: _Chunk, data: ProblemData):
    f = data.f(ch.x, ch.y)
    if not np.all(np.isfinite(f)):
        raise AssemblyError("forcing evaluation produced non-finite values")
    return np.concatenate(
        [np.einsum("cq,cq,qb->cb", ch.wdet, f[..., d], ch.phi) for d in range(2)],
        axis=1,
    )


def _global_dofs(spaces: SpaceSet, name, cells):
    off = spaces.offsets
    if name == "v":
        cd = spaces.velocity.cell_dofs[cells]
        return np.concatenate([cd, cd + spaces.velocity.n_dofs], axis=1)
    if name == "w":
        return spaces.vorticity.cell_dofs[cells] + off["vorticity"].start
    return spaces.pressure.cell_dofs[cells] + off["pressure"].start


def _chunks(n, size):
    return [np.arange(s, min(s + size, n)) for s in range(0, n, size)]


def _assemble_chunk(spaces, data, terms, rule, cells, with_rhs):
    ch = _Chunk(spaces, cells, rule)
    rows, cols, vals = [], [], []
    for test, trial, local in _local_terms(ch, data, terms):
        if not np.all(np.isfinite(local)):
            raise AssemblyError("non-finite entries in local matrix")
        r = _global_dofs(spaces, test, cells)
        c = _global_dofs(spaces, trial, cells)
        rows.append(np.broadcast_to(r[:, :, None], local.shape).ravel())
        cols.append(np.broadcast_to(c[:, None, :], local.shape).ravel())
        vals.append(local.ravel())
    rhs = None
    if with_rhs:
        rhs = (_global_dofs(spaces, "v", cells).ravel(), _local_rhs(ch, data).ravel())
    return rows, cols, vals, rhs


def assemble_raw(
    spaces: SpaceSet, data: ProblemData, terms=ALL_TERMS, threads: int = 1,
    quadrature=None, with_rhs=True,
):
    """Unconstrained matrix (incl. multiplier row/column) and load vector."""
    terms = frozenset(terms)
    unknown = terms - ALL_TERMS
    if unknown:
        raise ValueError(f"unknown terms: {sorted(unknown)}")
    rule = quadrature or spaces.quadrature
    n = spaces.n_dofs + 1
    chunks = _chunks(spaces.mesh.n_cells, CHUNK)

    def work(cells):
        return _assemble_chunk(spaces, data, terms, rule, cells, with_rhs)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    for r, c, v, b in results:  # cell-index order keeps sums reproducible
        rows += r
        cols += c
        vals += v
        if b is not None:
            np.add.at(rhs, b[0], b[1])
    if "pressure" in terms:
        mean = spaces.pressure_mean_functional
        pidx = np.arange(spaces.n_pressure) + spaces.offsets["pressure"].start
        last = np.full(len(pidx), n - 1)
        rows += [pidx, last]
        cols += [last, pidx]
        vals += [mean, mean]
    if rows:
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        ).tocsr()
    else:
        mat = sp.csr_matrix((n, n))
    mat.sort_indices()
    return mat, rhs


def apply_dirichlet(matrix: sp.csr_matrix, rhs: np.ndarray, dofs: np.ndarray):
    """Homogeneous Dirichlet by symmetric elimination with a unit diagonal."""
    n = matrix.shape[0]
    keep = np.ones(n)
    keep[dofs] = 0.0
    d_keep = sp.diags(keep)
    d_fix = sp.diags(1.0 - keep)
    out = (d_keep @ matrix @ d_keep + d_fix).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    b = rhs.copy()
    b[dofs] = 0.0
    return out, b


def assemble(spaces: SpaceSet, data: ProblemData, threads: int = 1) -> SparseSystem:
    """Assemble ``A + B`` with velocity Dirichlet and zero-mean constraints."""
    raw, rhs = assemble_raw(spaces, data, threads=threads)
    dofs = spaces.velocity_boundary_dofs
    mat, b = apply_dirichlet(raw, rhs, dofs)
    if not np.all(np.isfinite(mat.data)) or not np.all(np.isfinite(b)):
        raise AssemblyError("assembled system has non-finite entries")
    return SparseSystem(mat, b, raw, rhs, spaces.offsets, dofs, spaces)


def assemble_residual(spaces: SpaceSet, data: ProblemData, solution, system=None):
    """``F - (A + B) x`` on the discrete test space (Dirichlet rows zeroed).

    ``solution`` is a :class:`~oseen_vvp.solver.SolutionTriple` or a full
    coefficient vector including the multiplier.
    """
    x = solution.vector if hasattr(solution, "vector") else np.asarray(solution)
    if system is None:
        raw, rhs = assemble_raw(spaces, data)
    else:
        raw, rhs = system.raw_matrix, system.raw_rhs
    if x.shape != (raw.shape[1],):
        raise ValueError(
            f"solution has {x.shape[0]} entries, system expects {raw.shape[1]}"
        )
    r = rhs - raw @ x
    r[spaces.velocity_boundary_dofs] = 0.0
    return r


# ------------------------------------------------------------- gram matrices


def gram_matrices(spaces: SpaceSet, degree: int | None = None) -> dict:
    """Velocity/vorticity Gram matrices for discrete norms.

    Keys: ``mass``, ``rot``, ``div``, ``grad`` (velocity, size ``n_velocity``)
    and ``vort_mass`` (size ``n_vorticity``).
    """
    rule = quadrature_rule(degree) if degree else spaces.quadrature
    nvel, nw = spaces.n_velocity, spaces.n_vorticity
    acc = {k: ([], [], []) for k in ("mass", "rot", "div", "grad", "vort_mass")}
    for cells in _chunks(spaces.mesh.n_cells, CHUNK):
        ch = _Chunk(spaces, cells, rule)
        w, phi, dphi = ch.wdet, ch.phi, ch.dphi
        nc, n = len(cells), phi.shape[1]
        zero = np.zeros((nc, n, n))
        m = np.einsum("cq,qb,qa->cba", w, phi, phi)
        g = np.einsum("cq,cqbk,cqak->cba", w, dphi, dphi)
        local = {
            "mass": _vector_block([[m, zero], [zero, m]]),
            "grad": _vector_block([[g, zero], [zero, g]]),
            "rot": _vector_block(
                [[np.einsum("cq,cqb,cqa->cba", w, ch.rot_basis(d), ch.rot_basis(c))
                  for c in range(2)] for d in range(2)]
            ),
            "div": _vector_block(
                [[np.einsum("cq,cqb,cqa->cba", w, dphi[..., d], dphi[..., c])
                  for c in range(2)] for d in range(2)]
            ),
        }
        vd = _global_dofs(spaces, "v", cells)
        for key, loc in local.items():
            acc[key][0].append(np.broadcast_to(vd[:, :, None], loc.shape).ravel())
            acc[key][1].append(np.broadcast_to(vd[:, None, :], loc.shape).ravel())
            acc[key][2].append(loc.ravel())
        wd = spaces.vorticity.cell_dofs[cells]
        loc = np.einsum("cq,qn,qm->cnm", w, ch.psi, ch.psi)
        acc["vort_mass"][0].append(np.broadcast_to(wd[:, :, None], loc.shape).ravel())
        acc["vort_mass"][1].append(np.broadcast_to(wd[:, None, :], loc.shape).ravel())
        acc["vort_mass"][2].append(loc.ravel())
    out = {}
    for key, (r, c, v) in acc.items():
        size = nw if key == "vort_mass" else nvel
        out[key] = sp.coo_matrix(
            (np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
            shape=(size, size),
        ).tocsr()
    return out


# --------------------------------------------------------- cell quadrature


def apply_quadrature_element(vertices, integrand, degree: int = 6):
    """Integrate ``integrand(x, y)`` over one triangle with a mapped rule.

    ``integrand`` may return scalars or arrays (the trailing axes are kept).
    """
    v = np.asarray(vertices, dtype=float)
    jac = np.column_stack([v[1] - v[0], v[2] - v[0]])
    det = np.linalg.det(jac)
    if abs(det) <= 1e-300:
        raise AssemblyError("degenerate cell (zero area)")
    rule = quadrature_rule(degree)
    pts = v[0] + rule.xy @ jac.T
    vals = np.asarray(integrand(pts[:, 0], pts[:, 1]), dtype=float)
    return abs(det) * np.tensordot(rule.weights, vals, axes=(0, 0))


def barycentric_gradients(vertices) -> np.ndarray:
    """Constant gradients ``(3, 2)`` of the barycentric coordinates."""
    v = np.asarray(vertices, dtype=float)
    jac = np.column_stack([v[1] - v[0], v[2] - v[0]])
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return ref @ np.linalg.inv(jac)
