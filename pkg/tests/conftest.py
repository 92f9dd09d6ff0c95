import numpy as np
import pytest

from oseen_vvp.mesh import Triangulation


def reference_cell_mesh():
    """The single triangle (0,0), (1,0), (0,1)."""
    return Triangulation(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def edge_incidence(mesh):
    """Edge -> number of incident cells, counted independently of the mesh class."""
    count = {}
    for cell in mesh.cells.tolist():
        for i in range(3):
            a, b = cell[i], cell[(i + 1) % 3]
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
    return count


def has_hanging_vertex(mesh, tol=1e-12):
    """Brute force: does any vertex lie strictly inside some cell edge?"""
    v = mesh.vertices
    for a, b in edge_incidence(mesh):
        p, q = v[a], v[b]
        d = q - p
        t = (v - p) @ d / (d @ d)
        dist = np.linalg.norm(v - (p + t[:, None] * d), axis=1)
        inside = (t > tol) & (t < 1 - tol) & (dist < tol)
        if inside.any():
            return True
    return False


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def interpolate_fields(spaces, velocity, vorticity, pressure):
    """Nodal interpolant of exact fields as a full coefficient vector (multiplier 0)."""
    x = np.zeros(spaces.n_dofs + 1)
    nv = spaces.velocity.n_dofs
    xy = spaces.velocity.node_coords
    val = velocity(xy[:, 0], xy[:, 1])
    x[:nv] = val[:, 0]
    x[nv:2 * nv] = val[:, 1]
    off = spaces.offsets
    wd = spaces.vorticity.cell_dofs
    wxy = spaces.vorticity.node_coords[wd]
    wc = np.zeros(spaces.n_vorticity)
    wc[wd] = vorticity(wxy[..., 0], wxy[..., 1])
    x[off["vorticity"]] = wc
    pxy = spaces.pressure.node_coords
    x[off["pressure"]] = pressure(pxy[:, 0], pxy[:, 1])
    return x


def interpolated_solution(spaces, case):
    from oseen_vvp.solver import SolutionTriple

    x = interpolate_fields(spaces, case.velocity, case.vorticity, case.pressure)
    return SolutionTriple(x, spaces.offsets, spaces)


# criterion -> list of (check label, passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def record_acceptance(criterion, label, passed, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((label, bool(passed), detail))
    print(f"criterion {criterion} [{label}]: {'PASS' if passed else 'FAIL'} {detail}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[crit]
        status = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        parts = "; ".join(f"{label} {'ok' if ok else 'FAILED'} ({detail})" for label, ok, detail in checks)
        terminalreporter.write_line(f"criterion {crit}: {status}: {parts}")
