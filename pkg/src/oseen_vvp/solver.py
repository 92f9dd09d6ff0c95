"""Sparse direct solve of the assembled saddle-point system."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-10
MAX_REFINEMENT_STEPS = 5


class SolverError(RuntimeError):
    pass


class SingularMatrixError(SolverError):
    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


@dataclass(eq=False)
class SolutionTriple:
    """Coefficient vectors of ``(u_h, w_h, p_h)`` and the mean multiplier."""

    vector: np.ndarray
    blocks: dict
    spaces: object = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def velocity(self) -> np.ndarray:
        return self.vector[self.blocks["velocity"]]

    @property
    def vorticity(self) -> np.ndarray:
        return self.vector[self.blocks["vorticity"]]

    @property
    def pressure(self) -> np.ndarray:
        return self.vector[self.blocks["pressure"]]

    @property
    def multiplier(self) -> float:
        return float(self.vector[self.blocks["multiplier"]][0])


def _locate_singularity(a: sp.csc_matrix):
    """Best-effort index of a structurally empty row or column."""
    empty_cols = np.flatnonzero(np.diff(a.indptr) == 0)
    if len(empty_cols):
        return ("column", int(empty_cols[0]))
    empty_rows = np.flatnonzero(np.diff(a.tocsr().indptr) == 0)
    if len(empty_rows):
        return ("row", int(empty_rows[0]))
    return None


def solve_linear(matrix, rhs, tol: float = RESIDUAL_TOL):
    """LU solve with iterative refinement; returns ``(x, diagnostics)``."""
    a = sp.csc_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or b.shape != (n,):
        raise SolverError("matrix must be square and match the right-hand side")
    loc = _locate_singularity(a)
    if loc is not None:
        raise SingularMatrixError(f"matrix is singular: empty {loc[0]} {loc[1]}", loc)
    try:
        lu = spla.splu(a, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularMatrixError(f"matrix is singular: {exc}") from exc
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), {"residual": 0.0, "refinements": 0, "nnz_lu": lu.L.nnz + lu.U.nnz}
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("factorization produced non-finite values")
    res = np.linalg.norm(b - a @ x) / bnorm
    steps = 0
    while res > tol and steps < MAX_REFINEMENT_STEPS:
        x = x + lu.solve(b - a @ x)
        res = np.linalg.norm(b - a @ x) / bnorm
        steps += 1
    if not res <= tol:
        raise SolverError(f"relative residual {res:.3e} exceeds {tol:.1e}")
    return x, {"residual": float(res), "refinements": steps, "nnz_lu": lu.L.nnz + lu.U.nnz}


def _mean_projection(a: sp.csc_matrix, psl: slice, m: int):
    c = a[psl, m].toarray().ravel()
    total = c.sum()
    if total == 0.0:
        return None

    def project(x):
        x[psl] -= (c @ x[psl]) / total
        return x

    return project


def solve_pinned(matrix, rhs, pressure: slice, tol: float = RESIDUAL_TOL):
    """Solve the bordered zero-mean system through a pinned pressure dof.

    The pressure rows carry no load, so the multiplier of the mean constraint
    vanishes and the remaining block is singular only along constant
    pressures. Adding a positive entry on one pressure diagonal removes that
    kernel without the dense border, the mean is restored afterwards and the
    residual is checked against the full bordered matrix.
    Returns ``None`` when the shortcut does not apply.
    """
    a = sp.csc_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    n = a.shape[0]
    m = n - 1
    if np.any(b[pressure] != 0.0) or b[m] != 0.0 or a[m, m] != 0.0:
        return None
    project = _mean_projection(a, pressure, m)
    if project is None:
        return None
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), {"residual": 0.0, "refinements": 0, "pinned": True}
    k = a[:m, :m].tolil()
    j = pressure.start
    row = np.abs(a[j, :m].data)
    k[j, j] = k[j, j] + (row.mean() if len(row) else 1.0)
    try:
        lu = spla.splu(sp.csc_matrix(k), permc_spec="COLAMD")
    except RuntimeError:
        return None
    x = np.zeros(n)
    x[:m] = lu.solve(b[:m])
    if not np.all(np.isfinite(x)):
        return None
    project(x)
    res = np.linalg.norm(b - a @ x) / bnorm
    steps = 0
    while res > tol and steps < MAX_REFINEMENT_STEPS:
        x[:m] += lu.solve((b - a @ x)[:m])
        project(x)
        res = np.linalg.norm(b - a @ x) / bnorm
        steps += 1
    if not res <= tol:
        return None
    return x, {
        "residual": float(res), "refinements": steps, "pinned": True,
        "nnz_lu": lu.L.nnz + lu.U.nnz,
    }


def solve(system) -> SolutionTriple:
    """Solve an assembled :class:`~oseen_vvp.assembly.SparseSystem`.

    Tries the pinned-pressure route first and falls back to LU of the full
    bordered matrix.
    """
    out = None
    if "multiplier" in system.blocks and system.spaces is not None:
        loc = _locate_singularity(sp.csc_matrix(system.matrix))
        if loc is None:
            out = solve_pinned(system.matrix, system.rhs, system.blocks["pressure"])
    if out is None:
        out = solve_linear(system.matrix, system.rhs)
    x, diag = out
    x[system.dirichlet] = 0.0
    return SolutionTriple(x, system.blocks, system.spaces, diag)
