"""Adaptive solve-estimate-mark-refine loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble
from .error_analysis import EstimatorField, ErrorReport, evaluate_level
from .mesh import build_lshape_mesh, build_unit_square_mesh, refine_adaptive
from .solver import SolverError, solve
from .spaces import ElementFamily, build_space_set

log = logging.getLogger(__name__)

MARK_FRACTION = 0.5


class AdaptiveStepError(RuntimeError):
    """A failure inside the loop, tagged with the step where it happened."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"adaptive step {step} failed: {cause}")
        self.step = step
        self.cause = cause


def mark_cells(est, fraction: float = MARK_FRACTION) -> np.ndarray:
    """Indices of cells with ``theta_T >= fraction * max theta_T``.

    Cells at the threshold are included.
    """
    theta = est.local if isinstance(est, EstimatorField) else np.asarray(est, dtype=float)
    if theta.size == 0:
        raise ValueError("estimator has no cells")
    return np.flatnonzero(theta >= fraction * theta.max())


def initial_mesh(domain: str, n: int):
    if domain == "unit_square":
        return build_unit_square_mesh(n)
    if domain == "lshape":
        return build_lshape_mesh(n)
    raise ValueError(f"unknown domain {domain!r}")


@dataclass
class AdaptiveResult:
    report: ErrorReport
    meshes: list = field(default_factory=list)
    estimators: list = field(default_factory=list)
    marked: list = field(default_factory=list)
    stop_reason: str = ""


def adaptive_loop(
    case,
    family: ElementFamily,
    max_steps: int,
    max_dofs: int | None = None,
    theta_tol: float | None = None,
    n0: int = 2,
    mesh=None,
    threads: int = 1,
    quadrature_degree: int | None = None,
    on_step=None,
) -> AdaptiveResult:
    """Run ``solve -> estimate -> stop check -> mark + refine`` up to ``max_steps``.

    The loop stops after ``max_steps`` solves, when ``theta <= theta_tol`` or
    when the next mesh would be solved with more than ``max_dofs`` unknowns.
    ``on_step(step, mesh, spaces, solution)`` is called after every solve,
    e.g. to export fields.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    mesh = mesh if mesh is not None else initial_mesh(case.domain, n0)
    result = AdaptiveResult(ErrorReport(rate_by="N"))
    for step in range(max_steps):
        try:
            spaces = build_space_set(mesh, family, quadrature_degree)
            solution = solve(assemble(spaces, case.data, threads=threads))
        except (SolverError, ValueError, RuntimeError) as exc:
            raise AdaptiveStepError(step, exc) from exc
        row, est = evaluate_level(case, spaces, solution, step, with_estimator=True)
        result.report.add(row)
        result.meshes.append(mesh)
        result.estimators.append(est)
        log.info("step %d: N=%d theta=%.4g eff=%s", step, row.n_dofs, row.theta, row.eff)
        if on_step is not None:
            on_step(step, mesh, spaces, solution)

        if step + 1 >= max_steps:
            result.stop_reason = "max_steps"
            break
        if theta_tol is not None and row.theta <= theta_tol:
            result.stop_reason = "theta_tol"
            break
        if max_dofs is not None and row.n_dofs >= max_dofs:
            result.stop_reason = "max_dofs"
            break
        marked = mark_cells(est)
        result.marked.append(marked)
        mesh = refine_adaptive(mesh, marked)
    return result
