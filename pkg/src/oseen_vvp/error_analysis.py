"""Exact-solution errors, convergence rates and the residual estimator."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import mesh_size
from .spaces import MAX_QUADRATURE_DEGREE, SpaceSet, eval_reference_basis, quadrature_rule

CSV_COLUMNS = ("level", "h_or_N", "e_u", "r_u", "e_w", "r_w", "e_p", "r_p", "theta", "eff")


def error_degree(spaces: SpaceSet) -> int:
    return min(spaces.quadrature.degree + 2, MAX_QUADRATURE_DEGREE)


@dataclass
class DiscreteFields:
    """Discrete solution sampled at quadrature points of every cell."""

    x: np.ndarray
    y: np.ndarray
    wdet: np.ndarray
    u: np.ndarray       # (c, q, 2)
    grad_u: np.ndarray  # (c, q, 2, 2), [..., i, j] = d u_i / d x_j
    w: np.ndarray
    grad_w: np.ndarray
    p: np.ndarray
    grad_p: np.ndarray


def _sample(dofmap, coeffs, rule, geo):
    vals, grads = eval_reference_basis(dofmap.element, rule.points)
    local = coeffs[dofmap.cell_dofs]
    v = local @ vals.T
    g = np.einsum("ca,cqak->cqk", local, geo.map_gradients(grads))
    return v, g


def sample_solution(spaces: SpaceSet, solution, degree: int | None = None) -> DiscreteFields:
    rule = quadrature_rule(degree or error_degree(spaces))
    geo = spaces.geometry
    xy = geo.map_points(rule.xy)
    vel = solution.velocity
    nv = spaces.velocity.n_dofs
    u0, g0 = _sample(spaces.velocity, vel[:nv], rule, geo)
    u1, g1 = _sample(spaces.velocity, vel[nv:], rule, geo)
    w, gw = _sample(spaces.vorticity, solution.vorticity, rule, geo)
    p, gp = _sample(spaces.pressure, solution.pressure, rule, geo)
    return DiscreteFields(
        xy[..., 0], xy[..., 1],
        rule.weights[None, :] * np.abs(geo.det)[:, None],
        np.stack([u0, u1], axis=-1), np.stack([g0, g1], axis=-2),
        w, gw, p, gp,
    )


def _rot_div(grad_u):
    return grad_u[..., 1, 0] - grad_u[..., 0, 1], grad_u[..., 0, 0] + grad_u[..., 1, 1]


def energy_error_velocity(case, solution, spaces, degree=None, fields=None) -> float:
    """``(|u-u_h|^2 + |rot(u-u_h)|^2 + |div(u-u_h)|^2)^{1/2}``."""
    s = fields or sample_solution(spaces, solution, degree)
    du = case.velocity(s.x, s.y) - s.u
    dj = case.velocity.jacobian(s.x, s.y) - s.grad_u
    rot, div = _rot_div(dj)
    integrand = np.sum(du**2, axis=-1) + rot**2 + div**2
    return float(np.sqrt(np.sum(s.wdet * integrand)))


def l2_error(exact, discrete, wdet, x, y, remove_mean=False) -> float:
    """``||exact - discrete||_0`` from values at quadrature points.

    With ``remove_mean`` the exact field is shifted to zero mean first.
    """
    e = exact(x, y)
    if remove_mean:
        e = e - np.sum(wdet * e) / np.sum(wdet)
    return float(np.sqrt(np.sum(wdet * (e - discrete) ** 2)))


def vorticity_error(case, solution, spaces, degree=None, fields=None) -> float:
    s = fields or sample_solution(spaces, solution, degree)
    return l2_error(case.vorticity, s.w, s.wdet, s.x, s.y)


def pressure_error(case, solution, spaces, degree=None, fields=None) -> float:
    s = fields or sample_solution(spaces, solution, degree)
    return l2_error(case.pressure, s.p, s.wdet, s.x, s.y, remove_mean=True)


def convergence_rate(e, e_hat, h=None, h_hat=None, *, n=None, n_hat=None) -> float:
    """Experimental rate from two consecutive errors.

    Pass mesh sizes ``h, h_hat`` for uniform runs or DOF counts ``n, n_hat``
    (keyword) for adaptive runs, where ``log(h/h_hat)`` becomes
    ``-1/2 log(N/N_hat)``.
    """
    if n is not None or n_hat is not None:
        if not (n and n_hat and n > 0 and n_hat > 0) or n == n_hat:
            raise ValueError("DOF counts must be positive and distinct")
        denom = -0.5 * math.log(n / n_hat)
    else:
        if h is None or h_hat is None or h <= 0 or h_hat <= 0 or h == h_hat:
            raise ValueError("mesh sizes must be positive and distinct")
        denom = math.log(h / h_hat)
    if e <= 0 or e_hat <= 0:
        raise ValueError("errors must be positive")
    return math.log(e / e_hat) / denom


@dataclass
class EstimatorField:
    """Per-cell indicators ``theta_T`` and the global ``theta``."""

    local: np.ndarray
    parts: dict = field(default_factory=dict)

    @property
    def squared(self) -> np.ndarray:
        return self.local**2

    @property
    def global_value(self) -> float:
        return float(np.sqrt(np.sum(self.local**2)))


def estimate(solution, data, spaces: SpaceSet, degree=None, fields=None) -> EstimatorField:
    """Residual indicator per cell.

    ``theta_T^2 = h_T^2 |f - sigma u_h - nu curl w_h - (beta.grad) u_h
    + 2 eps(u_h) grad nu - grad p_h|_T^2 + |w_h - rot u_h|_T^2 + |div u_h|_T^2``
    """
    s = fields or sample_solution(spaces, solution, degree)
    x, y = s.x, s.y
    nu = data.nu(x, y)
    gnu = data.nu.grad(x, y)
    curl_w = np.stack([s.grad_w[..., 1], -s.grad_w[..., 0]], axis=-1)
    eps = 0.5 * (s.grad_u + np.swapaxes(s.grad_u, -1, -2))
    conv = np.einsum("cqij,cqj->cqi", s.grad_u, data.beta(x, y))
    res = (
        data.f(x, y)
        - data.sigma * s.u
        - nu[..., None] * curl_w
        - conv
        + 2.0 * np.einsum("cqij,cqj->cqi", eps, gnu)
        - s.grad_p
    )
    rot, div = _rot_div(s.grad_u)
    h = spaces.mesh.diameters
    momentum = h**2 * np.sum(s.wdet * np.sum(res**2, axis=-1), axis=1)
    constitutive = np.sum(s.wdet * (s.w - rot) ** 2, axis=1)
    mass = np.sum(s.wdet * div**2, axis=1)
    total = momentum + constitutive + mass
    return EstimatorField(
        np.sqrt(total),
        {"momentum": momentum, "constitutive": constitutive, "mass": mass},
    )


def total_error(e_u, e_w, e_p) -> float:
    return math.sqrt(e_u**2 + e_w**2 + e_p**2)


def effectivity(e_u, e_w, e_p, theta) -> float:
    """``(e_u^2 + e_w^2 + e_p^2)^{1/2} / theta``."""
    err = total_error(e_u, e_w, e_p)
    if theta <= 0:
        if err == 0:
            return float("nan")
        raise ValueError("estimator vanishes while the error does not")
    return err / theta


# ------------------------------------------------------------------- reports


@dataclass
class ErrorRow:
    level: int
    h: float
    n_dofs: int
    e_u: float
    e_w: float
    e_p: float
    r_u: float | None = None
    r_w: float | None = None
    r_p: float | None = None
    theta: float | None = None
    eff: float | None = None

    @property
    def e_total(self) -> float:
        return total_error(self.e_u, self.e_w, self.e_p)


@dataclass
class ErrorReport:
    """Rows of a convergence or adaptive study.

    ``rate_by`` is ``"h"`` for uniform refinement and ``"N"`` for adaptive.
    """

    rate_by: str = "h"
    rows: list = field(default_factory=list)

    def add(self, row: ErrorRow) -> ErrorRow:
        if self.rows:
            prev = self.rows[-1]
            if self.rate_by == "h":
                kw = {"h": prev.h, "h_hat": row.h}
            else:
                kw = {"n": prev.n_dofs, "n_hat": row.n_dofs}
            row.r_u = _rate_or_none(prev.e_u, row.e_u, kw)
            row.r_w = _rate_or_none(prev.e_w, row.e_w, kw)
            row.r_p = _rate_or_none(prev.e_p, row.e_p, kw)
        self.rows.append(row)
        return row

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [
                    r.level,
                    _fmt_err(r.h) if self.rate_by == "h" else r.n_dofs,
                    _fmt_err(r.e_u), _fmt_rate(r.r_u),
                    _fmt_err(r.e_w), _fmt_rate(r.r_w),
                    _fmt_err(r.e_p), _fmt_rate(r.r_p),
                    _fmt_err(r.theta), _fmt_err(r.eff),
                ]
            )
        return buf.getvalue()


def _rate_or_none(e, e_hat, kw):
    try:
        if "h" in kw:
            return convergence_rate(e, e_hat, kw["h"], kw["h_hat"])
        return convergence_rate(e, e_hat, n=kw["n"], n_hat=kw["n_hat"])
    except ValueError:
        return None


def _fmt_err(v):
    return "" if v is None else f"{v:.4g}"


def _fmt_rate(v):
    return "" if v is None else f"{v:.2f}"


def evaluate_level(case, spaces, solution, level, with_estimator=False, degree=None):
    """Errors (and optionally the estimator) of one solve as an :class:`ErrorRow`."""
    s = sample_solution(spaces, solution, degree)
    e_u = energy_error_velocity(case, solution, spaces, fields=s)
    e_w = vorticity_error(case, solution, spaces, fields=s)
    e_p = pressure_error(case, solution, spaces, fields=s)
    row = ErrorRow(level, mesh_size(spaces.mesh), spaces.n_dofs, e_u, e_w, e_p)
    est = None
    if with_estimator:
        est = estimate(solution, case.data, spaces, fields=s)
        row.theta = est.global_value
        row.eff = effectivity(e_u, e_w, e_p, row.theta) if row.theta > 0 else None
    return row, est
