"""Coefficients, manufactured solutions and the well-posedness report."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fields import (
    Factor1D,
    ScalarField,
    SeparableFunction,
    StreamFunction,
    VectorField,
    constant_scalar,
    expand,
    poly_factor,
    super_gaussian_bump,
)


class UnknownCaseError(KeyError):
    def __str__(self):
        return self.args[0]


@dataclass(frozen=True)
class ProblemData:
    """Data of the Oseen problem: ``sigma, nu, beta, f, kappa1, kappa2``."""

    sigma: float
    nu: ScalarField
    beta: VectorField
    f: VectorField
    kappa1: float
    kappa2: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kappa1 < 0 or self.kappa2 < 0:
            raise ValueError("augmentation parameters must be nonnegative")

    @property
    def nu0(self) -> float:
        return self.nu.bounds[0]

    @property
    def nu1(self) -> float:
        return self.nu.bounds[1]


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    domain: str
    velocity: VectorField
    vorticity: ScalarField
    pressure: ScalarField
    data: ProblemData


# ------------------------------------------------------------------- catalog

VISCOSITY_DEFAULTS = {
    "nu_a": (0.001, 1.0),
    "nu_b": (0.001, 1.0),
    "nu_d": (0.1, 1.0),
    "nu_e": (0.1, 1.0),
}


def viscosity_catalog(name: str, nu0: float | None = None, nu1: float | None = None):
    """Variable viscosities of the two benchmark examples."""
    if name not in VISCOSITY_DEFAULTS:
        raise UnknownCaseError(
            f"unknown viscosity {name!r}; valid: {', '.join(VISCOSITY_DEFAULTS)}"
        )
    d0, d1 = VISCOSITY_DEFAULTS[name]
    nu0 = d0 if nu0 is None else nu0
    nu1 = d1 if nu1 is None else nu1
    one = poly_factor([1.0])
    if name == "nu_a":
        s = SeparableFunction(
            ((nu0, one, one), (nu1 - nu0, poly_factor([0, 1]), poly_factor([0, 1])))
        )
        return s.field(name, bounds=(nu0, nu1))
    if name == "nu_d":
        c = 721.0 / 16.0 * (nu1 - nu0)
        s = SeparableFunction(
            (
                (nu0, one, one),
                (c, poly_factor(expand([0, 0, 1], [1, -1])),
                 poly_factor(expand([0, 0, 1], [1, -1]))),
            )
        )
        return s.field(name, bounds=(nu0, nu1))
    scale = 1e13 if name == "nu_b" else 1e12
    return super_gaussian_bump(nu0, nu1, scale, 10, (0.5, 0.5), name=name)


def _example1_fields():
    psi = SeparableFunction.single(
        1000.0,
        poly_factor(expand([0, 0, 1], *[[1, -1]] * 4)),
        poly_factor(expand([0, 0, 0, 1], *[[1, -1]] * 2)),
    )
    stream = StreamFunction(psi)
    p = SeparableFunction(
        (
            (1.0, poly_factor(expand(*[[-0.5, 1]] * 3)), poly_factor([0, 0, 1])),
            (1.0, poly_factor(expand(*[[1, -1]] * 3)), poly_factor(expand(*[[-0.5, 1]] * 3))),
        )
    )
    return stream.velocity(), stream.vorticity(), p.field("p")


EXAMPLE3_SHIFT = 12.742942014 / 3.0
EXAMPLE3_CENTER = 0.025


def _example3_fields():
    c = EXAMPLE3_CENTER
    fx = Factor1D.from_coeffs(expand([0, 0, 1], [1, -1], [1, -1]), 50.0, c)
    psi = SeparableFunction.single(1.0, fx, fx)
    stream = StreamFunction(psi)

    def p(x, y):
        return (1 - x**2 - y**2) / ((x - c) ** 2 + (y - c) ** 2) - EXAMPLE3_SHIFT

    def grad_p(x, y):
        num = 1 - x**2 - y**2
        den = (x - c) ** 2 + (y - c) ** 2
        gx = (-2 * x * den - num * 2 * (x - c)) / den**2
        gy = (-2 * y * den - num * 2 * (y - c)) / den**2
        return np.stack([gx, gy], axis=-1)

    return stream.velocity(), stream.vorticity(), ScalarField(p, grad_p, name="p")


CASES = {
    "Example1-nu_a": ("unit_square", _example1_fields, "nu_a", 100.0),
    "Example1-nu_b": ("unit_square", _example1_fields, "nu_b", 100.0),
    "Example3-nu_d": ("lshape", _example3_fields, "nu_d", 10.0),
    "Example3-nu_e": ("lshape", _example3_fields, "nu_e", 10.0),
}


def forcing_field(velocity, vorticity, pressure, sigma, nu, beta) -> VectorField:
    """``f = sigma u + nu curl w - 2 eps(u) grad nu + (beta . grad) u + grad p``.

    ``curl w = (d2 w, -d1 w)`` for a scalar ``w``.
    """

    def value(x, y):
        u = velocity(x, y)
        ju = velocity.jacobian(x, y)
        gw = vorticity.grad(x, y)
        gnu = nu.grad(x, y)
        gp = pressure.grad(x, y)
        curl_w = np.stack([gw[..., 1], -gw[..., 0]], axis=-1)
        eps = 0.5 * (ju + np.swapaxes(ju, -1, -2))
        conv = np.einsum("...ij,...j->...i", ju, beta(x, y))
        return (
            sigma * u
            + nu(x, y)[..., None] * curl_w
            - 2.0 * np.einsum("...ij,...j->...i", eps, gnu)
            + conv
            + gp
        )

    return VectorField(value, None, name="f")


def derive_forcing(case: ManufacturedCase, pts) -> np.ndarray:
    """Evaluate the forcing implied by the exact fields of ``case`` at ``pts``."""
    pts = np.asarray(pts, dtype=float)
    d = case.data
    f = forcing_field(case.velocity, case.vorticity, case.pressure, d.sigma, d.nu, d.beta)
    return f(pts[..., 0], pts[..., 1])


def make_case(
    name, domain, velocity, vorticity, pressure, nu, sigma,
    kappa1=None, kappa2=None, beta=None,
) -> ManufacturedCase:
    """Assemble a case; ``kappa1 = 2/3 nu0`` and ``kappa2 = nu0/2`` by default."""
    nu0 = nu.bounds[0]
    kappa1 = 2.0 / 3.0 * nu0 if kappa1 is None else kappa1
    kappa2 = nu0 / 2.0 if kappa2 is None else kappa2
    beta = velocity if beta is None else beta
    f = forcing_field(velocity, vorticity, pressure, sigma, nu, beta)
    data = ProblemData(sigma, nu, beta, f, kappa1, kappa2)
    return ManufacturedCase(name, domain, velocity, vorticity, pressure, data)


def manufactured_case(name: str, **overrides) -> ManufacturedCase:
    """Catalog case; ``overrides`` may set sigma, kappa1, kappa2, nu0, nu1."""
    if name not in CASES:
        raise UnknownCaseError(
            f"unknown case {name!r}; valid cases: {', '.join(CASES)}, custom"
        )
    domain, builder, nu_name, sigma = CASES[name]
    u, w, p = builder()
    nu = viscosity_catalog(nu_name, overrides.get("nu0"), overrides.get("nu1"))
    return make_case(
        name, domain, u, w, p, nu,
        overrides.get("sigma") or sigma,
        overrides.get("kappa1"), overrides.get("kappa2"),
    )


def separable_from_terms(terms) -> SeparableFunction:
    """Build ``sum amp X(x) Y(y)`` from term dicts.

    Each dict has ``amp`` and, per direction ``x``/``y``, polynomial
    coefficients ``*_poly`` (ascending powers) and an optional Gaussian
    ``*_width``/``*_center``.
    """
    out = []
    for t in terms:
        fx = Factor1D.from_coeffs(t.get("x_poly", [1.0]), t.get("x_width", 0.0), t.get("x_center", 0.0))
        fy = Factor1D.from_coeffs(t.get("y_poly", [1.0]), t.get("y_width", 0.0), t.get("y_center", 0.0))
        out.append((float(t.get("amp", 1.0)), fx, fy))
    return SeparableFunction(tuple(out))


def _sampled_bounds(field: ScalarField, domain: str, n: int = 200):
    pts = sample_points(domain, n)
    v = field(pts[:, 0], pts[:, 1])
    return float(v.min()), float(v.max())


def custom_case(
    domain: str,
    psi_terms=(),
    p_terms=(),
    nu="constant",
    nu_value: float = 1.0,
    nu_terms=(),
    sigma: float = 1.0,
    kappa1=None,
    kappa2=None,
    nu0=None,
    nu1=None,
    name: str = "custom",
) -> ManufacturedCase:
    """Manufactured case from separable primitives.

    ``u = curl psi`` so the velocity is solenoidal by construction; boundary
    values are the user's responsibility. ``nu`` is ``"constant"``,
    ``"separable"`` (from ``nu_terms``) or a catalog name.
    """
    if domain not in ("unit_square", "lshape"):
        raise ValueError(f"unknown domain {domain!r}; valid: unit_square, lshape")
    stream = StreamFunction(separable_from_terms(psi_terms))
    p = separable_from_terms(p_terms).field("p")
    if nu == "constant":
        nu_field = constant_scalar(float(nu_value), name="nu")
    elif nu == "separable":
        sep = separable_from_terms(nu_terms)
        nu_field = sep.field("nu")
        nu_field.bounds = _sampled_bounds(nu_field, domain)
    else:
        nu_field = viscosity_catalog(nu, nu0, nu1)
    if nu_field.bounds[0] <= 0:
        raise ValueError("viscosity must be positive on the domain")
    return make_case(
        name, domain, stream.velocity(), stream.vorticity(), p, nu_field,
        sigma, kappa1, kappa2,
    )


def with_data(case: ManufacturedCase, **changes) -> ManufacturedCase:
    return replace(case, data=replace(case.data, **changes))


# ------------------------------------------------------- hypothesis checking


@dataclass(frozen=True)
class HypothesisReport:
    nu0: float
    nu1: float
    sampled_nu_min: float
    sampled_nu_max: float
    grad_nu_inf: float
    sigma: float
    kappa1: float
    kappa2: float
    beta_solenoidal: bool
    sigma_condition: bool
    kappa1_ok: bool
    kappa2_ok: bool
    alpha: float

    @property
    def passed(self) -> bool:
        return (
            self.beta_solenoidal
            and self.sigma_condition
            and self.kappa1_ok
            and self.kappa2_ok
            and self.alpha > 0
        )

    def lines(self):
        def flag(ok):
            return "PASS" if ok else "FAIL"

        lhs = self.sigma * self.nu0
        rhs = 9.0 * self.grad_nu_inf**2
        return [
            f"nu bounds: nu0={self.nu0:.6g} nu1={self.nu1:.6g} "
            f"(sampled {self.sampled_nu_min:.6g}..{self.sampled_nu_max:.6g})",
            f"|grad nu|_inf ~ {self.grad_nu_inf:.6g}",
            f"[{flag(self.sigma_condition)}] sigma*nu0 > 9|grad nu|^2: "
            f"{lhs:.6g} vs {rhs:.6g}",
            f"[{flag(self.kappa1_ok)}] kappa1 = 2/3 nu0: {self.kappa1:.6g}",
            f"[{flag(self.kappa2_ok)}] kappa2 > nu0/3: {self.kappa2:.6g}",
            f"[{flag(self.beta_solenoidal)}] beta solenoidal",
            f"alpha = {self.alpha:.6g}",
            f"overall: {flag(self.passed)}",
        ]


def sample_points(domain: str, n: int = 200) -> np.ndarray:
    lo, hi = (0.0, 1.0) if domain == "unit_square" else (-1.0, 1.0)
    t = np.linspace(lo, hi, n + 1)
    xx, yy = np.meshgrid(t, t)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    if domain == "lshape":
        pts = pts[~((pts[:, 0] > 0) & (pts[:, 1] > 0))]
    return pts


def check_wellposedness(
    data: ProblemData, beta_solenoidal: bool = True, domain: str = "unit_square",
    n: int = 200,
) -> HypothesisReport:
    """Sufficient conditions for ellipticity of the augmented form.

    Only the solenoidal-``beta`` variant is checkable: the general condition
    involves an embedding constant that is not known.
    """
    pts = sample_points(domain, n)
    nu_vals = data.nu(pts[:, 0], pts[:, 1])
    g = data.nu.grad(pts[:, 0], pts[:, 1])
    grad_inf = float(np.max(np.hypot(g[:, 0], g[:, 1])))
    if data.nu.bounds is not None:
        nu0, nu1 = data.nu.bounds
    else:
        nu0, nu1 = float(nu_vals.min()), float(nu_vals.max())
    sigma_ok = data.sigma * nu0 > 9.0 * grad_inf**2
    alpha = min(
        nu0 / 3.0,
        nu0 / 6.0,
        data.kappa2 - nu0 / 6.0,
        data.sigma - 9.0 * grad_inf**2 / nu0,
    )
    return HypothesisReport(
        nu0=nu0,
        nu1=nu1,
        sampled_nu_min=float(nu_vals.min()),
        sampled_nu_max=float(nu_vals.max()),
        grad_nu_inf=grad_inf,
        sigma=data.sigma,
        kappa1=data.kappa1,
        kappa2=data.kappa2,
        beta_solenoidal=bool(beta_solenoidal),
        sigma_condition=bool(sigma_ok),
        kappa1_ok=bool(np.isclose(data.kappa1, 2.0 / 3.0 * nu0, rtol=1e-12, atol=0)),
        kappa2_ok=bool(data.kappa2 > nu0 / 3.0),
        alpha=float(alpha),
    )
