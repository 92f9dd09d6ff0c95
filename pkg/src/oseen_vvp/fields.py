"""Analytic scalar/vector fields with exact derivatives.

Fields take coordinate arrays ``x, y`` of equal shape and are vectorised.
The separable primitives (polynomial times Gaussian in each direction) are
closed under differentiation, which is what the manufactured solutions need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

FD_STEP = 1e-6
EXP_FLOOR = -700.0


def _safe_exp(arg):
    arg = np.asarray(arg, dtype=float)
    return np.where(arg < EXP_FLOOR, 0.0, np.exp(np.maximum(arg, EXP_FLOOR)))


class ScalarField:
    """Point -> value with a gradient callback.

    Without an analytic gradient, central differences with step ``1e-6``
    stand in.
    """

    def __init__(self, value, gradient=None, name="", bounds=None):
        self._value = value
        self._gradient = gradient
        self.name = name
        self.bounds = bounds

    @property
    def analytic_gradient(self) -> bool:
        return self._gradient is not None

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.asarray(self._value(x, y), dtype=float) + np.zeros_like(x)

    def grad(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self._gradient is not None:
            g = np.asarray(self._gradient(x, y), dtype=float)
            return g + np.zeros(x.shape + (2,))
        h = FD_STEP
        gx = (self(x + h, y) - self(x - h, y)) / (2 * h)
        gy = (self(x, y + h) - self(x, y - h)) / (2 * h)
        return np.stack([gx, gy], axis=-1)

    def __repr__(self):
        return f"ScalarField({self.name!r})"


class VectorField:
    """Point -> 2-vector with a Jacobian ``J[..., i, j] = d v_i / d x_j``."""

    def __init__(self, value, jacobian=None, name=""):
        self._value = value
        self._jacobian = jacobian
        self.name = name

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.asarray(self._value(x, y), dtype=float) + np.zeros(x.shape + (2,))

    def jacobian(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self._jacobian is not None:
            return np.asarray(self._jacobian(x, y), float) + np.zeros(x.shape + (2, 2))
        h = FD_STEP
        dx = (self(x + h, y) - self(x - h, y)) / (2 * h)
        dy = (self(x, y + h) - self(x, y - h)) / (2 * h)
        return np.stack([dx, dy], axis=-1)

    def divergence(self, x, y):
        j = self.jacobian(x, y)
        return j[..., 0, 0] + j[..., 1, 1]

    def rot(self, x, y):
        j = self.jacobian(x, y)
        return j[..., 1, 0] - j[..., 0, 1]

    def __repr__(self):
        return f"VectorField({self.name!r})"


def constant_scalar(c: float, name="const") -> ScalarField:
    return ScalarField(
        lambda x, y: np.full_like(x, c), lambda x, y: np.zeros(x.shape + (2,)),
        name=name, bounds=(c, c),
    )


def constant_vector(c, name="const") -> VectorField:
    c = np.asarray(c, dtype=float)
    return VectorField(
        lambda x, y: np.broadcast_to(c, x.shape + (2,)).copy(),
        lambda x, y: np.zeros(x.shape + (2, 2)),
        name=name,
    )


ZERO_VECTOR = constant_vector((0.0, 0.0), name="zero")


# -------------------------------------------------------- separable primitives


@dataclass(frozen=True)
class Factor1D:
    """``t -> poly(t) * exp(-width * (t - center)**2)``."""

    poly: Polynomial
    width: float = 0.0
    center: float = 0.0

    @classmethod
    def from_coeffs(cls, coeffs, width=0.0, center=0.0):
        return cls(Polynomial(np.asarray(coeffs, dtype=float)), float(width), float(center))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        v = self.poly(t)
        if self.width:
            v = v * _safe_exp(-self.width * (t - self.center) ** 2)
        return v

    def deriv(self) -> "Factor1D":
        # d/dt [P e^Q] = (P' + Q' P) e^Q with Q' = -2 w (t - c)
        dq = Polynomial([2 * self.width * self.center, -2 * self.width])
        return Factor1D(self.poly.deriv() + dq * self.poly, self.width, self.center)


@dataclass(frozen=True)
class SeparableFunction:
    """``sum_i amp_i * X_i(x) * Y_i(y)``."""

    terms: tuple

    @classmethod
    def single(cls, amp, fx: Factor1D, fy: Factor1D):
        return cls(((float(amp), fx, fy),))

    def __add__(self, other):
        return SeparableFunction(self.terms + other.terms)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for amp, fx, fy in self.terms:
            out = out + amp * fx(x) * fy(y)
        return out

    def d(self, nx=0, ny=0) -> "SeparableFunction":
        terms = []
        for amp, fx, fy in self.terms:
            for _ in range(nx):
                fx = fx.deriv()
            for _ in range(ny):
                fy = fy.deriv()
            terms.append((amp, fx, fy))
        return SeparableFunction(tuple(terms))

    def field(self, name="", bounds=None) -> ScalarField:
        gx, gy = self.d(1, 0), self.d(0, 1)
        return ScalarField(
            self, lambda x, y: np.stack([gx(x, y), gy(x, y)], axis=-1),
            name=name, bounds=bounds,
        )


def poly_factor(coeffs) -> Factor1D:
    return Factor1D.from_coeffs(coeffs)


def expand(*polys) -> np.ndarray:
    """Coefficients of a product of polynomials given as coefficient lists."""
    out = Polynomial([1.0])
    for p in polys:
        out = out * Polynomial(p)
    return out.coef


class StreamFunction:
    """Divergence-free velocity ``u = curl psi = (psi_y, -psi_x)``.

    With this curl the vorticity is ``omega = rot u = -lap psi``.
    """

    def __init__(self, psi: SeparableFunction):
        self.psi = psi
        d = psi.d
        self._dx, self._dy = d(1, 0), d(0, 1)
        self._dxx, self._dxy, self._dyy = d(2, 0), d(1, 1), d(0, 2)
        self._dxxx, self._dxyy = d(3, 0), d(1, 2)
        self._dxxy, self._dyyy = d(2, 1), d(0, 3)

    def velocity(self, name="u") -> VectorField:
        def value(x, y):
            return np.stack([self._dy(x, y), -self._dx(x, y)], axis=-1)

        def jac(x, y):
            pxx, pxy, pyy = self._dxx(x, y), self._dxy(x, y), self._dyy(x, y)
            return np.stack(
                [np.stack([pxy, pyy], -1), np.stack([-pxx, -pxy], -1)], axis=-2
            )

        return VectorField(value, jac, name=name)

    def vorticity(self, name="omega") -> ScalarField:
        def value(x, y):
            return -(self._dxx(x, y) + self._dyy(x, y))

        def grad(x, y):
            gx = -(self._dxxx(x, y) + self._dxyy(x, y))
            gy = -(self._dxxy(x, y) + self._dyyy(x, y))
            return np.stack([gx, gy], axis=-1)

        return ScalarField(value, grad, name=name)


def super_gaussian_bump(nu0, nu1, scale, power=10, center=(0.5, 0.5), name=""):
    """``nu0 + (nu1 - nu0) exp(-scale ((x-cx)^p + (y-cy)^p))``."""
    cx, cy = center

    def value(x, y):
        arg = -scale * ((x - cx) ** power + (y - cy) ** power)
        return nu0 + (nu1 - nu0) * _safe_exp(arg)

    def grad(x, y):
        arg = -scale * ((x - cx) ** power + (y - cy) ** power)
        e = (nu1 - nu0) * _safe_exp(arg)
        gx = -scale * power * (x - cx) ** (power - 1) * e
        gy = -scale * power * (y - cy) ** (power - 1) * e
        return np.stack([gx, gy], axis=-1)

    return ScalarField(value, grad, name=name, bounds=(nu0, nu1))
