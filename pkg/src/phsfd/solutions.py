"""Manufactured solutions with closed-form gradient and Laplacian.

Each solution provides vectorized ``value``, ``gradient``, and ``laplacian``
callables, which supply boundary data and source terms for convergence
studies.  The catalog mixes a smooth rational-exponential benchmark, a
truncated lacunary cosine series whose higher derivatives grow fast, a
warped trigonometric field, a separable sine product in 3d, and seeded
random polynomials that the discretization must reproduce exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ManufacturedSolution:
    name: str
    dimension: int
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    laplacian: Callable[[np.ndarray], np.ndarray]

    def normal_derivative(self, points, normals):
        return np.einsum("kd,kd->k", self.gradient(points),
                         np.asarray(normals, dtype=float))


# Each term is c * exp(qx (x-px)^2 + qy (y-py)^2 + lx x + ly y + c0); the
# classic two-dimensional Franke test function fits this shape termwise.
_FRANKE_TERMS = (
    # c, qx, px, qy, py, lx, ly, c0
    (0.75, -81.0 / 4.0, 2.0 / 9.0, -81.0 / 4.0, 2.0 / 9.0, 0.0, 0.0, 0.0),
    (0.75, -81.0 / 49.0, -1.0 / 9.0, 0.0, 0.0, 0.0, -0.9, -0.1),
    (0.50, -81.0 / 4.0, 7.0 / 9.0, -81.0 / 4.0, 1.0 / 3.0, 0.0, 0.0, 0.0),
    (-0.20, -81.0, 4.0 / 9.0, -81.0, 7.0 / 9.0, 0.0, 0.0, 0.0),
)


def _franke_parts(points):
    x, y = points[:, 0], points[:, 1]
    val = np.zeros_like(x)
    grad = np.zeros((len(x), 2))
    lap = np.zeros_like(x)
    for c, qx, px, qy, py, lx, ly, c0 in _FRANKE_TERMS:
        g = qx * (x - px) ** 2 + qy * (y - py) ** 2 + lx * x + ly * y + c0
        gx = 2.0 * qx * (x - px) + lx
        gy = 2.0 * qy * (y - py) + ly
        term = c * np.exp(g)
        val += term
        grad[:, 0] += term * gx
        grad[:, 1] += term * gy
        lap += term * (gx * gx + gy * gy + 2.0 * qx + 2.0 * qy)
    return val, grad, lap


def franke():
    def value(points):
        return _franke_parts(np.atleast_2d(points))[0]

    def gradient(points):
        return _franke_parts(np.atleast_2d(points))[1]

    def laplacian(points):
        return _franke_parts(np.atleast_2d(points))[2]

    return ManufacturedSolution("franke", 2, value, gradient, laplacian)


def truncated_cosine_series(terms=6):
    """Sum of e^(-sqrt(2^k)) (cos(2^k x) + cos(2^k y)) for k < terms.

    The amplitudes decay slower than any geometric rate in the derivative
    order, so high derivatives are large and convergence orders saturate.
    """
    freqs = 2.0 ** np.arange(terms)
    amps = np.exp(-np.sqrt(freqs))

    def value(points):
        p = np.atleast_2d(points)
        phase = p[:, :, None] * freqs  # (k, 2, terms)
        return np.sum(amps * np.cos(phase), axis=(1, 2))

    def gradient(points):
        p = np.atleast_2d(points)
        phase = p[:, :, None] * freqs
        return -np.sum(amps * freqs * np.sin(phase), axis=2)

    def laplacian(points):
        p = np.atleast_2d(points)
        phase = p[:, :, None] * freqs
        return -np.sum(amps * freqs ** 2 * np.cos(phase), axis=(1, 2))

    return ManufacturedSolution("truncated_cosine_series", 2,
                                value, gradient, laplacian)


def warped_trig():
    """sin(3 pi y^2 + 4.5 pi x) - cos(4 pi y - 3 pi x^2)."""
    pi = math.pi

    def _phases(points):
        p = np.atleast_2d(points)
        x, y = p[:, 0], p[:, 1]
        return x, y, 3 * pi * y ** 2 + 4.5 * pi * x, 4 * pi * y - 3 * pi * x ** 2

    def value(points):
        _, _, a, b = _phases(points)
        return np.sin(a) - np.cos(b)

    def gradient(points):
        x, y, a, b = _phases(points)
        out = np.empty((len(x), 2))
        out[:, 0] = 4.5 * pi * np.cos(a) - 6 * pi * x * np.sin(b)
        out[:, 1] = 6 * pi * y * np.cos(a) + 4 * pi * np.sin(b)
        return out

    def laplacian(points):
        x, y, a, b = _phases(points)
        axx = -((4.5 * pi) ** 2) * np.sin(a) - 6 * pi * np.sin(b) \
            + (6 * pi * x) ** 2 * np.cos(b)
        ayy = 6 * pi * np.cos(a) - (6 * pi * y) ** 2 * np.sin(a) \
            + (4 * pi) ** 2 * np.cos(b)
        return axx + ayy

    return ManufacturedSolution("warped_trig", 2, value, gradient, laplacian)


def product_sine(frequency=math.pi):
    """sin(frequency * x * y * z) on three-dimensional domains."""
    w = float(frequency)

    def value(points):
        p = np.atleast_2d(points)
        return np.sin(w * p[:, 0] * p[:, 1] * p[:, 2])

    def gradient(points):
        p = np.atleast_2d(points)
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        c = w * np.cos(w * x * y * z)
        return np.column_stack([c * y * z, c * x * z, c * x * y])

    def laplacian(points):
        p = np.atleast_2d(points)
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        s = np.sin(w * x * y * z)
        return -(w ** 2) * ((y * z) ** 2 + (x * z) ** 2 + (x * y) ** 2) * s

    return ManufacturedSolution("product_sine", 3, value, gradient, laplacian)


def random_polynomial(degree, dimension, seed=0):
    """Dense random polynomial of total degree ``degree``.

    Coefficients are uniform in [-1, 1] from a seeded generator, so the
    same (degree, dimension, seed) triple always names the same polynomial.
    """
    from .stencil import _exponent_rows

    expo = _exponent_rows(int(degree), int(dimension))
    rng = np.random.default_rng(seed)
    coef = rng.uniform(-1.0, 1.0, len(expo))

    def value(points):
        p = np.atleast_2d(points)
        mono = np.prod(p[:, None, :] ** expo[None, :, :], axis=2)
        return mono @ coef

    def gradient(points):
        p = np.atleast_2d(points)
        out = np.zeros((len(p), dimension))
        for a in range(dimension):
            e_a = expo[:, a]
            mask = e_a >= 1
            if not mask.any():
                continue
            emod = expo[mask].copy()
            emod[:, a] -= 1
            mono = np.prod(p[:, None, :] ** emod[None, :, :], axis=2)
            out[:, a] = mono @ (coef[mask] * e_a[mask])
        return out

    def laplacian(points):
        p = np.atleast_2d(points)
        out = np.zeros(len(p))
        for a in range(dimension):
            e_a = expo[:, a]
            mask = e_a >= 2
            if not mask.any():
                continue
            emod = expo[mask].copy()
            emod[:, a] -= 2
            mono = np.prod(p[:, None, :] ** emod[None, :, :], axis=2)
            out += mono @ (coef[mask] * e_a[mask] * (e_a[mask] - 1))
        return out

    name = f"random_polynomial_d{degree}"
    return ManufacturedSolution(name, int(dimension), value, gradient,
                                laplacian)


SOLUTION_BUILDERS = {
    "franke": franke,
    "truncated_cosine_series": truncated_cosine_series,
    "warped_trig": warped_trig,
    "product_sine": product_sine,
    "random_polynomial": random_polynomial,
}


def make_solution(name, params=None):
    try:
        builder = SOLUTION_BUILDERS[name]
    except KeyError:
        known = ", ".join(sorted(SOLUTION_BUILDERS))
        raise ConfigError(f"unknown solution {name!r}; known: {known}") from None
    try:
        return builder(**(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for solution {name!r}: {exc}") from None
