"""Quadratic functionals of the weak uncertainty principle and their gradients.

All norms are measure-weighted: ``||u||_p = (sum |u|^p mu)^(1/p)``.
"""
from __future__ import annotations

import enum

import numpy as np

from . import kernels
from .errors import DegenerateInputError, DomainError, PreconditionError
from .space import Ball, MetricMeasureSpace, as_function, ball, local_average_function

UNIT_NORM_TOL = 1e-9


class ProductVariant(str, enum.Enum):
    """Which product is bounded below.

    ``UNBOUNDED`` is ``Var * E``, ``BOUNDED_ENERGY`` is ``Var * (E + 1)`` and
    ``BOUNDED_VARIANCE`` is ``(Var + 1) * E``.
    """

    UNBOUNDED = "unbounded"
    BOUNDED_ENERGY = "bounded_energy"
    BOUNDED_VARIANCE = "bounded_variance"

    @classmethod
    def parse(cls, value) -> "ProductVariant":
        if isinstance(value, cls):
            return value
        return cls(str(value).replace("-", "_"))


def energy(space: MetricMeasureSpace, u) -> float:
    """``sum over edges of c_xy (u(x) - u(y))**2``."""
    u = np.ascontiguousarray(as_function(space, u))
    return float(kernels.energy(u, *space.edge_ends, space.conductances))


def energy_gradient(space: MetricMeasureSpace, u) -> np.ndarray:
    u = np.ascontiguousarray(as_function(space, u))
    return kernels.energy_gradient(u, *space.edge_ends, space.conductances)


def _check_gamma(gamma):
    if not gamma > 0:
        raise DomainError("gamma must be positive")


def _variance_parts(space, u, gamma):
    _check_gamma(gamma)
    w = np.ascontiguousarray(u * u * space.measure)
    var, rows = kernels.variance_rowsums(space.distance_power(gamma), w)
    return float(var), rows


def variance(space: MetricMeasureSpace, u, gamma: float) -> float:
    """Spatial variance ``sum_xy d(x,y)**gamma u(x)^2 u(y)^2 mu(x) mu(y)``."""
    u = as_function(space, u)
    return _variance_parts(space, u, gamma)[0]


def gradients(space: MetricMeasureSpace, u, gamma: float):
    """Euclidean gradients ``(dE/du, dVar/du)`` in vertex coordinates."""
    u = as_function(space, u)
    _, rows = _variance_parts(space, u, gamma)
    return energy_gradient(space, u), 4.0 * space.measure * u * rows


def _combine(variant, var, en):
    if variant is ProductVariant.UNBOUNDED:
        return var * en
    if variant is ProductVariant.BOUNDED_ENERGY:
        return var * (en + 1.0)
    return (var + 1.0) * en


def uncertainty_product(space: MetricMeasureSpace, u, gamma: float, variant) -> float:
    """The product for ``variant``; ``u`` must already have unit norm."""
    u = as_function(space, u)
    variant = ProductVariant.parse(variant)
    norm = float(np.sqrt(np.sum(u * u * space.measure)))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise PreconditionError(f"u must have unit L2 norm (got {norm!r}); normalize first")
    return _combine(variant, variance(space, u, gamma), energy(space, u))


def product_and_gradient(space: MetricMeasureSpace, u, gamma: float, variant):
    """Value of the product and its Euclidean gradient (no norm check)."""
    variant = ProductVariant.parse(variant)
    var, rows = _variance_parts(space, u, gamma)
    en = energy(space, u)
    ge = energy_gradient(space, u)
    gv = 4.0 * space.measure * u * rows
    if variant is ProductVariant.UNBOUNDED:
        grad = var * ge + en * gv
    elif variant is ProductVariant.BOUNDED_ENERGY:
        grad = var * ge + (en + 1.0) * gv
    else:
        grad = (var + 1.0) * ge + en * gv
    return _combine(variant, var, en), grad, var, en


def _positive_energy(space, u):
    e = energy(space, u)
    if e <= 0.0:
        raise DegenerateInputError("function has zero energy")
    return e


def poincare_quotient(space: MetricMeasureSpace, u, b: Ball) -> float:
    """``sum_{x in B} (u(x) - mean_B u)^2 mu(x) / E(u)``."""
    u = as_function(space, u)
    e = _positive_energy(space, u)
    m = space.measure[b.members]
    vals = u[b.members]
    mean = np.dot(vals, m) / m.sum()
    return float(np.sum((vals - mean) ** 2 * m) / e)


def modified_poincare_quotient(space: MetricMeasureSpace, u, r: float, center: int) -> float:
    """Like ``poincare_quotient`` but subtracting the local average ``u_r``."""
    u = as_function(space, u)
    e = _positive_energy(space, u)
    b = ball(space, center, r)
    ur = local_average_function(space, u, r)
    m = space.measure[b.members]
    return float(np.sum((u[b.members] - ur[b.members]) ** 2 * m) / e)


def lp_norm(space: MetricMeasureSpace, u, p: float) -> float:
    u = as_function(space, u)
    return float(np.sum(np.abs(u) ** p * space.measure) ** (1.0 / p))


def nash_functional(space: MetricMeasureSpace, u, theta: float, local: bool = False) -> float:
    """``||u||_2^(2+4/theta) / (E'(u) ||u||_1^(4/theta))``.

    ``E' = E`` or, with ``local``, ``E + ||u||_2^2``.  Homogeneous of
    degree zero, so the best Nash constant is its supremum.
    """
    return float(np.exp(_log_nash(space, as_function(space, u), theta, local)[0]))


def moment_nash_functional(space: MetricMeasureSpace, u, theta: float, local: bool = False) -> float:
    """``||u||_{2p}^(2p) / (E'(u) ||u||_2^(4/theta))`` with ``p = 1 + 2/theta``."""
    return float(np.exp(_log_moment_nash(space, as_function(space, u), theta, local)[0]))


def _nash_denominator(space, u, local):
    s2 = float(np.sum(u * u * space.measure))
    if s2 == 0.0:
        raise DegenerateInputError("zero function")
    e = energy(space, u)
    ge = energy_gradient(space, u)
    if local:
        e += s2
        ge = ge + 2.0 * u * space.measure
    if e <= 0.0:
        raise DegenerateInputError("function has zero energy")
    return s2, e, ge


def _log_nash(space, u, theta, local):
    """Log of the Nash functional and its gradient."""
    if not theta > 0:
        raise DomainError("theta must be positive")
    s2, e, ge = _nash_denominator(space, u, local)
    s1 = float(np.sum(np.abs(u) * space.measure))
    value = (1.0 + 2.0 / theta) * np.log(s2) - np.log(e) - (4.0 / theta) * np.log(s1)
    grad = ((1.0 + 2.0 / theta) * 2.0 * u * space.measure / s2 - ge / e
            - (4.0 / theta) * np.sign(u) * space.measure / s1)
    return value, grad


def _log_moment_nash(space, u, theta, local):
    if not theta > 0:
        raise DomainError("theta must be positive")
    p = 1.0 + 2.0 / theta
    s2, e, ge = _nash_denominator(space, u, local)
    a = np.abs(u)
    sp_ = float(np.sum(a ** (2 * p) * space.measure))
    value = np.log(sp_) - np.log(e) - (2.0 / theta) * np.log(s2)
    grad = (2 * p * a ** (2 * p - 1) * np.sign(u) * space.measure / sp_ - ge / e
            - (2.0 / theta) * 2.0 * u * space.measure / s2)
    return value, grad
