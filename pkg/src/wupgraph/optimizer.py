"""Minimization of the uncertainty product over the unit sphere of L2(mu).

Admissible functions vanish on the space's boundary.  The descent works
with the Riemannian gradient for the ``mu``-weighted inner product, so the
step is insensitive to how mass is distributed over vertices.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import CapacityError, DegenerateInputError, DomainError
from .functionals import ProductVariant, _combine, energy, variance
from .space import MetricMeasureSpace

# sufficient-decrease constant; small values accept the oscillating half steps that stall tiny spaces
ARMIJO_C = 0.5
BACKTRACK = 0.5
MIN_STEP = 1e-20
ZERO_ENERGY = 1e-12
ZERO_VARIANCE = 1e-12
# below this the product is numerically zero and further descent only decays it geometrically
ZERO_PRODUCT = 1e-14
DEGENERATE_CONSTANTS = "degenerate: constants admissible"
DEGENERATE_POINT_MASS = "degenerate: point mass admissible"


@dataclass
class OptimizerOptions:
    starts: int = 32
    max_iters: int = 5000
    tol: float = 1e-10
    seed: int = 0


@dataclass
class UncertaintyResult:
    variant: ProductVariant
    gamma: float
    minimizer: np.ndarray
    product: float
    variance: float
    energy: float
    starts_used: int
    iterations: int
    converged: bool
    seed: int
    best_start: int
    degenerate: Optional[str] = None
    theorem_bound: Optional[float] = None
    gap_ratio: Optional[float] = field(default=None)

    def attach_bound(self, bound: float) -> None:
        self.theorem_bound = float(bound)
        self.gap_ratio = self.product / self.theorem_bound if self.theorem_bound > 0 else None

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "gamma": self.gamma,
            "product": self.product,
            "variance": self.variance,
            "energy": self.energy,
            "theorem_bound": self.theorem_bound,
            "gap_ratio": self.gap_ratio,
            "starts_used": self.starts_used,
            "iterations": self.iterations,
            "converged": self.converged,
            "seed": self.seed,
            "best_start": self.best_start,
            "degenerate": self.degenerate,
            "minimizer": [float(v) for v in self.minimizer],
        }


def _unit(space, u):
    return u / np.sqrt(np.sum(u * u * space.measure))


def structured_start(space: MetricMeasureSpace) -> np.ndarray:
    """Ground-state-like profile: distance to the boundary, or a constant."""
    free = space.free_mask
    if not space.boundary:
        return _unit(space, np.ones(space.n_vertices))
    u = space.distance[:, list(space.boundary)].min(axis=1)
    u[~free] = 0.0
    return _unit(space, u)


def random_start(space: MetricMeasureSpace, rng: np.random.Generator) -> np.ndarray:
    u = rng.standard_normal(space.n_vertices)
    u[~space.free_mask] = 0.0
    return _unit(space, u)


class _Objective:
    """Product and Euclidean gradient with the per-space arrays bound once."""

    def __init__(self, space, gamma, variant):
        self.args = (space.distance_power(gamma), space.measure, *space.edge_ends,
                     space.conductances)
        self.variant = variant

    def __call__(self, u):
        dpow, mu, ei, ej, cond = self.args
        var, en, gv, ge = kernels.objective_parts(dpow, u, mu, ei, ej, cond)
        v = self.variant
        if v is ProductVariant.UNBOUNDED:
            return var * en, var * ge + en * gv
        if v is ProductVariant.BOUNDED_ENERGY:
            return var * (en + 1.0), var * ge + (en + 1.0) * gv
        return (var + 1.0) * en, (var + 1.0) * ge + en * gv


def _descend(space, u, objective, max_iters, tol):
    """Projected gradient descent with Armijo backtracking from ``u``."""
    free = space.free_mask
    mu = space.measure
    f, g = objective(u)
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        rg = np.where(free, g / mu, 0.0)
        rg -= np.sum(rg * u * mu) * u
        gnorm2 = float(np.sum(rg * rg * mu))
        if f <= ZERO_PRODUCT or gnorm2 == 0.0:
            converged = True
            break
        # warm start: retry twice the last accepted step, capped at 1
        step = min(1.0, 2.0 * step)
        while True:
            cand = _unit(space, u - step * rg)
            fc, gc = objective(cand)
            if fc <= f - ARMIJO_C * step * gnorm2:
                break
            step *= BACKTRACK
            if step < MIN_STEP:
                return u, f, it, True
        decrease = (f - fc) / f
        u, f, g = cand, fc, gc
        if decrease < tol:
            converged = True
            break
    return u, f, it, converged


def _fix_sign(u):
    k = int(np.argmax(np.abs(u)))
    return -u if u[k] < 0 else u


def minimize_product(space: MetricMeasureSpace, gamma: float, variant,
                     options: Optional[OptimizerOptions] = None, **overrides) -> UncertaintyResult:
    """Multi-start projected gradient descent for the uncertainty product.

    Start 0 is ``structured_start``; starts ``1..options.starts`` are random
    with per-start generators seeded by ``(seed, index)``.  The best result is
    chosen by ``(product, start index)``, so the outcome does not depend on
    evaluation order.
    """
    opts = options or OptimizerOptions()
    for key, val in overrides.items():
        setattr(opts, key, val)
    variant = ProductVariant.parse(variant)
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    if not space.free_mask.any():
        raise DegenerateInputError("every vertex is on the boundary; no admissible function")

    objective = _Objective(space, gamma, variant)
    best = None
    total_iters = 0
    for idx in range(opts.starts + 1):
        if idx == 0:
            u0 = structured_start(space)
        else:
            u0 = random_start(space, np.random.default_rng([opts.seed, idx]))
        u, f, its, conv = _descend(space, u0, objective, opts.max_iters, opts.tol)
        total_iters += its
        if best is None or f < best[0]:
            best = (f, idx, u, its, conv)

    f, idx, u, its, conv = best
    u = _fix_sign(_unit(space, u))
    var, en = variance(space, u, gamma), energy(space, u)
    product = _combine(variant, var, en)
    degenerate = None
    if variant is ProductVariant.UNBOUNDED and en < ZERO_ENERGY:
        degenerate = DEGENERATE_CONSTANTS
    elif variant is not ProductVariant.BOUNDED_VARIANCE and var < ZERO_VARIANCE:
        # a normalized indicator of one vertex has zero spatial variance
        degenerate = DEGENERATE_POINT_MASS
    return UncertaintyResult(
        variant=variant, gamma=float(gamma), minimizer=u, product=float(product),
        variance=var, energy=en, starts_used=opts.starts + 1, iterations=total_iters,
        converged=bool(conv), seed=opts.seed, best_start=idx, degenerate=degenerate,
    )


@functools.lru_cache(maxsize=8)
def _sphere_grid(k: int, grid_points: int):
    """Points of the unit sphere in R^k on a uniform angle grid (k <= 3), read-only and cached."""
    pts = _sphere_points(k, grid_points)
    pts.setflags(write=False)
    return pts


def _sphere_points(k, grid_points):
    if k == 1:
        return np.array([[1.0], [-1.0]])
    t = 2.0 * np.pi * np.arange(grid_points) / grid_points
    if k == 2:
        return np.column_stack([np.cos(t), np.sin(t)])
    phi = np.pi * np.arange(grid_points) / (grid_points - 1)
    sphi = np.sin(phi)[:, None]
    return np.stack([(sphi * np.cos(t)).ravel(), (sphi * np.sin(t)).ravel(),
                     np.repeat(np.cos(phi), grid_points)], axis=1)


def brute_force_min(space: MetricMeasureSpace, gamma: float, variant, grid_points: int = 2000,
                    chunk: int = 200_000):
    """Exact minimum of the product over an angle grid on the sphere.

    Only for spaces with at most three free vertices: one angle for two,
    two angles for three.  Returns ``(product, minimizer)``.
    """
    variant = ProductVariant.parse(variant)
    free = np.flatnonzero(space.free_mask)
    k = free.shape[0]
    if k > 3:
        raise CapacityError("brute force needs at most 3 free vertices")
    if k == 0:
        raise DegenerateInputError("no free vertices")
    pts = _sphere_grid(k, grid_points)
    scale = 1.0 / np.sqrt(space.measure[free])
    # boundary values are zero, so only the free-vertex blocks enter
    dpow = space.distance_power(gamma)[np.ix_(free, free)]
    lap = space.laplacian.toarray()[np.ix_(free, free)]
    mu = space.measure[free]
    best_val, best_u = np.inf, None
    for lo in range(0, pts.shape[0], chunk):
        batch = pts[lo:lo + chunk] * scale
        w = batch * batch * mu
        var = np.einsum("bi,bi->b", w @ dpow, w)
        en = np.einsum("bi,bi->b", batch @ lap, batch)
        vals = _combine(variant, var, en)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val = float(vals[j])
            best_u = np.zeros(space.n_vertices)
            best_u[free] = batch[j]
    return best_val, best_u


def sample_baseline(space: MetricMeasureSpace, gamma: float, variant, count: int, seed: int = 0) -> float:
    """Smallest product among ``count`` random admissible unit functions."""
    if count <= 0:
        raise DomainError("count must be positive")
    variant = ProductVariant.parse(variant)
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(count):
        u = random_start(space, rng)
        best = min(best, _combine(variant, variance(space, u, gamma), energy(space, u)))
    return float(best)
