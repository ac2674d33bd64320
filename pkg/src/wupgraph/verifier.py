"""Estimates of the hypothesis constants and the explicit lower bounds built from them.

Volume growth, doubling and reverse doubling are read off exact ball masses
over a radius grid.  Poincare constants come from a generalized eigenproblem
per ball.  Nash constants are found by search, so they are lower bounds on a
supremum and are flagged as such.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import (DegenerateInputError, DomainError, HypothesisViolation,
                     IncompleteReportError, InsufficientDataError)
from .functionals import ProductVariant, _log_moment_nash, _log_nash
from .resistance import boundary_resistance, green_matrix
from .space import BALL_RTOL, MetricMeasureSpace, as_function

RADIUS_RATIO = math.sqrt(2.0)
FULL_CENTER_LIMIT = 500
SAMPLED_CENTERS = 200
PROOF_RADIUS_TOL = 1e-9
BREAKPOINT_RTOL = 1e-9

THEOREMS = {
    "resistance": ProductVariant.UNBOUNDED,
    "resistance_bounded": ProductVariant.BOUNDED_ENERGY,
    "resistance_graph": ProductVariant.BOUNDED_VARIANCE,
    "poincare": ProductVariant.UNBOUNDED,
    "modified_poincare": ProductVariant.UNBOUNDED,
    "poincare_bounded": ProductVariant.BOUNDED_ENERGY,
    "nash": ProductVariant.UNBOUNDED,
    "moment_nash": ProductVariant.UNBOUNDED,
    "local_nash": ProductVariant.BOUNDED_ENERGY,
    "local_moment_nash": ProductVariant.BOUNDED_ENERGY,
    "heisenberg": ProductVariant.UNBOUNDED,
}
RESISTANCE_THEOREMS = ("resistance", "resistance_bounded", "resistance_graph")
POINCARE_THEOREMS = ("poincare", "modified_poincare", "poincare_bounded")
NASH_THEOREMS = ("nash", "moment_nash", "local_nash", "local_moment_nash")
NASH_VARIANTS = ("global", "local", "moment", "local_moment")
# classical Heisenberg constant on the real line, Var_2(u) E(u) >= 1/8
HEISENBERG_BOUND = 0.125


@dataclass
class HypothesisReport:
    """Fitted constants for every theorem hypothesis.

    ``None`` marks a constant that was not estimated; ``theorem_lower_bound``
    raises ``IncompleteReportError`` when it needs one of those.
    """

    b: Optional[float] = None
    C1_growth: Optional[float] = None
    C2_growth: Optional[float] = None
    radius_range: Optional[tuple] = None
    reverse_doubling: Optional[tuple] = None
    doubling_C: Optional[float] = None
    poincare: Optional[tuple] = None
    nash: Optional[tuple] = None
    C0: Optional[float] = None
    c0_split: dict = field(default_factory=dict)
    total_measure: Optional[float] = None
    max_boundary_resistance: Optional[float] = None
    residuals: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "C1_growth": self.C1_growth,
            "C2_growth": self.C2_growth,
            "radius_range": list(self.radius_range) if self.radius_range else None,
            "reverse_doubling": list(self.reverse_doubling) if self.reverse_doubling else None,
            "doubling_C": self.doubling_C,
            "poincare": list(self.poincare) if self.poincare else None,
            "nash": list(self.nash) if self.nash else None,
            "C0": self.C0,
            "c0_split": self.c0_split,
            "total_measure": self.total_measure,
            "max_boundary_resistance": self.max_boundary_resistance,
        }


# ---------------------------------------------------------------- sampling

def default_centers(space: MetricMeasureSpace, seed: int = 0) -> np.ndarray:
    """All vertices up to ``FULL_CENTER_LIMIT``, else a seeded sample."""
    n = space.n_vertices
    if n <= FULL_CENTER_LIMIT:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=SAMPLED_CENTERS, replace=False))


def distance_breakpoints(space: MetricMeasureSpace) -> np.ndarray:
    """Sorted distinct positive distances; closed balls only change there."""
    key = "distance_breakpoints"
    if key not in space._cache:
        d = np.sort(space.distance.ravel())
        d = d[d > 0]
        keep = np.concatenate([[True], np.diff(d) > BREAKPOINT_RTOL * d[1:]])
        space._cache[key] = d[keep]
    return space._cache[key]


def snap_radii(space: MetricMeasureSpace, radii) -> np.ndarray:
    """Move each radius to the midpoint of the distance gap that contains it.

    Every closed ball is unchanged; only the representative radius moves,
    which removes the one-spacing bias of radii sitting on a breakpoint.
    """
    d = distance_breakpoints(space)
    radii = np.asarray(radii, dtype=float)
    i = np.searchsorted(d, radii * (1.0 + BALL_RTOL), side="right")
    inner = (i > 0) & (i < d.size)
    out = radii.copy()
    out[inner] = 0.5 * (d[i[inner] - 1] + d[i[inner]])
    return np.unique(out)


def default_radii(space: MetricMeasureSpace, ratio: float = RADIUS_RATIO) -> np.ndarray:
    """Geometric grid from the minimum spacing to half the diameter, snapped.

    Small spaces leave fewer than three grid points in that window; they
    fall back to one radius per distance gap up to the full diameter.
    """
    lo, hi = space.min_spacing(), space.diameter / 2.0
    count = max(int(math.floor(math.log(hi / lo) / math.log(ratio) + 1e-12)) + 1, 1) if hi >= lo else 1
    radii = snap_radii(space, lo * ratio ** np.arange(count))
    if radii.size >= 3:
        return radii
    d = distance_breakpoints(space)
    d = d[d >= lo * (1.0 - BALL_RTOL)]
    return np.concatenate([0.5 * (d[:-1] + d[1:]), d[-1:]])


def _centers(space, centers):
    return default_centers(space) if centers is None else np.asarray(centers, dtype=np.int64)


def _radii(space, radii):
    return default_radii(space) if radii is None else np.asarray(radii, dtype=float)


def ball_masses(space: MetricMeasureSpace, centers, radii) -> np.ndarray:
    """``mu(B_r(x))`` for every center (rows) and radius (columns)."""
    centers = np.asarray(centers, dtype=np.int64)
    radii = np.asarray(radii, dtype=float)
    out = np.empty((centers.size, radii.size))
    for i, c in enumerate(centers):
        row = space.distance[c]
        order = np.argsort(row, kind="stable")
        cum = np.cumsum(space.measure[order])
        idx = np.searchsorted(row[order], radii * (1.0 + BALL_RTOL), side="right")
        out[i] = cum[idx - 1]
    return out


# ---------------------------------------------------------------- volume

def fit_ahlfors_regularity(space: MetricMeasureSpace, centers=None, radii=None):
    """Fit ``C1 r^b <= mu(B_r(x)) <= C2 r^b`` over a radius window.

    Radii below the minimum vertex spacing or above the diameter are dropped.
    ``b`` is the least-squares slope of ``log mu(B_r)`` against ``log r``
    pooled over centers.  ``C1`` and ``C2`` are the extreme ratios.

    Returns:
        ``(b, C1, C2, residuals)`` where residuals is a list of
        ``(center, r, mu_ball, ratio)`` tuples.
    """
    centers = _centers(space, centers)
    radii = _radii(space, radii)
    lo = space.min_spacing() * (1.0 - BALL_RTOL)
    usable = np.unique(radii[(radii >= lo) & (radii <= space.diameter * (1.0 + BALL_RTOL)) & (radii > 0)])
    if usable.size < 3:
        raise InsufficientDataError(f"need at least 3 radii in the fit window, got {usable.size}")
    mass = ball_masses(space, centers, usable)
    logr = np.broadcast_to(np.log(usable), mass.shape).ravel()
    b, _ = np.polyfit(logr, np.log(mass).ravel(), 1)
    ratio = mass / usable ** b
    residuals = [(int(c), float(r), float(m), float(q))
                 for c, mrow, qrow in zip(centers, mass, ratio)
                 for r, m, q in zip(usable, mrow, qrow)]
    return float(b), float(ratio.min()), float(ratio.max()), residuals


def check_reverse_doubling(space: MetricMeasureSpace, k: float = 2.0, centers=None, radii=None) -> float:
    """``min mu(B_kr) / mu(B_r)``; the hypothesis holds when it exceeds 1."""
    if not k > 1:
        raise DomainError("k must exceed 1")
    centers = _centers(space, centers)
    radii = _radii(space, radii)
    radii = radii[(radii > 0) & (k * radii <= space.diameter * (1.0 + BALL_RTOL))]
    if radii.size == 0:
        raise InsufficientDataError("no radius with k*r inside the diameter")
    return float((ball_masses(space, centers, k * radii) / ball_masses(space, centers, radii)).min())


def check_doubling(space: MetricMeasureSpace, centers=None, radii=None) -> float:
    """``max mu(B_2r) / mu(B_r)`` over the sample."""
    centers = _centers(space, centers)
    radii = _radii(space, radii)
    radii = radii[radii > 0]
    if radii.size == 0:
        raise InsufficientDataError("empty radius grid")
    return float((ball_masses(space, centers, 2.0 * radii) / ball_masses(space, centers, radii)).max())


# ---------------------------------------------------------------- Poincare

def ball_poincare_eigenvalue(space: MetricMeasureSpace, members) -> float:
    """Largest ratio ``sum_B (u - mean_B u)^2 mu / E(u)`` over all ``u``.

    The numerator vanishes on constants, so the pencil can be reduced with
    the grounded Green matrix instead of the Laplacian pseudoinverse.
    """
    members = np.asarray(members, dtype=np.int64)
    g = green_matrix(space)
    m = space.measure[members]
    # A u = D^(1/2) (I - 1 m^T / m(B)) u_B
    a = np.sqrt(m)[:, None] * (np.eye(members.size) - np.outer(np.ones(members.size), m) / m.sum())
    pencil = a @ g[np.ix_(members, members)] @ a.T
    top = members.size - 1
    return float(linalg.eigvalsh(pencil, subset_by_index=[top, top])[0])


def poincare_table(space: MetricMeasureSpace, gamma: float, centers=None, radii=None):
    """Rows ``(center, r, lambda_max, lambda_max / r^gamma)`` for balls with 2+ vertices."""
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    centers = _centers(space, centers)
    radii = _radii(space, radii)
    cache = {}
    rows = []
    for c in centers:
        row = space.distance[c]
        for r in radii:
            if r <= 0:
                continue
            members = np.flatnonzero(row <= r * (1.0 + BALL_RTOL))
            if members.size < 2:
                continue
            key = members.tobytes()
            if key not in cache:
                cache[key] = ball_poincare_eigenvalue(space, members)
            rows.append((int(c), float(r), cache[key], cache[key] / r ** gamma))
    return rows


def estimate_poincare_constant(space: MetricMeasureSpace, gamma: float, centers=None, radii=None) -> float:
    """``max over balls of lambda_max / r^gamma``."""
    rows = poincare_table(space, gamma, centers, radii)
    if not rows:
        raise InsufficientDataError("every sampled ball is a single vertex")
    return max(row[3] for row in rows)


# ---------------------------------------------------------------- Nash

def _nash_log(space, u, theta, variant):
    if variant in ("global", "local"):
        return _log_nash(space, u, theta, variant == "local")
    return _log_moment_nash(space, u, theta, variant == "local_moment")


def _ascend(space, u, theta, variant, max_iters, tol):
    """Projected ascent of the log functional on nonnegative unit vectors."""
    free = space.free_mask
    mu = space.measure
    f, g = _nash_log(space, u, theta, variant)
    step = 1.0
    for _ in range(max_iters):
        d = np.where(free, g / mu, 0.0)
        step = min(1.0, 2.0 * step)
        while True:
            cand = np.maximum(u + step * d, 0.0)
            s = np.sqrt(np.sum(cand * cand * mu))
            if s > 0:
                cand = cand / s
                try:
                    fc, gc = _nash_log(space, cand, theta, variant)
                except DegenerateInputError:
                    fc = -np.inf
                if fc >= f + 1e-4 * step * float(np.sum((cand - u) * g)) and fc > f:
                    break
            step *= 0.5
            if step < 1e-16:
                return u, f
        gain = fc - f
        u, f, g = cand, fc, gc
        if gain < tol:
            break
    return u, f


def estimate_nash_constant(space: MetricMeasureSpace, theta: float, variant: str = "global",
                           restarts: int = 16, seed: int = 0, max_iters: int = 2000, tol: float = 1e-12):
    """Best Nash-type constant found by multi-start ascent.

    Starts are the normalized indicator of every free vertex plus
    ``restarts`` seeded random nonnegative functions.  Restricting to
    ``u >= 0`` loses nothing since ``E(|u|) <= E(u)`` and the norms agree.

    Returns:
        ``(C2_n, maximizer, is_lower_bound)``; the flag is always True.
    """
    if variant not in NASH_VARIANTS:
        raise DomainError(f"unknown Nash variant {variant!r}")
    if not theta > 0:
        raise DomainError("theta must be positive")
    if not space.free_mask.any():
        raise DegenerateInputError("no free vertex")
    if variant in ("global", "moment") and not space.boundary:
        raise DegenerateInputError("constants have zero energy; the global Nash constant is infinite "
                                   "without a boundary (use a local variant)")
    mu = space.measure
    starts = []
    for x in np.flatnonzero(space.free_mask):
        e = np.zeros(space.n_vertices)
        e[x] = 1.0 / math.sqrt(mu[x])
        starts.append(e)
    for idx in range(restarts):
        rng = np.random.default_rng([seed, idx])
        u = np.abs(rng.standard_normal(space.n_vertices))
        u[~space.free_mask] = 0.0
        starts.append(u / np.sqrt(np.sum(u * u * mu)))
    best_f, best_u = -np.inf, None
    for u0 in starts:
        u, f = _ascend(space, u0, theta, variant, max_iters, tol)
        if f > best_f:
            best_f, best_u = f, u
    return float(np.exp(best_f)), best_u, True


# ---------------------------------------------------------------- proof trace

def variance_center(space: MetricMeasureSpace, u, gamma: float) -> int:
    """Vertex minimizing ``sum_x d(x, y)^gamma u(x)^2 mu(x)``; its value is at most Var(u)."""
    u = as_function(space, u)
    return int(np.argmin(space.distance_power(gamma) @ (u * u * space.measure)))


def proof_radius(space: MetricMeasureSpace, u, center: int, tol: float = PROOF_RADIUS_TOL) -> float:
    """``sup{s : mass of u^2 in B_s(center) < 1/2}`` by bisection.

    The ball-mass function is right-continuous and steps at vertex
    distances, so the supremum is the first distance where the mass
    reaches one half.
    """
    u = as_function(space, u)
    w = u * u * space.measure
    row = space.distance[center]

    def mass(s):
        return w[row <= s].sum()

    hi = float(row.max())
    if mass(hi) < 0.5:
        return math.inf
    lo = 0.0
    if mass(lo) >= 0.5:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mass(mid) < 0.5:
            lo = mid
        else:
            hi = mid
    return hi


def proof_trace(space: MetricMeasureSpace, u, gamma: float) -> dict:
    """Quantities of the volume-growth argument for a unit function ``u``."""
    from .functionals import variance
    v = variance(space, u, gamma)
    y = variance_center(space, u, gamma)
    r = proof_radius(space, u, y)
    return {"variance": v, "center": y, "radius": r, "radius_bound_holds": r ** gamma <= 2.0 * v * (1 + 1e-12)}


# ---------------------------------------------------------------- report

def _split_fit(space, centers, radii, c0):
    out = {}
    for side, keep in (("below_C0", radii < c0), ("above_C0", radii > c0)):
        try:
            b, c1, c2, _ = fit_ahlfors_regularity(space, centers, radii[keep])
            out[side] = {"b": b, "C1": c1, "C2": c2}
        except InsufficientDataError:
            out[side] = None
    return out


def verify_space(space: MetricMeasureSpace, centers=None, radii=None, gamma=None, k: float = 2.0,
                 theta=None, nash_variant=None, C0=None, restarts: int = 16, seed: int = 0) -> HypothesisReport:
    """Run every estimator that applies and collect a ``HypothesisReport``.

    Args:
        gamma: Poincare exponent; defaults to ``b + 1`` for the resistance
            metric and 2 otherwise.
        theta: Nash dimension parameter; the Nash search is skipped when None.
        nash_variant: defaults to ``global`` on spaces with a boundary and
            ``local`` otherwise.
        C0: scale separating small and large radii; fit quality is
            reported on both sides.
    """
    centers = _centers(space, centers)
    radii = _radii(space, radii)
    b, c1, c2, residuals = fit_ahlfors_regularity(space, centers, radii)
    window = [row[1] for row in residuals]
    rep = HypothesisReport(b=b, C1_growth=c1, C2_growth=c2, radius_range=(min(window), max(window)),
                           residuals=residuals, total_measure=space.total_measure)
    try:
        rep.reverse_doubling = (float(k), check_reverse_doubling(space, k, centers, radii))
    except InsufficientDataError:
        pass
    rep.doubling_C = check_doubling(space, centers, radii)
    if gamma is None:
        gamma = b + 1.0 if space.metric_source == "effective_resistance" else 2.0
    rep.poincare = (float(gamma), estimate_poincare_constant(space, gamma, centers, radii))
    if theta is not None:
        variant = nash_variant or ("global" if space.boundary else "local")
        c2n, _, flag = estimate_nash_constant(space, theta, variant, restarts, seed)
        rep.nash = (float(theta), c2n, flag)
    if C0 is not None:
        rep.C0 = float(C0)
        rep.c0_split = _split_fit(space, centers, radii, C0)
    if space.boundary:
        rep.max_boundary_resistance = float(boundary_resistance(space).max())
    return rep


# ---------------------------------------------------------------- bounds

def _need(report, *names):
    missing = [n for n in names if getattr(report, n) is None]
    if missing:
        raise IncompleteReportError(", ".join(missing))


def theorem_gamma(report: HypothesisReport, theorem: str) -> float:
    """Exponent the theorem prescribes."""
    if theorem in RESISTANCE_THEOREMS:
        _need(report, "b")
        return report.b + 1.0
    if theorem in POINCARE_THEOREMS:
        _need(report, "poincare")
        return report.poincare[0]
    if theorem in NASH_THEOREMS:
        _need(report, "b", "nash")
        return 2.0 * report.b / report.nash[0]
    if theorem == "heisenberg":
        return 2.0
    raise DomainError(f"unknown theorem {theorem!r}")


def _volume_constant(b, c1, c2):
    # K = C1^(1/b) / (16 C2^(1+1/b) 9^(1/b)) = 1 / (16 C2 c) with c^b = 9 C2 / C1
    return c1 ** (1.0 / b) / (16.0 * c2 ** (1.0 + 1.0 / b) * 9.0 ** (1.0 / b))


def _ratio_c(b, c1, c2):
    return (9.0 * c2 / c1) ** (1.0 / b)


def _poincare_constant(report, c_scale):
    _need(report, "reverse_doubling", "poincare")
    k, crd = report.reverse_doubling
    gamma, c1p = report.poincare
    if not crd > 1:
        raise HypothesisViolation("reverse doubling constant must exceed 1")
    n = int(math.floor(4.0 * math.log(2.0) / math.log(crd) + 1e-12)) + 1
    c = c_scale * k ** (n + 1)
    return (9.0 - 4.0 * math.sqrt(2.0)) / (32.0 * c1p * c ** gamma), c


def _c0(report, aux):
    c0 = aux.get("C0", report.C0)
    if c0 is None:
        raise IncompleteReportError("C0")
    if not c0 > 0:
        raise DomainError("C0 must be positive")
    return float(c0)


def theorem_lower_bound(report: HypothesisReport, theorem: str, **aux) -> float:
    """Explicit constant ``C`` of the named theorem, evaluated on ``report``.

    Args:
        report: fitted hypothesis constants.
        theorem: one of ``THEOREMS``.
        **aux: ``C0`` overrides ``report.C0``; ``total_measure`` and
            ``max_boundary_resistance`` override the truncation data used
            by ``resistance_graph``.

    Returns:
        A positive real.
    """
    if theorem not in THEOREMS:
        raise DomainError(f"unknown theorem {theorem!r}")
    if theorem == "heisenberg":
        return HEISENBERG_BOUND

    if theorem in RESISTANCE_THEOREMS:
        _need(report, "b", "C1_growth", "C2_growth")
        b, c1, c2 = report.b, report.C1_growth, report.C2_growth
        k_val = _volume_constant(b, c1, c2)
        if theorem == "resistance":
            return k_val
        c0 = _c0(report, aux)
        if theorem == "resistance_bounded":
            # small proof radius: the unbounded argument; large: Var >= r^gamma / 2
            return min(k_val, 0.5 * (c0 / _ratio_c(b, c1, c2)) ** (b + 1.0))
        bound = k_val * min(1.0, c0 ** -(b + 1.0))
        mass = aux.get("total_measure", report.total_measure)
        rmax = aux.get("max_boundary_resistance", report.max_boundary_resistance)
        if mass is not None and rmax is not None:
            # finite truncation: u^2(x) <= R(x, boundary) E(u) caps the scales the window misses
            bound = min(bound, 1.0 / (mass * rmax))
        return bound

    if theorem in POINCARE_THEOREMS:
        if theorem == "modified_poincare":
            return _poincare_constant(report, 2.0)[0]
        val, c = _poincare_constant(report, 1.0)
        if theorem == "poincare":
            return val
        c0 = _c0(report, aux)
        return min(val, 0.5 * (c0 / c) ** report.poincare[0])

    _need(report, "b", "C2_growth", "nash")
    theta, c2n = report.nash[0], report.nash[1]
    b, c1 = report.b, report.C2_growth
    gamma = 2.0 * b / theta
    if theorem in ("nash", "local_nash"):
        if not theta < 2:
            raise HypothesisViolation("the Nash route needs theta < 2")
        c3 = (math.sqrt(c1) * 2.0 ** (b / 2.0) / math.sqrt(1.0 - 2.0 ** (b - gamma))
              * ((2.0 * gamma - b) / (gamma - b)) * ((gamma - b) / b) ** (b / gamma)) ** (4.0 / theta)
        return 1.0 / (c2n * c3)
    p = 1.0 + 2.0 / theta
    return 2.0 ** (-p - 1.0 - 2.0 * b / (theta * gamma)) / (c2n * c1 ** (2.0 / theta))


def proposition_chain_bound(report: HypothesisReport, r: float) -> float:
    """Upper bound ``4 2^gamma C C1 r^gamma`` on ``J^2 / E`` from doubling and Poincare."""
    _need(report, "doubling_C", "poincare")
    gamma, c1p = report.poincare
    return 4.0 * 2.0 ** gamma * report.doubling_C * c1p * r ** gamma
