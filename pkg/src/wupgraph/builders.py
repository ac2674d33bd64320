"""Constructors for the example spaces.

Gasket-type spaces are built cell by cell: the level-``m`` cells are the
images of the base cell under all words of length ``m``, enumerated with the
first letter outermost.  Vertices are numbered by first appearance in that
enumeration, so ``build_sg`` and ``build_pcf`` on the gasket maps agree
index for index.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import CapacityError, ConstructionError, DomainError
from .space import MetricMeasureSpace

DEFAULT_VERTEX_CAP = 50_000
CAP_ENV = "WUPGRAPH_MAX_VERTICES"

SG_RESISTANCE_SCALE = 5.0 / 3.0
SQRT3 = math.sqrt(3.0)


def vertex_cap() -> int:
    return int(os.environ.get(CAP_ENV, DEFAULT_VERTEX_CAP))


def _check_cap(n_vertices: int) -> None:
    cap = vertex_cap()
    if n_vertices > cap:
        raise CapacityError(f"{n_vertices} vertices exceeds the cap of {cap} (set {CAP_ENV})")


def solve_resistance_dimension(rho: Sequence[float], tol: float = 1e-12) -> float:
    """Root ``b > 0`` of ``sum(rho_i ** -b) == 1`` by bisection."""
    rho = [float(r) for r in rho]
    if len(rho) < 2:
        raise DomainError("need at least two resistance weights")
    if any(r <= 1.0 for r in rho):
        raise DomainError("resistance weights must exceed 1")

    def excess(b):
        return math.fsum(r ** -b for r in rho) - 1.0

    lo, hi = 0.0, 1.0
    while excess(hi) > 0.0:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class AffineMap:
    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        self.offset = np.atleast_1d(np.asarray(self.offset, dtype=float))

    def __call__(self, pts):
        return pts @ self.matrix.T + self.offset

    def fixed_point(self):
        k = self.matrix.shape[0]
        return np.linalg.solve(np.eye(k) - self.matrix, self.offset)

    @property
    def ratio(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


@dataclass
class IfsSpec:
    """Iterated function system plus resistance weights.

    ``base_points`` defaults to the fixed points of the maps and
    ``base_edges`` to the complete graph on them with unit conductance.
    """

    maps: list
    rho: list
    level: int = 0
    base_points: Optional[np.ndarray] = None
    base_edges: Optional[list] = None
    resistance_dimension: float = field(init=False)
    measure_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.maps = [m if isinstance(m, AffineMap) else AffineMap(*m) for m in self.maps]
        self.rho = [float(r) for r in self.rho]
        if len(self.maps) != len(self.rho):
            raise DomainError("one resistance weight per map required")
        if self.level < 0:
            raise DomainError("level must be nonnegative")
        for m in self.maps:
            if m.ratio >= 1.0:
                raise DomainError("every map must be a strict contraction")
        self.resistance_dimension = solve_resistance_dimension(self.rho)
        self.measure_weights = np.array([r ** -self.resistance_dimension for r in self.rho])
        if self.base_points is None:
            self.base_points = np.array([m.fixed_point() for m in self.maps])
        self.base_points = np.atleast_2d(np.asarray(self.base_points, dtype=float))
        if self.base_edges is None:
            k = len(self.base_points)
            self.base_edges = [(i, j, 1.0) for i, j in itertools.combinations(range(k), 2)]

    @property
    def map_count(self) -> int:
        return len(self.maps)

    @classmethod
    def from_dict(cls, data: dict) -> "IfsSpec":
        maps = [AffineMap(m["matrix"], m["offset"]) for m in data["maps"]]
        return cls(maps=maps, rho=data["rho"], level=int(data.get("level", 0)),
                   base_points=data.get("base_points"), base_edges=data.get("base_edges"))


def sg_ifs(level: int) -> IfsSpec:
    half = 0.5 * np.eye(2)
    maps = [AffineMap(half, [0.0, 0.0]), AffineMap(half, [0.5, 0.0]),
            AffineMap(half, [0.25, SQRT3 / 4.0])]
    return IfsSpec(maps=maps, rho=[SG_RESISTANCE_SCALE] * 3, level=level)


def interval_ifs(level: int) -> IfsSpec:
    return IfsSpec(maps=[AffineMap([[0.5]], [0.0]), AffineMap([[0.5]], [0.5])],
                   rho=[2.0, 2.0], level=level)


# interval ------------------------------------------------------------------

def build_interval(n: int, length: float = 1.0, dirichlet_ends: bool = False) -> MetricMeasureSpace:
    """Uniform discretization of ``[0, length]`` with ``n`` nodes.

    Edge conductance ``1/h`` makes the energy the Riemann sum of ``u'^2`` for
    piecewise-linear ``u``; masses ``h`` (``h/2`` at the ends) are the
    trapezoid weights.
    """
    if n < 2:
        raise DomainError("interval needs at least two vertices")
    if length <= 0:
        raise DomainError("length must be positive")
    _check_cap(n)
    h = length / (n - 1)
    measure = np.full(n, h)
    measure[[0, -1]] = h / 2.0
    edges = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    return MetricMeasureSpace(
        measure=measure, edges=edges, conductances=np.full(n - 1, 1.0 / h),
        metric_source="euclidean", coordinates=(np.arange(n) * h)[:, None],
        boundary=(0, n - 1) if dirichlet_ends else (),
        metadata={"builder": "interval", "n": n, "length": length,
                  "dirichlet_ends": bool(dirichlet_ends)},
    )


# gasket --------------------------------------------------------------------

def sg_vertex_count(level: int) -> int:
    return 3 * (3 ** level + 1) // 2


def _sg_cells(level: int):
    """Level-``level`` cells as triples of integer lattice points.

    Points are ``(a, b)`` meaning ``(a * e1 + b * e2) / 2**level`` with
    ``e1 = (1, 0)``, ``e2 = (1/2, sqrt(3)/2)``.
    """
    cells = [((0, 0), (1, 0), (0, 1))]
    for m in range(1, level + 1):
        s = 2 ** (m - 1)
        offsets = ((0, 0), (s, 0), (0, s))
        cells = [tuple((p[0] + ox, p[1] + oy) for p in cell)
                 for ox, oy in offsets for cell in cells]
    return cells


def _sg_graph(level: int):
    _check_cap(sg_vertex_count(level))
    index, points, edges, incidence = {}, [], [], []
    for cell in _sg_cells(level):
        ids = []
        for p in cell:
            if p not in index:
                index[p] = len(points)
                points.append(p)
                incidence.append(0)
            ids.append(index[p])
            incidence[index[p]] += 1
        edges.extend([(ids[0], ids[1]), (ids[0], ids[2]), (ids[1], ids[2])])
    pts = np.array(points, dtype=float)
    scale = 2.0 ** level
    coords = np.column_stack([pts[:, 0] + 0.5 * pts[:, 1], (SQRT3 / 2.0) * pts[:, 1]]) / scale
    corners = [index[(0, 0)], index[(2 ** level, 0)], index[(0, 2 ** level)]]
    return np.array(edges), np.array(incidence, dtype=float), coords, corners


def build_sg(level: int) -> MetricMeasureSpace:
    """Level-``level`` graph approximation of the Sierpinski gasket.

    Conductance ``(5/3)**level`` per edge; each cell's mass ``3**-level`` is
    split equally among its three vertices.
    """
    if level < 0:
        raise DomainError("level must be nonnegative")
    edges, incidence, coords, corners = _sg_graph(level)
    cell_mass = 3.0 ** -level
    return MetricMeasureSpace(
        measure=incidence * cell_mass / 3.0, edges=edges,
        conductances=np.full(len(edges), SG_RESISTANCE_SCALE ** level),
        metric_source="effective_resistance", coordinates=coords,
        metadata={"builder": "sg", "level": level, "corners": corners},
    )


def build_sg_lattice(level: int) -> MetricMeasureSpace:
    """Finite piece ``2**m * Gamma_m`` of the Sierpinski lattice.

    Unit conductances, counting measure, and the three outer corners as a
    Dirichlet boundary.
    """
    if level < 1:
        raise DomainError("lattice level must be at least 1")
    edges, _, coords, corners = _sg_graph(level)
    n = coords.shape[0]
    return MetricMeasureSpace(
        measure=np.ones(n), edges=edges, conductances=np.ones(len(edges)),
        metric_source="effective_resistance", coordinates=coords * 2.0 ** level,
        boundary=tuple(corners), metadata={"builder": "sg_lattice", "level": level, "corners": corners},
    )


# general p.c.f. ------------------------------------------------------------

def build_pcf(spec: IfsSpec, tol: float = 1e-9) -> MetricMeasureSpace:
    """Level-``spec.level`` cell graph of a p.c.f. self-similar set.

    Edge conductances are the base conductances times the product of
    ``rho`` along the cell's word; cell masses are products of the measure
    weights, split equally among the cell's vertices.
    """
    base = spec.base_points
    k = base.shape[0]
    cells = [(base, 1.0, 1.0)]
    for _ in range(spec.level):
        cells = [(f(pts), r * rho, w * mu)
                 for f, rho, mu in zip(spec.maps, spec.rho, spec.measure_weights)
                 for pts, r, w in cells]
    _check_cap(len(cells) * k)  # upper bound on the vertex count

    allpts = np.concatenate([c[0] for c in cells])
    scale = max(float(np.ptp(base, axis=0).max()), 1.0)
    tree = cKDTree(allpts)
    # cluster points closer than tol * scale; first appearance wins the label
    label = np.full(len(allpts), -1, dtype=np.int64)
    n = 0
    for i in range(len(allpts)):
        if label[i] >= 0:
            continue
        near = tree.query_ball_point(allpts[i], tol * scale)
        label[near] = n
        n += 1
    reps = np.array([allpts[np.flatnonzero(label == v)[0]] for v in range(n)])
    if n > 1:
        dmin = cKDTree(reps).query(reps, k=2)[0][:, 1].min()
        if dmin < 1e3 * tol * scale:
            raise ConstructionError("vertex identification is ambiguous at this tolerance")

    measure = np.zeros(n)
    conductance = {}
    for c, (_, rprod, mass) in enumerate(cells):
        ids = label[c * k:(c + 1) * k]
        if len(set(ids.tolist())) != k:
            raise ConstructionError("a cell map identifies distinct base points")
        measure[ids] += mass / k
        for i, j, cond in spec.base_edges:
            a, b = sorted((int(ids[i]), int(ids[j])))
            conductance[(a, b)] = conductance.get((a, b), 0.0) + cond * rprod
    keys = list(conductance)
    return MetricMeasureSpace(
        measure=measure, edges=np.array(keys), conductances=np.array([conductance[e] for e in keys]),
        metric_source="effective_resistance", coordinates=reps,
        metadata={"builder": "pcf", "level": spec.level, "rho": spec.rho,
                  "resistance_dimension": spec.resistance_dimension},
    )


# lattice groups ------------------------------------------------------------

def build_lattice_group(dim: int, n: int) -> MetricMeasureSpace:
    """Cube ``{0..n-1}**dim`` of the integer lattice with the group energy.

    Generators are the ``2*dim`` unit vectors and their inverses; each
    undirected edge carries conductance ``1/|S|``.  Counting measure, word
    metric, outer shell as boundary.
    """
    if not 1 <= dim <= 3:
        raise DomainError("dimension must be 1, 2 or 3")
    if n < 2:
        raise DomainError("side must be at least 2")
    _check_cap(n ** dim)
    shape = (n,) * dim
    idx = np.arange(n ** dim).reshape(shape)
    edges = []
    for axis in range(dim):
        lo = np.take(idx, np.arange(n - 1), axis=axis).ravel()
        hi = np.take(idx, np.arange(1, n), axis=axis).ravel()
        edges.append(np.column_stack([lo, hi]))
    edges = np.concatenate(edges)
    coords = np.array(np.unravel_index(np.arange(n ** dim), shape)).T.astype(float)
    shell = np.flatnonzero(np.any((coords == 0) | (coords == n - 1), axis=1))
    return MetricMeasureSpace(
        measure=np.ones(n ** dim), edges=edges,
        conductances=np.full(len(edges), 1.0 / (2 * dim)),
        metric_source="graph_shortest_path", coordinates=coords, boundary=tuple(shell),
        metadata={"builder": "lattice_group", "dim": dim, "side": n},
    )


BUILDERS = {
    "interval": build_interval,
    "sg": build_sg,
    "sg_lattice": build_sg_lattice,
    "lattice_group": build_lattice_group,
}
