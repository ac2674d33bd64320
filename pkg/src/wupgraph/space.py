"""Finite metric measure spaces carried by weighted graphs.

A space holds per-vertex masses, an undirected edge list with conductances
(the energy form), optional coordinates and a rule for the metric.  Vertices
are always the integers ``0..n-1``.  Functions on a space are plain 1-D
float arrays aligned with that order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial.distance import cdist

from .errors import AlignmentError, DegenerateInputError, DomainError

METRIC_SOURCES = ("effective_resistance", "euclidean", "graph_shortest_path", "precomputed")

# closed balls admit d <= r * (1 + BALL_RTOL) to absorb roundoff in distances
BALL_RTOL = 1e-12


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MetricMeasureSpace:
    """Immutable finite metric measure space with a Dirichlet form.

    Attributes:
        measure: positive mass of each vertex.
        edges: ``(m, 2)`` integer array, each undirected edge listed once.
        conductances: positive conductance of each edge.
        metric_source: how ``distance`` is produced, one of ``METRIC_SOURCES``.
        coordinates: optional ``(n, k)`` embedding.
        boundary: vertices where admissible functions are pinned to zero.
        metadata: builder name, level and parameters.
        distance_values: required when ``metric_source == "precomputed"``.
    """

    measure: np.ndarray
    edges: np.ndarray
    conductances: np.ndarray
    metric_source: str = "effective_resistance"
    coordinates: Optional[np.ndarray] = None
    boundary: tuple = ()
    metadata: dict = field(default_factory=dict)
    distance_values: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        measure = _frozen(self.measure, float)
        edges = _frozen(np.asarray(self.edges, dtype=np.int64).reshape(-1, 2), np.int64)
        cond = _frozen(self.conductances, float).reshape(-1)
        n = measure.shape[0]
        if measure.ndim != 1 or n == 0:
            raise DomainError("measure must be a non-empty vector")
        if not np.all(np.isfinite(measure)) or np.any(measure <= 0):
            raise DomainError("all vertex masses must be positive and finite")
        if cond.shape[0] != edges.shape[0]:
            raise DomainError("one conductance per edge required")
        if np.any(cond <= 0) or not np.all(np.isfinite(cond)):
            raise DomainError("all conductances must be positive and finite")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise DomainError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise DomainError("self-loops are not allowed")
        key = np.sort(edges, axis=1)
        if np.unique(key, axis=0).shape[0] != key.shape[0]:
            raise DomainError("duplicate edge; merge parallel conductances first")
        if self.metric_source not in METRIC_SOURCES:
            raise DomainError(f"unknown metric_source {self.metric_source!r}")
        object.__setattr__(self, "measure", measure)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "conductances", cond)
        object.__setattr__(self, "boundary", tuple(sorted(int(b) for b in set(self.boundary))))
        if self.boundary and (self.boundary[0] < 0 or self.boundary[-1] >= n):
            raise DomainError("boundary vertex out of range")
        if self.coordinates is not None:
            coords = np.asarray(self.coordinates, dtype=float)
            if coords.ndim == 1:
                coords = coords[:, None]
            if coords.shape[0] != n:
                raise DomainError("one coordinate tuple per vertex required")
            object.__setattr__(self, "coordinates", _frozen(coords, float))
        if self.metric_source == "precomputed":
            if self.distance_values is None:
                raise DomainError("precomputed metric requires distance_values")
            d = _frozen(self.distance_values, float)
            if d.shape != (n, n):
                raise DomainError("distance_values must be n x n")
            object.__setattr__(self, "distance_values", d)
        if n > 1:
            ncomp, _ = connected_components(self.adjacency, directed=False)
            if ncomp != 1:
                raise DomainError("space graph must be connected")

    @property
    def n_vertices(self) -> int:
        return self.measure.shape[0]

    @property
    def vertices(self) -> np.ndarray:
        return np.arange(self.n_vertices)

    @property
    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[list(self.boundary)] = False
        return mask

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    @property
    def edge_ends(self):
        """Contiguous ``(tails, heads)`` index arrays of the edge list."""
        if "ends" not in self._cache:
            self._cache["ends"] = (np.ascontiguousarray(self.edges[:, 0]),
                                   np.ascontiguousarray(self.edges[:, 1]))
        return self._cache["ends"]

    @property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric sparse conductance matrix."""
        if "adjacency" not in self._cache:
            n = self.n_vertices
            i, j = self.edges[:, 0], self.edges[:, 1]
            a = sp.coo_matrix(
                (np.concatenate([self.conductances, self.conductances]),
                 (np.concatenate([i, j]), np.concatenate([j, i]))),
                shape=(n, n),
            ).tocsr()
            self._cache["adjacency"] = a
        return self._cache["adjacency"]

    @property
    def laplacian(self) -> sp.csr_matrix:
        """Weighted graph Laplacian L with ``u @ L @ u == energy(u)``."""
        if "laplacian" not in self._cache:
            a = self.adjacency
            deg = np.asarray(a.sum(axis=1)).ravel()
            self._cache["laplacian"] = (sp.diags(deg) - a).tocsr()
        return self._cache["laplacian"]

    @property
    def distance(self) -> np.ndarray:
        """Dense distance matrix, computed on first access and cached."""
        d = self._cache.get("distance")
        if d is None:
            d = self._compute_distance()
            d.setflags(write=False)
            self._cache["distance"] = d
        return d

    def _compute_distance(self) -> np.ndarray:
        src = self.metric_source
        if src == "effective_resistance":
            from .resistance import resistance_matrix

            return np.array(resistance_matrix(self).values)
        if src == "euclidean":
            if self.coordinates is None:
                raise DomainError("euclidean metric requires coordinates")
            d = cdist(self.coordinates, self.coordinates)
        elif src == "graph_shortest_path":
            d = shortest_path(self.adjacency, directed=False, unweighted=True)
        else:
            d = np.array(self.distance_values)
        np.fill_diagonal(d, 0.0)
        return d

    def distance_power(self, gamma: float) -> np.ndarray:
        """``distance ** gamma`` (cached for the most recent exponents)."""
        powers = self._cache.setdefault("dpow", {})
        key = float(gamma)
        if key not in powers:
            if len(powers) >= 4:
                powers.pop(next(iter(powers)))
            p = np.ascontiguousarray(self.distance ** key)
            p.setflags(write=False)
            powers[key] = p
        return powers[key]

    @property
    def diameter(self) -> float:
        return float(self.distance.max())

    def min_spacing(self) -> float:
        """Smallest positive distance between two vertices."""
        d = self.distance
        return float(d[d > 0].min())

    def with_metric(self, metric_source: str, distance_values=None) -> "MetricMeasureSpace":
        return MetricMeasureSpace(
            measure=self.measure, edges=self.edges, conductances=self.conductances,
            metric_source=metric_source, coordinates=self.coordinates,
            boundary=self.boundary, metadata=dict(self.metadata),
            distance_values=distance_values,
        )

    def with_boundary(self, boundary) -> "MetricMeasureSpace":
        return MetricMeasureSpace(
            measure=self.measure, edges=self.edges, conductances=self.conductances,
            metric_source=self.metric_source, coordinates=self.coordinates,
            boundary=tuple(boundary), metadata=dict(self.metadata),
            distance_values=self.distance_values,
        )

    # serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "vertices": list(range(self.n_vertices)),
            "measure": [float(m) for m in self.measure],
            "edges": [[int(i), int(j), float(c)]
                      for (i, j), c in zip(self.edges, self.conductances)],
            "metric_source": self.metric_source,
            "metadata": self.metadata,
        }
        if self.coordinates is not None:
            out["coordinates"] = self.coordinates.tolist()
        if self.boundary:
            out["boundary"] = list(self.boundary)
        if self.metric_source == "precomputed":
            out["distance"] = self.distance_values.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MetricMeasureSpace":
        vertices = list(data["vertices"])
        if vertices != list(range(len(vertices))):
            raise DomainError("vertex identifiers must be 0..n-1 in order")
        edges = np.asarray(data.get("edges", []), dtype=float).reshape(-1, 3)
        return cls(
            measure=data["measure"],
            edges=edges[:, :2].astype(np.int64),
            conductances=edges[:, 2],
            metric_source=data.get("metric_source", "effective_resistance"),
            coordinates=data.get("coordinates"),
            boundary=tuple(data.get("boundary", ())),
            metadata=dict(data.get("metadata", {})),
            distance_values=data.get("distance"),
        )


def save_space(space: MetricMeasureSpace, path) -> None:
    with open(path, "w") as fh:
        json.dump(space.to_dict(), fh, indent=1)


def load_space(path) -> MetricMeasureSpace:
    with open(path) as fh:
        return MetricMeasureSpace.from_dict(json.load(fh))


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float
    members: np.ndarray


def as_function(space: MetricMeasureSpace, u) -> np.ndarray:
    """Validate ``u`` as a function on ``space`` and return it as floats."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.shape[0] != space.n_vertices:
        raise AlignmentError(
            f"function has shape {u.shape}, space has {space.n_vertices} vertices")
    if not np.all(np.isfinite(u)):
        raise DomainError("function values must be finite")
    return u


def l2_norm(space: MetricMeasureSpace, u) -> float:
    u = as_function(space, u)
    return float(np.sqrt(np.sum(u * u * space.measure)))


def normalize(space: MetricMeasureSpace, u) -> np.ndarray:
    """Scale ``u`` to unit L2(mu) norm."""
    norm = l2_norm(space, u)
    if norm == 0.0:
        raise DegenerateInputError("cannot normalize the zero function")
    return np.asarray(u, dtype=float) / norm


def ball(space: MetricMeasureSpace, center: int, r: float) -> Ball:
    """Closed ball ``{x : d(x, center) <= r}``."""
    if r < 0:
        raise DomainError("radius must be nonnegative")
    row = space.distance[center]
    members = np.flatnonzero(row <= r * (1.0 + BALL_RTOL))
    return Ball(int(center), float(r), members)


def ball_measure(space: MetricMeasureSpace, center: int, r: float) -> float:
    return float(space.measure[ball(space, center, r).members].sum())


def ball_average(space: MetricMeasureSpace, u, b: Ball) -> float:
    u = as_function(space, u)
    m = space.measure[b.members]
    return float(np.dot(u[b.members], m) / m.sum())


def local_average_function(space: MetricMeasureSpace, u, r: float) -> np.ndarray:
    """``x -> average of u over the ball of radius r around x``."""
    u = as_function(space, u)
    if r < 0:
        raise DomainError("radius must be nonnegative")
    inside = space.distance <= r * (1.0 + BALL_RTOL)
    weights = inside * space.measure[None, :]
    return (weights @ u) / weights.sum(axis=1)
