"""Effective resistance from the Dirichlet form of a space.

Everything is computed from the grounded Laplacian: vertex ``ground``
(default 0) is held at potential zero, which makes the remaining block of
the Laplacian positive definite on a connected graph.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConstructionError, DegenerateInputError, InfiniteResistanceError
from .space import MetricMeasureSpace, as_function

#: spaces above this size use preconditioned CG instead of a sparse LU
DIRECT_SOLVE_MAX = 5000
ITERATIVE_RTOL = 1e-10

BINARY_MAGIC = b"EFRM"


@dataclass(frozen=True, eq=False)
class ResistanceMatrix:
    values: np.ndarray
    space: MetricMeasureSpace

    def __getitem__(self, idx):
        return self.values[idx]


def _grounded_block(space, ground):
    keep = np.ones(space.n_vertices, dtype=bool)
    keep[ground] = False
    lap = space.laplacian
    return lap[keep][:, keep].tocsc(), keep


def _solve(block, rhs):
    """Solve ``block @ x = rhs`` (rhs may be 1-D or 2-D)."""
    if block.shape[0] <= DIRECT_SOLVE_MAX:
        try:
            lu = spla.splu(block)
        except RuntimeError as exc:  # exactly singular
            raise ConstructionError("grounded Laplacian is singular") from exc
        return lu.solve(rhs)
    diag = block.diagonal()
    precond = sp.diags(1.0 / diag)
    cols = rhs if rhs.ndim == 2 else rhs[:, None]
    out = np.empty_like(cols, dtype=float)
    for k in range(cols.shape[1]):
        x, info = spla.cg(block, cols[:, k], rtol=ITERATIVE_RTOL, atol=0.0,
                          M=precond, maxiter=20 * block.shape[0])
        if info != 0:
            raise ConstructionError(f"conjugate gradient failed to converge (info={info})")
        out[:, k] = x
    return out if rhs.ndim == 2 else out[:, 0]


def potential(space: MetricMeasureSpace, x: int, y: int, ground: int = 0) -> np.ndarray:
    """Potential for a unit current injected at ``x`` and extracted at ``y``."""
    block, keep = _grounded_block(space, ground)
    rhs = np.zeros(space.n_vertices)
    rhs[x] += 1.0
    rhs[y] -= 1.0
    v = np.zeros(space.n_vertices)
    v[keep] = _solve(block, rhs[keep])
    return v


def effective_resistance(space: MetricMeasureSpace, x: int, y: int, ground: int = 0) -> float:
    """Resistance between ``x`` and ``y`` from a single grounded solve."""
    if x == y:
        return 0.0
    if space.n_vertices < 2 or space.edges.shape[0] == 0:
        raise InfiniteResistanceError("vertices are not connected")
    v = potential(space, x, y, ground)
    return float(v[x] - v[y])


def harmonic_potential(space: MetricMeasureSpace, x: int, y: int) -> np.ndarray:
    """The maximizer of the resistance quotient: ``u(x) = 1``, ``u(y) = 0``."""
    v = potential(space, x, y)
    return (v - v[y]) / (v[x] - v[y])


def green_matrix(space: MetricMeasureSpace, ground: int = 0) -> np.ndarray:
    """Inverse of the grounded Laplacian, padded with zeros at ``ground``.

    Any function annihilating constants sees this as the Laplacian
    pseudo-inverse, so it doubles as the Green operator for quotient bounds.
    """
    cache = space._cache
    key = ("green", ground)
    if key not in cache:
        n = space.n_vertices
        block, keep = _grounded_block(space, ground)
        g = np.zeros((n, n))
        if n > 1:
            inv = _solve(block, np.eye(n - 1))
            g[np.ix_(keep, keep)] = 0.5 * (inv + inv.T)
        g.setflags(write=False)
        cache[key] = g
    return cache[key]


def resistance_matrix(space: MetricMeasureSpace) -> ResistanceMatrix:
    """All-pairs effective resistance from n - 1 grounded solves."""
    g = green_matrix(space)
    diag = np.diag(g)
    r = diag[:, None] + diag[None, :] - 2.0 * g
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 0.0)
    np.maximum(r, 0.0, out=r)
    r.setflags(write=False)
    return ResistanceMatrix(r, space)


def boundary_resistance(space: MetricMeasureSpace) -> np.ndarray:
    """Resistance from each vertex to the boundary set shorted together.

    For ``u`` vanishing on the boundary, ``energy(u) >= u(x)**2 / R(x)``.
    Boundary vertices get 0.
    """
    if not space.boundary:
        raise DegenerateInputError("space has no boundary")
    free = space.free_mask
    lap = space.laplacian.tocsr()
    block = lap[free][:, free].tocsc()
    inv = _solve(block, np.eye(int(free.sum())))
    out = np.zeros(space.n_vertices)
    out[free] = np.diag(inv)
    return out


def resistance_witness_ratio(space: MetricMeasureSpace, x: int, y: int, u) -> float:
    """``(u(x) - u(y))**2 / energy(u)``; never exceeds ``R(x, y)``."""
    from .functionals import energy

    u = as_function(space, u)
    e = energy(space, u)
    if e <= 0.0:
        raise DegenerateInputError("function has zero energy")
    return float((u[x] - u[y]) ** 2 / e)


# file formats ---------------------------------------------------------------

def write_resistance_csv(rm: ResistanceMatrix, fh) -> None:
    n = rm.values.shape[0]
    fh.write("," + ",".join(str(i) for i in range(n)) + "\n")
    for i in range(n):
        fh.write(str(i) + "," + ",".join(format(v, ".17g") for v in rm.values[i]) + "\n")


def to_binary(rm: ResistanceMatrix) -> bytes:
    """16-byte header (magic, u32 n, u64 reserved) + strict lower triangle."""
    n = rm.values.shape[0]
    rows, cols = np.tril_indices(n, -1)
    body = np.ascontiguousarray(rm.values[rows, cols], dtype="<f8").tobytes()
    return BINARY_MAGIC + struct.pack("<IQ", n, 0) + body


def from_binary(blob: bytes) -> np.ndarray:
    if blob[:4] != BINARY_MAGIC:
        raise ValueError("not an EFRM resistance file")
    n, _ = struct.unpack("<IQ", blob[4:16])
    tri = np.frombuffer(blob[16:], dtype="<f8")
    if tri.shape[0] != n * (n - 1) // 2:
        raise ValueError("truncated resistance file")
    out = np.zeros((n, n))
    rows, cols = np.tril_indices(n, -1)
    out[rows, cols] = tri
    out[cols, rows] = tri
    return out
