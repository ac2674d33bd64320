"""Pure numpy versions of the compiled kernels (same signatures)."""
import math

import numpy as np


def energy(u, ei, ej, cond):
    d = u[ei] - u[ej]
    return math.fsum(cond * d * d)


def energy_gradient(u, ei, ej, cond):
    t = 2.0 * cond * (u[ei] - u[ej])
    g = np.bincount(ei, weights=t, minlength=u.shape[0])
    g -= np.bincount(ej, weights=t, minlength=u.shape[0])
    return g


def variance_rowsums(dpow, w):
    rows = dpow @ w
    return math.fsum(w * rows), rows


def objective_parts(dpow, u, mu, ei, ej, cond):
    w = u * u * mu
    rows = dpow @ w
    d = u[ei] - u[ej]
    t = 2.0 * cond * d
    ge = np.bincount(ei, weights=t, minlength=u.shape[0])
    ge -= np.bincount(ej, weights=t, minlength=u.shape[0])
    return math.fsum(w * rows), math.fsum(cond * d * d), 4.0 * mu * u * rows, ge
