import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wupgraph import kernels
from wupgraph.builders import build_interval, build_sg, build_sg_lattice

compiled = kernels.compiled_backend()
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")
SPACES = {"sg3": build_sg(3), "lattice3": build_sg_lattice(3), "interval": build_interval(700, 7.0)}


def inputs(space, seed=0, gamma=2.0):
    u = np.random.default_rng(seed).standard_normal(space.n_vertices)
    ei, ej = space.edge_ends
    return u, ei, ej, space.conductances, space.distance_power(gamma), space.measure


def test_compiled_backend_is_default():
    if compiled is not None and os.environ.get("WUPGRAPH_PURE_PYTHON", "") not in ("1", "true", "yes"):
        assert kernels.BACKEND == "cython"


@needs_compiled
@pytest.mark.parametrize("name", sorted(SPACES))
def test_backends_agree(name):
    py = kernels.python_backend
    u, ei, ej, c, dpow, mu = inputs(SPACES[name])
    assert compiled.energy(u, ei, ej, c) == pytest.approx(py.energy(u, ei, ej, c), rel=1e-12)
    np.testing.assert_allclose(compiled.energy_gradient(u, ei, ej, c), py.energy_gradient(u, ei, ej, c),
                               rtol=1e-12, atol=1e-12)
    w = u * u * mu
    vc, rc = compiled.variance_rowsums(dpow, w)
    vp, rp = py.variance_rowsums(dpow, w)
    assert vc == pytest.approx(vp, rel=1e-12)
    np.testing.assert_allclose(rc, rp, rtol=1e-12)
    for a, b in zip(compiled.objective_parts(dpow, u, mu, ei, ej, c), py.objective_parts(dpow, u, mu, ei, ej, c)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.5, 1.0, 2.15, 3.0]))
def test_variance_partition_independent(seed, gamma):
    # the full sum equals the sum over two halves of the rows to 1e-12 relative
    space = SPACES["sg3"]
    u, *_, dpow, mu = inputs(space, seed, gamma)
    w = u * u * mu
    total, rows = kernels.variance_rowsums(dpow, w)
    k = space.n_vertices // 3
    parts = sum(float(np.dot(w[s], dpow[s] @ w)) for s in (slice(0, k), slice(k, None)))
    assert parts == pytest.approx(total, rel=1e-12)
    assert float(np.dot(w, rows)) == pytest.approx(total, rel=1e-12)


def test_objective_parts_skip_zero_rows():
    space = SPACES["lattice3"]
    u, ei, ej, c, dpow, mu = inputs(space)
    u[::2] = 0.0
    var, en, gv, ge = kernels.objective_parts(dpow, u, mu, ei, ej, c)
    assert np.all(gv[::2] == 0.0)
    assert var == pytest.approx(kernels.python_backend.variance_rowsums(dpow, u * u * mu)[0], rel=1e-12)


def test_pure_python_switch():
    code = "import wupgraph.kernels as k; print(k.BACKEND)"
    env = {**os.environ, "WUPGRAPH_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"
