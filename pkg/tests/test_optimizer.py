import numpy as np
import pytest

from conftest import make_space, path_space
from wupgraph.builders import build_interval, build_sg, build_sg_lattice
from wupgraph.errors import CapacityError, DegenerateInputError, DomainError
from wupgraph.functionals import energy, uncertainty_product, variance
from wupgraph.optimizer import (DEGENERATE_CONSTANTS, DEGENERATE_POINT_MASS, OptimizerOptions,
                                brute_force_min, minimize_product, random_start, sample_baseline,
                                structured_start)
from wupgraph.space import l2_norm, normalize

FAST = OptimizerOptions(starts=8, max_iters=2000)


def localized_eigenfunction(space):
    """Alternating +-1 around the central hole of an SG lattice piece (Dirichlet eigenvalue 6)."""
    m = space.metadata["level"]
    p = space.coordinates / 2.0 ** m
    corners = np.array([[0.5, 0.0], [0.25, np.sqrt(3) / 4], [0.75, np.sqrt(3) / 4]])
    loop = []
    for i, q in enumerate(p):
        for u, v in ((0, 1), (1, 2), (0, 2)):
            d = corners[v] - corners[u]
            t = np.dot(q - corners[u], d) / np.dot(d, d)
            if -1e-9 <= t <= 1 + 1e-9 and np.linalg.norm(corners[u] + t * d - q) < 1e-9:
                loop.append(i)
                break
    c = corners.mean(axis=0)
    order = np.array(loop)[np.argsort(np.arctan2(p[loop, 1] - c[1], p[loop, 0] - c[0]))]
    f = np.zeros(space.n_vertices)
    f[order] = (-1.0) ** np.arange(order.size)
    return normalize(space, f)


def test_two_point_bounded_energy_matches_scan(two_point):
    # the sphere a^2/2 + b^2/2 = 1 at 10^6 angles
    t = 2 * np.pi * np.arange(1_000_000) / 1_000_000
    a, b = np.sqrt(2) * np.cos(t), np.sqrt(2) * np.sin(t)
    scan = np.min(a * a * b * b / 2 * ((a - b) ** 2 + 1))
    res = minimize_product(two_point, 2.0, "bounded_energy")
    assert abs(res.product - scan) < 1e-6


def test_constants_flagged_without_boundary():
    res = minimize_product(build_sg(2), 2.0, "unbounded", FAST)
    assert res.product <= 1e-10
    assert res.degenerate == DEGENERATE_CONSTANTS


def test_point_mass_flagged_for_bounded_energy():
    res = minimize_product(build_sg(1), 2.0, "bounded_energy", FAST)
    assert res.product <= 1e-6
    assert res.degenerate == DEGENERATE_POINT_MASS


def test_bounded_variance_on_lattice_is_not_degenerate():
    res = minimize_product(build_sg_lattice(2), 2.0, "bounded_variance", FAST)
    assert res.degenerate is None
    assert res.product > 0.1


def test_all_boundary_is_degenerate():
    s = make_space([1, 1], [[0, 1, 1.0]], boundary=(0, 1))
    with pytest.raises(DegenerateInputError):
        minimize_product(s, 2.0, "unbounded")


def test_bad_gamma(two_point):
    with pytest.raises(DomainError):
        minimize_product(two_point, -1.0, "unbounded")


def test_result_invariants():
    s = build_sg_lattice(2)
    res = minimize_product(s, 2.0, "unbounded", FAST)
    assert l2_norm(s, res.minimizer) == pytest.approx(1.0, abs=1e-9)
    assert np.all(res.minimizer[list(s.boundary)] == 0.0)
    assert res.product == pytest.approx(variance(s, res.minimizer, 2.0) * energy(s, res.minimizer), rel=1e-12)
    assert res.starts_used == FAST.starts + 1
    res.attach_bound(res.product / 4)
    assert res.gap_ratio == pytest.approx(4.0)
    d = res.to_dict()
    assert d["variant"] == "unbounded" and len(d["minimizer"]) == s.n_vertices


def test_reproducible_bit_for_bit():
    s = build_sg_lattice(2)
    a = minimize_product(s, 1.5, "bounded_variance", FAST)
    b = minimize_product(s, 1.5, "bounded_variance", FAST)
    assert a.product == b.product
    np.testing.assert_array_equal(a.minimizer, b.minimizer)


def test_result_not_worse_than_any_start():
    s = build_sg_lattice(2)
    res = minimize_product(s, 2.0, "unbounded", FAST)
    starts = [structured_start(s)] + [random_start(s, np.random.default_rng([FAST.seed, i]))
                                      for i in range(1, FAST.starts + 1)]
    for u in starts:
        assert res.product <= uncertainty_product(s, u, 2.0, "unbounded") + 1e-12


def test_structured_start_shape():
    s = build_interval(11, 1.0, dirichlet_ends=True)
    u = structured_start(s)
    assert u[0] == u[-1] == 0.0
    assert np.argmax(u) == 5
    assert l2_norm(s, u) == pytest.approx(1.0)


# ---------------------------------------------------------------- brute force

def two_free():
    # path of 4 with both ends pinned: two free vertices
    s = path_space(4)
    return s.with_boundary((0, 3))


def test_brute_force_refinement():
    s = two_free()
    coarse, _ = brute_force_min(s, 2.0, "unbounded", grid_points=2000)
    fine, _ = brute_force_min(s, 2.0, "unbounded", grid_points=4000)
    assert abs(coarse - fine) < 1e-5
    assert fine <= coarse + 1e-15


def test_brute_force_sign_symmetry():
    s = two_free()
    val, u = brute_force_min(s, 2.0, "bounded_variance", grid_points=2000)
    assert uncertainty_product(s, -u, 2.0, "bounded_variance") == pytest.approx(val, rel=1e-14)


@pytest.mark.parametrize("variant", ["unbounded", "bounded_energy", "bounded_variance"])
def test_brute_force_agrees_with_optimizer(variant):
    s = path_space(5).with_boundary((0, 4))
    bf, _ = brute_force_min(s, 2.0, variant, grid_points=400)
    res = minimize_product(s, 2.0, variant, FAST)
    assert abs(bf - res.product) < 1e-4


def test_brute_force_capacity():
    with pytest.raises(CapacityError):
        brute_force_min(path_space(5), 2.0, "unbounded")


# ---------------------------------------------------------------- baseline

def test_sample_baseline():
    s = build_sg_lattice(2)
    res = minimize_product(s, 2.0, "unbounded", FAST)
    base = sample_baseline(s, 2.0, "unbounded", 200, seed=3)
    assert base >= res.product
    assert base == sample_baseline(s, 2.0, "unbounded", 200, seed=3)
    with pytest.raises(DomainError):
        sample_baseline(s, 2.0, "unbounded", 0)


# ---------------------------------------------------------------- probes

@pytest.mark.parametrize("level", [2, 3])
def test_localized_eigenfunction_probe(level):
    s = build_sg_lattice(level)
    f = localized_eigenfunction(s)
    # L f = 6 f with f vanishing off the loop
    np.testing.assert_allclose(s.laplacian @ f, 6 * f, atol=1e-12)
    res = minimize_product(s, 2.0, "unbounded", FAST)
    assert uncertainty_product(s, f, 2.0, "unbounded") >= res.product


@pytest.mark.slow
def test_interval_scale_consistency():
    opts = OptimizerOptions(starts=2)
    a = minimize_product(build_interval(201, 20.0, dirichlet_ends=True), 2.0, "unbounded", opts)
    b = minimize_product(build_interval(401, 40.0, dirichlet_ends=True), 2.0, "unbounded", opts)
    assert abs(a.product - b.product) / a.product < 0.02
