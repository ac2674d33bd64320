import numpy as np
import pytest

from wupgraph.builders import (build_interval, build_lattice_group, build_pcf, build_sg,
                               build_sg_lattice, interval_ifs, sg_ifs)
from wupgraph.space import MetricMeasureSpace


def make_space(measure, edges, metric_source="effective_resistance", boundary=(), **kw):
    edges = np.asarray(edges, dtype=float).reshape(-1, 3)
    return MetricMeasureSpace(measure=np.asarray(measure, dtype=float), edges=edges[:, :2].astype(np.int64),
                              conductances=edges[:, 2], metric_source=metric_source,
                              boundary=tuple(boundary), **kw)


def path_space(n, c=1.0, measure=None):
    """Unit-mass path 0-1-...-(n-1) with equal conductances."""
    mu = np.ones(n) if measure is None else measure
    return make_space(mu, [[i, i + 1, c] for i in range(n - 1)])


@pytest.fixture
def two_point():
    return make_space([0.5, 0.5], [[0, 1, 1.0]])


@pytest.fixture
def k3():
    return make_space([1.0, 1.0, 1.0], [[0, 1, 1.0], [1, 2, 1.0], [0, 2, 1.0]])


def builder_outputs():
    """One small instance of every builder, keyed by a readable id."""
    return {
        "interval": build_interval(21, 2.0),
        "interval_dirichlet": build_interval(21, 2.0, dirichlet_ends=True),
        "sg1": build_sg(1),
        "sg2": build_sg(2),
        "sg_lattice2": build_sg_lattice(2),
        "lattice_group_1d": build_lattice_group(1, 6),
        "lattice_group_2d": build_lattice_group(2, 4),
        "pcf_sg2": build_pcf(sg_ifs(2)),
        "pcf_interval3": build_pcf(interval_ifs(3)),
    }


@pytest.fixture(scope="session")
def builder_spaces():
    return builder_outputs()


# acceptance criteria append (id, passed, detail) here; printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, ok, detail in sorted(ACCEPTANCE, key=lambda row: row[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {cid}: {detail}")
