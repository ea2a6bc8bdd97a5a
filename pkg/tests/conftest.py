import numpy as np
import pytest

from hypertropy import build_graph, fixture_path, load_graph


def make_graph(edges, n_nodes=None):
    """Graph from (u, v) or (u, v, w) tuples; unit weights by default."""
    norm = []
    for e in edges:
        e = tuple(e)
        norm.append(e if len(e) == 3 else (e[0], e[1], 1.0))
    return build_graph(n_nodes or (max(max(u, v) for u, v, _ in norm) + 1), norm)


@pytest.fixture
def triangle():
    return make_graph([(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def barbell6():
    return load_graph(fixture_path("barbell6.tsv"))


@pytest.fixture
def two_path():
    return make_graph([(0, 1)])


@pytest.fixture
def karate():
    return load_graph(fixture_path("karate.tsv"), label_path=fixture_path("karate_labels.tsv"))


def random_connected_graph(rng, n_max=10, weighted=True):
    """Random connected graph: a random spanning tree plus extra edges."""
    n = int(rng.integers(3, n_max + 1))
    edges = {}
    order = rng.permutation(n)
    for i in range(1, n):
        u, v = int(order[i]), int(order[int(rng.integers(0, i))])
        w = float(rng.uniform(0.5, 2.0)) if weighted else 1.0
        edges[(min(u, v), max(u, v))] = w
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        u, v = rng.integers(0, n, size=2)
        if u == v:
            continue
        key = (int(min(u, v)), int(max(u, v)))
        if key not in edges:
            edges[key] = float(rng.uniform(0.5, 2.0)) if weighted else 1.0
    return build_graph(n, [(u, v, w) for (u, v), w in edges.items()])


def random_hard_stack(rng, n, height):
    """Random hard assignment stack with shrinking widths; may leave empty columns."""
    import numpy as np
    from hypertropy.tree import AssignmentStack

    widths = [n]
    for _ in range(height - 1):
        widths.append(int(rng.integers(1, max(2, widths[-1]))))
    widths.append(1)
    mats = []
    for h in range(height):
        rows, cols = widths[h], widths[h + 1]
        m = np.zeros((rows, cols))
        m[np.arange(rows), rng.integers(0, cols, size=rows)] = 1.0
        mats.append(m)
    return AssignmentStack(mats=mats, hard=True)
