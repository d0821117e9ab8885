import itertools
import math

import numpy as np
import pytest

from dpapsd.graph import (
    WeightedGraph,
    exact_apsd,
    generate,
    perturb_weights,
    read_graph,
    read_matrix,
    t_hop_distances,
    write_graph,
    write_matrix,
)
from dpapsd.mechanisms import make_rng


def floyd_warshall(g: WeightedGraph) -> np.ndarray:
    d = np.full((g.n, g.n), math.inf)
    np.fill_diagonal(d, 0.0)
    for a, b, w in g.edges:
        d[a, b] = min(d[a, b], w)
        d[b, a] = min(d[b, a], w)
    for k in range(g.n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def random_connected(rng, n):
    kind = ["path", "cycle", "grid", "complete", "erdos_renyi"][rng.integers(5)]
    if kind == "cycle" and n < 3:
        kind = "path"
    g = generate(kind, n, "uniform:0,10", rng, p=0.4)
    return g


def test_graph_validation():
    with pytest.raises(ValueError):
        WeightedGraph.from_edges(3, [(0, 0, 1.0)])
    with pytest.raises(ValueError):
        WeightedGraph.from_edges(3, [(0, 1, 1.0), (1, 0, 2.0)])
    with pytest.raises(ValueError):
        WeightedGraph.from_edges(2, [(0, 2, 1.0)])
    with pytest.raises(ValueError):
        WeightedGraph.from_edges(2, [(0, 1, math.inf)])


def test_topology_is_immutable():
    g = WeightedGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 2.0)])
    with pytest.raises(ValueError):
        g.w[0] = 5.0


def test_exact_apsd_examples():
    g = WeightedGraph.from_edges(3, [(0, 1, 2.0), (1, 2, 3.0)])
    assert exact_apsd(g)[0, 2] == 5.0
    assert exact_apsd(WeightedGraph.from_edges(1, [])).tolist() == [[0.0]]
    tri = WeightedGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)])
    assert exact_apsd(tri)[0, 2] == 2.0
    with pytest.raises(ValueError):
        exact_apsd(WeightedGraph.from_edges(2, [(0, 1, -1.0)]))


def test_exact_apsd_disconnected_and_zero_weight():
    g = WeightedGraph.from_edges(4, [(0, 1, 0.0), (2, 3, 1.0)])
    d = exact_apsd(g)
    assert d[0, 1] == 0.0 and math.isinf(d[0, 2])


def test_exact_apsd_against_floyd_warshall():
    rng = make_rng(3)
    for _ in range(30):
        g = random_connected(rng, int(rng.integers(1, 25)))
        d = exact_apsd(g)
        assert np.allclose(d, floyd_warshall(g), atol=1e-9)
        assert np.allclose(d, d.T) and np.all(np.diag(d) == 0)
        # triangle inequality
        assert np.all(d[:, :, None] <= d[:, None, :] + d.T[None, :, :] + 1e-9)


def test_t_hop_examples():
    g = WeightedGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])
    assert math.isinf(t_hop_distances(g, 1).matrix[0, 2])
    assert t_hop_distances(g, 2).matrix[0, 2] == 2.0
    assert np.all(np.diag(t_hop_distances(g, 0).matrix) == 0)


def test_t_hop_monotone_and_exact_at_n_minus_1():
    rng = make_rng(11)
    for _ in range(20):
        n = int(rng.integers(2, 30))
        g = random_connected(rng, n)
        prev = t_hop_distances(g, 0).matrix
        for t in range(1, n):
            cur = t_hop_distances(g, t).matrix
            assert np.all(cur <= prev)
            prev = cur
        assert np.allclose(prev, exact_apsd(g), atol=1e-9)


def test_t_hop_walks_use_negative_edges_repeatedly():
    # One negative edge: the best 3-edge walk from 0 to 1 bounces on it.
    g = WeightedGraph.from_edges(2, [(0, 1, -1.0)])
    assert t_hop_distances(g, 3).matrix[0, 1] == -3.0
    assert t_hop_distances(g, 2).matrix[0, 0] == -2.0


def test_perturb_weights():
    g = generate("path", 100_001, "const:1", make_rng(0))
    r = make_rng(1)
    dev = np.abs(perturb_weights(g, 1.0, r).w - g.w)
    assert 0.97 <= dev.mean() <= 1.03
    dev_half = np.abs(perturb_weights(g, 0.5, make_rng(2)).w - g.w)
    assert dev_half.mean() / dev.mean() == pytest.approx(2.0, rel=0.03)
    same = perturb_weights(g, math.inf, r)
    assert np.array_equal(same.w, g.w)
    with pytest.raises(ValueError):
        perturb_weights(g, 0.0, r)


def test_perturb_keeps_negative_weights():
    g = generate("path", 1000, "const:0", make_rng(0))
    assert perturb_weights(g, 1.0, make_rng(1)).w.min() < 0


def test_generate_examples():
    g = generate("path", 4, "const:1", make_rng(0))
    assert g.m == 3 and np.all(g.w == 1)
    assert generate("complete", 5, "uniform:1,2", make_rng(0)).m == 10
    a = generate("erdos_renyi", 20, "uniform:0,1", make_rng(7), p=0.5)
    b = generate("erdos_renyi", 20, "uniform:0,1", make_rng(7), p=0.5)
    assert a.edges == b.edges and a.is_connected()
    assert generate("grid", 16, "const:1", make_rng(0)).m == 24
    assert generate("cycle", 5, "const:2", make_rng(0)).m == 5


@pytest.mark.parametrize(
    "kind,n,weights,p",
    [("path", 0, "const:1", None), ("erdos_renyi", 5, "const:1", None), ("path", 3, "uniform:3,1", None),
     ("star", 4, "const:1", None), ("path", 3, "normal:0", None), ("path", 3, "const:-1", None)],
)
def test_generate_errors(kind, n, weights, p):
    with pytest.raises(ValueError):
        generate(kind, n, weights, make_rng(0), p=p)


def test_graph_roundtrip(tmp_path):
    g = generate("erdos_renyi", 15, "uniform:0,3", make_rng(2), p=0.4)
    f = tmp_path / "g.txt"
    write_graph(g, f)
    h = read_graph(f)
    assert h.n == g.n and h.edges == g.edges
    d = exact_apsd(g)
    write_matrix(d, tmp_path / "d.txt")
    assert np.array_equal(read_matrix(tmp_path / "d.txt"), d)


def test_read_graph_rejects_bad_files(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("3 2\n0 1 1.0\n")
    with pytest.raises(ValueError):
        read_graph(f)
    f.write_text("2 1\n0 1 nan\n")
    with pytest.raises(ValueError):
        read_graph(f)


def brute_walks(g: WeightedGraph, t: int) -> np.ndarray:
    adj = [[] for _ in range(g.n)]
    for a, b, w in g.edges:
        adj[a].append((b, w))
        adj[b].append((a, w))
    best = np.full((g.n, g.n), math.inf)
    for u in range(g.n):
        best[u, u] = 0.0
        layer = [(u, 0.0)]
        for _ in range(t):
            layer = [(y, c + w) for x, c in layer for y, w in adj[x]]
            for y, c in layer:
                best[u, y] = min(best[u, y], c)
    return best


def test_t_hop_matches_walk_enumeration_small():
    rng = make_rng(21)
    for _ in range(10):
        n = int(rng.integers(1, 7))
        pairs = list(itertools.combinations(range(n), 2))
        keep = [p for p in pairs if rng.random() < 0.6]
        g = WeightedGraph.from_edges(n, [(a, b, float(rng.uniform(-3, 5))) for a, b in keep])
        for t in range(4):
            assert np.allclose(t_hop_distances(g, t).matrix, brute_walks(g, t), atol=1e-9, equal_nan=False)
