import math

import networkx as nx
import numpy as np
import pytest

from subsketch.errors import InconsistencyError
from subsketch.fixtures import complete_graph, erdos_renyi, path_graph
from subsketch.graph import Graph
from subsketch.heuristics import (
    adamic_adar,
    common_neighbors,
    resource_allocation,
    score_pairs,
)


def nx_graph(g):
    h = nx.Graph()
    h.add_nodes_from(range(g.num_nodes))
    h.add_edges_from(map(tuple, g.edges()))
    return h


def test_examples():
    assert common_neighbors(complete_graph(4), 0, 1) == 2
    two = Graph.from_edges(4, [(0, 1), (2, 3)])
    assert common_neighbors(two, 0, 2) == 0 and adamic_adar(two, 0, 2) == 0.0
    p = path_graph(3)
    assert adamic_adar(p, 0, 2) == pytest.approx(1 / math.log(2))
    assert resource_allocation(p, 0, 2) == 0.5


def test_against_networkx():
    g = erdos_renyi(300, 6.0, seed=1)
    h = nx_graph(g)
    pairs = np.random.default_rng(0).choice(300, size=(400, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    ebunch = [(int(u), int(v)) for u, v in pairs]
    want_aa = [s for _, _, s in nx.adamic_adar_index(h, ebunch)]
    want_ra = [s for _, _, s in nx.resource_allocation_index(h, ebunch)]
    want_cn = [len(list(nx.common_neighbors(h, u, v))) for u, v in pairs]
    assert np.allclose(score_pairs(g, pairs, "aa"), want_aa)
    assert np.allclose(score_pairs(g, pairs, "ra"), want_ra)
    assert np.array_equal(score_pairs(g, pairs, "cn"), want_cn)
    for (u, v), a, r, c in list(zip(pairs, want_aa, want_ra, want_cn))[:50]:
        assert adamic_adar(g, u, v) == pytest.approx(a)
        assert resource_allocation(g, u, v) == pytest.approx(r)
        assert common_neighbors(g, u, v) == c


def test_symmetry_and_bounds():
    g = erdos_renyi(200, 8.0, seed=2)
    p = np.random.default_rng(3).choice(200, size=(300, 2))
    p = p[p[:, 0] != p[:, 1]]
    for name in ("cn", "aa", "ra"):
        assert np.allclose(score_pairs(g, p, name), score_pairs(g, p[:, ::-1], name))
    cn, aa, ra = (score_pairs(g, p, n) for n in ("cn", "aa", "ra"))
    assert np.all(ra <= cn + 1e-12) and np.all(aa <= cn / math.log(2) + 1e-12)


def test_degree_one_common_neighbor_is_inconsistent():
    from subsketch.heuristics import _weighted

    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    # node 0 has degree 1, so it cannot be a common neighbor in a consistent graph
    with pytest.raises(InconsistencyError):
        _weighted(g, np.array([0]), math.log)


def test_same_endpoint():
    with pytest.raises(ValueError):
        common_neighbors(path_graph(3), 1, 1)
