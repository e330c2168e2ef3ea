import numpy as np
import pytest

from subsketch.errors import ConfigError, SamplingError
from subsketch.fixtures import complete_graph, erdos_renyi, path_graph
from subsketch.graph import Graph
from subsketch.splits import load_split, make_splits, sample_negatives, save_split


def ten_edge_graph():
    return Graph.from_edges(6, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 4), (2, 5), (3, 4), (3, 5), (4, 5), (0, 5)])


def as_set(e):
    return {tuple(map(int, x)) for x in e}


def test_fraction_arithmetic_and_disjoint():
    s = make_splits(ten_edge_graph(), (0.7, 0.1, 0.2), seed=7, num_negatives=2)
    assert (len(s.train_pos), len(s.valid_pos), len(s.test_pos)) == (7, 1, 2)
    tr, va, te = as_set(s.train_pos), as_set(s.valid_pos), as_set(s.test_pos)
    assert not (tr & va or tr & te or va & te)
    assert tr | va | te == as_set(ten_edge_graph().edges())


def test_deterministic_and_seed_sensitive():
    g = erdos_renyi(100, 4.0, seed=1)
    a, b = make_splits(g, seed=3, num_negatives=50), make_splits(g, seed=3, num_negatives=50)
    for key in ("train_pos", "valid_pos", "test_pos", "valid_neg", "test_neg"):
        assert np.array_equal(getattr(a, key), getattr(b, key))
    c = make_splits(g, seed=4, num_negatives=50)
    assert not np.array_equal(a.train_pos, c.train_pos)


def test_message_graphs_and_negatives():
    g = erdos_renyi(120, 5.0, seed=2)
    s = make_splits(g, seed=0, num_negatives=100, valid_in_eval_graph=True)
    assert as_set(s.message_graph_train.edges()) == as_set(s.train_pos)
    assert as_set(s.message_graph_eval.edges()) == as_set(s.train_pos) | as_set(s.valid_pos)
    negs = as_set(s.valid_neg) | as_set(s.test_neg)
    assert len(negs) == 200
    assert not negs & as_set(g.edges())
    off = make_splits(g, seed=0, num_negatives=100, valid_in_eval_graph=False)
    assert off.message_graph_eval is off.message_graph_train


def test_train_count_is_ceiling():
    g = erdos_renyi(300, 6.0, seed=4)
    s = make_splits(g, seed=0, num_negatives=10)
    assert len(s.train_pos) == int(np.ceil(0.7 * g.num_edges))


@pytest.mark.parametrize("fr", [(0.0, 0.5, 0.5), (0.7, 0.2, 0.2), (1.2, -0.1, -0.1)])
def test_bad_fractions(fr):
    with pytest.raises(ConfigError):
        make_splits(ten_edge_graph(), fr, num_negatives=1)


def test_negative_sampling_examples():
    with pytest.raises(SamplingError):
        sample_negatives(complete_graph(4), 1)
    assert np.array_equal(sample_negatives(path_graph(3), 1), [[0, 2]])


def test_negatives_absent_and_unique():
    g = erdos_renyi(500, 8.0, seed=3)
    neg = sample_negatives(g, 1000, seed=11)
    assert not g.has_edges(neg).any()
    assert np.all(neg[:, 0] < neg[:, 1])
    assert len(as_set(neg)) == 1000
    assert np.array_equal(neg, sample_negatives(g, 1000, seed=11))


def test_exclusions_respected():
    g = path_graph(4)
    neg = sample_negatives(g, 2, exclude=[np.array([[0, 2]])])
    assert as_set(neg) == {(0, 3), (1, 3)}


def test_split_round_trip(tmp_path):
    g = erdos_renyi(80, 4.0, seed=8)
    s = make_splits(g, seed=1, num_negatives=30)
    save_split(s, tmp_path, g)
    r = load_split(tmp_path, g)
    for key in ("train_pos", "valid_pos", "test_pos", "valid_neg", "test_neg"):
        assert np.array_equal(getattr(s, key), getattr(r, key))
    assert r.seed == 1
