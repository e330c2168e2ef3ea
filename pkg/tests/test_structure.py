import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subsketch.errors import IncompatibleError
from subsketch.fixtures import (
    complete_graph,
    cycle_graph,
    erdos_renyi,
    worked_example_graph,
)
from subsketch.graph import BEYOND, Graph
from subsketch.heuristics import common_neighbors
from subsketch.propagation import propagate_sketches
from subsketch.sketch import SketchConfig
from subsketch.structure import (
    StructureFeatureVector,
    drnl_label,
    edge_feature_cache,
    estimate_counts,
    estimate_counts_batch,
    estimate_intersection,
    exact_counts,
    exact_counts_batch,
    feature_width,
    load_edge_features,
    swap_rows,
)

CFG = SketchConfig()


def brute_counts(g: Graph, u: int, v: int, k: int, drop_edge: bool = False) -> np.ndarray:
    """All-pairs shortest paths via networkx, then direct enumeration over V \\ {u, v}."""
    h = nx.Graph()
    h.add_nodes_from(range(g.num_nodes))
    h.add_edges_from(map(tuple, g.edges()))
    if drop_edge and h.has_edge(u, v):
        h.remove_edge(u, v)
    du = nx.single_source_shortest_path_length(h, u)
    dv = nx.single_source_shortest_path_length(h, v)
    a = np.zeros((k, k))
    bu = np.zeros(k)
    bv = np.zeros(k)
    for w in range(g.num_nodes):
        if w in (u, v):
            continue
        x, y = du.get(w, np.inf), dv.get(w, np.inf)
        if x <= k and y <= k:
            a[int(x) - 1, int(y) - 1] += 1
        elif x <= k:
            bu[int(x) - 1] += 1
        elif y <= k:
            bv[int(y) - 1] += 1
    return np.concatenate([a.ravel(), bu, bv])


def sigma(cfg):
    return 1.04 / np.sqrt(cfg.num_registers)


# ---------------------------------------------------------------- goldens


@pytest.mark.parametrize("pair,a11,b1", [((0, 2), 1, 1), ((0, 3), 0, 2)])
def test_c6_goldens(pair, a11, b1):
    g = cycle_graph(6)
    ex = exact_counts(g, *pair, 1)
    assert (ex.a[0, 0], ex.b_u[0]) == (a11, b1)
    est = estimate_counts(propagate_sketches(g, CFG, 1), g, *pair, 1)
    tol = 3 * sigma(CFG) * 3
    assert abs(est.a[0, 0] - a11) <= tol and abs(est.b_u[0] - b1) <= tol


def test_worked_example_pair():
    g = worked_example_graph()
    u, v = g.dense_id(6), g.dense_id(7)
    ex = exact_counts(g, u, v, 2)
    assert ex.a[1, 0] == 1 and ex.b_u[1] == 1
    est = estimate_counts(propagate_sketches(g, CFG, 2), g, u, v, 2)
    assert abs(est.a[1, 0] - 1) < 0.5 and abs(est.b_u[1] - 1) < 0.5


def test_k4():
    ex = exact_counts(complete_graph(4), 0, 3, 1)
    assert ex.a[0, 0] == 2 and not ex.b_u.any() and not ex.b_v.any()


def test_same_endpoint_rejected():
    g = cycle_graph(6)
    with pytest.raises(ValueError):
        exact_counts(g, 1, 1, 2)
    with pytest.raises(ValueError):
        estimate_counts(propagate_sketches(g, CFG, 2), g, 1, 1)


# ---------------------------------------------------------------- oracle


def test_exact_matches_brute_force_on_er():
    rng = np.random.default_rng(0)
    for trial in range(6):
        g = erdos_renyi(int(rng.integers(50, 300)), float(rng.uniform(1.5, 6)), seed=trial)
        pairs = rng.choice(g.num_nodes, size=(30, 2))
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        for k in (1, 2, 3):
            got = exact_counts_batch(g, pairs, k)
            want = np.stack([brute_counts(g, u, v, k) for u, v in pairs])
            assert np.array_equal(got, want)


@given(st.lists(st.tuples(st.integers(0, 14), st.integers(0, 14)), max_size=40), st.integers(1, 3), st.data())
def test_oracle_consistency(edges, k, data):
    g = Graph.from_edges(15, np.array(edges, dtype=np.int64).reshape(-1, 2))
    u = data.draw(st.integers(0, 14))
    v = data.draw(st.integers(0, 14).filter(lambda x: x != u))
    ex = exact_counts(g, u, v, k)
    from subsketch.graph import bfs_truncated

    du = bfs_truncated(g, u, k).dists
    for d in range(1, k + 1):
        layer = {int(w) for w in np.flatnonzero(du == d)} - {v}
        assert ex.a[d - 1].sum() + ex.b_u[d - 1] == len(layer)


def test_cn_equals_exact_a11():
    g = erdos_renyi(200, 6.0, seed=3)
    for u, v in np.random.default_rng(1).choice(200, size=(100, 2)):
        if u != v:
            assert common_neighbors(g, u, v) == exact_counts(g, u, v, 1).a[0, 0]


# ---------------------------------------------------------------- estimator


def test_intersection_examples():
    g = cycle_graph(6)
    t = propagate_sketches(g, CFG, 2)
    assert estimate_intersection(t, 0, 0, 2, 2) == pytest.approx(t.card[2][0])
    assert abs(estimate_intersection(t, 0, 2, 1, 1) - 1) <= 3 * sigma(CFG) * 5
    two = Graph.from_edges(8, [(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7)])
    t2 = propagate_sketches(two, CFG, 2)
    assert estimate_intersection(t2, 0, 5, 2, 2) < 0.5
    with pytest.raises(ValueError):
        estimate_intersection(t, 0, 2, 0, 1)
    with pytest.raises(ValueError):
        estimate_intersection(t, 0, 2, 1, 3)


@given(st.lists(st.tuples(st.integers(0, 29), st.integers(0, 29)), min_size=1, max_size=80), st.integers(1, 3))
def test_symmetry_and_non_negativity(edges, k):
    g = Graph.from_edges(30, np.array(edges, dtype=np.int64).reshape(-1, 2))
    t = propagate_sketches(g, SketchConfig(6, 32, 1), k)
    rng = np.random.default_rng(len(edges))
    p = rng.choice(30, size=(20, 2))
    p = p[p[:, 0] != p[:, 1]]
    for mask in (False, True):
        fwd = estimate_counts_batch(t, g, p, k, mask_query_edges=mask)
        rev = estimate_counts_batch(t, g, p[:, ::-1], k, mask_query_edges=mask)
        assert np.array_equal(swap_rows(fwd, k), rev)
        assert np.all(fwd >= 0) and np.all(np.isfinite(fwd))


def test_batch_shape_does_not_change_rows():
    g = erdos_renyi(400, 6.0, seed=2)
    t = propagate_sketches(g, CFG, 2)
    p = np.random.default_rng(3).choice(400, size=(300, 2))
    p = p[p[:, 0] != p[:, 1]]
    full = estimate_counts_batch(t, g, p)
    assert np.array_equal(full[7:8], estimate_counts_batch(t, g, p[7:8]))
    assert np.array_equal(full[::-1], estimate_counts_batch(t, g, p[::-1]))


def test_pre_clamp_noise_bounded():
    g = erdos_renyi(1000, 8.0, seed=4)
    t = propagate_sketches(g, CFG, 2)
    p = np.random.default_rng(5).choice(1000, size=(300, 2))
    p = p[p[:, 0] != p[:, 1]]
    raw = estimate_counts_batch(t, g, p, clamp=False)
    scale = t.card[2][p[:, 0]] + t.card[2][p[:, 1]]
    assert np.all(raw >= -3 * sigma(CFG) * scale[:, None])


def test_estimate_tracks_exact_on_er():
    g = erdos_renyi(1000, 8.0, seed=6)
    t = propagate_sketches(g, CFG, 2)
    e = np.random.default_rng(7).choice(1000, size=(200, 2))
    e = e[e[:, 0] != e[:, 1]]
    est = estimate_counts_batch(t, g, e)
    ex = exact_counts_batch(g, e, 2)
    big = ex >= 20
    assert big.sum() > 100
    assert np.mean(np.abs(est[big] - ex[big]) / ex[big]) <= 0.15


# ---------------------------------------------------------------- query-edge masking


def test_masked_exact_matches_brute_force():
    g = erdos_renyi(150, 5.0, seed=8)
    for u, v in g.edges()[:40]:
        for k in (1, 2, 3):
            assert np.array_equal(exact_counts(g, u, v, k, mask_query_edges=True).as_array(), brute_counts(g, u, v, k, True))


def test_masked_estimate_equals_estimate_without_the_edge():
    g = erdos_renyi(300, 6.0, seed=9)
    t = propagate_sketches(g, CFG, 2)
    edges = g.edges()
    for i in range(0, len(edges), 37):
        u, v = edges[i]
        h = g.with_edges(np.delete(edges, i, axis=0))
        th = propagate_sketches(h, CFG, 2)
        masked = estimate_counts_batch(t, g, np.array([[u, v], [v, u]]), mask_query_edges=True)
        direct = estimate_counts_batch(th, h, np.array([[u, v], [v, u]]))
        assert np.array_equal(masked, direct)


def test_masking_ignores_non_edges():
    g = erdos_renyi(200, 4.0, seed=1)
    t = propagate_sketches(g, CFG, 2)
    p = np.random.default_rng(0).choice(200, size=(100, 2))
    p = p[(p[:, 0] != p[:, 1]) & ~g.has_edges(p)]
    assert np.array_equal(estimate_counts_batch(t, g, p), estimate_counts_batch(t, g, p, mask_query_edges=True))


# ---------------------------------------------------------------- DRNL


def test_drnl_examples():
    assert drnl_label(1, 1) == 2
    assert drnl_label(1, 2) == drnl_label(2, 1) == 3
    assert drnl_label(BEYOND, 0) == 0 and drnl_label(None, 3) == 0
    assert drnl_label(0, 1) == drnl_label(1, 0) == 1
    assert drnl_label(2, 2) == 5 and drnl_label(1, 3) == 4


def test_drnl_injective_on_unordered_pairs():
    seen = {}
    for i in range(1, 30):
        for j in range(i, 30):
            lab = drnl_label(i, j)
            assert lab not in seen, (i, j, seen.get(lab))
            seen[lab] = (i, j)
            assert drnl_label(j, i) == lab


# ---------------------------------------------------------------- types and cache


def test_vector_round_trip_and_swap():
    row = np.arange(feature_width(2), dtype=float)
    v = StructureFeatureVector.from_array(row, 2)
    assert np.array_equal(v.as_array(), row)
    s = v.swapped()
    assert np.array_equal(s.a, v.a.T) and np.array_equal(s.b_u, v.b_v) and np.array_equal(s.b_v, v.b_u)


def test_cache_round_trip_and_order(tmp_path):
    g = erdos_renyi(300, 5.0, seed=2)
    t = propagate_sketches(g, CFG, 2)
    e = g.edges()[:150]
    rows = edge_feature_cache(t, g, e, tmp_path / "a.sfc", config_hash="h1")
    back, k = load_edge_features(tmp_path / "a.sfc", "h1")
    assert k == 2 and back.dtype == np.float32 and np.array_equal(rows, back)
    rev = edge_feature_cache(t, g, e[::-1], k=2)
    assert np.array_equal(rev, rows[::-1])
    with pytest.raises(IncompatibleError):
        load_edge_features(tmp_path / "a.sfc", "h2")
