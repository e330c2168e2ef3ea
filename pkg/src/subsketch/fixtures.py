"""Small built-in graphs used by tests, the oracle check and the CLI."""

from __future__ import annotations

import numpy as np

from .graph import Graph
from .splits import _pair_from_index


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def star_graph(leaves: int) -> Graph:
    """Center is node 0."""
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def worked_example_graph() -> Graph:
    """Eight-node graph (external ids 1..8) for the worked pair (6, 7) at k=2.

    Distances from 6 / 7 over the other nodes: 1:(5,2) 2:(2,1) 3:(1,2)
    4:(2,3) 5:(3,2) 8:(4,1), so A[2,1] = |{2}| and B_6[2] = |{4}|.
    """
    ext = [(7, 2), (7, 8), (2, 3), (3, 6), (3, 4), (8, 1), (2, 5)]
    ids = np.arange(1, 9, dtype=np.int64)
    return Graph.from_edges(8, [(u - 1, v - 1) for u, v in ext], node_ids=ids)


def erdos_renyi(n: int, mean_degree: float, seed: int = 0, features: int = 0) -> Graph:
    """G(n, p) with p = mean_degree / (n - 1)."""
    rng = np.random.default_rng(seed)
    p = min(mean_degree / max(n - 1, 1), 1.0)
    total = n * (n - 1) // 2
    m = rng.binomial(total, p)
    idx = np.sort(rng.choice(total, size=m, replace=False)) if m else np.empty(0, np.int64)
    u, v = _pair_from_index(idx, n)
    x = rng.standard_normal((n, features)).astype(np.float32) if features else None
    return Graph.from_edges(n, np.stack([u, v], axis=1), x)


def attributed_sbm(
    n: int,
    communities: int = 7,
    mean_degree: float = 4.0,
    homophily: float = 0.85,
    dim: int = 64,
    words_per_node: int = 12,
    seed: int = 0,
    closure: float = 0.0,
) -> Graph:
    """Stochastic block model with sparse bag-of-words features tied to communities.

    Loosely mimics a citation graph: most edges stay inside a community and
    each community draws its words from its own vocabulary slice. A fraction
    ``closure`` of the edges is added afterwards by closing open triangles,
    which raises clustering toward citation-graph levels.
    """
    rng = np.random.default_rng(seed)
    label = rng.integers(communities, size=n)
    m = int(round(n * mean_degree / 2))
    src = rng.integers(n, size=3 * m)
    same = rng.random(3 * m) < homophily
    members = [np.flatnonzero(label == c) for c in range(communities)]
    dst = rng.integers(n, size=3 * m)
    for c in range(communities):
        sel = same & (label[src] == c)
        dst[sel] = members[c][rng.integers(len(members[c]), size=int(sel.sum()))]
    e = np.stack([src, dst], axis=1)
    e = e[e[:, 0] != e[:, 1]]
    e = np.unique(np.sort(e, axis=1), axis=0)[:m]
    m_base = int(round(m * (1.0 - closure)))
    e = e[rng.permutation(len(e))][:m_base]
    if m_base < m:
        e = _close_triangles(n, e, m, rng)
    x = np.zeros((n, dim), dtype=np.float32)
    slice_w = dim // communities
    for i in range(n):
        own = rng.random(words_per_node) < 0.8
        words = np.where(
            own,
            label[i] * slice_w + rng.integers(slice_w, size=words_per_node),
            rng.integers(dim, size=words_per_node),
        )
        x[i, words] = 1.0
    return Graph.from_edges(n, e, x)


def _close_triangles(n: int, e: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    adj = [set() for _ in range(n)]
    for u, v in e.tolist():
        adj[u].add(v)
        adj[v].add(u)
    edges = [tuple(x) for x in e.tolist()]
    attempts = 0
    while len(edges) < m and attempts < 50 * m:
        attempts += 1
        w = int(rng.integers(n))
        if len(adj[w]) < 2:
            continue
        nb = sorted(adj[w])
        i, j = rng.choice(len(nb), size=2, replace=False)
        u, v = nb[i], nb[j]
        if v in adj[u]:
            continue
        adj[u].add(v)
        adj[v].add(u)
        edges.append((min(u, v), max(u, v)))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


FIXTURES = {
    "c6": lambda: cycle_graph(6),
    "worked_example": worked_example_graph,
    "k4": lambda: complete_graph(4),
    "path3": lambda: path_graph(3),
    "star50": lambda: star_graph(50),
}
