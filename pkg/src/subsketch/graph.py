"""Immutable undirected graphs in compressed sparse row form, plus I/O and BFS."""

from __future__ import annotations

import hashlib
import logging
import re
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DimensionError, ParseError

log = logging.getLogger(__name__)

#: Marker for "farther than the BFS horizon". Also the serialized value.
BEYOND = -1

_SPLIT_RE = re.compile(r"[,\s]+")
_FEATURE_MAGIC_SIZE = 8  # header: num_nodes (u32), dim (u32)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def canonical_edges(edges: np.ndarray) -> np.ndarray:
    """Return edges as an (m, 2) int64 array with u < v, self-loops and duplicates removed."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    e = np.sort(e, axis=1)
    e = e[e[:, 0] != e[:, 1]]
    if len(e) == 0:
        return e
    return np.unique(e, axis=0)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph.

    ``indptr``/``indices`` hold sorted neighbor lists; every edge is stored in
    both directions. ``node_ids`` maps dense ids back to external ids when the
    input was remapped.
    """

    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray | None = None
    node_ids: np.ndarray | None = None
    _edge_keys: np.ndarray = field(init=False, repr=False)
    _adj_cache: dict = field(init=False, repr=False)

    def __post_init__(self):
        _readonly(self.indptr)
        _readonly(self.indices)
        if self.features is not None:
            if self.features.shape[0] != self.num_nodes:
                raise DimensionError(
                    f"feature rows {self.features.shape[0]} != num_nodes {self.num_nodes}"
                )
            _readonly(self.features)
        if self.node_ids is not None:
            _readonly(self.node_ids)
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), np.diff(self.indptr))
        keys = rows * self.num_nodes + self.indices
        object.__setattr__(self, "_edge_keys", _readonly(keys))
        object.__setattr__(self, "_adj_cache", {})

    @classmethod
    def from_edges(
        cls,
        num_nodes: int,
        edges,
        features: np.ndarray | None = None,
        node_ids: np.ndarray | None = None,
    ) -> Graph:
        e = canonical_edges(edges)
        if len(e) and (e.min() < 0 or e.max() >= num_nodes):
            raise ValueError("edge endpoint outside [0, num_nodes)")
        both = np.concatenate([e, e[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        counts = np.bincount(both[:, 0], minlength=num_nodes)
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = both[:, 1].astype(np.int64)
        if features is not None:
            features = np.ascontiguousarray(features, dtype=np.float32)
        return cls(indptr, indices, features, node_ids)

    @property
    def num_nodes(self) -> int:
        return len(self.indptr) - 1

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.indices) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def feature_dim(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def has_edges(self, pairs: np.ndarray) -> np.ndarray:
        """Vectorised membership test for an (m, 2) array of node pairs."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        keys = pairs[:, 0] * self.num_nodes + pairs[:, 1]
        if len(self._edge_keys) == 0:
            return np.zeros(len(keys), dtype=bool)
        pos = np.searchsorted(self._edge_keys, keys)
        pos = np.minimum(pos, len(self._edge_keys) - 1)
        return self._edge_keys[pos] == keys

    def edges(self) -> np.ndarray:
        """All undirected edges as an (m, 2) array with u < v, lexicographically sorted."""
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)
        mask = rows < self.indices
        return np.stack([rows[mask], self.indices[mask]], axis=1)

    def adjacency(self, dtype=np.float32) -> sp.csr_matrix:
        """Unit-weight adjacency matrix, built once per dtype. Treat as read-only."""
        key = np.dtype(dtype).str
        if key not in self._adj_cache:
            data = np.ones(len(self.indices), dtype=dtype)
            self._adj_cache[key] = sp.csr_matrix((data, self.indices, self.indptr), shape=(self.num_nodes,) * 2)
        return self._adj_cache[key]

    def with_edges(self, edges) -> Graph:
        """Same node set and features, different edge set."""
        return Graph.from_edges(self.num_nodes, edges, self.features, self.node_ids)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.num_nodes).tobytes())
        h.update(np.ascontiguousarray(self.indices).tobytes())
        return h.hexdigest()[:16]

    def dense_id(self, external_id: int) -> int:
        if self.node_ids is None:
            return int(external_id)
        hits = np.flatnonzero(self.node_ids == external_id)
        if len(hits) == 0:
            raise KeyError(external_id)
        return int(hits[0])


# --------------------------------------------------------------------------- I/O


def _parse_edge_lines(path: Path) -> np.ndarray:
    pairs = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = [t for t in _SPLIT_RE.split(line) if t]
            if len(toks) < 2:
                raise ParseError(path, line_no, f"expected two node ids, got {line!r}")
            try:
                u, v = int(toks[0]), int(toks[1])
            except ValueError:
                raise ParseError(path, line_no, f"non-integer node id in {line!r}") from None
            if u < 0 or v < 0:
                raise ParseError(path, line_no, "negative node id")
            pairs.append((u, v))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def load_features(path) -> np.ndarray:
    """Read a node-feature matrix.

    ``.bin``/``.f32`` files are little-endian float32 with an 8-byte header
    (num_nodes, dim as u32); ``.npy`` is numpy's format; anything else is text
    with one whitespace-separated row per node.
    """
    path = Path(path)
    if path.suffix in (".bin", ".f32"):
        raw = path.read_bytes()
        n, d = struct.unpack("<II", raw[:_FEATURE_MAGIC_SIZE])
        body = np.frombuffer(raw, dtype="<f4", offset=_FEATURE_MAGIC_SIZE)
        if body.size != n * d:
            raise DimensionError(f"{path}: header says {n}x{d}, body has {body.size} values")
        return body.reshape(n, d).astype(np.float32)
    if path.suffix == ".npy":
        return np.load(path).astype(np.float32)
    rows = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rows.append([float(t) for t in raw.split()])
            except ValueError:
                raise ParseError(path, line_no, "non-numeric feature value") from None
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(path, line_no, "ragged feature row")
    return np.array(rows, dtype=np.float32)


def save_features(x: np.ndarray, path) -> None:
    x = np.ascontiguousarray(x, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", x.shape[0], x.shape[1]))
        fh.write(x.tobytes())


def save_edge_list(edges: np.ndarray, path) -> None:
    np.savetxt(path, np.asarray(edges, dtype=np.int64).reshape(-1, 2), fmt="%d")


def largest_connected_component(g: Graph) -> Graph:
    """Restrict ``g`` to its largest connected component, relabelling nodes densely."""
    n_comp, labels = connected_components(g.adjacency(), directed=False)
    if n_comp <= 1:
        return g
    biggest = np.argmax(np.bincount(labels))
    keep = np.flatnonzero(labels == biggest)
    remap = np.full(g.num_nodes, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    e = g.edges()
    e = remap[e]
    e = e[(e >= 0).all(axis=1)]
    ids = keep if g.node_ids is None else g.node_ids[keep]
    feats = None if g.features is None else g.features[keep]
    return Graph.from_edges(len(keep), e, feats, np.asarray(ids, dtype=np.int64).copy())


def load_edge_list(
    path,
    undirect: bool = True,
    features_path=None,
    largest_component: bool = False,
) -> Graph:
    """Load a graph from a text edge list.

    Without a feature file, external ids are remapped to dense ``0..n-1`` in
    sorted order. With one, row ``i`` of the features belongs to node id ``i``
    and ids are kept as given. ``undirect`` is accepted for clarity: edges are
    always symmetrised, directed inputs included.
    """
    path = Path(path)
    raw = _parse_edge_lines(path)
    n_self = int((raw[:, 0] == raw[:, 1]).sum())
    feats = load_features(features_path) if features_path is not None else None
    if feats is not None:
        n = feats.shape[0]
        if len(raw) and raw.max() >= n:
            raise DimensionError(
                f"edge list references node {int(raw.max())} but features have {n} rows"
            )
        ids = None
        dense = raw
    else:
        ids, inverse = np.unique(raw.ravel(), return_inverse=True)
        dense = inverse.reshape(-1, 2)
        n = len(ids)
        if np.array_equal(ids, np.arange(n)):
            ids = None
    kept = canonical_edges(dense)
    n_dup = len(raw) - n_self - len(kept)
    if n_self or n_dup:
        log.warning(
            "%s: dropped %d self-loop(s) and %d duplicate edge(s)%s",
            path,
            n_self,
            n_dup,
            "" if undirect else " (directed input symmetrised)",
        )
    g = Graph.from_edges(n, kept, feats, ids)
    if largest_component:
        g = largest_connected_component(g)
    return g


# --------------------------------------------------------------------------- BFS


@dataclass(frozen=True)
class DistanceProfile:
    """Geodesic distances from ``source`` truncated at ``horizon``; BEYOND past it."""

    source: int
    horizon: int
    dists: np.ndarray

    def __getitem__(self, w: int) -> int:
        return int(self.dists[w])

    def beyond(self) -> np.ndarray:
        return self.dists == BEYOND

    def layer(self, d: int) -> np.ndarray:
        return np.flatnonzero(self.dists == d)


def _gather_neighbors(g: Graph, nodes: np.ndarray) -> np.ndarray:
    starts = g.indptr[nodes]
    lens = g.indptr[nodes + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offs = np.repeat(starts - np.concatenate([[0], np.cumsum(lens)[:-1]]), lens)
    return g.indices[np.arange(total) + offs]


def _gather_neighbors_skipping(g: Graph, nodes: np.ndarray, skip: tuple[int, int]) -> np.ndarray:
    a, b = skip
    src = np.repeat(nodes, g.indptr[nodes + 1] - g.indptr[nodes])
    nb = _gather_neighbors(g, nodes)
    keep = ~(((src == a) & (nb == b)) | ((src == b) & (nb == a)))
    return nb[keep]


def bfs_truncated(
    g: Graph,
    source: int,
    horizon: int,
    scratch: np.ndarray | None = None,
    skip: tuple[int, int] | None = None,
) -> DistanceProfile:
    """Layered BFS from ``source`` up to ``horizon`` hops.

    ``scratch`` may be a caller-owned int array of length ``num_nodes``; it is
    overwritten and returned inside the profile. ``skip`` names one undirected
    edge to treat as absent.
    """
    if not 0 <= source < g.num_nodes:
        raise IndexError(f"source {source} out of range")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if scratch is None:
        dists = np.full(g.num_nodes, BEYOND, dtype=np.int32)
    else:
        dists = scratch
        dists.fill(BEYOND)
    dists[source] = 0
    frontier = np.array([source], dtype=np.int64)
    for d in range(1, horizon + 1):
        if skip is None:
            nb = _gather_neighbors(g, frontier)
        else:
            nb = _gather_neighbors_skipping(g, frontier, skip)
        nb = np.unique(nb[dists[nb] == BEYOND])
        if len(nb) == 0:
            break
        dists[nb] = d
        frontier = nb
    return DistanceProfile(source, horizon, dists)


def local_ball(g: Graph, source: int, radius: int, skip: tuple[int, int] | None = None) -> dict[int, int]:
    """Distances to nodes within ``radius`` hops, as a sparse dict (cost ~ ball size).

    ``skip`` names one undirected edge to treat as absent.
    """
    skip_set = {tuple(skip), tuple(skip[::-1])} if skip is not None else ()
    seen = {source: 0}
    q = deque([source])
    while q:
        x = q.popleft()
        dx = seen[x]
        if dx == radius:
            continue
        for y in g.neighbors(x).tolist():
            if y not in seen and (x, y) not in skip_set:
                seen[y] = dx + 1
                q.append(y)
    return seen


def pair_distance(g: Graph, u: int, v: int, horizon: int, skip_direct: bool = False) -> int:
    """d(u, v) if it is at most ``horizon``, else BEYOND.

    Grows balls of radius ceil(h/2) and floor(h/2) around the lower- and
    higher-degree endpoints and meets in the middle. With ``skip_direct`` the
    edge (u, v) itself is ignored.
    """
    if u == v:
        return 0
    if g.has_edge(u, v) and not skip_direct:
        return 1
    if horizon < 2:
        return BEYOND
    if g.degrees[u] > g.degrees[v]:
        u, v = v, u
    ru = (horizon + 1) // 2
    rv = horizon // 2
    skip = (u, v) if skip_direct else None
    bu = local_ball(g, u, ru, skip)
    bv = local_ball(g, v, rv, skip)
    if len(bu) > len(bv):
        bu, bv = bv, bu
    best = BEYOND
    for w, dw in bu.items():
        dv = bv.get(w)
        if dv is not None:
            tot = dw + dv
            if best == BEYOND or tot < best:
                best = tot
    return best if best != BEYOND and best <= horizon else BEYOND
