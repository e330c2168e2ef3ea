"""Pairwise distance-profile counts: sketch estimates, exact oracle and DRNL labels.

For a pair (u, v) and horizon k the feature vector holds

* ``a[i-1, j-1]``: nodes w (not u or v) with d(u, w) = i and d(v, w) = j
* ``b_u[i-1]``: nodes w with d(u, w) = i and d(v, w) > k, and ``b_v`` alike

The estimator works from sketches of closed neighborhoods. Intersections of
closed neighborhoods are estimated as Jaccard times union size, then exact
distance shells are peeled off by inclusion-exclusion. The contributions of
u and v themselves are known exactly from d(u, v), which is how endpoints are
kept out of the counts.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArtifactError, IncompatibleError
from .graph import BEYOND, Graph, bfs_truncated, pair_distance
from .propagation import SketchTable
from .sketch import cardinality_rows, jaccard_rows

_CACHE_MAGIC = b"SFC1"
_BATCH = 4096


def feature_width(k: int) -> int:
    return k * (k + 2)


@dataclass(frozen=True, eq=False)
class StructureFeatureVector:
    a: np.ndarray  # (k, k)
    b_u: np.ndarray  # (k,)
    b_v: np.ndarray  # (k,)

    @property
    def k(self) -> int:
        return len(self.b_u)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.a.ravel(), self.b_u, self.b_v])

    @classmethod
    def from_array(cls, row: np.ndarray, k: int) -> StructureFeatureVector:
        row = np.asarray(row)
        return cls(row[: k * k].reshape(k, k), row[k * k : k * k + k], row[k * k + k :])

    def swapped(self) -> StructureFeatureVector:
        return StructureFeatureVector(self.a.T.copy(), self.b_v.copy(), self.b_u.copy())

    def __eq__(self, other):
        return isinstance(other, StructureFeatureVector) and np.array_equal(self.as_array(), other.as_array())


def swap_rows(rows: np.ndarray, k: int) -> np.ndarray:
    """Feature rows of (v, u) given rows of (u, v)."""
    rows = np.asarray(rows)
    kk = k * k
    a = rows[:, :kk].reshape(-1, k, k).transpose(0, 2, 1).reshape(-1, kk)
    return np.concatenate([a, rows[:, kk + k :], rows[:, kk : kk + k]], axis=1)


def _check_hops(t: SketchTable, k: int) -> None:
    if k < 1 or k > t.hops:
        raise ValueError(f"hops {k} out of range for a table with {t.hops} hops")


# ------------------------------------------------------------------ estimation


@dataclass(frozen=True, eq=False)
class _EndpointRows:
    """Per-pair sketches of one endpoint: ``hll[d]`` (P, m), ``mh[d]`` (P, np), ``card`` (P, k+1)."""

    hll: list[np.ndarray]
    mh: list[np.ndarray]
    card: np.ndarray


def _table_rows(t: SketchTable, nodes: np.ndarray, k: int) -> _EndpointRows:
    return _EndpointRows(
        [t.hll[d][nodes] for d in range(k + 1)],
        [t.mh[d][nodes] for d in range(k + 1)],
        t.card[: k + 1, nodes].T.copy(),
    )


def _masked_rows(t: SketchTable, g: Graph, nodes: np.ndarray, others: np.ndarray, k: int) -> _EndpointRows:
    """Endpoint sketches rebuilt as if the edge to ``others`` were absent.

    The d-hop sketch of u is the union of u's own (d-1)-hop sketch and the
    (d-1)-hop sketches of its remaining neighbors. One-hop sketches of third
    nodes do not depend on the removed edge, so this is exact for k <= 2;
    for longer horizons third-node sketches may still route through it.
    """
    n_pairs = len(nodes)
    starts = g.indptr[nodes]
    lens = g.indptr[nodes + 1] - starts
    owner = np.repeat(np.arange(n_pairs), lens)
    offs = np.repeat(starts - np.concatenate([[0], np.cumsum(lens)[:-1]]), lens)
    gather = g.indices[np.arange(int(lens.sum())) + offs]
    keep = gather != others[owner]
    gather, owner = gather[keep], owner[keep]
    counts = np.bincount(owner, minlength=n_pairs)
    nonempty = counts > 0
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])[nonempty]
    hll = [t.hll[0][nodes]]
    mh = [t.mh[0][nodes]]
    for d in range(1, k + 1):
        h = hll[-1].copy()
        m = mh[-1].copy()
        if len(gather):
            h[nonempty] = np.maximum(h[nonempty], np.maximum.reduceat(t.hll[d - 1][gather], offsets, axis=0))
            m[nonempty] = np.minimum(m[nonempty], np.minimum.reduceat(t.mh[d - 1][gather], offsets, axis=0))
        hll.append(h)
        mh.append(m)
    card = np.stack([cardinality_rows(h, t.cfg) for h in hll], axis=1)
    return _EndpointRows(hll, mh, card)


def _endpoint_rows(t, g, nodes, others, k, masked: np.ndarray) -> _EndpointRows:
    rows = _table_rows(t, nodes, k)
    if masked.any():
        sub = _masked_rows(t, g, nodes[masked], others[masked], k)
        for d in range(k + 1):
            rows.hll[d][masked] = sub.hll[d]
            rows.mh[d][masked] = sub.mh[d]
        rows.card[masked] = sub.card
    return rows


def _intersections(eu: _EndpointRows, ev: _EndpointRows, hop_pairs, cfg) -> np.ndarray:
    out = np.empty((len(eu.card), len(hop_pairs)))
    for c, (x, y) in enumerate(hop_pairs):
        j = jaccard_rows(eu.mh[x], ev.mh[y])
        union = cardinality_rows(np.maximum(eu.hll[x], ev.hll[y]), cfg)
        out[:, c] = j * union
    return out


def estimate_intersection(t: SketchTable, u: int, v: int, d_u: int, d_v: int) -> float:
    """Estimated size of the intersection of the closed d_u-ball of u and d_v-ball of v."""
    if not (1 <= d_u <= t.hops and 1 <= d_v <= t.hops):
        raise ValueError(f"hops ({d_u}, {d_v}) outside 1..{t.hops}")
    k = max(d_u, d_v)
    eu = _table_rows(t, np.array([u]), k)
    ev = _table_rows(t, np.array([v]), k)
    return float(_intersections(eu, ev, [(d_u, d_v)], t.cfg)[0, 0])


def pair_distances(g: Graph, pairs: np.ndarray, horizon: int, skip_direct: np.ndarray | None = None) -> np.ndarray:
    """d(u, v) per pair, BEYOND past ``horizon``. Vectorised up to distance 2.

    Where ``skip_direct`` is set, the edge (u, v) itself is ignored.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    us, vs = pairs[:, 0], pairs[:, 1]
    skip = np.zeros(len(pairs), dtype=bool) if skip_direct is None else np.asarray(skip_direct, dtype=bool)
    d = np.full(len(pairs), BEYOND, dtype=np.int64)
    d[us == vs] = 0
    adj1 = g.has_edges(pairs) & (us != vs) & ~skip
    d[adj1] = 1
    rest = np.flatnonzero(d == BEYOND)
    if horizon >= 2 and len(rest):
        a = g.adjacency(np.int32)
        common = np.asarray(a[us[rest]].multiply(a[vs[rest]]).sum(axis=1)).ravel()
        d[rest[common > 0]] = 2
        rest = rest[common == 0]
    if horizon >= 3:
        for i in rest:
            d[i] = pair_distance(g, int(us[i]), int(vs[i]), horizon, bool(skip[i]))
    return d


def _estimate_rows(eu: _EndpointRows, ev: _EndpointRows, delta: np.ndarray, k: int, cfg, clamp: bool) -> np.ndarray:
    n_pairs = len(delta)
    hop_pairs = [(x, y) for x in range(1, k + 1) for y in range(1, k + 1)]
    inter = _intersections(eu, ev, hop_pairs, cfg)
    near = delta != BEYOND
    # shells[x, y] counts nodes at distance x from u and y from v; row and column 0
    # hold only the endpoints, whose position (0, d(u,v)) / (d(u,v), 0) is exact
    shells = np.zeros((n_pairs, k + 1, k + 1))
    for x in range(1, k + 1):
        shells[:, 0, x] = near & (delta == x)
        shells[:, x, 0] = near & (delta == x)
    # explicit accumulation order keeps each row independent of the batch shape
    for c, (x, y) in enumerate(hop_pairs):
        s = inter[:, c].copy()
        for i in range(x + 1):
            for j in range(y + 1):
                if (i, j) != (x, y):
                    s -= shells[:, i, j]
        shells[:, x, y] = np.maximum(s, 0.0) if clamp else s
    card_u = eu.card.copy()
    card_v = ev.card.copy()
    card_u[:, 0] = 1.0
    card_v[:, 0] = 1.0
    b_u = card_u[:, 1:] - card_u[:, :-1]
    b_v = card_v[:, 1:] - card_v[:, :-1]
    for d in range(1, k + 1):
        for j in range(k + 1):
            b_u[:, d - 1] -= shells[:, d, j]
            b_v[:, d - 1] -= shells[:, j, d]
    if clamp:
        b_u = np.maximum(b_u, 0.0)
        b_v = np.maximum(b_v, 0.0)
    a = shells[:, 1:, 1:].reshape(n_pairs, k * k)
    return np.concatenate([a, b_u, b_v], axis=1)


def estimate_counts_batch(
    t: SketchTable,
    g: Graph,
    pairs: np.ndarray,
    k: int | None = None,
    clamp: bool = True,
    mask_query_edges: bool = False,
) -> np.ndarray:
    """Estimated feature rows, shape (len(pairs), k(k+2)), float64.

    Pairs are evaluated in (min, max) orientation and swapped back, so the
    result for (v, u) is exactly the swap of the result for (u, v). With
    ``mask_query_edges``, a pair that is itself an edge of ``g`` is described
    as if that edge were absent.
    """
    k = t.hops if k is None else k
    _check_hops(t, k)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return np.zeros((0, feature_width(k)))
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise ValueError("structure features need two distinct endpoints")
    if pairs.min() < 0 or pairs.max() >= g.num_nodes or g.num_nodes != t.num_nodes:
        raise ValueError("pair references a node outside the graph or sketch table")
    flip = pairs[:, 0] > pairs[:, 1]
    canon = np.where(flip[:, None], pairs[:, ::-1], pairs)
    masked = g.has_edges(canon) if mask_query_edges else np.zeros(len(canon), dtype=bool)
    delta = pair_distances(g, canon, k, masked)
    out = np.empty((len(pairs), feature_width(k)))
    for s in range(0, len(pairs), _BATCH):
        sl = slice(s, s + _BATCH)
        us, vs, ms = canon[sl, 0], canon[sl, 1], masked[sl]
        eu = _endpoint_rows(t, g, us, vs, k, ms)
        ev = _endpoint_rows(t, g, vs, us, k, ms)
        out[sl] = _estimate_rows(eu, ev, delta[sl], k, t.cfg, clamp)
    if flip.any():
        out[flip] = swap_rows(out[flip], k)
    return out


def estimate_counts(
    t: SketchTable,
    g: Graph,
    u: int,
    v: int,
    k: int | None = None,
    clamp: bool = True,
    mask_query_edges: bool = False,
) -> StructureFeatureVector:
    k = t.hops if k is None else k
    row = estimate_counts_batch(t, g, np.array([[u, v]]), k, clamp, mask_query_edges)[0]
    return StructureFeatureVector.from_array(row, k)


# ------------------------------------------------------------------ exact oracle


def exact_counts(g: Graph, u: int, v: int, k: int, mask_query_edges: bool = False) -> StructureFeatureVector:
    """Exact counts over V minus {u, v} from two truncated BFS runs.

    With ``mask_query_edges`` distances are taken in g without the edge (u, v).
    """
    if u == v:
        raise ValueError("structure features need two distinct endpoints")
    skip = (u, v) if mask_query_edges else None
    du = bfs_truncated(g, u, k, skip=skip).dists
    dv = bfs_truncated(g, v, k, skip=skip).dists
    mask = np.ones(g.num_nodes, dtype=bool)
    mask[[u, v]] = False
    du, dv = du[mask], dv[mask]
    a = np.zeros((k, k))
    both = (du >= 1) & (dv >= 1)
    np.add.at(a, (du[both] - 1, dv[both] - 1), 1)
    b_u = np.bincount(du[(du >= 1) & (dv == BEYOND)] - 1, minlength=k)[:k].astype(float)
    b_v = np.bincount(dv[(dv >= 1) & (du == BEYOND)] - 1, minlength=k)[:k].astype(float)
    return StructureFeatureVector(a, b_u, b_v)


def exact_counts_batch(g: Graph, pairs: np.ndarray, k: int, mask_query_edges: bool = False) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    out = np.empty((len(pairs), feature_width(k)))
    for i, (u, v) in enumerate(pairs):
        out[i] = exact_counts(g, int(u), int(v), k, mask_query_edges).as_array()
    return out


def drnl_label(d_u, d_v) -> int:
    """Double-radius node label; 0 for unreachable, 1 for the endpoints themselves."""
    if d_u is None or d_v is None or d_u == BEYOND or d_v == BEYOND:
        return 0
    if d_u < 0 or d_v < 0:
        raise ValueError("distances must be non-negative or BEYOND")
    lo = min(d_u, d_v)
    if lo == 0:
        return 1
    d = d_u + d_v
    half = d // 2
    return 1 + lo + half * (half + d % 2 - 1)


# ------------------------------------------------------------------ cache


def edge_feature_cache(
    t: SketchTable,
    g: Graph,
    edges: np.ndarray,
    path=None,
    k: int | None = None,
    config_hash: str | None = None,
    mask_query_edges: bool = False,
) -> np.ndarray:
    """Estimated feature rows for ``edges`` in order, as float32; optionally persisted."""
    k = t.hops if k is None else k
    rows = estimate_counts_batch(t, g, edges, k, mask_query_edges=mask_query_edges).astype(np.float32)
    if path is not None:
        save_edge_features(rows, k, path, config_hash or t.cfg.digest())
    return rows


def _hash_bytes(config_hash: str) -> bytes:
    return hashlib.sha256(config_hash.encode()).digest()[:16]


def save_edge_features(rows: np.ndarray, k: int, path, config_hash: str) -> None:
    rows = np.asarray(rows, dtype="<f4").reshape(-1, feature_width(k))
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "wb") as fh:
            fh.write(_CACHE_MAGIC + struct.pack("<IQ", k, len(rows)) + _hash_bytes(config_hash))
            fh.write(rows.tobytes())
    except OSError as exc:
        raise ArtifactError(f"failed writing edge features to {p}: {exc}") from exc


def load_edge_features(path, config_hash: str | None = None) -> tuple[np.ndarray, int]:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ArtifactError(f"failed reading edge features from {p}: {exc}") from exc
    if raw[:4] != _CACHE_MAGIC:
        raise IncompatibleError(f"{p}: not an edge feature cache")
    k, count = struct.unpack("<IQ", raw[4:16])
    stored = raw[16:32]
    if config_hash is not None and stored != _hash_bytes(config_hash):
        raise IncompatibleError(f"{p}: produced under a different configuration")
    width = feature_width(k)
    expected = 32 + 4 * width * count
    if len(raw) != expected:
        raise ArtifactError(f"{p}: truncated at byte {len(raw)}, expected {expected}")
    rows = np.frombuffer(raw, "<f4", count * width, 32).astype(np.float32).reshape(count, width)
    return rows, k


__all__ = [
    "StructureFeatureVector",
    "drnl_label",
    "edge_feature_cache",
    "estimate_counts",
    "estimate_counts_batch",
    "estimate_intersection",
    "exact_counts",
    "exact_counts_batch",
    "feature_width",
    "load_edge_features",
    "pair_distances",
    "save_edge_features",
    "swap_rows",
]
