"""k-hop propagation of node sketches (closed neighborhoods) and node features."""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ArtifactError, ConfigError, IncompatibleError
from .graph import Graph, load_features, save_features
from .sketch import (
    EMPTY_SLOT,
    HllSketch,
    MinhashSketch,
    SketchConfig,
    SketchPair,
    cardinality_rows,
    minhash_values,
    singleton_registers,
)

_TABLE_MAGIC = b"SKT1"
_ROW_BUDGET = 1 << 16  # gathered rows per chunk


@dataclass(frozen=True, eq=False)
class SketchTable:
    """Per-hop sketches: ``hll[d]`` is (n, m) uint8, ``mh[d]`` is (n, np) uint64.

    Row u of hop d sketches the closed neighborhood {w : dist(u, w) <= d}.
    ``card[d, u]`` caches the HLL estimate of that neighborhood's size.
    """

    cfg: SketchConfig
    hll: tuple[np.ndarray, ...]
    mh: tuple[np.ndarray, ...]
    card: np.ndarray

    @property
    def hops(self) -> int:
        return len(self.hll) - 1

    @property
    def num_nodes(self) -> int:
        return self.hll[0].shape[0]

    def node_sketch(self, u: int, d: int) -> SketchPair:
        return SketchPair(HllSketch(self.hll[d][u].copy(), self.cfg), MinhashSketch(self.mh[d][u].copy(), self.cfg))

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (*self.hll, *self.mh):
            h.update(arr.tobytes())
        return h.hexdigest()[:16]


def _closed_csr(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    a = g.adjacency(np.int8) + sp.identity(g.num_nodes, dtype=np.int8, format="csr")
    a = sp.csr_matrix(a)
    a.sort_indices()
    return a.indptr.astype(np.int64), a.indices.astype(np.int64)


def _chunks(rows: np.ndarray, indptr: np.ndarray, budget: int) -> list[np.ndarray]:
    lengths = indptr[rows + 1] - indptr[rows]
    bounds = [0]
    acc = 0
    for i, ln in enumerate(lengths):
        acc += ln
        if acc >= budget:
            bounds.append(i + 1)
            acc = 0
    if bounds[-1] != len(rows):
        bounds.append(len(rows))
    return [rows[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def _reduce_rows(prev: np.ndarray, rows: np.ndarray, indptr, indices, ufunc) -> np.ndarray:
    starts = indptr[rows]
    lengths = indptr[rows + 1] - starts
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    gather = indices[np.repeat(starts - offsets, lengths) + np.arange(lengths.sum())]
    return ufunc.reduceat(prev[gather], offsets, axis=0)


def _hop(prev: np.ndarray, indptr, indices, ufunc, order, workers: int, budget: int) -> np.ndarray:
    out = np.empty_like(prev)
    parts = _chunks(order, indptr, budget)

    def run(rows):
        out[rows] = _reduce_rows(prev, rows, indptr, indices, ufunc)

    if workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, parts))
    else:
        for rows in parts:
            run(rows)
    return out


def propagate_sketches(
    g: Graph,
    cfg: SketchConfig,
    k: int = 2,
    workers: int = 1,
    order: np.ndarray | None = None,
    row_budget: int = _ROW_BUDGET,
) -> SketchTable:
    """Build per-hop sketches of closed d-hop neighborhoods for d = 0..k.

    Each hop is a pure function of the previous one (max over registers,
    min over signatures, including the node itself), so ``order`` and the
    chunking only affect scheduling, never the result.
    """
    if k < 1:
        raise ConfigError("hops must be >= 1")
    n = g.num_nodes
    nodes = np.arange(n, dtype=np.int64)
    order = nodes if order is None else np.asarray(order, dtype=np.int64)
    if n and not np.array_equal(np.sort(order), nodes):
        raise ConfigError("order must be a permutation of the nodes")
    hll = [singleton_registers(nodes, cfg)]
    mh = [minhash_values(nodes, cfg) if n else np.full((0, cfg.minhash_perms), EMPTY_SLOT)]
    indptr, indices = _closed_csr(g)
    for _ in range(k):
        if n == 0:
            hll.append(hll[-1].copy())
            mh.append(mh[-1].copy())
            continue
        hll.append(_hop(hll[-1], indptr, indices, np.maximum, order, workers, row_budget))
        mh.append(_hop(mh[-1], indptr, indices, np.minimum, order, workers, row_budget))
    for arr in (*hll, *mh):
        arr.setflags(write=False)
    card = np.stack([cardinality_rows(h, cfg) if n else np.zeros(0) for h in hll])
    card.setflags(write=False)
    return SketchTable(cfg, tuple(hll), tuple(mh), card)


@dataclass(frozen=True, eq=False)
class PropagatedFeatures:
    """Hop-concatenated features ``z = [X0 | X1 | ... | Xk]`` (float32)."""

    z: np.ndarray
    hops: int

    @property
    def block_dim(self) -> int:
        return self.z.shape[1] // (self.hops + 1)

    def block(self, hop: int) -> np.ndarray:
        d = self.block_dim
        return self.z[:, hop * d : (hop + 1) * d]


def mean_operator(g: Graph) -> sp.csr_matrix:
    deg = g.degrees.astype(np.float64)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return sp.csr_matrix(sp.diags(inv) @ g.adjacency(np.float64))


def propagate_features(g: Graph, k: int = 2, x: np.ndarray | None = None) -> PropagatedFeatures:
    """Repeated open-neighborhood means of the node features.

    Isolated nodes get zero rows in every hop block after the first.
    """
    if k < 0:
        raise ConfigError("hops must be >= 0")
    x = g.features if x is None else x
    if x is None:
        raise ConfigError("graph has no node features; pass features or disable node features")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != g.num_nodes:
        raise ConfigError(f"features have {x.shape[0]} rows for {g.num_nodes} nodes")
    op = mean_operator(g)
    blocks = [x]
    for _ in range(k):
        blocks.append(op @ blocks[-1])
    z = np.hstack(blocks).astype(np.float32)
    z.setflags(write=False)
    return PropagatedFeatures(z, k)


# ------------------------------------------------------------------ persistence


def _write_table(t: SketchTable, path: Path) -> None:
    c = t.cfg
    head = _TABLE_MAGIC + struct.pack("<BIQII", c.hll_precision, c.minhash_perms, c.seed, t.hops, t.num_nodes)
    with open(path, "wb") as fh:
        fh.write(head)
        for d in range(t.hops + 1):
            fh.write(struct.pack("<I", d))
            fh.write(np.ascontiguousarray(t.hll[d]).tobytes())
            fh.write(np.ascontiguousarray(t.mh[d]).astype("<u8").tobytes())


def _read_table(path: Path, expected: SketchConfig | None) -> SketchTable:
    raw = path.read_bytes()
    if raw[:4] != _TABLE_MAGIC:
        raise IncompatibleError(f"{path}: not a sketch table file")
    p, n_perm, seed, hops, n = struct.unpack("<BIQII", raw[4:25])
    cfg = SketchConfig(p, n_perm, seed)
    if expected is not None and expected != cfg:
        raise IncompatibleError(f"{path}: stored sketch config {cfg} does not match requested {expected}")
    m = cfg.num_registers
    off = 25
    hll, mh = [], []
    for d in range(hops + 1):
        (tag,) = struct.unpack("<I", raw[off : off + 4])
        if tag != d:
            raise ArtifactError(f"{path}: corrupt hop framing at byte {off}")
        off += 4
        hll.append(np.frombuffer(raw, np.uint8, n * m, off).reshape(n, m))
        off += n * m
        mh.append(np.frombuffer(raw, "<u8", n * n_perm, off).astype(np.uint64).reshape(n, n_perm))
        off += 8 * n * n_perm
        mh[-1].setflags(write=False)
    card = np.stack([cardinality_rows(h, cfg) if n else np.zeros(0) for h in hll])
    card.setflags(write=False)
    return SketchTable(cfg, tuple(hll), tuple(mh), card)


def persist_table(t: SketchTable, z: PropagatedFeatures | None, path, extra: dict | None = None) -> None:
    """Write ``sketches.bin``, ``features.bin`` and ``manifest.json`` under ``path``."""
    d = Path(path)
    try:
        d.mkdir(parents=True, exist_ok=True)
        _write_table(t, d / "sketches.bin")
        if z is not None:
            save_features(z.z, d / "features.bin")
        manifest = {
            "sketch_config": t.cfg.to_dict(),
            "sketch_config_hash": t.cfg.digest(),
            "hops": t.hops,
            "num_nodes": t.num_nodes,
            "feature_hops": None if z is None else z.hops,
            "table_digest": t.digest(),
            **(extra or {}),
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as exc:
        raise ArtifactError(f"failed to write sketch table under {d}: {exc}") from exc


def load_table(path, expected: SketchConfig | None = None) -> tuple[SketchTable, PropagatedFeatures | None, dict]:
    d = Path(path)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
        table = _read_table(d / "sketches.bin", expected)
        z = None
        if manifest.get("feature_hops") is not None:
            arr = load_features(d / "features.bin")
            arr.setflags(write=False)
            z = PropagatedFeatures(arr, manifest["feature_hops"])
    except FileNotFoundError as exc:
        raise ArtifactError(f"missing artifact {exc.filename}; run `subsketch preprocess` first") from exc
    except OSError as exc:
        raise ArtifactError(f"failed to read sketch table under {d}: {exc}") from exc
    return table, z, manifest
