"""Train/validation/test edge splits and uniform negative sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, SamplingError
from .graph import Graph, canonical_edges, save_edge_list

DEFAULT_EVAL_NEGATIVES = 1000


def _pair_index(u: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    """Row-major index of pair (u, v), u < v, in the strict upper triangle."""
    return u * n - u * (u + 1) // 2 + (v - u - 1)


def _pair_from_index(p: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.int64)
    # float guess for the row, then exact integer correction
    b = 2 * n - 1
    u = np.floor((b - np.sqrt(np.maximum(b * b - 8.0 * p, 0.0))) / 2).astype(np.int64)
    u = np.clip(u, 0, n - 2)

    def start(r):
        return r * n - r * (r + 1) // 2

    for _ in range(3):
        u = np.where(start(u) > p, u - 1, u)
        u = np.where(start(u + 1) <= p, u + 1, u)
    v = p - start(u) + u + 1
    return u, v


def _forbidden_indices(g: Graph, exclude) -> np.ndarray:
    parts = [g.edges()]
    for e in exclude:
        if e is not None and len(e):
            parts.append(canonical_edges(e))
    e = np.concatenate(parts) if parts else np.empty((0, 2), np.int64)
    e = canonical_edges(e)
    return np.unique(_pair_index(e[:, 0], e[:, 1], g.num_nodes))


def sample_negatives(g: Graph, count: int, exclude=(), seed: int = 0) -> np.ndarray:
    """Sample ``count`` distinct non-edges of ``g`` uniformly, avoiding ``exclude``.

    Pairs are returned as an (count, 2) int64 array with u < v. Sampling is
    done over ranks of allowed pairs, so it is exact-uniform and never loops.
    """
    n = g.num_nodes
    total = n * (n - 1) // 2
    forbidden = _forbidden_indices(g, exclude)
    available = total - len(forbidden)
    if count > available:
        raise SamplingError(f"requested {count} negatives but only {available} non-edges exist")
    if count == 0:
        return np.empty((0, 2), dtype=np.int64)
    rng = np.random.default_rng(seed)
    ranks = np.sort(rng.choice(available, size=count, replace=False).astype(np.int64))
    # allowed pairs before forbidden[j] = forbidden[j] - j
    gaps = forbidden - np.arange(len(forbidden), dtype=np.int64)
    idx = ranks + np.searchsorted(gaps, ranks, side="right")
    u, v = _pair_from_index(idx, n)
    out = np.stack([u, v], axis=1)
    return out[rng.permutation(count)]


@dataclass(frozen=True, eq=False)
class EdgeSplit:
    train_pos: np.ndarray
    valid_pos: np.ndarray
    test_pos: np.ndarray
    valid_neg: np.ndarray
    test_neg: np.ndarray
    message_graph_train: Graph
    message_graph_eval: Graph
    seed: int
    fractions: tuple[float, float, float]

    def counts(self) -> dict[str, int]:
        return {
            name: len(getattr(self, name))
            for name in ("train_pos", "valid_pos", "test_pos", "valid_neg", "test_neg")
        }


def _split_sizes(m: int, fractions) -> tuple[int, int, int]:
    f_train, f_valid, _ = fractions
    n_train = math.ceil(f_train * m - 1e-9)
    n_valid = min(int(round(f_valid * m)), m - n_train)
    return n_train, n_valid, m - n_train - n_valid


def make_splits(
    g: Graph,
    fractions=(0.7, 0.1, 0.2),
    seed: int = 0,
    num_negatives: int = DEFAULT_EVAL_NEGATIVES,
    valid_in_eval_graph: bool = True,
) -> EdgeSplit:
    """Randomly partition the edges of ``g`` and sample evaluation negatives.

    The training count is ``ceil(f_train * m)``, validation is rounded and test
    takes the remainder. ``num_negatives`` non-edges of ``g`` are drawn for
    each of validation and test (disjoint from each other).
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(not 0.0 < f < 1.0 for f in fractions):
        raise ConfigError(f"split fractions must lie in (0, 1), got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {sum(fractions)}")
    edges = g.edges()
    n_train, n_valid, _ = _split_sizes(len(edges), fractions)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(edges))
    train = edges[np.sort(perm[:n_train])]
    valid = edges[np.sort(perm[n_train : n_train + n_valid])]
    test = edges[np.sort(perm[n_train + n_valid :])]
    neg_seed = int(rng.integers(2**63 - 1))
    neg = sample_negatives(g, 2 * num_negatives, seed=neg_seed)
    g_train = g.with_edges(train)
    g_eval = g.with_edges(np.concatenate([train, valid])) if valid_in_eval_graph else g_train
    return EdgeSplit(
        train_pos=train,
        valid_pos=valid,
        test_pos=test,
        valid_neg=neg[:num_negatives],
        test_neg=neg[num_negatives:],
        message_graph_train=g_train,
        message_graph_eval=g_eval,
        seed=seed,
        fractions=fractions,
    )


_SPLIT_FILES = ("train_pos", "valid_pos", "test_pos", "valid_neg", "test_neg")


def save_split(split: EdgeSplit, directory, graph: Graph | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in _SPLIT_FILES:
        save_edge_list(getattr(split, name), d / f"{name}.txt")
    manifest = {
        "seed": split.seed,
        "fractions": list(split.fractions),
        "counts": split.counts(),
        "valid_in_eval_graph": split.message_graph_eval is not split.message_graph_train,
        "graph": None if graph is None else graph.fingerprint(),
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_split(directory, g: Graph) -> EdgeSplit:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    arrays = {
        name: np.loadtxt(d / f"{name}.txt", dtype=np.int64, ndmin=2).reshape(-1, 2)
        for name in _SPLIT_FILES
    }
    g_train = g.with_edges(arrays["train_pos"])
    if manifest["valid_in_eval_graph"]:
        g_eval = g.with_edges(np.concatenate([arrays["train_pos"], arrays["valid_pos"]]))
    else:
        g_eval = g_train
    return EdgeSplit(
        message_graph_train=g_train,
        message_graph_eval=g_eval,
        seed=manifest["seed"],
        fractions=tuple(manifest["fractions"]),
        **arrays,
    )
