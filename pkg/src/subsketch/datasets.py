"""Dataset resolution: built-in fixtures, synthetic generators and on-disk formats.

Supported on-disk layouts for a directory ``root`` and dataset ``name``:

* Planetoid pickles ``ind.<name>.{x,tx,allx,graph,test.index}`` (optionally under ``raw/``)
* LINQS text ``<name>.cites`` + ``<name>.content``
* generic ``edges.txt`` plus optional ``features.{bin,npy,txt}``
"""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import fixtures
from .errors import ArtifactError, ConfigError
from .graph import Graph, largest_connected_component, load_edge_list, load_features

PLANETOID = ("cora", "citeseer", "pubmed")
# datasets whose protocol lets validation edges carry messages at test time
VALID_EDGES_ALLOWED = PLANETOID + ("collab", "ogbl-collab")


def _find(root: Path, *names: str) -> Path | None:
    for base in (root, root / "raw", root / "Planetoid" / "raw"):
        for n in names:
            p = base / n
            if p.exists():
                return p
    return None


def _unpickle(path: Path):
    # written by Python 2
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def _dense(m) -> np.ndarray:
    return np.asarray(m.todense() if sp.issparse(m) else m, dtype=np.float32)


def load_planetoid_pickles(root, name: str) -> Graph:
    root = Path(root)
    first = _find(root, f"ind.{name}.x")
    if first is None:
        raise ArtifactError(f"no ind.{name}.* files under {root}")
    base = first.parent
    tx = _dense(_unpickle(base / f"ind.{name}.tx"))
    allx = _dense(_unpickle(base / f"ind.{name}.allx"))
    graph = _unpickle(base / f"ind.{name}.graph")
    test_index = np.array(
        [int(t) for t in (base / f"ind.{name}.test.index").read_text().split()], dtype=np.int64
    )
    test_sorted = np.sort(test_index)
    if name == "citeseer":
        # isolated test nodes are missing from tx; pad with zero rows
        full = np.zeros((test_sorted[-1] - test_sorted[0] + 1, tx.shape[1]), dtype=np.float32)
        full[test_sorted - test_sorted[0]] = tx
        tx = full
    x = np.vstack([allx, tx])
    x[test_index] = x[test_sorted]
    n = x.shape[0]
    edges = [(int(u), int(v)) for u, nbrs in graph.items() for v in nbrs if int(v) < n and int(u) < n]
    return Graph.from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2), x)


def load_linqs(root, name: str) -> Graph:
    root = Path(root)
    content = _find(root, f"{name}.content")
    cites = _find(root, f"{name}.cites")
    if content is None or cites is None:
        raise ArtifactError(f"no {name}.content/{name}.cites under {root}")
    ids: dict[str, int] = {}
    rows = []
    for line in content.read_text().splitlines():
        toks = line.split()
        if not toks:
            continue
        ids[toks[0]] = len(ids)
        rows.append([float(t) for t in toks[1:-1]])
    x = np.array(rows, dtype=np.float32)
    edges = []
    for line in cites.read_text().splitlines():
        toks = line.split()
        if len(toks) >= 2 and toks[0] in ids and toks[1] in ids:
            edges.append((ids[toks[0]], ids[toks[1]]))
    return Graph.from_edges(len(ids), np.array(edges, dtype=np.int64).reshape(-1, 2), x)


def _parse_synthetic(spec: str) -> Graph:
    # synthetic:<kind>[:key=value,...]
    parts = spec.split(":", 2)
    kind = parts[1] if len(parts) > 1 else ""
    kwargs = {}
    if len(parts) > 2 and parts[2]:
        for item in parts[2].split(","):
            k, _, v = item.partition("=")
            kwargs[k.strip()] = float(v) if "." in v else int(v)
    if kind == "sbm":
        return fixtures.attributed_sbm(**kwargs)
    if kind == "er":
        return fixtures.erdos_renyi(**kwargs)
    raise ConfigError(f"unknown synthetic dataset kind {kind!r}")


def load_dataset(spec: str, name: str | None = None, largest_component: bool = False) -> Graph:
    """Resolve a dataset spec string to a Graph.

    ``fixture:<name>`` and ``synthetic:<kind>:k=v,...`` are built in; any other
    value is a path to an edge-list file or a dataset directory.
    """
    if spec.startswith("fixture:"):
        key = spec.split(":", 1)[1]
        if key not in fixtures.FIXTURES:
            raise ConfigError(f"unknown fixture {key!r}; choose from {sorted(fixtures.FIXTURES)}")
        g = fixtures.FIXTURES[key]()
    elif spec.startswith("synthetic:"):
        g = _parse_synthetic(spec)
    else:
        path = Path(spec)
        if not path.exists():
            raise ArtifactError(
                f"dataset {spec!r} not found: pass an existing path or put it under $SUBSKETCH_DATA_DIR"
            )
        if path.is_file():
            g = load_edge_list(path)
        else:
            name = (name or path.name).lower()
            if _find(path, f"ind.{name}.x"):
                g = load_planetoid_pickles(path, name)
            elif _find(path, f"{name}.cites"):
                g = load_linqs(path, name)
            elif (path / "edges.txt").exists():
                feats = next(
                    (path / f for f in ("features.bin", "features.npy", "features.txt") if (path / f).exists()),
                    None,
                )
                g = load_edge_list(path / "edges.txt", features_path=feats)
            else:
                raise ArtifactError(f"could not recognise a dataset layout under {path}")
    if largest_component:
        g = largest_connected_component(g)
    return g


def dataset_name(spec: str) -> str:
    if ":" in spec and not Path(spec).exists():
        return spec.replace(":", "_").replace(",", "_").replace("=", "")
    return Path(spec).name.lower() or "dataset"


def default_valid_in_eval(name: str) -> bool:
    return name.lower() in VALID_EDGES_ALLOWED


__all__ = [
    "dataset_name",
    "default_valid_in_eval",
    "load_dataset",
    "load_features",
    "load_linqs",
    "load_planetoid_pickles",
]
