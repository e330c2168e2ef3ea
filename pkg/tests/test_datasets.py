import pickle

import numpy as np
import pytest
import scipy.sparse as sp

from subsketch.datasets import dataset_name, default_valid_in_eval, load_dataset
from subsketch.errors import ArtifactError, ConfigError


def test_fixtures_and_synthetic():
    assert load_dataset("fixture:c6").num_edges == 6
    g = load_dataset("synthetic:er:n=100,mean_degree=4.0,seed=1")
    assert g.num_nodes == 100
    with pytest.raises(ConfigError):
        load_dataset("fixture:nope")
    with pytest.raises(ConfigError):
        load_dataset("synthetic:ba:n=3")


def test_missing_dataset_message():
    with pytest.raises(ArtifactError, match="SUBSKETCH_DATA_DIR"):
        load_dataset("cora")


def test_linqs_layout(tmp_path):
    (tmp_path / "toy.content").write_text("a 1 0 L1\nb 0 1 L2\nc 1 1 L1\n")
    (tmp_path / "toy.cites").write_text("a b\nb c\nc zzz\n")
    g = load_dataset(str(tmp_path), "toy")
    assert g.num_nodes == 3 and g.num_edges == 2 and g.features.shape == (3, 2)


def test_planetoid_layout(tmp_path):
    raw = tmp_path / "raw"
    raw.mkdir()
    x = np.eye(5, dtype=np.float32)
    allx, tx = sp.csr_matrix(x[:3]), sp.csr_matrix(x[[4, 3]])
    for key, obj in {"x": allx, "allx": allx, "tx": tx, "graph": {0: [1], 1: [0, 2], 2: [1, 3], 3: [2, 4], 4: [3]}}.items():
        with open(raw / f"ind.toy.{key}", "wb") as fh:
            pickle.dump(obj, fh)
    (raw / "ind.toy.test.index").write_text("4\n3\n")
    g = load_dataset(str(tmp_path), "toy", largest_component=True)
    assert g.num_nodes == 5 and g.num_edges == 4
    assert np.array_equal(g.features, x)


def test_generic_layout(tmp_path):
    (tmp_path / "edges.txt").write_text("0 1\n1 2\n")
    np.save(tmp_path / "features.npy", np.ones((3, 4), np.float32))
    g = load_dataset(str(tmp_path))
    assert g.features.shape == (3, 4)


def test_names_and_protocol_flags():
    assert dataset_name("synthetic:er:n=5") == "synthetic_er_n5"
    assert default_valid_in_eval("cora") and not default_valid_in_eval("synthetic_er")
