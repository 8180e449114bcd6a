"""Dataset loaders, the block-model generator, config files, checkpoints."""

import numpy as np
import pytest

from stagnn.checkpoint import load_checkpoint, save_checkpoint
from stagnn.config import RunConfig
from stagnn.data import (
    load_dataset,
    random_connected_graph,
    random_spanning_graph,
    synth_sbm,
)
from stagnn.errors import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    GraphBuildError,
)
from stagnn.graph import is_bipartite, is_connected


def write_dataset(tmp_path, edges="0 1\n1 2\n",
                  features="1.0,0.5\n2.0,0.5\n3.0,0.5\n",
                  labels="5\n9\n5\n"):
    e = tmp_path / "edges.txt"
    f = tmp_path / "features.csv"
    y = tmp_path / "labels.txt"
    e.write_text(edges)
    f.write_text(features)
    y.write_text(labels)
    return e, f, y


class TestLoadDataset:
    def test_basic(self, tmp_path):
        ds = load_dataset(*write_dataset(tmp_path))
        assert ds.num_nodes == 3
        assert ds.features.shape == (3, 2)
        assert ds.num_classes == 2

    def test_label_remap_recorded(self, tmp_path):
        ds = load_dataset(*write_dataset(tmp_path))
        assert ds.labels.tolist() == [0, 1, 0]
        assert ds.metadata["label_mapping"] == {5: 0, 9: 1}

    def test_row_count_mismatch_names_both(self, tmp_path):
        paths = write_dataset(tmp_path, labels="5\n9\n")
        with pytest.raises(DataFormatError, match=r"\(3\).*\(2\)"):
            load_dataset(*paths)

    def test_header_autodetected(self, tmp_path):
        paths = write_dataset(
            tmp_path, features="col_a,col_b\n1.0,0.5\n2.0,0.5\n3.0,0.5\n")
        ds = load_dataset(*paths)
        assert ds.features.shape == (3, 2)

    def test_parse_error_carries_line_number(self, tmp_path):
        paths = write_dataset(tmp_path, features="1.0,0.5\nbad,0.5\n3.0,0.5\n")
        with pytest.raises(DataFormatError, match=":2"):
            load_dataset(*paths)

    def test_edge_comment_lines_ignored(self, tmp_path):
        paths = write_dataset(tmp_path, edges="# comment\n0 1\n1 2\n")
        assert load_dataset(*paths).graph.num_edges == 2

    def test_bad_edge_line_number(self, tmp_path):
        paths = write_dataset(tmp_path, edges="0 1\n1 2 3\n")
        with pytest.raises(DataFormatError, match=":2"):
            load_dataset(*paths)


class TestSynthSbm:
    def test_connected_and_labeled(self):
        ds = synth_sbm(2, 50, p_in=0.5, p_out=0.01, signal=5.0, seed=1)
        assert is_connected(ds.graph)
        assert ds.labels.tolist() == [0] * 50 + [1] * 50
        assert ds.features.shape == (100, 2)

    def test_same_seed_identical(self):
        a = synth_sbm(2, 30, 0.3, 0.02, 3.0, seed=4)
        b = synth_sbm(2, 30, 0.3, 0.02, 3.0, seed=4)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.graph.col_indices, b.graph.col_indices)

    def test_signal_scales_noise(self):
        strong = synth_sbm(2, 50, 0.3, 0.02, 100.0, seed=2)
        centered = strong.features - np.eye(2)[strong.labels]
        assert np.abs(centered).max() < 0.1

    def test_invalid_probability_rejected(self):
        with pytest.raises(GraphBuildError):
            synth_sbm(2, 10, p_in=1.5, p_out=0.1, signal=1.0, seed=0)

    def test_equal_probabilities_decouple_structure_from_labels(self):
        # heterophily stand-in: with p_in == p_out the edge process ignores
        # the blocks, so cross-block edges appear at their area share
        ds = synth_sbm(2, 60, p_in=0.15, p_out=0.15, signal=3.0, seed=3)
        g = ds.graph
        rows = np.repeat(np.arange(g.num_nodes), np.diff(g.row_offsets))
        cross = np.mean(ds.labels[rows] != ds.labels[g.col_indices])
        assert abs(cross - 60 / 119) < 0.1  # cross-pair share of all pairs

    def test_impossible_connectivity_reports(self):
        with pytest.raises(GraphBuildError, match="attempts"):
            synth_sbm(2, 20, p_in=0.0, p_out=0.0, signal=1.0, seed=0,
                      max_retries=3)


class TestRandomGraphs:
    @pytest.mark.parametrize("seed", range(4))
    def test_connected_nonbipartite(self, seed):
        g = random_connected_graph(24, avg_degree=6, seed=seed,
                                   require_non_bipartite=True)
        assert is_connected(g) and not is_bipartite(g)

    def test_spanning_graph_edge_control(self):
        g = random_spanning_graph(256, avg_degree=8.0, seed=0)
        assert is_connected(g)
        assert abs(g.num_edges - 1024) < 32


class TestRunConfig:
    def test_round_trip_identity(self):
        cfg = RunConfig.defaults()
        cfg.set("train", "lr", 0.001)
        cfg.set("model", "hops", 10)
        text = cfg.to_ini_text()
        again = RunConfig.from_ini_text(text)
        assert again.to_ini_text() == text
        assert again.config_hash() == cfg.config_hash()

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            RunConfig.from_ini_text("[train]\nlearning_rate = 0.1\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown config section"):
            RunConfig.from_ini_text("[optimizer]\nlr = 0.1\n")

    def test_bad_choice_rejected(self):
        with pytest.raises(ConfigError, match="gate_mode"):
            RunConfig.from_ini_text("[model]\ngate_mode = sigmoid\n")

    def test_files_type_requires_paths(self):
        with pytest.raises(ConfigError, match="path required"):
            RunConfig.from_ini_text("[dataset]\ntype = files\n")

    def test_hash_changes_with_values(self):
        a = RunConfig.defaults()
        b = RunConfig.defaults()
        b.set("run", "seed", 99)
        assert a.config_hash() != b.config_hash()

    def test_train_config_construction(self):
        cfg = RunConfig.from_ini_text(
            "[model]\nhops = 7\nheads = 1\n[train]\nlr = 0.005\n")
        tc = cfg.train_config()
        assert tc.hops == 7 and tc.heads == 1 and tc.lr == 0.005


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        tensors = {"a": rng.normal(size=(3, 4)), "b.c": rng.normal(size=(1, 1))}
        meta = {"seed": 7, "note": "x"}
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, tensors, meta)
        loaded, got_meta = load_checkpoint(path)
        assert got_meta == meta
        assert set(loaded) == {"a", "b.c"}
        for name in tensors:
            np.testing.assert_array_equal(loaded[name], tensors[name])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, {"a": np.ones((4, 4))}, {})
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.ckpt")
