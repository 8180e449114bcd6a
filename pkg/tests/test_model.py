"""Model forward passes, metrics, splits, and the training loop."""

import warnings

import numpy as np
import pytest

from stagnn import autodiff as ad
from stagnn.attention import (
    StaConfig,
    global_attention,
    subtree_attention_hops,
)
from stagnn.data import synth_sbm
from stagnn.errors import ConfigError, DivergenceError
from stagnn.graph import build_graph
from stagnn.model import (
    Metric,
    TrainConfig,
    evaluate,
    ga_sta_forward,
    init_stagnn_params,
    make_splits,
    stagnn_forward,
    train,
)


def build_quiet(edges, n):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_graph(edges, n)


def small_graph(rng, n=10):
    edges = [(int(u), int(v)) for u, v in rng.integers(0, n, (3 * n, 2))]
    return build_quiet(edges, n)


@pytest.fixture(scope="module")
def sbm():
    return synth_sbm(blocks=2, per_block=40, p_in=0.2, p_out=0.02,
                     signal=3.0, seed=11)


class TestForward:
    def test_shapes_and_finite(self):
        rng = np.random.default_rng(0)
        g = small_graph(rng)
        cfg = StaConfig(hops=3, heads=2, hidden=8)
        params = init_stagnn_params(cfg, in_features=5, num_classes=3, rng=rng)
        x = ad.constant(rng.normal(size=(10, 5)))
        logits = stagnn_forward(g, cfg, params, x)
        assert logits.shape == (10, 3)
        assert np.all(np.isfinite(logits.value))

    def test_hop_zero_only_ignores_graph(self):
        # with hop weights (1, 0, ..., 0) only the values term survives, so
        # rewiring the graph must not change the logits
        rng = np.random.default_rng(1)
        n = 10
        g1 = small_graph(rng, n)
        g2 = build_quiet([(i, (i + 1) % n) for i in range(n)], n)
        cfg = StaConfig(hops=3, heads=2, hidden=8)
        params = init_stagnn_params(cfg, in_features=4, num_classes=2,
                                    rng=np.random.default_rng(2))
        params.sta.gpr_weights.value[...] = 0.0
        params.sta.gpr_weights.value[0, 0] = 1.0
        x = ad.constant(rng.normal(size=(n, 4)))
        out1 = stagnn_forward(g1, cfg, params, x)
        out2 = stagnn_forward(g2, cfg, params, x)
        np.testing.assert_allclose(out1.value, out2.value, atol=1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        n = 8
        g = small_graph(rng, n)
        perm = rng.permutation(n)
        inv = np.argsort(perm)
        a = g.to_dense_adjacency()
        rows, cols = np.nonzero(np.triu(a, 1))
        gp = build_quiet([(int(perm[u]), int(perm[v]))
                          for u, v in zip(rows, cols)], n)
        cfg = StaConfig(hops=2, heads=2, hidden=6)
        params = init_stagnn_params(cfg, in_features=3, num_classes=2,
                                    rng=np.random.default_rng(4))
        x = rng.normal(size=(n, 3))
        out = stagnn_forward(g, cfg, params, ad.constant(x)).value
        out_p = stagnn_forward(gp, cfg, params, ad.constant(x[inv])).value
        np.testing.assert_allclose(out_p[perm], out, atol=1e-10)

    def test_gradient_check_small(self):
        rng = np.random.default_rng(5)
        g = small_graph(rng, 6)
        cfg = StaConfig(hops=2, heads=2, hidden=4)
        params = init_stagnn_params(cfg, in_features=3, num_classes=2, rng=rng)
        x = ad.constant(rng.normal(size=(6, 3)))
        labels = rng.integers(0, 2, size=6)
        mask = np.arange(6)

        def f():
            logits = stagnn_forward(g, cfg, params, x)
            return ad.cross_entropy_loss(logits, labels, mask)

        err = ad.gradient_check(f, list(params.named().values()), h=1e-5)
        assert err < 1e-5


class TestGaSta:
    def _setup(self, seed=0, hops=3):
        rng = np.random.default_rng(seed)
        g = small_graph(rng, 9)
        cfg = StaConfig(hops=hops, heads=1, hidden=6)
        params = init_stagnn_params(cfg, in_features=4, num_classes=2,
                                    rng=rng, with_teleport=True)
        x = rng.normal(size=(9, 4))
        return g, cfg, params, x

    def _manual_projections(self, params, x):
        h1 = np.maximum(x @ params.mlp_w1.value + params.mlp_b1.value, 0.0)
        h = h1 @ params.mlp_w2.value + params.mlp_b2.value
        return (h @ params.w_query.value, h @ params.w_key.value,
                h @ params.w_value.value)

    def test_pure_global_attention_path(self):
        g, cfg, params, x = self._setup()
        params.sta.gpr_weights.value[...] = 0.0
        logits = ga_sta_forward(g, cfg, params, ad.constant(x), hops=2)
        q, k, v = self._manual_projections(params, x)
        sa = global_attention(ad.constant(q), ad.constant(k),
                              ad.constant(v)).value
        expected = sa @ params.classifier_w.value + params.classifier_b.value
        np.testing.assert_allclose(logits.value, expected, atol=1e-10)

    def test_teleport_zero_reduces_to_hop_sum(self):
        g, cfg, params, x = self._setup(seed=1)
        params.sta.teleport.value[...] = 0.0
        logits = ga_sta_forward(g, cfg, params, ad.constant(x), hops=3)
        q, k, v = self._manual_projections(params, x)
        outs = subtree_attention_hops(
            g, cfg, ad.constant(q), ad.constant(k), ad.constant(v))
        alphas = params.sta.gpr_weights.value[0]
        total = sum(alphas[k_hop] * outs[k_hop].value for k_hop in range(4))
        expected = total @ params.classifier_w.value + params.classifier_b.value
        np.testing.assert_allclose(logits.value, expected, atol=1e-10)

    def test_composed_sum_matches(self):
        g, cfg, params, x = self._setup(seed=2)
        logits = ga_sta_forward(g, cfg, params, ad.constant(x), hops=2)
        q, k, v = self._manual_projections(params, x)
        sa = global_attention(ad.constant(q), ad.constant(k),
                              ad.constant(v)).value
        outs = subtree_attention_hops(
            g, cfg, ad.constant(q), ad.constant(k), ad.constant(v))
        alphas = params.sta.gpr_weights.value[0]
        total = params.sta.teleport.value[0, 0] * sa
        total += sum(alphas[k_hop] * outs[k_hop].value for k_hop in range(3))
        expected = total @ params.classifier_w.value + params.classifier_b.value
        np.testing.assert_allclose(logits.value, expected, atol=1e-10)

    def test_invalid_hops_rejected(self):
        g, cfg, params, x = self._setup()
        with pytest.raises(ConfigError):
            ga_sta_forward(g, cfg, params, ad.constant(x), hops=9)


class TestEvaluate:
    def test_accuracy_three_of_four(self):
        logits = np.array([[2.0, 0], [0, 2], [2, 0], [2, 0]])
        labels = np.array([0, 1, 0, 1])
        assert evaluate(logits, labels, np.arange(4), Metric.ACCURACY) == 0.75

    def test_argmax_tie_takes_lowest_class(self):
        logits = np.zeros((2, 3))
        labels = np.array([0, 1])
        assert evaluate(logits, labels, np.arange(2), Metric.ACCURACY) == 0.5

    def test_auc_perfect_separation(self):
        logits = np.array([[0, 3.0], [0, 2.0], [2.0, 0], [3.0, 0]])
        labels = np.array([1, 1, 0, 0])
        assert evaluate(logits, labels, np.arange(4), Metric.ROC_AUC) == 1.0

    def test_auc_constant_scores_half(self):
        logits = np.zeros((6, 2))
        labels = np.array([0, 1, 0, 1, 0, 1])
        assert evaluate(logits, labels, np.arange(6), Metric.ROC_AUC) == 0.5

    def test_auc_single_class_rejected(self):
        with pytest.raises(ConfigError):
            evaluate(np.zeros((3, 2)), np.ones(3, dtype=int), np.arange(3),
                     Metric.ROC_AUC)

    def test_auc_matches_pairwise_count(self):
        rng = np.random.default_rng(7)
        logits = rng.normal(size=(40, 2))
        labels = rng.integers(0, 2, size=40)
        z = logits[:, 1] - logits[:, 0]
        pos, neg = z[labels == 1], z[labels == 0]
        wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
        expected = wins / (len(pos) * len(neg))
        got = evaluate(logits, labels, np.arange(40), Metric.ROC_AUC)
        assert abs(got - expected) < 1e-12


class TestMakeSplits:
    def test_sizes_100(self):
        tr, va, te = make_splits(100, (0.5, 0.25, 0.25), seed=3)
        assert (tr.size, va.size, te.size) == (50, 25, 25)

    def test_sizes_10(self):
        tr, va, te = make_splits(10, (0.6, 0.2, 0.2), seed=3)
        assert (tr.size, va.size, te.size) == (6, 2, 2)

    def test_deterministic(self):
        a = make_splits(50, (0.5, 0.25, 0.25), seed=9)
        b = make_splits(50, (0.5, 0.25, 0.25), seed=9)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_disjoint_exhaustive(self):
        tr, va, te = make_splits(37, (0.5, 0.25, 0.25), seed=1)
        merged = np.sort(np.concatenate([tr, va, te]))
        np.testing.assert_array_equal(merged, np.arange(37))

    def test_empty_part_rejected(self):
        with pytest.raises(ConfigError):
            make_splits(3, (0.9, 0.05, 0.05), seed=0)


class TestTrain:
    def test_lr_zero_freezes_parameters(self, sbm):
        splits = make_splits(sbm.num_nodes, (0.5, 0.25, 0.25), seed=0)
        tc = TrainConfig(lr=0.0, hops=2, heads=2, hidden=8, max_epochs=5,
                         patience=5, seed=0)
        report, params = train(sbm.graph, sbm.features, sbm.labels, splits, tc)
        assert len(set(report.val_metric)) == 1
        rng = np.random.default_rng(0)
        fresh = init_stagnn_params(
            tc.sta_config(),
            in_features=sbm.features.shape[1] + tc.pe_dims,
            num_classes=2, rng=rng)
        for name, p in fresh.named().items():
            np.testing.assert_array_equal(p.value, params.named()[name].value)

    def test_same_seed_identical_reports(self, sbm):
        splits = make_splits(sbm.num_nodes, (0.5, 0.25, 0.25), seed=1)
        tc = TrainConfig(lr=0.01, dropout=0.3, hops=2, heads=2, hidden=8,
                         max_epochs=8, patience=8, seed=5)
        r1, _ = train(sbm.graph, sbm.features, sbm.labels, splits, tc)
        r2, _ = train(sbm.graph, sbm.features, sbm.labels, splits, tc)
        assert r1.train_loss == r2.train_loss
        assert r1.val_metric == r2.val_metric
        assert r1.test_metric == r2.test_metric
        assert r1.gpr_weights == r2.gpr_weights

    def test_best_epoch_is_val_argmax(self, sbm):
        splits = make_splits(sbm.num_nodes, (0.5, 0.25, 0.25), seed=2)
        tc = TrainConfig(lr=0.02, hops=2, heads=2, hidden=8, max_epochs=15,
                         patience=15, seed=3)
        report, _ = train(sbm.graph, sbm.features, sbm.labels, splits, tc)
        assert report.val_metric[report.best_epoch] == max(report.val_metric)
        assert report.test_metric_at_best == report.test_metric[report.best_epoch]

    def test_gpr_dump_length_and_snapshot(self, sbm):
        splits = make_splits(sbm.num_nodes, (0.5, 0.25, 0.25), seed=2)
        tc = TrainConfig(lr=0.02, hops=4, heads=2, hidden=8, max_epochs=6,
                         patience=6, seed=3)
        report, params = train(sbm.graph, sbm.features, sbm.labels, splits, tc)
        assert len(report.gpr_weights) == tc.hops + 1
        np.testing.assert_array_equal(
            report.gpr_weights, params.sta.gpr_weights.value[0])
        assert len(report.gates) == tc.hops

    def test_early_stopping_halts(self, sbm):
        splits = make_splits(sbm.num_nodes, (0.5, 0.25, 0.25), seed=2)
        tc = TrainConfig(lr=0.0, hops=2, heads=2, hidden=8, max_epochs=500,
                         patience=4, seed=3)
        report, _ = train(sbm.graph, sbm.features, sbm.labels, splits, tc)
        assert report.epochs_run <= 6

    def test_divergence_reported_with_epoch(self, sbm):
        splits = make_splits(sbm.num_nodes, (0.5, 0.25, 0.25), seed=2)
        tc = TrainConfig(lr=0.01, hops=2, heads=2, hidden=8, max_epochs=5,
                         patience=5, seed=3, pe_dims=0)
        bad = sbm.features.copy()
        bad[0, 0] = np.nan
        with pytest.raises(DivergenceError) as err:
            train(sbm.graph, bad, sbm.labels, splits, tc)
        assert err.value.epoch == 0

    def test_learns_separable_sbm(self, sbm):
        splits = make_splits(sbm.num_nodes, (0.5, 0.25, 0.25), seed=4)
        tc = TrainConfig(lr=0.01, hops=3, heads=2, hidden=16, max_epochs=60,
                         patience=60, seed=1)
        report, _ = train(sbm.graph, sbm.features, sbm.labels, splits, tc)
        assert report.test_metric_at_best >= 0.9
