"""Node-classification model: transform features, attend over subtrees, classify.

The forward pass is a two-layer MLP followed by query/key/value projections,
multi-head subtree attention with hop aggregation, and a linear classifier.
Training is full batch with Adam, early stopping on the validation metric, and
a parameter snapshot at the best validation epoch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .attention import (
    GateMode,
    HopAggregation,
    StaConfig,
    StaParams,
    aggregate_hops,
    glorot,
    global_attention,
    init_sta_params,
    multihead_subtree_attention,
    subtree_attention_hops,
)
from .autodiff import DiffNode
from .errors import ConfigError, DivergenceError
from .graph import Graph, laplacian_pe
from .optim import AdamState, adam_step


class Metric(Enum):
    ACCURACY = "accuracy"
    ROC_AUC = "roc_auc"


class ModelVariant(Enum):
    STAGNN = "stagnn"
    GA_STA = "ga_sta"  # global attention plus a few subtree hops


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    dropout: float = 0.0
    weight_decay: float = 0.0
    hops: int = 5
    heads: int = 4
    hidden: int = 64
    gate_mode: GateMode = GateMode.SOFTMAX
    aggregation: HopAggregation = HopAggregation.GPR
    max_epochs: int = 3000
    patience: int = 200
    seed: int = 0
    train_ratio: float = 0.5
    val_ratio: float = 0.25
    test_ratio: float = 0.25
    metric: Metric = Metric.ACCURACY
    pe_dims: int = 3
    variant: ModelVariant = ModelVariant.STAGNN
    ga_hops: int = 2

    def __post_init__(self):
        total = self.train_ratio + self.val_ratio + self.test_ratio
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"split ratios sum to {total}, expected 1")
        if self.patience > self.max_epochs:
            raise ConfigError("patience exceeds the epoch budget")

    def sta_config(self) -> StaConfig:
        return StaConfig(
            hops=self.hops, heads=self.heads, hidden=self.hidden,
            gate_mode=self.gate_mode, aggregation=self.aggregation)


@dataclass
class StagnnParams:
    """All learnable tensors; the shape chain follows the hidden width."""

    mlp_w1: DiffNode
    mlp_b1: DiffNode
    mlp_w2: DiffNode
    mlp_b2: DiffNode
    w_query: DiffNode
    w_key: DiffNode
    w_value: DiffNode
    sta: StaParams
    classifier_w: DiffNode
    classifier_b: DiffNode

    def named(self) -> dict[str, DiffNode]:
        out = {
            "mlp_w1": self.mlp_w1, "mlp_b1": self.mlp_b1,
            "mlp_w2": self.mlp_w2, "mlp_b2": self.mlp_b2,
            "w_query": self.w_query, "w_key": self.w_key,
            "w_value": self.w_value,
            "classifier_w": self.classifier_w,
            "classifier_b": self.classifier_b,
        }
        out.update(self.sta.named())
        return out

    def decayed_names(self) -> frozenset[str]:
        """Weight matrices only; gates, hop weights, and biases stay undecayed."""
        names = {"mlp_w1", "mlp_w2", "w_query", "w_key", "w_value",
                 "classifier_w", "sta.output_projection"}
        if self.sta.concat_projection is not None:
            names.add("sta.concat_projection")
        if self.sta.readout_projection is not None:
            names.add("sta.readout_projection")
        return frozenset(names)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.named().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, p in self.named().items():
            p.value[...] = snap[name]


def init_stagnn_params(cfg: StaConfig, in_features: int, num_classes: int,
                       rng: np.random.Generator,
                       with_teleport: bool = False) -> StagnnParams:
    h = cfg.hidden
    return StagnnParams(
        mlp_w1=ad.parameter(glorot(rng, in_features, h), "mlp_w1"),
        mlp_b1=ad.parameter(np.zeros((1, h)), "mlp_b1"),
        mlp_w2=ad.parameter(glorot(rng, h, h), "mlp_w2"),
        mlp_b2=ad.parameter(np.zeros((1, h)), "mlp_b2"),
        w_query=ad.parameter(glorot(rng, h, h), "w_query"),
        w_key=ad.parameter(glorot(rng, h, h), "w_key"),
        w_value=ad.parameter(glorot(rng, h, h), "w_value"),
        sta=init_sta_params(cfg, rng, with_teleport=with_teleport),
        classifier_w=ad.parameter(glorot(rng, h, num_classes), "classifier_w"),
        classifier_b=ad.parameter(np.zeros((1, num_classes)), "classifier_b"),
    )


def _projections(params: StagnnParams, x: DiffNode, dropout_p: float,
                 training: bool, rng) -> tuple[DiffNode, DiffNode, DiffNode]:
    h1 = ad.relu(ad.add_bias(ad.matmul(x, params.mlp_w1), params.mlp_b1))
    h1 = ad.dropout(h1, dropout_p, training, rng)
    h = ad.add_bias(ad.matmul(h1, params.mlp_w2), params.mlp_b2)
    h = ad.dropout(h, dropout_p, training, rng)
    return (ad.matmul(h, params.w_query), ad.matmul(h, params.w_key),
            ad.matmul(h, params.w_value))


def stagnn_forward(g: Graph, cfg: StaConfig, params: StagnnParams,
                   x: DiffNode, *, dropout_p: float = 0.0,
                   training: bool = False, rng=None) -> DiffNode:
    """Logits for every node, N x C."""
    q, k, v = _projections(params, x, dropout_p, training, rng)
    hops = multihead_subtree_attention(g, cfg, params.sta, q, k, v)
    rep = aggregate_hops(hops, cfg, params.sta)
    return ad.add_bias(ad.matmul(rep, params.classifier_w), params.classifier_b)


def ga_sta_forward(g: Graph, cfg: StaConfig, params: StagnnParams,
                   x: DiffNode, hops: int, *, dropout_p: float = 0.0,
                   training: bool = False, rng=None) -> DiffNode:
    """Global attention plus a few subtree hops, mixed by a teleport weight.

    The subtree terms here are single-block (no head split, no output
    projection); hops=0 keeps only the values term alongside global attention.
    """
    if hops < 0 or hops > cfg.hops:
        raise ConfigError(f"hops must be in [0, {cfg.hops}], got {hops}")
    if params.sta.teleport is None:
        raise ConfigError("ga_sta_forward requires teleport parameter")
    q, k, v = _projections(params, x, dropout_p, training, rng)
    total = ad.scale(global_attention(q, k, v), params.sta.teleport)
    sta_outs = subtree_attention_hops(g, cfg, q, k, v)
    for k_hop in range(hops + 1):
        weighted = ad.scale(sta_outs[k_hop],
                            ad.entry(params.sta.gpr_weights, 0, k_hop))
        total = ad.add(total, weighted)
    return ad.add_bias(ad.matmul(total, params.classifier_w),
                       params.classifier_b)


# ---------------------------------------------------------------------------
# metrics and splits


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size, dtype=np.float64)
    ranks[order] = np.arange(1, x.size + 1)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    return ranks


def evaluate(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray,
             metric: Metric) -> float:
    """Accuracy (argmax, lowest index wins ties) or rank-based ROC-AUC."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ConfigError("empty evaluation mask")

    if metric is Metric.ACCURACY:
        preds = np.argmax(logits[mask], axis=1)
        return float(np.mean(preds == labels[mask]))

    if logits.shape[1] != 2:
        raise ConfigError("ROC-AUC requires binary logits")
    y = labels[mask]
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("ROC-AUC undefined for a single-class mask")
    z = logits[mask]
    scores = 1.0 / (1.0 + np.exp(-(z[:, 1] - z[:, 0])))  # class-1 probability
    ranks = _average_ranks(scores)
    auc = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return float(auc)


def make_splits(num_nodes: int, ratios: tuple[float, float, float],
                seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded uniform shuffle cut at the ratio boundaries."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios sum to {sum(ratios)}, expected 1")
    perm = np.random.default_rng(seed).permutation(num_nodes)
    n_train = int(num_nodes * ratios[0])
    n_val = int(num_nodes * ratios[1])
    train = np.sort(perm[:n_train])
    val = np.sort(perm[n_train:n_train + n_val])
    test = np.sort(perm[n_train + n_val:])
    if min(train.size, val.size, test.size) == 0:
        raise ConfigError("a split part is empty; adjust ratios or node count")
    return train, val, test


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainReport:
    config: dict
    seed: int
    epochs_run: int
    best_epoch: int
    train_loss: list[float]
    val_metric: list[float]
    test_metric: list[float]
    best_val_metric: float
    test_metric_at_best: float
    gpr_weights: list[float]
    gates: list[list[float]]
    wall_time_seconds: float
    diverged: bool = False

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "train_loss": self.train_loss,
            "val_metric": self.val_metric,
            "test_metric": self.test_metric,
            "best_val_metric": self.best_val_metric,
            "test_metric_at_best": self.test_metric_at_best,
            "gpr_weights": self.gpr_weights,
            "gates": self.gates,
            "wall_time_seconds": self.wall_time_seconds,
            "diverged": self.diverged,
        }


def effective_gates(sta: StaParams, gate_mode: GateMode) -> np.ndarray:
    """Per-hop head weights as actually applied in the forward pass."""
    raw = sta.gates.value
    if gate_mode is GateMode.SOFTMAX:
        shifted = raw - raw.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
    if gate_mode is GateMode.RAW:
        return raw.copy()
    return np.ones_like(raw)


def augment_with_pe(g: Graph, x: np.ndarray, pe_dims: int) -> np.ndarray:
    """Concatenate spectral positional coordinates to the raw features."""
    if pe_dims <= 0:
        return np.asarray(x, dtype=np.float64)
    return np.concatenate(
        [np.asarray(x, dtype=np.float64), laplacian_pe(g, pe_dims)], axis=1)


def train(g: Graph, x: np.ndarray, labels: np.ndarray,
          splits: tuple[np.ndarray, np.ndarray, np.ndarray],
          tc: TrainConfig,
          params: StagnnParams | None = None) -> tuple[TrainReport, StagnnParams]:
    """Full-batch training; returns the report and best-epoch parameters.

    The validation metric drives early stopping: no strict improvement for
    `patience` epochs ends the run. The snapshot updates on ties as well, so
    among equally good epochs the most-trained one is reported.
    """
    start = time.perf_counter()
    train_idx, val_idx, test_idx = splits
    if min(train_idx.size, val_idx.size, test_idx.size) == 0:
        raise ConfigError("empty split")
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = int(labels.max()) + 1

    cfg = tc.sta_config()
    hybrid = tc.variant is ModelVariant.GA_STA
    if hybrid and tc.ga_hops > tc.hops:
        raise ConfigError(f"ga_hops={tc.ga_hops} exceeds hops={tc.hops}")
    x_in = augment_with_pe(g, x, tc.pe_dims)
    rng = np.random.default_rng(tc.seed)
    if params is None:
        params = init_stagnn_params(cfg, x_in.shape[1], num_classes, rng,
                                    with_teleport=hybrid)
    named = params.named()
    state = AdamState(lr=tc.lr, weight_decay=tc.weight_decay,
                      decay_names=params.decayed_names())
    x_node = ad.constant(x_in, "features")

    def forward(training: bool):
        if hybrid:
            return ga_sta_forward(g, cfg, params, x_node, tc.ga_hops,
                                  dropout_p=tc.dropout, training=training,
                                  rng=rng)
        return stagnn_forward(g, cfg, params, x_node, dropout_p=tc.dropout,
                              training=training, rng=rng)

    losses: list[float] = []
    val_curve: list[float] = []
    test_curve: list[float] = []
    best_val = -np.inf
    best_epoch = -1
    best_snapshot = params.snapshot()
    test_at_best = 0.0
    since_improvement = 0

    for epoch in range(tc.max_epochs):
        logits = forward(training=True)
        loss = ad.cross_entropy_loss(logits, labels, train_idx)
        loss_value = float(loss.value[0, 0])
        if not np.isfinite(loss_value):
            raise DivergenceError(epoch)
        losses.append(loss_value)

        for p in named.values():
            p.zero_grad()
        ad.backward(loss)
        adam_step(state, named)

        eval_logits = forward(training=False).value
        val_metric = evaluate(eval_logits, labels, val_idx, tc.metric)
        test_metric = evaluate(eval_logits, labels, test_idx, tc.metric)
        val_curve.append(val_metric)
        test_curve.append(test_metric)

        if val_metric > best_val:
            since_improvement = 0
        else:
            since_improvement += 1
        if val_metric >= best_val:
            best_val = val_metric
            best_epoch = epoch
            best_snapshot = params.snapshot()
            test_at_best = test_metric
        if since_improvement >= tc.patience:
            break

    params.restore(best_snapshot)
    report = TrainReport(
        config=_config_echo(tc),
        seed=tc.seed,
        epochs_run=len(losses),
        best_epoch=best_epoch,
        train_loss=losses,
        val_metric=val_curve,
        test_metric=test_curve,
        best_val_metric=float(best_val),
        test_metric_at_best=float(test_at_best),
        gpr_weights=params.sta.gpr_weights.value[0].tolist(),
        gates=effective_gates(params.sta, tc.gate_mode).tolist(),
        wall_time_seconds=time.perf_counter() - start,
    )
    return report, params


def _config_echo(tc: TrainConfig) -> dict:
    return {
        "lr": tc.lr, "dropout": tc.dropout, "weight_decay": tc.weight_decay,
        "hops": tc.hops, "heads": tc.heads, "hidden": tc.hidden,
        "gate_mode": tc.gate_mode.value, "aggregation": tc.aggregation.value,
        "max_epochs": tc.max_epochs, "patience": tc.patience,
        "seed": tc.seed, "train_ratio": tc.train_ratio,
        "val_ratio": tc.val_ratio, "test_ratio": tc.test_ratio,
        "metric": tc.metric.value, "pe_dims": tc.pe_dims,
        "variant": tc.variant.value, "ga_hops": tc.ga_hops,
    }
