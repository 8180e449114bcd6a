"""Subtree attention: multi-hop kernelized graph attention.

Node i's attention weights over its k-hop neighborhood are the positive
similarities phi(q_i) . phi(k_j) weighted by the k-step random-walk mass from
j to i, normalized per node. The dense path materializes the k-step transition
matrix as an explicit mask and serves as the correctness reference; the
efficient path instead lets the mapped keys and the key-value products walk
the graph, one sparse pass per hop, which is linear in the edge count.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import DiffNode
from .errors import ConfigError, NumericsError, ShapeError
from .graph import Graph, TransitionKind, propagate, propagate_adjoint, transition_dense


class FeatureMapKind(Enum):
    """Positive feature map applied to queries and keys."""

    ELU_PLUS_ONE = "elu_plus_one"


class GateMode(Enum):
    """How per-hop head weights are produced from the gate parameters."""

    SOFTMAX = "softmax"  # weights = softmax over heads of the gate row
    RAW = "raw"          # weights = the gate row itself
    NONE = "none"        # every head weighted 1


class HopAggregation(Enum):
    GPR = "gpr"        # learned scalar per hop, summed
    SUM = "sum"
    CONCAT = "concat"  # concatenate hops, project back to hidden
    ATTN = "attn"      # per-node softmax readout over hops


@dataclass(frozen=True)
class StaConfig:
    hops: int
    heads: int = 1
    hidden: int = 64
    feature_map: FeatureMapKind = FeatureMapKind.ELU_PLUS_ONE
    gate_mode: GateMode = GateMode.SOFTMAX
    aggregation: HopAggregation = HopAggregation.GPR
    denominator_eps: float = 1e-12

    def __post_init__(self):
        if self.hops < 0:
            raise ConfigError(f"hops must be >= 0, got {self.hops}")
        if self.heads < 1:
            raise ConfigError(f"heads must be >= 1, got {self.heads}")
        if self.hidden % self.heads != 0:
            raise ConfigError(
                f"hidden={self.hidden} not divisible by heads={self.heads}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


@dataclass
class StaParams:
    """Learnable state of one multi-head subtree-attention block."""

    gates: DiffNode               # hops x heads
    gpr_weights: DiffNode         # 1 x (hops + 1), init 1
    output_projection: DiffNode   # hidden x hidden
    concat_projection: DiffNode | None = None  # (hops+1)*hidden x hidden
    readout_projection: DiffNode | None = None  # 1 x 2*hidden
    teleport: DiffNode | None = None            # 1 x 1

    def named(self, prefix: str = "sta") -> dict[str, DiffNode]:
        out = {
            f"{prefix}.gates": self.gates,
            f"{prefix}.gpr_weights": self.gpr_weights,
            f"{prefix}.output_projection": self.output_projection,
        }
        if self.concat_projection is not None:
            out[f"{prefix}.concat_projection"] = self.concat_projection
        if self.readout_projection is not None:
            out[f"{prefix}.readout_projection"] = self.readout_projection
        if self.teleport is not None:
            out[f"{prefix}.teleport"] = self.teleport
        return out


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / (rows + cols)), size=(rows, cols))


def init_sta_params(cfg: StaConfig, rng: np.random.Generator,
                    with_teleport: bool = False) -> StaParams:
    """Fresh parameters; hop weights start at 1, gates at 0 (uniform heads
    after softmax) except in RAW mode where 1 keeps the block live."""
    gate_init = 1.0 if cfg.gate_mode is GateMode.RAW else 0.0
    k = max(cfg.hops, 1)
    params = StaParams(
        gates=ad.parameter(np.full((k, cfg.heads), gate_init), "gates"),
        gpr_weights=ad.parameter(np.ones((1, cfg.hops + 1)), "gpr_weights"),
        output_projection=ad.parameter(
            glorot(rng, cfg.hidden, cfg.hidden), "output_projection"),
    )
    if cfg.aggregation is HopAggregation.CONCAT:
        params.concat_projection = ad.parameter(
            glorot(rng, (cfg.hops + 1) * cfg.hidden, cfg.hidden),
            "concat_projection")
    if cfg.aggregation is HopAggregation.ATTN:
        params.readout_projection = ad.parameter(
            glorot(rng, 1, 2 * cfg.hidden), "readout_projection")
    if with_teleport:
        params.teleport = ad.parameter(np.ones((1, 1)), "teleport")
    return params


def feature_map(m: np.ndarray) -> np.ndarray:
    """Elementwise x+1 for x >= 0, exp(x) for x < 0; strictly positive."""
    m = np.asarray(m, dtype=np.float64)
    return np.where(m < 0, np.exp(np.minimum(m, 0.0)), m + 1.0)


def propagate_node(g: Graph, a: DiffNode,
                   kind: TransitionKind = TransitionKind.RANDOM_WALK) -> DiffNode:
    """Differentiable sparse transition step; adjoint runs the reverse walk."""
    value = propagate(g, kind, a.value)

    def backward(grad):
        ad.accumulate_grad(a, propagate_adjoint(g, kind, grad))

    return ad.make_node(value, (a,), backward)


# ---------------------------------------------------------------------------
# dense reference path


def subtree_attention_dense(g: Graph, hop: int, queries: np.ndarray,
                            keys: np.ndarray, values: np.ndarray,
                            eps: float = 1e-12) -> np.ndarray:
    """Reference computation via an explicit dense k-step transition mask.

    Quadratic in N; used as the oracle the sparse path is checked against.
    hop 0 returns the values unchanged.
    """
    queries = ad.as_matrix(queries)
    keys = ad.as_matrix(keys)
    values = ad.as_matrix(values)
    n = g.num_nodes
    if queries.shape[0] != n or keys.shape[0] != n or values.shape[0] != n:
        raise ShapeError("row counts must equal the node count")
    if queries.shape[1] != keys.shape[1]:
        raise ShapeError("queries and keys must share their width")
    if hop < 0:
        raise ShapeError(f"hop must be >= 0, got {hop}")
    if hop == 0:
        return values.copy()

    step = transition_dense(g, TransitionKind.RANDOM_WALK)
    mask = step.copy()
    for _ in range(hop - 1):
        mask = mask @ step

    sim = feature_map(queries) @ feature_map(keys).T
    weighted = mask * sim
    return (weighted @ values) / (weighted.sum(axis=1, keepdims=True) + eps)


def global_attention_stationary(g: Graph, queries: np.ndarray,
                                keys: np.ndarray, values: np.ndarray,
                                eps: float = 0.0) -> np.ndarray:
    """Kernelized attention with each source weighted by its stationary mass.

    Degree-proportional weights pi_j multiply source contributions; on a
    regular graph this reduces to plain global attention.
    """
    queries = ad.as_matrix(queries)
    keys = ad.as_matrix(keys)
    values = ad.as_matrix(values)
    pi = g.degrees.astype(np.float64)
    pi /= pi.sum()
    phi_q = feature_map(queries)
    phi_k = feature_map(keys) * pi[:, None]
    num = phi_q @ (phi_k.T @ values)
    den = phi_q @ phi_k.sum(axis=0, keepdims=True).T
    return num / (den + eps)


# ---------------------------------------------------------------------------
# efficient differentiable path


def subtree_attention_hops(g: Graph, cfg: StaConfig, queries: DiffNode,
                           keys: DiffNode, values: DiffNode) -> list[DiffNode]:
    """All hop outputs 0..hops in one nested pass, each N x d_v.

    The mapped keys and the per-node key-value outer products are computed
    once and then take one random-walk step per hop; each step costs one
    sparse pass, O(|E| * d_k * d_v) total over all hops. Index 0 is the
    values matrix itself.
    """
    n = g.num_nodes
    if queries.shape[0] != n or keys.shape[0] != n or values.shape[0] != n:
        raise ShapeError("row counts must equal the node count")
    if queries.shape[1] != keys.shape[1]:
        raise ShapeError("queries and keys must share their width")

    phi_q = ad.elu_plus_one(queries)
    keys_mapped = ad.elu_plus_one(keys)
    key_values = ad.row_outer(keys_mapped, values)

    outputs = [values]
    for _ in range(cfg.hops):
        key_values = propagate_node(g, key_values)
        keys_mapped = propagate_node(g, keys_mapped)
        numerator = ad.row_contract(phi_q, key_values)
        denominator = ad.row_dot(phi_q, keys_mapped)
        if ad.finite_checks_enabled() and np.any(
                denominator.value <= cfg.denominator_eps):
            raise NumericsError(
                "attention denominator underflowed the positivity guard")
        outputs.append(
            ad.elementwise_div(numerator, denominator, eps=cfg.denominator_eps))
    return outputs


def global_attention(queries: DiffNode, keys: DiffNode, values: DiffNode,
                     eps: float = 1e-12) -> DiffNode:
    """Kernelized global attention; every node shares the two key/value sums."""
    if queries.shape[0] != keys.shape[0] or keys.shape[0] != values.shape[0]:
        raise ShapeError("row counts must match")
    if queries.shape[1] != keys.shape[1]:
        raise ShapeError("queries and keys must share their width")
    phi_q = ad.elu_plus_one(queries)
    phi_k = ad.elu_plus_one(keys)
    kv_sum = ad.matmul_at(phi_k, values)  # d_k x d_v
    k_sum = ad.matmul_at(phi_k, ad.constant(np.ones((keys.shape[0], 1))))
    numerator = ad.matmul(phi_q, kv_sum)
    denominator = ad.matmul(phi_q, k_sum)
    return ad.elementwise_div(numerator, denominator, eps=eps)


def multihead_subtree_attention(g: Graph, cfg: StaConfig, params: StaParams,
                                queries: DiffNode, keys: DiffNode,
                                values: DiffNode) -> list[DiffNode]:
    """Hop outputs with per-hop gated heads, each N x hidden.

    Full-width inputs are split column-wise into heads; hop k >= 1 scales each
    head by its gate weight, concatenates, and applies the output projection.
    Hop 0 is the ungated, unprojected values matrix.
    """
    if queries.shape[1] != cfg.hidden:
        raise ShapeError(
            f"expected width {cfg.hidden}, got {queries.shape[1]}")
    dk = cfg.head_dim

    per_head = []
    for h in range(cfg.heads):
        j0, j1 = h * dk, (h + 1) * dk
        per_head.append(subtree_attention_hops(
            g, cfg,
            ad.slice_cols(queries, j0, j1),
            ad.slice_cols(keys, j0, j1),
            ad.slice_cols(values, j0, j1),
        ))

    if cfg.gate_mode is GateMode.SOFTMAX:
        head_weights = ad.row_softmax(params.gates)
    elif cfg.gate_mode is GateMode.RAW:
        head_weights = params.gates
    else:
        head_weights = None

    outputs = [values]
    for k in range(1, cfg.hops + 1):
        heads = []
        for h in range(cfg.heads):
            head = per_head[h][k]
            if head_weights is not None:
                head = ad.scale(head, ad.entry(head_weights, k - 1, h))
            heads.append(head)
        outputs.append(
            ad.matmul(ad.concat_cols(heads), params.output_projection))
    return outputs


def aggregate_hops(outputs: list[DiffNode], cfg: StaConfig,
                   params: StaParams) -> DiffNode:
    """Combine per-hop outputs into one representation."""
    if not outputs:
        raise ShapeError("no hop outputs to aggregate")
    width = outputs[0].shape[1]
    for node in outputs:
        if node.shape[1] != width:
            raise ShapeError("hop outputs have inconsistent widths")

    if cfg.aggregation is HopAggregation.GPR:
        total = ad.scale(outputs[0], ad.entry(params.gpr_weights, 0, 0))
        for k in range(1, len(outputs)):
            total = ad.add(
                total, ad.scale(outputs[k], ad.entry(params.gpr_weights, 0, k)))
        return total

    if cfg.aggregation is HopAggregation.SUM:
        total = outputs[0]
        for node in outputs[1:]:
            total = ad.add(total, node)
        return total

    if cfg.aggregation is HopAggregation.CONCAT:
        if params.concat_projection is None:
            raise ConfigError("concat aggregation requires concat_projection")
        return ad.matmul(ad.concat_cols(outputs), params.concat_projection)

    if cfg.aggregation is HopAggregation.ATTN:
        if params.readout_projection is None:
            raise ConfigError("attn aggregation requires readout_projection")
        if len(outputs) == 1:
            return outputs[0]
        w_t = ad.transpose(params.readout_projection)  # 2*hidden x 1
        scores = [
            ad.matmul(ad.concat_cols([outputs[0], outputs[k]]), w_t)
            for k in range(1, len(outputs))
        ]
        betas = ad.row_softmax(ad.concat_cols(scores))  # N x hops
        total = outputs[0]
        for k in range(1, len(outputs)):
            total = ad.add(
                total, ad.mul_cols(outputs[k], ad.slice_cols(betas, k - 1, k)))
        return total

    raise ConfigError(f"unknown aggregation {cfg.aggregation}")
