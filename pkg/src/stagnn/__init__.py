"""Linear-time multi-hop subtree attention for node classification.

Core pieces: a CSR graph with normalized transition operators, a minimal
reverse-mode tape, the subtree-attention block (sparse nested path plus a
dense reference), the classifier model and trainer, and empirical verifiers
for the random-walk mixing bounds the mechanism relies on.
"""

from .attention import (
    FeatureMapKind,
    GateMode,
    HopAggregation,
    StaConfig,
    StaParams,
    aggregate_hops,
    feature_map,
    global_attention,
    global_attention_stationary,
    init_sta_params,
    multihead_subtree_attention,
    subtree_attention_dense,
    subtree_attention_hops,
)
from .convergence import verify_mixing, verify_sta_sa_ratio
from .data import Dataset, load_dataset, random_connected_graph, synth_sbm
from .graph import (
    Graph,
    SpectralInfo,
    TransitionKind,
    build_graph,
    laplacian_pe,
    propagate,
    spectral_info,
    stationary_distribution,
)
from .model import (
    Metric,
    ModelVariant,
    StagnnParams,
    TrainConfig,
    TrainReport,
    evaluate,
    ga_sta_forward,
    init_stagnn_params,
    make_splits,
    stagnn_forward,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "FeatureMapKind", "GateMode", "Graph", "HopAggregation",
    "Metric", "ModelVariant", "SpectralInfo", "StaConfig", "StaParams",
    "StagnnParams", "TrainConfig", "TrainReport", "TransitionKind",
    "aggregate_hops", "build_graph", "evaluate", "feature_map",
    "ga_sta_forward", "global_attention", "global_attention_stationary",
    "init_sta_params", "init_stagnn_params", "laplacian_pe", "load_dataset",
    "make_splits", "multihead_subtree_attention", "propagate",
    "random_connected_graph", "spectral_info", "stagnn_forward",
    "stationary_distribution", "subtree_attention_dense",
    "subtree_attention_hops", "synth_sbm", "train", "verify_mixing",
    "verify_sta_sa_ratio",
]
