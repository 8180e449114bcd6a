"""Dataset ingestion and synthetic graph generation."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, GraphBuildError
from .graph import Graph, build_graph, is_bipartite, is_connected, read_edge_list


@dataclass
class Dataset:
    name: str
    graph: Graph
    features: np.ndarray  # N x f
    labels: np.ndarray    # N, dense in [0, C)
    num_classes: int
    metadata: dict = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes


def _read_features_csv(path: str | Path) -> np.ndarray:
    """CSV, one row per node; a header row is detected by a non-numeric
    first cell and skipped."""
    rows: list[list[float]] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1:
                try:
                    float(row[0])
                except ValueError:
                    continue  # header
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise DataFormatError(
                    f"{path}:{lineno}: non-numeric feature value") from exc
    if not rows:
        raise DataFormatError(f"{path}: no feature rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataFormatError(f"{path}: inconsistent row widths {sorted(widths)}")
    return np.asarray(rows, dtype=np.float64)


def _read_labels(path: str | Path) -> np.ndarray:
    labels: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                labels.append(int(stripped))
            except ValueError as exc:
                raise DataFormatError(
                    f"{path}:{lineno}: non-integer label {stripped!r}") from exc
    if not labels:
        raise DataFormatError(f"{path}: no labels")
    return np.asarray(labels, dtype=np.int64)


def load_dataset(edge_path: str | Path, feature_path: str | Path,
                 label_path: str | Path, name: str = "files") -> Dataset:
    """Assemble a dataset from an edge list, a feature CSV, and label lines.

    Labels are remapped to a dense range with the original-to-dense mapping
    recorded in metadata.
    """
    features = _read_features_csv(feature_path)
    raw_labels = _read_labels(label_path)
    n = features.shape[0]
    if raw_labels.shape[0] != n:
        raise DataFormatError(
            f"feature rows ({n}) and label count ({raw_labels.shape[0]}) differ")

    edges = read_edge_list(edge_path)
    graph = build_graph(edges, n)

    uniques = np.unique(raw_labels)
    mapping = {int(orig): dense for dense, orig in enumerate(uniques)}
    labels = np.array([mapping[int(v)] for v in raw_labels], dtype=np.int64)
    return Dataset(
        name=name, graph=graph, features=features, labels=labels,
        num_classes=len(uniques),
        metadata={"label_mapping": mapping,
                  "paths": {"edges": str(edge_path),
                            "features": str(feature_path),
                            "labels": str(label_path)}},
    )


def synth_sbm(blocks: int, per_block: int, p_in: float, p_out: float,
              signal: float, seed: int, max_retries: int = 100) -> Dataset:
    """Stochastic block model with block-identifying noisy features.

    Features are the one-hot block center plus Gaussian noise scaled by
    1/signal; labels are block ids. Regenerates (bounded) until connected.
    """
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise GraphBuildError("edge probabilities must lie in [0, 1]")
    n = blocks * per_block
    block_of = np.repeat(np.arange(blocks), per_block)

    for attempt in range(max_retries):
        rng = np.random.default_rng([seed, attempt])
        iu, ju = np.triu_indices(n, k=1)
        same = block_of[iu] == block_of[ju]
        prob = np.where(same, p_in, p_out)
        picked = rng.random(iu.size) < prob
        edges = list(zip(iu[picked].tolist(), ju[picked].tolist()))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            graph = build_graph(edges, n)
        if is_connected(graph):
            noise = rng.normal(size=(n, blocks)) / signal
            features = np.eye(blocks)[block_of] + noise
            return Dataset(
                name="sbm", graph=graph, features=features,
                labels=block_of.astype(np.int64), num_classes=blocks,
                metadata={"seed": seed, "attempt": attempt, "p_in": p_in,
                          "p_out": p_out, "signal": signal},
            )
    raise GraphBuildError(
        f"SBM not connected after {max_retries} attempts "
        f"(p_in={p_in}, p_out={p_out}, n={n})")


def random_spanning_graph(n: int, avg_degree: float, seed: int) -> Graph:
    """Connected by construction: a random spanning tree plus uniform extra
    edges up to the target average degree. Edge count is tightly controlled,
    which the scaling benchmarks rely on."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    edges = [(int(order[i]), int(order[rng.integers(0, i)]))
             for i in range(1, n)]
    target = int(n * avg_degree / 2)
    extra = max(0, target - (n - 1))
    u = rng.integers(0, n, size=3 * extra)
    v = rng.integers(0, n, size=3 * extra)
    keep = u != v
    edges.extend(zip(u[keep][:extra].tolist(), v[keep][:extra].tolist()))
    return build_graph(edges, n)


def random_connected_graph(n: int, avg_degree: float, seed: int,
                           require_non_bipartite: bool = False,
                           max_retries: int = 200) -> Graph:
    """Erdos-Renyi-style graph, resampled until connected (and odd-cycled
    when requested). Used by the cross-check sweeps."""
    p = min(1.0, avg_degree / max(n - 1, 1))
    for attempt in range(max_retries):
        rng = np.random.default_rng([seed, attempt])
        iu, ju = np.triu_indices(n, k=1)
        picked = rng.random(iu.size) < p
        edges = list(zip(iu[picked].tolist(), ju[picked].tolist()))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            graph = build_graph(edges, n)
        if not is_connected(graph):
            continue
        if require_non_bipartite and is_bipartite(graph):
            continue
        return graph
    raise GraphBuildError(
        f"no suitable random graph after {max_retries} attempts "
        f"(n={n}, avg_degree={avg_degree})")
