"""Immutable CSR graph with normalized transition operators and spectral utilities.

The graph is undirected and stored symmetrically: every edge (u, v) appears in
both adjacency rows. Nodes that would otherwise be isolated receive a single
self-loop at build time so that degree-normalized operators stay well defined.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .errors import DataFormatError, GraphBuildError, ShapeError

# Dense eigendecomposition is only sensible at desk scale; callers (CLI) are
# expected to skip spectral features above this.
SPECTRAL_NODE_LIMIT = 4000


class TransitionKind(Enum):
    """Which degree normalization the propagation operator applies.

    RANDOM_WALK is A @ D^-1 (column-stochastic: each source node j spreads
    mass 1/d(j) to its neighbors). SYMMETRIC is D^-1/2 @ A @ D^-1/2.
    """

    RANDOM_WALK = "random_walk"
    SYMMETRIC = "symmetric"


@dataclass(frozen=True, eq=False)
class Graph:
    """Symmetric CSR adjacency with per-node degrees.

    row_offsets has length num_nodes + 1; col_indices holds the neighbors of
    node i in row_offsets[i]:row_offsets[i+1], strictly increasing within a
    row. degrees[i] equals the row length and is always >= 1.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    degrees: np.ndarray

    @property
    def num_directed_entries(self) -> int:
        return int(self.col_indices.shape[0])

    @property
    def num_edges(self) -> int:
        """Undirected edge count; self-loops count once."""
        loops = int(np.sum(self.col_indices == np.repeat(
            np.arange(self.num_nodes), np.diff(self.row_offsets))))
        return (self.num_directed_entries - loops) // 2 + loops

    def neighbors(self, node: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[node]:self.row_offsets[node + 1]]

    # cached sparse operators (written straight into __dict__, so the frozen
    # dataclass stays hashable and logically immutable)
    @cached_property
    def _rw_op(self) -> sp.csr_matrix:
        data = 1.0 / self.degrees[self.col_indices]
        return sp.csr_matrix((data, self.col_indices, self.row_offsets),
                             shape=(self.num_nodes, self.num_nodes))

    @cached_property
    def _rw_adjoint_op(self) -> sp.csr_matrix:
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self.row_offsets))
        data = 1.0 / self.degrees[rows]
        return sp.csr_matrix((data, self.col_indices, self.row_offsets),
                             shape=(self.num_nodes, self.num_nodes))

    @cached_property
    def _sym_op(self) -> sp.csr_matrix:
        inv_sqrt = 1.0 / np.sqrt(self.degrees.astype(np.float64))
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self.row_offsets))
        data = inv_sqrt[rows] * inv_sqrt[self.col_indices]
        return sp.csr_matrix((data, self.col_indices, self.row_offsets),
                             shape=(self.num_nodes, self.num_nodes))

    def to_dense_adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self.row_offsets))
        a[rows, self.col_indices] = 1.0
        return a


@dataclass(frozen=True, eq=False)
class SpectralInfo:
    """Eigenvalues of the symmetric-normalized adjacency plus structure flags."""

    eigenvalues: np.ndarray  # sorted descending
    spectral_gap: float      # 1 - max(lambda_2, |lambda_N|)
    is_connected: bool
    is_bipartite: bool


def build_graph(edge_list: Iterable[tuple[int, int]], num_nodes: int) -> Graph:
    """Build a symmetrized, deduplicated CSR graph from directed edge pairs.

    Self-loops in the input are dropped. Nodes left without any incident edge
    get a single self-loop (with a warning) so every degree is >= 1.
    Raises GraphBuildError for node indices outside [0, num_nodes).
    """
    if num_nodes <= 0:
        raise GraphBuildError(f"num_nodes must be positive, got {num_nodes}")
    pairs = list(edge_list)
    for u, v in pairs:
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise GraphBuildError(
                f"edge ({u}, {v}) out of range for num_nodes={num_nodes}")

    if pairs:
        arr = np.asarray(pairs, dtype=np.int64)
        keep = arr[:, 0] != arr[:, 1]  # drop input self-loops
        arr = arr[keep]
    else:
        arr = np.zeros((0, 2), dtype=np.int64)

    both = np.concatenate([arr, arr[:, ::-1]], axis=0)
    if both.shape[0]:
        both = np.unique(both, axis=0)  # dedup, sorted by (row, col)

    counts = np.bincount(both[:, 0], minlength=num_nodes)
    isolated = np.flatnonzero(counts == 0)
    if isolated.size:
        warnings.warn(
            f"{isolated.size} isolated node(s) received a self-loop: "
            f"{isolated[:8].tolist()}{'...' if isolated.size > 8 else ''}",
            stacklevel=2,
        )
        loops = np.stack([isolated, isolated], axis=1)
        both = np.concatenate([both, loops], axis=0)
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        counts = np.bincount(both[:, 0], minlength=num_nodes)

    row_offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=row_offsets[1:])
    return Graph(
        num_nodes=num_nodes,
        row_offsets=row_offsets,
        col_indices=both[:, 1].copy(),
        degrees=counts.astype(np.int64),
    )


def read_edge_list(path: str | Path) -> list[tuple[int, int]]:
    """Parse a UTF-8 edge-list file: one `u v` pair per line, `#` comments."""
    edges: list[tuple[int, int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise DataFormatError(
                    f"{path}:{lineno}: expected two node ids, got {stripped!r}")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise DataFormatError(
                    f"{path}:{lineno}: non-integer node id in {stripped!r}") from exc
    return edges


def propagate(g: Graph, kind: TransitionKind, m: np.ndarray) -> np.ndarray:
    """One sparse application of the transition operator to the rows of m.

    RANDOM_WALK computes out[i] = sum_{j in N(i)} m[j] / d(j), i.e. the
    column-stochastic operator A @ D^-1 acting on m. Cost O(|E| * d).
    Accumulation per destination node runs in fixed ascending neighbor order,
    so the result is deterministic.
    """
    m = np.asarray(m, dtype=np.float64)
    squeeze = m.ndim == 1
    if squeeze:
        m = m[:, None]
    if m.shape[0] != g.num_nodes:
        raise ShapeError(
            f"matrix has {m.shape[0]} rows, graph has {g.num_nodes} nodes")

    op = g._rw_op if kind is TransitionKind.RANDOM_WALK else g._sym_op
    out = op @ m
    return out[:, 0] if squeeze else out


def propagate_adjoint(g: Graph, kind: TransitionKind, m: np.ndarray) -> np.ndarray:
    """Apply the transpose of the transition operator (for reverse mode).

    The adjoint of A @ D^-1 on a symmetric graph is D^-1 @ A:
    out[j] = (1/d(j)) * sum_{i in N(j)} m[i]. The symmetric-normalized
    operator is self-adjoint.
    """
    if kind is TransitionKind.SYMMETRIC:
        return propagate(g, kind, m)
    m = np.asarray(m, dtype=np.float64)
    if m.shape[0] != g.num_nodes:
        raise ShapeError(
            f"matrix has {m.shape[0]} rows, graph has {g.num_nodes} nodes")
    return g._rw_adjoint_op @ m


def transition_dense(g: Graph, kind: TransitionKind = TransitionKind.RANDOM_WALK) -> np.ndarray:
    """Dense transition matrix; test/verification helper, O(N^2) memory."""
    a = g.to_dense_adjacency()
    d = g.degrees.astype(np.float64)
    if kind is TransitionKind.RANDOM_WALK:
        return a / d[None, :]
    inv_sqrt = 1.0 / np.sqrt(d)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def stationary_distribution(g: Graph) -> np.ndarray:
    """Degree-proportional distribution pi_i = d(i) / sum_j d(j)."""
    d = g.degrees.astype(np.float64)
    return d / d.sum()


def is_connected(g: Graph) -> bool:
    seen = np.zeros(g.num_nodes, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in g.neighbors(u):
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return bool(seen.all())


def is_bipartite(g: Graph) -> bool:
    color = np.full(g.num_nodes, -1, dtype=np.int8)
    for start in range(g.num_nodes):
        if color[start] >= 0:
            continue
        color[start] = 0
        stack = [start]
        while stack:
            u = stack.pop()
            for v in g.neighbors(u):
                if v == u:
                    return False  # self-loop is an odd cycle
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    stack.append(int(v))
                elif color[v] == color[u]:
                    return False
    return True


def spectral_info(g: Graph) -> SpectralInfo:
    """Eigenvalues of the symmetric-normalized adjacency plus structure flags.

    Uses a dense symmetric eigensolver; intended for N <= SPECTRAL_NODE_LIMIT.
    """
    a_sym = transition_dense(g, TransitionKind.SYMMETRIC)
    eigenvalues = np.linalg.eigvalsh(a_sym)[::-1].copy()
    lam2 = eigenvalues[1] if g.num_nodes > 1 else -1.0
    lam_n = eigenvalues[-1]
    gap = 1.0 - max(lam2, abs(lam_n))
    return SpectralInfo(
        eigenvalues=eigenvalues,
        spectral_gap=float(gap),
        is_connected=is_connected(g),
        is_bipartite=is_bipartite(g),
    )


def laplacian_pe(g: Graph, m: int) -> np.ndarray:
    """Eigenvectors of L = I - A_sym for the m smallest eigenvalues, N x m.

    Columns are unit-norm and orthogonal (symmetric eigensolver). The sign of
    each column is fixed so its largest-magnitude entry is positive, making
    the encoding deterministic across runs.
    """
    if m >= g.num_nodes:
        raise ShapeError(
            f"requested {m} positional dimensions but graph has only "
            f"{g.num_nodes} nodes")
    lap = np.eye(g.num_nodes) - transition_dense(g, TransitionKind.SYMMETRIC)
    _, vecs = np.linalg.eigh(lap)  # ascending eigenvalues
    pe = vecs[:, :m].copy()
    for j in range(m):
        anchor = np.argmax(np.abs(pe[:, j]))
        if pe[anchor, j] < 0:
            pe[:, j] = -pe[:, j]
    return pe
