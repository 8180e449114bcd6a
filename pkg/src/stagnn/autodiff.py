"""Minimal dense-matrix reverse-mode differentiation.

Values are 2-D float64 numpy arrays throughout. A forward pass builds a tape
of DiffNodes; backward() walks it in reverse topological order and accumulates
gradients into every reachable node that requires them. Tapes are cheap and
rebuilt per step; parameter leaves persist across steps.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericsError, ShapeError

# When enabled, every op output is checked for NaN/Inf. Tests switch this on;
# it is off by default to keep benchmark timings clean.
_CHECK_FINITE = False


def set_finite_checks(enabled: bool) -> None:
    global _CHECK_FINITE
    _CHECK_FINITE = enabled


def finite_checks_enabled() -> bool:
    return _CHECK_FINITE


def as_matrix(x) -> np.ndarray:
    """Coerce to a 2-D float64 array; 1-D input becomes a single row."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeError(f"expected a matrix, got ndim={arr.ndim}")
    return arr


class DiffNode:
    """A tape node pairing a matrix value with a gradient slot.

    Leaf nodes created with requires_grad=True hold parameters: their grad is
    zero-initialized and persists across backward passes (accumulating until
    zero_grad). Interior nodes get a grad only while backward runs.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward",
                 "_backward_done", "name")

    def __init__(self, value, requires_grad: bool = False,
                 parents: tuple = (), backward=None, name: str = ""):
        self.value = as_matrix(value)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.value) if requires_grad else None
        self._parents = parents
        self._backward = backward
        self._backward_done = False
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"DiffNode{tag}(shape={self.value.shape}, requires_grad={self.requires_grad})"


def parameter(value, name: str = "") -> DiffNode:
    return DiffNode(value, requires_grad=True, name=name)


def constant(value, name: str = "") -> DiffNode:
    return DiffNode(value, requires_grad=False, name=name)


def _accumulate(node: DiffNode, delta: np.ndarray) -> None:
    if node.grad is None:
        if not node.requires_grad and not node._parents:
            return  # constant leaf: nothing upstream needs this
        node.grad = delta.copy()
    else:
        node.grad += delta


def _make(value: np.ndarray, parents: tuple, backward) -> DiffNode:
    if _CHECK_FINITE and not np.all(np.isfinite(value)):
        raise NumericsError("non-finite value produced by an op")
    return DiffNode(value, parents=parents, backward=backward)


# extension points for ops defined outside this module
make_node = _make
accumulate_grad = _accumulate


# ---------------------------------------------------------------------------
# primitive ops


def matmul(a: DiffNode, b: DiffNode) -> DiffNode:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out_value = a.value @ b.value

    def backward(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)

    return _make(out_value, (a, b), backward)


def matmul_at(a: DiffNode, b: DiffNode) -> DiffNode:
    """a.T @ b without materializing a transposed node."""
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"matmul_at: {a.shape}.T @ {b.shape}")

    def backward(g):
        _accumulate(a, b.value @ g.T)
        _accumulate(b, a.value @ g)

    return _make(a.value.T @ b.value, (a, b), backward)


def transpose(a: DiffNode) -> DiffNode:
    def backward(g):
        _accumulate(a, g.T)

    return _make(a.value.T.copy(), (a,), backward)


def add(a: DiffNode, b: DiffNode) -> DiffNode:
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(a.value + b.value, (a, b), backward)


def add_bias(a: DiffNode, bias: DiffNode) -> DiffNode:
    """Add a 1 x n bias row to every row of a."""
    if bias.shape != (1, a.shape[1]):
        raise ShapeError(f"add_bias: {a.shape} + {bias.shape}")

    def backward(g):
        _accumulate(a, g)
        _accumulate(bias, g.sum(axis=0, keepdims=True))

    return _make(a.value + bias.value, (a, bias), backward)


def add_scalar(a: DiffNode, c: float) -> DiffNode:
    def backward(g):
        _accumulate(a, g)

    return _make(a.value + c, (a,), backward)


def mul_scalar(a: DiffNode, c: float) -> DiffNode:
    def backward(g):
        _accumulate(a, c * g)

    return _make(c * a.value, (a,), backward)


def scale(a: DiffNode, s: DiffNode) -> DiffNode:
    """Multiply a matrix by a 1 x 1 node."""
    if s.shape != (1, 1):
        raise ShapeError(f"scale factor must be 1x1, got {s.shape}")
    sv = s.value[0, 0]

    def backward(g):
        _accumulate(a, sv * g)
        _accumulate(s, np.array([[np.sum(g * a.value)]]))

    return _make(sv * a.value, (a, s), backward)


def mul_cols(a: DiffNode, s: DiffNode) -> DiffNode:
    """Scale each row of a by the matching entry of an N x 1 column."""
    if s.shape != (a.shape[0], 1):
        raise ShapeError(f"mul_cols: {a.shape} * {s.shape}")

    def backward(g):
        _accumulate(a, g * s.value)
        _accumulate(s, (g * a.value).sum(axis=1, keepdims=True))

    return _make(a.value * s.value, (a, s), backward)


def elementwise_div(a: DiffNode, b: DiffNode, eps: float = 0.0) -> DiffNode:
    """a / (b + eps); b may be same-shape or an N x 1 column broadcast."""
    if b.shape != a.shape and b.shape != (a.shape[0], 1):
        raise ShapeError(f"elementwise_div: {a.shape} / {b.shape}")
    denom = b.value + eps
    out_value = a.value / denom

    def backward(g):
        _accumulate(a, g / denom)
        db = -g * a.value / (denom * denom)
        if b.shape != a.shape:
            db = db.sum(axis=1, keepdims=True)
        _accumulate(b, db)

    return _make(out_value, (a, b), backward)


def relu(a: DiffNode) -> DiffNode:
    mask = a.value > 0

    def backward(g):
        _accumulate(a, g * mask)

    # np.maximum (not where) so NaN inputs propagate instead of vanishing
    return _make(np.maximum(a.value, 0.0), (a,), backward)


def elu_plus_one(a: DiffNode) -> DiffNode:
    """Strictly positive feature map: x+1 for x >= 0, exp(x) for x < 0."""
    neg = a.value < 0
    expx = np.exp(np.minimum(a.value, 0.0))
    out_value = np.where(neg, expx, a.value + 1.0)
    deriv = np.where(neg, expx, 1.0)

    def backward(g):
        _accumulate(a, g * deriv)

    return _make(out_value, (a,), backward)


def dropout(a: DiffNode, p: float, training: bool,
            rng: np.random.Generator | None = None) -> DiffNode:
    """Zero entries with probability p and rescale survivors by 1/(1-p).

    Identity (same node returned) in eval mode or at p=0.
    """
    if not 0.0 <= p < 1.0:
        raise ShapeError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode requires an rng")
    keep = rng.random(a.shape) >= p
    scale_factor = 1.0 / (1.0 - p)
    mask = keep * scale_factor

    def backward(g):
        _accumulate(a, g * mask)

    return _make(a.value * mask, (a,), backward)


def row_softmax(a: DiffNode) -> DiffNode:
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=1, keepdims=True)
        _accumulate(a, y * (g - inner))

    return _make(y, (a,), backward)


def concat_cols(nodes: Sequence[DiffNode]) -> DiffNode:
    if not nodes:
        raise ShapeError("concat_cols of empty sequence")
    rows = nodes[0].shape[0]
    for node in nodes:
        if node.shape[0] != rows:
            raise ShapeError("concat_cols: row counts differ")
    widths = [node.shape[1] for node in nodes]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for node, j0, j1 in zip(nodes, offsets[:-1], offsets[1:]):
            _accumulate(node, g[:, j0:j1])

    value = np.concatenate([node.value for node in nodes], axis=1)
    return _make(value, tuple(nodes), backward)


def slice_cols(a: DiffNode, j0: int, j1: int) -> DiffNode:
    if not (0 <= j0 < j1 <= a.shape[1]):
        raise ShapeError(f"slice_cols [{j0}:{j1}] of width {a.shape[1]}")

    def backward(g):
        delta = np.zeros_like(a.value)
        delta[:, j0:j1] = g
        _accumulate(a, delta)

    return _make(a.value[:, j0:j1].copy(), (a,), backward)


def entry(a: DiffNode, i: int, j: int) -> DiffNode:
    """Extract a single entry as a 1 x 1 node."""

    def backward(g):
        delta = np.zeros_like(a.value)
        delta[i, j] = g[0, 0]
        _accumulate(a, delta)

    return _make(np.array([[a.value[i, j]]]), (a,), backward)


def row_outer(a: DiffNode, b: DiffNode) -> DiffNode:
    """Per-row outer product, flattened: out[i] = outer(a[i], b[i]).ravel().

    Shapes: (N x p) x (N x q) -> N x (p*q).
    """
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"row_outer: {a.shape} vs {b.shape}")
    n, p = a.shape
    q = b.shape[1]
    value = np.einsum("np,nq->npq", a.value, b.value).reshape(n, p * q)

    def backward(g):
        g3 = g.reshape(n, p, q)
        _accumulate(a, np.einsum("npq,nq->np", g3, b.value))
        _accumulate(b, np.einsum("npq,np->nq", g3, a.value))

    return _make(value, (a, b), backward)


def row_contract(a: DiffNode, s: DiffNode) -> DiffNode:
    """Per-row vector-matrix product against flattened row blocks.

    a is N x p, s is N x (p*q) holding row-major p x q blocks;
    out[i] = a[i] @ s[i].reshape(p, q), shape N x q.
    """
    n, p = a.shape
    if s.shape[0] != n or s.shape[1] % p != 0:
        raise ShapeError(f"row_contract: {a.shape} against {s.shape}")
    q = s.shape[1] // p
    s3 = s.value.reshape(n, p, q)
    value = np.einsum("np,npq->nq", a.value, s3)

    def backward(g):
        _accumulate(a, np.einsum("nq,npq->np", g, s3))
        _accumulate(s, np.einsum("np,nq->npq", a.value, g).reshape(n, p * q))

    return _make(value, (a, s), backward)


def row_dot(a: DiffNode, b: DiffNode) -> DiffNode:
    """Per-row dot product, N x 1 output."""
    if a.shape != b.shape:
        raise ShapeError(f"row_dot: {a.shape} vs {b.shape}")
    value = (a.value * b.value).sum(axis=1, keepdims=True)

    def backward(g):
        _accumulate(a, g * b.value)
        _accumulate(b, g * a.value)

    return _make(value, (a, b), backward)


def sum_all(a: DiffNode) -> DiffNode:
    def backward(g):
        _accumulate(a, np.full_like(a.value, g[0, 0]))

    return _make(np.array([[a.value.sum()]]), (a,), backward)


def cross_entropy_loss(logits: DiffNode, labels: np.ndarray,
                       mask: np.ndarray) -> DiffNode:
    """Mean negative log-softmax probability of the true class over mask rows."""
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ShapeError("cross_entropy_loss: empty mask")
    n, c = logits.shape
    if labels.shape[0] != n:
        raise ShapeError(f"labels length {labels.shape[0]} vs {n} rows")
    if labels.min() < 0 or labels.max() >= c:
        raise ShapeError(f"labels outside [0, {c})")

    z = logits.value[mask]
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    loss = -log_probs[np.arange(mask.size), labels[mask]].mean()

    probs = np.exp(log_probs)

    def backward(g):
        delta = np.zeros_like(logits.value)
        local = probs.copy()
        local[np.arange(mask.size), labels[mask]] -= 1.0
        delta[mask] = local * (g[0, 0] / mask.size)
        _accumulate(logits, delta)

    return _make(np.array([[loss]]), (logits,), backward)


# ---------------------------------------------------------------------------
# reverse pass


def _topo_order(root: DiffNode) -> list[DiffNode]:
    order: list[DiffNode] = []
    seen: set[int] = set()
    stack: list[tuple[DiffNode, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: DiffNode) -> None:
    """Accumulate d(loss)/d(node) into every reachable parameter's grad.

    Interior-node gradients live only as long as the tape; parameter leaves
    keep accumulating into their persistent grad slot until zero_grad.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward root must be 1x1, got {loss.shape}")
    if loss._backward_done:
        raise NumericsError("backward already ran for this node")
    loss._backward_done = True

    order = _topo_order(loss)
    _accumulate(loss, np.ones((1, 1)))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def gradient_check(f: Callable[[], DiffNode], params: Iterable[DiffNode],
                   h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    f rebuilds the scalar loss from the current parameter values on each call.
    The relative error denominator is max(|analytic|, |numeric|, 1e-8).
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.value.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = f().value[0, 0]
            flat[idx] = orig - h
            f_minus = f().value[0, 0]
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            ref = a.ravel()[idx]
            denom = max(abs(ref), abs(numeric), 1e-8)
            worst = max(worst, abs(ref - numeric) / denom)
    return worst
