"""Forward kernels and their vector-Jacobian products.

Every kernel takes plain arrays (plus keyword attributes that are not
differentiated) and returns ``(output, backward)`` where ``backward(grad)``
yields one gradient per array input, ``None`` for inputs without a gradient.
"""
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from subnet_forge.exceptions import ShapeError

Backward = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


def _require_rank(kind: str, array: np.ndarray, rank: int, label: str):
    if array.ndim != rank:
        raise ShapeError(f"{kind}: {label} must have rank {rank}, got shape {array.shape}")


def matmul(a: np.ndarray, b: np.ndarray):
    _require_rank('matmul', a, 2, 'left operand')
    _require_rank('matmul', b, 2, 'right operand')
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner extents differ, {a.shape} @ {b.shape}")
    out = a @ b

    def backward(grad):
        return grad @ b.T, a.T @ grad

    return out, backward


def bias_add(x: np.ndarray, bias: np.ndarray):
    _require_rank('bias_add', x, 2, 'input')
    _require_rank('bias_add', bias, 1, 'bias')
    if x.shape[1] != bias.shape[0]:
        raise ShapeError(f"bias_add: bias extent {bias.shape[0]} != feature extent {x.shape[1]}")
    out = x + bias

    def backward(grad):
        return grad, grad.sum(axis=0)

    return out, backward


def tanh(x: np.ndarray):
    out = np.tanh(x)

    def backward(grad):
        return (grad * (1.0 - out * out),)

    return out, backward


def relu(x: np.ndarray):
    out = np.maximum(x, 0.0)

    def backward(grad):
        return (grad * (x > 0),)

    return out, backward


def embedding(table: np.ndarray, ids=None):
    _require_rank('embedding', table, 2, 'table')
    ids = np.asarray(ids)
    if ids.ndim != 1 or not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"embedding: ids must be a 1-d integer array, got {ids.dtype} {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding: ids outside table rows [0, {table.shape[0]})")
    out = table[ids]

    def backward(grad):
        table_grad = np.zeros_like(table)
        np.add.at(table_grad, ids, grad)
        return (table_grad,)

    return out, backward


def mean_pool(x: np.ndarray, segment_ids=None, num_segments: Optional[int] = None):
    """Mean over the sequence axis, per segment when segment ids are given."""
    _require_rank('mean_pool', x, 2, 'input')
    rows = x.shape[0]
    if segment_ids is None:
        segment_ids = np.zeros(rows, dtype=np.int64)
        num_segments = 1
    segment_ids = np.asarray(segment_ids)
    if segment_ids.shape != (rows,):
        raise ShapeError(f"mean_pool: {segment_ids.shape[0]} segment ids for {rows} rows")
    if num_segments is None:
        num_segments = int(segment_ids.max()) + 1
    counts = np.bincount(segment_ids, minlength=num_segments)
    if counts.shape[0] != num_segments or (counts == 0).any():
        raise ShapeError(f"mean_pool: every one of {num_segments} segments needs at least one row")
    pool = (segment_ids[None, :] == np.arange(num_segments)[:, None]).astype(x.dtype)
    pool /= counts[:, None].astype(x.dtype)
    out = pool @ x

    def backward(grad):
        return (pool.T @ grad,)

    return out, backward


def softmax_cross_entropy(logits: np.ndarray, targets=None, weights=None):
    """Weighted sum of per-row softmax cross-entropies; scalar output."""
    _require_rank('softmax_cross_entropy', logits, 2, 'logits')
    targets = np.asarray(targets)
    rows, width = logits.shape
    if targets.shape != (rows,):
        raise ShapeError(f"softmax_cross_entropy: {targets.shape} targets for {rows} logit rows")
    if rows and (targets.min() < 0 or targets.max() >= width):
        raise ShapeError(f"softmax_cross_entropy: targets outside [0, {width})")
    if weights is None:
        weights = np.ones(rows, dtype=logits.dtype)
    weights = np.asarray(weights, dtype=logits.dtype)
    if weights.shape != (rows,):
        raise ShapeError(f"softmax_cross_entropy: {weights.shape} weights for {rows} logit rows")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    picked = log_probs[np.arange(rows), targets]
    out = np.asarray(-(weights * picked).sum(), dtype=logits.dtype)

    def backward(grad):
        probs = exp / total
        probs[np.arange(rows), targets] -= 1.0
        return (grad * weights[:, None] * probs,)

    return out, backward


def concat(a: np.ndarray, b: np.ndarray):
    _require_rank('concat', a, 2, 'left operand')
    _require_rank('concat', b, 2, 'right operand')
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat: row extents differ, {a.shape} and {b.shape}")
    split = a.shape[1]
    out = np.concatenate([a, b], axis=1)

    def backward(grad):
        return grad[:, :split], grad[:, split:]

    return out, backward


def add(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ, {a.shape} and {b.shape}")
    out = a + b

    def backward(grad):
        return grad, grad

    return out, backward


KERNELS: Dict[str, Callable] = {
    'matmul': matmul,
    'bias_add': bias_add,
    'tanh': tanh,
    'relu': relu,
    'embedding': embedding,
    'mean_pool': mean_pool,
    'softmax_cross_entropy': softmax_cross_entropy,
    'concat': concat,
    'add': add,
}
