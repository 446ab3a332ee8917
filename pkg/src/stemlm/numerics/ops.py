"""Differentiable primitives used by the language models.

Every op takes :class:`Tensor` (or array-like) inputs, computes its forward
value with numpy and records a closure returning parent gradients.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, record


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return record("add", a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return record("sub", a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data
    return record("mul", ad * bd, (a, b),
                  lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return record("scale", a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible operands {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return record("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return record("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(z):
    # tanh form never overflows.
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return record("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def embedding(table, ids) -> Tensor:
    """Row lookup ``table[ids]``; ``ids`` is an integer array of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"embedding: ids must be integers, got {ids.dtype}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding: ids out of range for table with {table.shape[0]} rows")
    n_rows = table.shape[0]

    def backward(g):
        flat = ids.reshape(-1)
        gt = np.zeros((n_rows, g.shape[-1]), dtype=g.dtype)
        np.add.at(gt, flat, g.reshape(flat.size, -1))
        return (gt,)

    return record("embedding", table.data[ids], (table,), backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return record("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def rows(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    shape, dtype = x.shape, x.dtype

    def backward(g):
        gx = np.zeros(shape, dtype=dtype)
        gx[start:stop] = g
        return (gx,)

    return record("rows", x.data[start:stop], (x,), backward)


def columns(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    shape, dtype = x.shape, x.dtype

    def backward(g):
        gx = np.zeros(shape, dtype=dtype)
        gx[..., start:stop] = g
        return (gx,)

    return record("columns", x.data[..., start:stop], (x,), backward)


def concat(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(xs)))

    return record("concat", np.concatenate([x.data for x in xs], axis=axis), xs, backward)


def sum(x, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return record("sum", np.asarray(x.data.sum(axis=axis)), (x,), backward)


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.data.size
    shape = x.shape
    return record("mean", np.asarray(x.data.mean()), (x,),
                  lambda g: (np.full(shape, g / n, dtype=x.dtype),))


def dropout(x, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    x = as_tensor(x)
    if not training or p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return record("dropout", x.data * keep, (x,), lambda g: (g * keep,))


def lstm_cell(x, h_prev, c_prev, w_ih, w_hh, bias):
    """One step of a standard 4-gate LSTM.

    Gate layout along the last axis of ``w_ih``/``w_hh``/``bias`` is
    (input, forget, output, candidate). Returns ``(h, c)``.
    """
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    w_ih, w_hh, bias = as_tensor(w_ih), as_tensor(w_hh), as_tensor(bias)
    H = h_prev.shape[-1]
    if w_ih.shape != (x.shape[-1], 4 * H) or w_hh.shape != (H, 4 * H) or bias.shape != (4 * H,):
        raise ShapeError(
            f"lstm_cell: x {x.shape}, h {h_prev.shape}, w_ih {w_ih.shape}, "
            f"w_hh {w_hh.shape}, bias {bias.shape} are inconsistent")
    if c_prev.shape != h_prev.shape or x.shape[0] != h_prev.shape[0]:
        raise ShapeError(f"lstm_cell: x {x.shape}, h {h_prev.shape}, c {c_prev.shape} are inconsistent")

    xd, hd, cd = x.data, h_prev.data, c_prev.data
    z = xd @ w_ih.data + hd @ w_hh.data + bias.data
    gates = _sigmoid(z[:, :3 * H])
    i, f, o = gates[:, :H], gates[:, H:2 * H], gates[:, 2 * H:]
    gc = np.tanh(z[:, 3 * H:])
    c = f * cd + i * gc
    tc = np.tanh(c)
    h = o * tc
    wi, wh = w_ih.data, w_hh.data

    def backward(g):
        dh, dc = g[:, :H], g[:, H:]
        dct = dc + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dct * gc * i * (1.0 - i),
            dct * cd * f * (1.0 - f),
            dh * tc * o * (1.0 - o),
            dct * i * (1.0 - gc * gc),
        ], axis=1)
        return (dz @ wi.T, dz @ wh.T, dct * f, xd.T @ dz, hd.T @ dz, dz.sum(axis=0))

    state = record("lstm_cell", np.concatenate([h, c], axis=1),
                   (x, h_prev, c_prev, w_ih, w_hh, bias), backward)
    return columns(state, 0, H), columns(state, H, 2 * H)


def _logsumexp(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    return m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))


def log_softmax(x) -> Tensor:
    """Log-softmax over the last axis, max-shifted."""
    x = as_tensor(x)
    y = x.data - _logsumexp(x.data, -1)

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return record("log_softmax", y, (x,), backward)


def softmax(x) -> Tensor:
    x = as_tensor(x)
    z = x.data - np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return record("softmax", y, (x,), backward)


def pick(log_probs, targets) -> Tensor:
    """Select ``log_probs[n, targets[n]]`` for each row."""
    lp = as_tensor(log_probs)
    targets = np.asarray(targets).reshape(-1)
    if lp.ndim != 2 or lp.shape[0] != targets.shape[0]:
        raise ShapeError(f"pick: log_probs {lp.shape} vs targets {targets.shape}")
    idx = np.arange(targets.shape[0])
    shape, dtype = lp.shape, lp.dtype

    def backward(g):
        gl = np.zeros(shape, dtype=dtype)
        gl[idx, targets] = g
        return (gl,)

    return record("pick", lp.data[idx, targets], (lp,), backward)


def cross_entropy(log_probs, targets) -> Tensor:
    """Mean negative log-probability of ``targets`` under row distributions."""
    lp = as_tensor(log_probs)
    targets = np.asarray(targets).reshape(-1)
    if lp.ndim != 2 or lp.shape[0] != targets.shape[0]:
        raise ShapeError(f"cross_entropy: log_probs {lp.shape} vs targets {targets.shape}")
    n = targets.shape[0]
    idx = np.arange(n)
    shape, dtype = lp.shape, lp.dtype

    def backward(g):
        gl = np.zeros(shape, dtype=dtype)
        gl[idx, targets] = -g / n
        return (gl,)

    return record("cross_entropy", np.asarray(-lp.data[idx, targets].mean()), (lp,), backward)


def convex_combination(weights, distributions) -> Tensor:
    """sum_k weights[n, k] * distributions[n, k, :]."""
    w, d = as_tensor(weights), as_tensor(distributions)
    if w.ndim != 2 or d.ndim != 3 or d.shape[:2] != w.shape:
        raise ShapeError(f"convex_combination: weights {w.shape} vs distributions {d.shape}")
    if np.any(w.data < 0) or not np.allclose(w.data.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("convex_combination: weights must be non-negative and sum to 1 per row")
    wd, dd = w.data, d.data

    def backward(g):
        return (np.einsum("nv,nkv->nk", g, dd), wd[:, :, None] * g[:, None, :])

    return record("convex_combination", np.einsum("nk,nkv->nv", wd, dd), (w, d), backward)


def log_mixture(log_weights, log_components) -> Tensor:
    """Log of a convex combination, computed as a logsumexp over components.

    ``log_weights`` is (N, K), ``log_components`` is (N, K, V); returns (N, V).
    """
    lw, lc = as_tensor(log_weights), as_tensor(log_components)
    if lw.ndim != 2 or lc.ndim != 3 or lc.shape[:2] != lw.shape:
        raise ShapeError(f"log_mixture: log_weights {lw.shape} vs log_components {lc.shape}")
    joint = lw.data[:, :, None] + lc.data
    out = _logsumexp(joint, 1)[:, 0, :]

    def backward(g):
        post = np.exp(joint - out[:, None, :])
        gc = post * g[:, None, :]
        return (gc.sum(axis=2), gc)

    return record("log_mixture", out, (lw, lc), backward)
