from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Parameter


def grad_check(model_fn: Callable[[], "object"], params: Sequence[Parameter],
               epsilon: float = 1e-5, max_entries: Optional[int] = 50,
               seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``model_fn`` builds the graph from scratch and returns a scalar Tensor.
    Tensors with more than ``max_entries`` elements are probed at a random
    subsample of entries. Relative error is |a - n| / max(|a|, |n|, 1e-8).
    """
    for p in params:
        if p.dtype != np.float64:
            raise TypeError(f"grad_check needs float64 parameters, {p.name} is {p.dtype}")
        p.zero_grad()
    model_fn().backward()
    analytic = {p.name: p.grad.copy() for p in params}

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        if max_entries is None or flat.size <= max_entries:
            idxs = np.arange(flat.size)
        else:
            idxs = rng.choice(flat.size, size=max_entries, replace=False)
        a_flat = analytic[p.name].reshape(-1)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + epsilon
            up = float(model_fn().data)
            flat[i] = orig - epsilon
            down = float(model_fn().data)
            flat[i] = orig
            numeric = (up - down) / (2 * epsilon)
            a = float(a_flat[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    for p in params:
        p.zero_grad()
    return worst
