from __future__ import annotations

import numpy as np

from ..numerics import Tensor, ops


def loss_word(log_probs, targets) -> Tensor:
    """Mean negative log-probability (natural log) of the target word ids."""
    return ops.cross_entropy(log_probs, targets)


def loss_stem(log_probs, targets, stem_ids: np.ndarray) -> Tensor:
    """Word loss with every target replaced by the id of its stem."""
    return ops.cross_entropy(log_probs, np.asarray(stem_ids)[np.asarray(targets)])


def mtl_loss(l_w, l_s, lam: float):
    """lam * l_w + (1 - lam) * l_s for Tensors or plain floats."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if isinstance(l_w, Tensor) or isinstance(l_s, Tensor):
        return ops.add(ops.scale(l_w, lam), ops.scale(l_s, 1.0 - lam))
    return lam * l_w + (1.0 - lam) * l_s
