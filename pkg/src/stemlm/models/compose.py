"""Mix-WS: recombine a word distribution and a stem distribution.

For word w with stem s = stem(w):

    r(w)  = p(w) / sum_{v in S(s)} p(v)        within-class share under p
    q'(s) = sum_{v in S(s)} q(v)               class mass under q
    out(w) = r(w) * q'(s)
"""
from __future__ import annotations

import numpy as np


class CompositionError(ArithmeticError):
    pass


def _class_logsumexp(logx: np.ndarray, order: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Per-class logsumexp along the last axis; classes are runs of ``order``."""
    xs = logx[..., order]
    m = np.maximum.reduceat(xs, starts, axis=-1)
    counts = np.diff(np.append(starts, xs.shape[-1]))
    empty = np.isneginf(m)
    m_safe = np.where(empty, 0.0, m)
    shifted = xs - np.repeat(m_safe, counts, axis=-1)
    with np.errstate(divide="ignore"):
        out = m_safe + np.log(np.add.reduceat(np.exp(shifted), starts, axis=-1))
    return np.where(empty, -np.inf, out)


def _grouping(stem_ids: np.ndarray):
    stem_ids = np.asarray(stem_ids)
    order = np.argsort(stem_ids, kind="stable")
    sorted_ids = stem_ids[order]
    starts = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
    # class_of[w] = index of w's stem among the distinct stems
    class_of = np.empty_like(stem_ids)
    class_of[order] = np.cumsum(np.r_[0, (sorted_ids[1:] != sorted_ids[:-1]).astype(np.int64)])
    return order, starts, class_of


def mixws_compose_log(log_p: np.ndarray, log_q: np.ndarray, stem_ids: np.ndarray) -> np.ndarray:
    """Log-space composition over the last axis; ``stem_ids[w]`` is w's stem id."""
    log_p = np.asarray(log_p, dtype=np.float64)
    log_q = np.asarray(log_q, dtype=np.float64)
    if log_p.shape != log_q.shape or log_p.shape[-1] != len(stem_ids):
        raise ValueError(f"shape mismatch: p {log_p.shape}, q {log_q.shape}, stems {len(stem_ids)}")
    order, starts, class_of = _grouping(stem_ids)
    log_p_class = _class_logsumexp(log_p, order, starts)
    if not np.all(np.isfinite(log_p_class)):
        raise CompositionError("a stem class has zero mass under the word distribution")
    log_q_class = _class_logsumexp(log_q, order, starts)
    return log_p - log_p_class[..., class_of] + log_q_class[..., class_of]


def mixws_compose(p_dist, q_dist, stem_ids) -> np.ndarray:
    """Probability-space wrapper around :func:`mixws_compose_log`."""
    with np.errstate(divide="ignore"):
        out = mixws_compose_log(np.log(p_dist), np.log(q_dist), stem_ids)
    return np.exp(out)


def within_class_share(p_dist, stem_ids) -> np.ndarray:
    """r(w) = p(w) / p'(stem(w))."""
    with np.errstate(divide="ignore"):
        log_p = np.log(np.asarray(p_dist, dtype=np.float64))
    order, starts, class_of = _grouping(stem_ids)
    return np.exp(log_p - _class_logsumexp(log_p, order, starts)[..., class_of])
