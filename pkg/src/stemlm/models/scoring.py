"""Token-level log-probabilities of an id stream under trained models.

The stream is read as ``batch_size`` contiguous chunks, each primed with
the previous token (EOS for the first chunk), so every token in the stream
is scored exactly once.
"""
from __future__ import annotations

from typing import Callable, Iterator, Sequence, Tuple

import numpy as np

from .compose import mixws_compose_log
from .lm import LanguageModel


def _eval_windows(ids: np.ndarray, eos_id: int, batch_size: int, bptt: int
                  ) -> Iterator[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (inputs, positions, valid) arrays of shape (B, t)."""
    ids = np.asarray(ids, dtype=np.int64)
    n = ids.shape[0]
    B = max(1, min(batch_size, n))
    context = np.concatenate([[eos_id], ids[:-1]])
    chunks = np.array_split(np.arange(n), B)
    L = max(len(c) for c in chunks)
    pos = np.full((B, L), -1, dtype=np.int64)
    for b, c in enumerate(chunks):
        pos[b, :len(c)] = c
    valid = pos >= 0
    inputs = np.where(valid, context[np.maximum(pos, 0)], eos_id)
    for i in range(0, L, bptt):
        yield inputs[:, i:i + bptt], pos[:, i:i + bptt], valid[:, i:i + bptt]


def _scatter(out: np.ndarray, lp: np.ndarray, targets: np.ndarray, pos: np.ndarray, valid: np.ndarray):
    # lp is (t, B, V); pos/valid are (B, t)
    T, B = lp.shape[:2]
    tp = pos.T
    tv = valid.T
    tt = np.where(tv, targets[np.maximum(tp, 0)], 0)
    vals = np.take_along_axis(lp, tt[:, :, None], axis=2)[:, :, 0]
    out[tp[tv]] = vals[tv]


def token_log_probs(model: LanguageModel, ids: np.ndarray, eos_id: int,
                    batch_size: int = 10, bptt: int = 35) -> np.ndarray:
    """log P(target_t | context) for every position; targets pass through ``target_map``."""
    ids = np.asarray(ids, dtype=np.int64)
    targets = model.primary_targets(ids)
    out = np.empty(ids.shape[0], dtype=np.float64)
    state = None
    for inp, pos, valid in _eval_windows(ids, eos_id, batch_size, bptt):
        lp, state = model.window_log_probs(inp, state)
        _scatter(out, lp.astype(np.float64), targets, pos, valid)
    return out


def composed_token_log_probs(p_model: LanguageModel, q_model: LanguageModel, stem_ids: np.ndarray,
                             ids: np.ndarray, eos_id: int, batch_size: int = 10,
                             bptt: int = 35) -> np.ndarray:
    """Mix-WS word log-probs; both models advance together window by window."""
    ids = np.asarray(ids, dtype=np.int64)
    out = np.empty(ids.shape[0], dtype=np.float64)
    p_state = q_state = None
    for inp, pos, valid in _eval_windows(ids, eos_id, batch_size, bptt):
        lp, p_state = p_model.window_log_probs(inp, p_state)
        lq, q_state = q_model.window_log_probs(inp, q_state)
        composed = mixws_compose_log(lp, lq, stem_ids)
        _scatter(out, composed, ids, pos, valid)
    return out
