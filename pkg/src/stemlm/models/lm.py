"""LSTM language models with single-softmax or mixture-of-softmax heads."""
from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np

from ..numerics import Parameter, Tensor, no_grad, ops
from .config import ModelConfig

State = List[Tuple[np.ndarray, np.ndarray]]


class SoftmaxHead:
    """log softmax(h W + b) over the shared vocabulary."""

    def __init__(self, w: Parameter, b: Parameter):
        self.w, self.b = w, b

    def log_probs(self, h) -> Tensor:
        return ops.log_softmax(ops.add(ops.matmul(h, self.w), self.b))

    def parameters(self):
        return [self.w, self.b]


class MixtureHead:
    """K softmax components over tanh-projected contexts with a learned prior.

    Component k scores words with the shared output matrix applied to
    tanh(h W_k + b_k); the prior is a softmax over a K-way projection of h.
    """

    def __init__(self, w_prior, b_prior, w_comp, b_comp, w_out, b_out, K: int):
        self.w_prior, self.b_prior = w_prior, b_prior
        self.w_comp, self.b_comp = w_comp, b_comp
        self.w_out, self.b_out = w_out, b_out
        self.K = K

    def component_log_probs(self, h) -> Tensor:
        h = ops.as_tensor(h)
        n = h.shape[0]
        ctx = ops.tanh(ops.add(ops.matmul(h, self.w_comp), self.b_comp))
        ctx = ops.reshape(ctx, (n * self.K, self.w_out.shape[0]))
        logits = ops.add(ops.matmul(ctx, self.w_out), self.b_out)
        return ops.reshape(ops.log_softmax(logits), (n, self.K, self.w_out.shape[1]))

    def log_prior(self, h) -> Tensor:
        return ops.log_softmax(ops.add(ops.matmul(h, self.w_prior), self.b_prior))

    def log_probs(self, h) -> Tensor:
        return ops.log_mixture(self.log_prior(h), self.component_log_probs(h))

    def parameters(self):
        return [self.w_prior, self.b_prior, self.w_comp, self.b_comp, self.w_out, self.b_out]


class LanguageModel:
    """Embedding + stacked LSTM encoder with a primary head and optional aux head.

    ``target_map`` (word id -> target id) is set for models trained to
    predict stems; it is applied to gold ids wherever the primary head is
    scored.
    """

    def __init__(self, config: ModelConfig, target_map: Optional[np.ndarray] = None):
        self.config = config
        self.dtype = np.dtype(config.dtype)
        self.target_map = None if target_map is None else np.asarray(target_map, dtype=np.int64)
        if config.primary_target == "stem" and self.target_map is None:
            raise ValueError("a stem-target model needs a target_map")
        self.params: Dict[str, Parameter] = {}
        rng = np.random.default_rng(config.seed)
        c = config
        V, E, H, r = c.vocab_size, c.embed_dim, c.hidden_dim, c.init_range

        def uniform(name, shape):
            self._add(name, rng.uniform(-r, r, size=shape))

        def glorot(name, shape):
            # Mixture heads stack two projections; +-0.1 stalls them at the unigram solution.
            lim = c.head_init_gain * np.sqrt(6.0 / (shape[0] + shape[1]))
            self._add(name, rng.uniform(-lim, lim, size=shape))

        def zeros(name, shape):
            self._add(name, np.zeros(shape))

        uniform("embed", (V, E))
        for layer in range(c.num_layers):
            d_in = E if layer == 0 else H
            uniform(f"lstm.{layer}.w_ih", (d_in, 4 * H))
            uniform(f"lstm.{layer}.w_hh", (H, 4 * H))
            zeros(f"lstm.{layer}.bias", (4 * H,))
        if c.arch == "mix":
            glorot("head.w_prior", (H, c.K))
            zeros("head.b_prior", (c.K,))
            glorot("head.w_comp", (H, c.K * E))
            zeros("head.b_comp", (c.K * E,))
            glorot("head.w_out", (E, V))
            zeros("head.b_out", (V,))
            p = self.params
            self.head = MixtureHead(p["head.w_prior"], p["head.b_prior"], p["head.w_comp"],
                                    p["head.b_comp"], p["head.w_out"], p["head.b_out"], c.K)
        else:
            uniform("head.w", (H, V))
            zeros("head.b", (V,))
            self.head = SoftmaxHead(self.params["head.w"], self.params["head.b"])
        self.aux_head = None
        if c.heads == "word+aux":
            # Drawn last so the shared parameters match a single-head model of the same seed.
            uniform("aux.w", (H, V))
            zeros("aux.b", (V,))
            self.aux_head = SoftmaxHead(self.params["aux.w"], self.params["aux.b"])

    def _add(self, name, value):
        self.params[name] = Parameter(value, name, dtype=self.dtype)

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def init_state(self, batch_size: int) -> State:
        H = self.config.hidden_dim
        z = np.zeros((batch_size, H), dtype=self.dtype)
        return [(z, z) for _ in range(self.config.num_layers)]

    def encode(self, ids: np.ndarray, state: Optional[State] = None, training: bool = False,
               rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, State]:
        """Run the encoder over ``ids`` of shape (B, T).

        Returns the context vectors as a (T*B, H) time-major Tensor and the
        detached final state. Row t*B + b is the context after reading
        ``ids[b, :t+1]`` and so predicts ``ids[b, t+1]``.
        """
        ids = np.asarray(ids)
        B, T = ids.shape
        if state is None:
            state = self.init_state(B)
        p = self.params
        drop = self.config.dropout
        x = ops.reshape(ops.embedding(p["embed"], ids.T), (T * B, self.config.embed_dim))
        x = ops.dropout(x, drop, rng, training)
        new_state: State = []
        for layer in range(self.config.num_layers):
            w_ih, w_hh, bias = p[f"lstm.{layer}.w_ih"], p[f"lstm.{layer}.w_hh"], p[f"lstm.{layer}.bias"]
            h, c = Tensor(state[layer][0], dtype=self.dtype), Tensor(state[layer][1], dtype=self.dtype)
            outs = []
            for t in range(T):
                h, c = ops.lstm_cell(ops.rows(x, t * B, (t + 1) * B), h, c, w_ih, w_hh, bias)
                outs.append(h)
            new_state.append((h.data.copy(), c.data.copy()))
            x = ops.concat(outs, axis=0)
            x = ops.dropout(x, drop, rng, training)
        return x, new_state

    def primary_targets(self, ids: np.ndarray) -> np.ndarray:
        return ids if self.target_map is None else self.target_map[ids]

    def next_word_dist(self, context: np.ndarray) -> np.ndarray:
        """Primary-head probabilities for context vectors of shape (N, H)."""
        with no_grad():
            return np.exp(self.head.log_probs(Tensor(np.atleast_2d(context), dtype=self.dtype)).data)

    def window_log_probs(self, ids: np.ndarray, state: Optional[State] = None):
        """Eval-mode primary log-probs (T, B, V) for inputs (B, T), plus the next state."""
        with no_grad():
            hidden, state = self.encode(ids, state, training=False)
            lp = self.head.log_probs(hidden).data
        B, T = ids.shape
        return lp.reshape(T, B, -1), state

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: p.data for k, p in self.params.items()}

    def load_state_dict(self, arrays: Dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self.params):
            raise ValueError(
                f"parameter names differ: missing {sorted(set(self.params) - set(arrays))}, "
                f"unexpected {sorted(set(arrays) - set(self.params))}")
        for k, p in self.params.items():
            if arrays[k].shape != p.shape:
                raise ValueError(f"shape mismatch for {k}: {arrays[k].shape} vs {p.shape}")
            p.data = np.array(arrays[k], dtype=self.dtype)
            p.zero_grad()
