from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..corpus import EncodedCorpus, batchify
from ..numerics import clip_grad_norm, make_optimizer, zero_grad
from .checkpoint import Checkpoint
from .config import ConfigError, ModelConfig
from .lm import LanguageModel
from .losses import loss_stem, loss_word, mtl_loss
from .scoring import token_log_probs

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: LanguageModel
    checkpoint: Checkpoint
    log: List[dict]

    def log_lines(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.log)


def train(config: ModelConfig, train_enc: EncodedCorpus, dev_enc: EncodedCorpus,
          vocab_tokens: Sequence[str], eos_id: int, stem_ids: Optional[np.ndarray] = None,
          on_epoch: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Train one model variant with truncated BPTT, one dev evaluation per epoch.

    The learning rate is decayed once at the end of every epoch. For MTL
    models the loss is ``lam * L_primary + (1 - lam) * L_aux`` where the aux
    target follows ``config.aux_target_at(epoch)``.
    """
    if config.needs_stems and stem_ids is None:
        raise ConfigError(f"variant {config.variant or config.arch!r} needs a stem map")
    if train_enc.vocab_size != config.vocab_size or len(vocab_tokens) != config.vocab_size:
        raise ConfigError(
            f"vocabulary size {len(vocab_tokens)} does not match config vocab_size {config.vocab_size}")
    if stem_ids is not None:
        stem_ids = np.asarray(stem_ids, dtype=np.int64)
        if stem_ids.shape != (config.vocab_size,):
            raise ConfigError("stem map does not cover the vocabulary")

    model = LanguageModel(config, target_map=stem_ids if config.primary_target == "stem" else None)
    params = model.parameters()
    opt = make_optimizer(config.optimizer, config.learning_rate, config.lr_decay)
    drop_rng = np.random.default_rng([config.seed, 1])
    stream = batchify(train_enc, config.batch_size, config.bptt)
    records = []

    for epoch in range(config.epochs):
        aux_target = config.aux_target_at(epoch)
        state = None
        tot_p = tot_a = 0.0
        n_steps = 0
        for inputs, targets in stream:
            hidden, state = model.encode(inputs, state, training=True, rng=drop_rng)
            tgt = targets.T.reshape(-1)
            lp = model.head.log_probs(hidden)
            loss_p = loss_stem(lp, tgt, stem_ids) if config.primary_target == "stem" else loss_word(lp, tgt)
            loss = loss_p
            if model.aux_head is not None:
                la = model.aux_head.log_probs(hidden)
                loss_a = loss_stem(la, tgt, stem_ids) if aux_target == "stem" else loss_word(la, tgt)
                loss = mtl_loss(loss_p, loss_a, config.mtl_lambda)
                tot_a += loss_a.item()
            tot_p += loss_p.item()
            loss.backward()
            clip_grad_norm(params, config.clip_norm)
            opt.step(params)
            zero_grad(params)
            n_steps += 1

        dev_lp = token_log_probs(model, dev_enc.ids, eos_id, config.eval_batch_size, config.bptt)
        record = {
            "epoch": epoch,
            "loss_primary": tot_p / n_steps,
            "loss_aux": tot_a / n_steps if model.aux_head is not None else None,
            "dev_ppl": math.exp(-float(dev_lp.mean())),
            "lr": opt.learning_rate,
            "aux_target": aux_target,
        }
        records.append(record)
        log.info("epoch %d: %s", epoch, record)
        if on_epoch is not None:
            on_epoch(record)
        opt.decay_lr()

    ckpt = Checkpoint.from_training(model, vocab_tokens, opt, config.epochs)
    return TrainResult(model, ckpt, records)
