"""Perplexity, diverse-stem slices, multi-seed aggregation and report files."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set

import numpy as np

from .corpus import EncodedCorpus
from .models.lm import LanguageModel
from .models.scoring import composed_token_log_probs, token_log_probs
from .stemmer import StemMap, shuffle_stem_map, stem_classes


class VocabularyMismatch(ValueError):
    pass


class EmptySliceError(ValueError):
    pass


class SeedRunError(RuntimeError):
    def __init__(self, failures: Mapping[int, BaseException]):
        self.failures = dict(failures)
        detail = "; ".join(f"seed {s}: {e}" for s, e in sorted(self.failures.items()))
        super().__init__(f"{len(self.failures)} seed(s) failed: {detail}")


class ModelScorer:
    """Scores an id stream with one model's primary head."""

    def __init__(self, model: LanguageModel, eos_id: int, unk_id: int,
                 batch_size: int = 10, bptt: int = 35):
        self.model = model
        self.vocab_size = model.config.vocab_size
        self.eos_id, self.unk_id = eos_id, unk_id
        self.batch_size, self.bptt = batch_size, bptt

    def log_probs(self, ids: np.ndarray) -> np.ndarray:
        return token_log_probs(self.model, ids, self.eos_id, self.batch_size, self.bptt)


class MixWSScorer(ModelScorer):
    """Word model ``p`` and stem model ``q`` composed per position."""

    def __init__(self, p_model: LanguageModel, q_model: LanguageModel, stem_ids: np.ndarray,
                 eos_id: int, unk_id: int, batch_size: int = 10, bptt: int = 35):
        if p_model.config.vocab_size != q_model.config.vocab_size:
            raise VocabularyMismatch(
                f"word model has {p_model.config.vocab_size} types, stem model {q_model.config.vocab_size}")
        if len(stem_ids) != p_model.config.vocab_size:
            raise VocabularyMismatch("stem map does not cover the model vocabulary")
        super().__init__(p_model, eos_id, unk_id, batch_size, bptt)
        self.q_model = q_model
        self.stem_ids = np.asarray(stem_ids, dtype=np.int64)

    def log_probs(self, ids):
        return composed_token_log_probs(self.model, self.q_model, self.stem_ids, ids,
                                        self.eos_id, self.batch_size, self.bptt)


def target_mask(ids: np.ndarray, scorer, include_unk: bool = True, include_eos: bool = True) -> np.ndarray:
    mask = np.ones(len(ids), dtype=bool)
    if not include_unk:
        mask &= ids != scorer.unk_id
    if not include_eos:
        mask &= ids != scorer.eos_id
    return mask


def perplexity_from_log_probs(log_probs: np.ndarray) -> float:
    if len(log_probs) == 0:
        raise EmptySliceError("no target tokens to score")
    return math.exp(-float(np.mean(log_probs)))


def _check_vocab(scorer, enc: EncodedCorpus):
    if enc.vocab_size != scorer.vocab_size:
        raise VocabularyMismatch(
            f"corpus encoded with {enc.vocab_size} types but the model has {scorer.vocab_size}")


def perplexity(scorer, enc: EncodedCorpus, include_unk: bool = True, include_eos: bool = True) -> float:
    """exp of the mean negative log-probability over the selected targets."""
    _check_vocab(scorer, enc)
    lp = scorer.log_probs(enc.ids)
    return perplexity_from_log_probs(lp[target_mask(enc.ids, scorer, include_unk, include_eos)])


def select_diverse_stems(stem_map: StemMap, train_counts: Mapping[str, int],
                         min_types: int = 10, min_tokens: int = 500) -> Set[str]:
    """Stems with >= min_types word types whose training tokens total >= min_tokens."""
    out = set()
    for stem, words in stem_classes(stem_map).items():
        if len(words) >= min_types and sum(train_counts.get(w, 0) for w in words) >= min_tokens:
            out.add(stem)
    return out


def slice_perplexity(scorer, enc: EncodedCorpus, stem_set: Iterable[int], stem_ids: np.ndarray,
                     log_probs: Optional[np.ndarray] = None) -> float:
    """Perplexity over target tokens whose stem id is in ``stem_set``; context stays full."""
    _check_vocab(scorer, enc)
    wanted = np.zeros(enc.vocab_size, dtype=bool)
    wanted[list(stem_set)] = True
    mask = wanted[np.asarray(stem_ids)[enc.ids]]
    if not mask.any():
        raise EmptySliceError("no target token has a stem in the requested set")
    if log_probs is None:
        log_probs = scorer.log_probs(enc.ids)
    return perplexity_from_log_probs(log_probs[mask])


def unigram_perplexity(train: EncodedCorpus, eval_enc: EncodedCorpus) -> float:
    """Add-one unigram model estimated on ``train``, scored on ``eval_enc``."""
    counts = np.bincount(train.ids, minlength=train.vocab_size).astype(np.float64) + 1.0
    return perplexity_from_log_probs(np.log(counts / counts.sum())[eval_enc.ids])


@dataclass
class EvalReport:
    model_id: str
    split: str
    perplexity: float
    token_count: int
    slice: Optional[Dict] = None


@dataclass
class SeedAggregate:
    label: str
    seeds: List[int]
    values: List[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        """Sample (n - 1) standard deviation."""
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0

    def cell(self) -> str:
        return f"{self.mean:.2f} ±{self.std:.2f}"

    def to_dict(self) -> Dict:
        pairs = sorted(zip(self.seeds, self.values))
        return {"label": self.label, "seeds": [s for s, _ in pairs], "values": [v for _, v in pairs],
                "mean": self.mean, "std": self.std}


def multi_seed_run(evaluate: Callable[[int], float], seeds: Sequence[int], label: str = "") -> SeedAggregate:
    """Call ``evaluate(seed)`` for every seed and aggregate the results."""
    if len(seeds) < 2:
        raise ValueError("multi_seed_run needs at least two seeds")
    values, failures = {}, {}
    for s in seeds:
        try:
            values[s] = float(evaluate(s))
        except Exception as e:  # noqa: BLE001 - reported per seed
            failures[s] = e
    if failures:
        raise SeedRunError(failures)
    ordered = sorted(values)
    return SeedAggregate(label, ordered, [values[s] for s in ordered])


@dataclass
class ControlReport:
    true_stems: SeedAggregate
    shuffled_stems: SeedAggregate
    shuffle_seed: int

    def to_dict(self):
        return {"true_stems": self.true_stems.to_dict(), "shuffled_stems": self.shuffled_stems.to_dict(),
                "shuffle_seed": self.shuffle_seed}


def control_comparison(run_mixws: Callable[[StemMap, int], float], stem_map: StemMap,
                       seeds: Sequence[int], shuffle_seed: int) -> ControlReport:
    """Mix-WS with the given stems next to Mix-WS with class-size-preserving random stems.

    ``run_mixws(stem_map, seed)`` trains/evaluates one Mix-WS instance.
    """
    shuffled = shuffle_stem_map(stem_map, shuffle_seed)
    true_agg = multi_seed_run(lambda s: run_mixws(stem_map, s), seeds, "mix-ws")
    shuf_agg = multi_seed_run(lambda s: run_mixws(shuffled, s), seeds, "mix-ws-shuffled")
    return ControlReport(true_agg, shuf_agg, shuffle_seed)


def table_tsv(results: Mapping[str, Mapping[str, SeedAggregate]]) -> str:
    """Rows are models, columns corpora, cells "mean ±std"."""
    corpora: List[str] = []
    for row in results.values():
        for c in row:
            if c not in corpora:
                corpora.append(c)
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["model"] + corpora)
    for model, row in results.items():
        w.writerow([model] + [row[c].cell() if c in row else "" for c in corpora])
    return buf.getvalue()


def long_tsv(rows: Sequence[Mapping]) -> str:
    """Plot-ready long format: one line per (model, corpus, metric, seed)."""
    buf = io.StringIO()
    cols = ["model", "corpus", "metric", "seed", "value"]
    w = csv.DictWriter(buf, fieldnames=cols, delimiter="\t", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in cols})
    return buf.getvalue()


def dumps_report(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
