"""Multi-seed, multi-variant sweeps over one corpus.

Training runs are independent jobs (optionally fanned out over worker
processes); evaluation and aggregation happen afterwards in one process so
reports do not depend on job scheduling.
"""
from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import RunConfig
from .corpus import EncodedCorpus, Vocabulary, build_vocab, encode, read_lines
from .eval import (ModelScorer, MixWSScorer, SeedAggregate, control_comparison, dumps_report,
                   long_tsv, multi_seed_run, perplexity_from_log_probs, select_diverse_stems,
                   table_tsv, target_mask, unigram_perplexity)
from .models import TrainResult, save_checkpoint, train
from .stemmer import StemMap, identify_stems, load_stem_map, save_stem_map, shuffle_stem_map

log = logging.getLogger(__name__)


@dataclass
class ExperimentData:
    vocab: Vocabulary
    train: EncodedCorpus
    dev: EncodedCorpus
    test: EncodedCorpus
    stem_map: StemMap
    train_counts: Dict[str, int]

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "ExperimentData":
        train_lines = read_lines(cfg.train)
        vocab = build_vocab(train_lines)
        counts = Counter(t for line in train_lines for t in line)
        if cfg.stem_map:
            stem_map = load_stem_map(cfg.stem_map, vocab)
        else:
            st = cfg.stemmer
            stem_map = identify_stems(vocab.content_words(), st.delta_s, st.delta_p,
                                      st.max_suffix_len, st.max_prefix_len).stem_map
        return cls(vocab, encode(train_lines, vocab), encode(read_lines(cfg.dev), vocab),
                   encode(read_lines(cfg.test), vocab), stem_map, dict(counts))


def _train_job(args) -> Tuple[Tuple[str, int], TrainResult]:
    key, model_cfg, data, stem_ids = args
    res = train(model_cfg, data.train, data.dev, data.vocab.token_of, data.vocab.eos_id, stem_ids)
    return key, res


class Experiment:
    def __init__(self, cfg: RunConfig, data: Optional[ExperimentData] = None):
        self.cfg = cfg
        self.data = data or ExperimentData.from_config(cfg)
        self.stem_ids = self.data.stem_map.to_ids(self.data.vocab)
        self.shuffled_map = shuffle_stem_map(self.data.stem_map, cfg.shuffle_seed)
        self.shuffled_ids = self.shuffled_map.to_ids(self.data.vocab)

    def jobs(self) -> List[Tuple[str, str, np.ndarray]]:
        """(job name, variant, stem ids) for every model to train per seed."""
        out = []
        for v in self.cfg.variants:
            if v == "mix-ws":
                out += [("mix-w", "mix-w", self.stem_ids), ("mix-stem", "mix-stem", self.stem_ids)]
            else:
                out.append((v, v, self.stem_ids))
        if self.cfg.control:
            out += [("mix-w", "mix-w", self.stem_ids),
                    ("mix-stem-shuffled", "mix-stem", self.shuffled_ids)]
        seen, uniq = set(), []
        for j in out:
            if j[0] not in seen:
                seen.add(j[0])
                uniq.append(j)
        return uniq

    def train_all(self) -> Dict[Tuple[str, int], TrainResult]:
        tasks = []
        V = self.data.vocab.size
        for seed in self.cfg.seeds:
            for name, variant, ids in self.jobs():
                tasks.append(((name, seed), self.cfg.model_config(variant, V, seed), self.data, ids))
        if self.cfg.workers > 1:
            with ProcessPoolExecutor(self.cfg.workers) as pool:
                return dict(pool.map(_train_job, tasks))
        results = {}
        for t in tasks:
            log.info("training %s seed %d", *t[0])
            key, res = _train_job(t)
            results[key] = res
        return results

    def run(self, out_dir: Optional[Path] = None) -> Dict:
        cfg, data = self.cfg, self.data
        trained = self.train_all()
        ev = cfg.eval
        eos, unk = data.vocab.eos_id, data.vocab.unk_id
        mb = cfg.model.get("eval_batch_size", 10), cfg.model.get("bptt", 35)

        def scorer(model_label: str, seed: int):
            if model_label == "mix-ws":
                return MixWSScorer(trained[("mix-w", seed)].model, trained[("mix-stem", seed)].model,
                                   self.stem_ids, eos, unk, *mb)
            if model_label == "mix-ws-shuffled":
                return MixWSScorer(trained[("mix-w", seed)].model,
                                   trained[("mix-stem-shuffled", seed)].model,
                                   self.shuffled_ids, eos, unk, *mb)
            return ModelScorer(trained[(model_label, seed)].model, eos, unk, *mb)

        labels = [v for v in cfg.variants]
        if cfg.control and "mix-ws-shuffled" not in labels:
            labels.append("mix-ws-shuffled")
        diverse = select_diverse_stems(data.stem_map, data.train_counts, ev.slice_min_types,
                                       ev.slice_min_tokens)
        diverse_ids = sorted(data.vocab.id_of[s] for s in diverse)
        slice_mask = np.isin(self.stem_ids[data.test.ids], diverse_ids) if diverse_ids else None

        test_ppl: Dict[Tuple[str, int], float] = {}
        rows = []
        slices: Dict[Tuple[str, int], float] = {}
        for label in labels:
            for seed in cfg.seeds:
                sc = scorer(label, seed)
                lp = sc.log_probs(data.test.ids)
                mask = target_mask(data.test.ids, sc, ev.include_unk, ev.include_eos)
                test_ppl[(label, seed)] = perplexity_from_log_probs(lp[mask])
                rows.append(dict(model=label, corpus=cfg.corpus_name, metric="test_ppl", seed=seed,
                                 value=f"{test_ppl[(label, seed)]:.6f}"))
                if slice_mask is not None and slice_mask.any() and label in ("mix-w", "mix-ws", "mix-ws-shuffled"):
                    slices[(label, seed)] = perplexity_from_log_probs(lp[slice_mask])
                    rows.append(dict(model=label, corpus=cfg.corpus_name, metric="diverse_stem_ppl",
                                     seed=seed, value=f"{slices[(label, seed)]:.6f}"))

        aggregates: Dict[str, SeedAggregate] = {}
        for label in labels:
            if len(cfg.seeds) >= 2:
                aggregates[label] = multi_seed_run(lambda s: test_ppl[(label, s)], cfg.seeds, label)
            else:
                s = cfg.seeds[0]
                aggregates[label] = SeedAggregate(label, [s], [test_ppl[(label, s)]])

        control = None
        if cfg.control and "mix-ws" in labels and len(cfg.seeds) >= 2:
            rep = control_comparison(
                lambda m, s: test_ppl[("mix-ws" if m == data.stem_map else "mix-ws-shuffled", s)],
                data.stem_map, cfg.seeds, cfg.shuffle_seed)
            control = rep.to_dict()

        final_dev = {f"{name}/seed{seed}": res.log[-1]["dev_ppl"] for (name, seed), res in sorted(trained.items())}
        report = {
            "config": cfg.to_dict(),
            "corpus": cfg.corpus_name,
            "vocab_size": data.vocab.size,
            "n_stems": len(set(data.stem_map.stem.values())),
            "eval_flags": {"include_unk": ev.include_unk, "include_eos": ev.include_eos},
            "unigram_ppl": {"dev": unigram_perplexity(data.train, data.dev),
                            "test": unigram_perplexity(data.train, data.test)},
            "test_ppl": {k: v.to_dict() for k, v in aggregates.items()},
            "final_dev_ppl": final_dev,
            "diverse_stems": {"count": len(diverse), "min_types": ev.slice_min_types,
                              "min_tokens": ev.slice_min_tokens,
                              "slice_ppl": {f"{m}/seed{s}": v for (m, s), v in sorted(slices.items())}},
            "control": control,
            "logs": {f"{name}/seed{seed}": res.log for (name, seed), res in sorted(trained.items())},
        }
        if out_dir is not None:
            self.write(out_dir, report, aggregates, rows, trained)
        return report

    def write(self, out_dir, report, aggregates, rows, trained) -> None:
        out = Path(out_dir)
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(dumps_report(report), encoding="utf-8")
        (out / "table.tsv").write_text(
            table_tsv({k: {self.cfg.corpus_name: v} for k, v in aggregates.items()}), encoding="utf-8")
        (out / "long.tsv").write_text(long_tsv(rows), encoding="utf-8")
        save_stem_map(self.data.stem_map, out / "stem_map.tsv")
        if self.cfg.control:
            save_stem_map(self.shuffled_map, out / "stem_map.shuffled.tsv")
        for (name, seed), res in sorted(trained.items()):
            stem = out / "checkpoints" / f"{name}-seed{seed}"
            save_checkpoint(res.checkpoint, stem.with_suffix(".ckpt"))
            stem.with_suffix(".log.jsonl").write_text(res.log_lines(), encoding="utf-8")
